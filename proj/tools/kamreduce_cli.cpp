// kamreduce command line: configuration-driven experiments.
//
//   kamreduce <command> --config cfg.json [--out DIR] [--mode paper|adaptive]
//             [--jmax N] [--seed N] [--emit json|csv|both]
//
// Commands: reduce | rotnum | sweep | smooth-test | lemma-check | step-probe.
// KAMREDUCE_THREADS overrides the sweep worker count.

#include <CLI11.hpp>

#include "kamreduce/run_config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"quasi-periodic cocycle reduction toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::string mode;
  std::string emit;
  int jmax = -1;
  uint64_t seed = 0;
  bool seed_set = false;

  const std::vector<std::string> commands = {"reduce",      "rotnum",
                                             "sweep",       "smooth-test",
                                             "lemma-check", "step-probe"};
  for (const auto& name : commands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "configuration file (JSON)")
        ->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--mode", mode, "driver mode")
        ->check(CLI::IsMember({"paper", "adaptive"}));
    sub->add_option("--jmax", jmax, "iteration horizon override");
    sub->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
      seed_set = true;
    });
    sub->add_option("--emit", emit, "report formats")
        ->check(CLI::IsMember({"json", "csv", "both"}));
  }

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = kamreduce::RunConfig::from_file(config_path);
    cfg.command = app.get_subcommands().front()->get_name();
    cfg.out_dir = out_dir;
    if (!emit.empty()) cfg.emit = emit;
    if (seed_set) cfg.seed = seed;
    if (!mode.empty()) cfg.root["driver"]["mode"] = mode;
    if (jmax >= 0) cfg.root["driver"]["jmax"] = jmax;
    return kamreduce::run_config(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
