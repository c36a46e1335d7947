#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scfl/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "experiment config file")->required();
  sub->add_option("--seed", args.seed, "override the config seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  sub->add_option("--out", args.out_override, "override the output directory");
}

scfl::ExperimentConfig load(const CommonArgs& args) {
  scfl::ExperimentConfig cfg = scfl::parse_config(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  if (!args.out_override.empty()) cfg.run.out_dir = args.out_override;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic coded federated learning simulator"};
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, privacy_args, verify_args;
  std::string axis, values_csv, suite = "all";
  std::size_t jobs = 1, trials = 10000;

  CLI::App* run_cmd = app.add_subcommand("run", "run one experiment");
  add_common(run_cmd, run_args);

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run one experiment per axis value");
  add_common(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--axis", axis, "parameter to sweep")->required();
  sweep_cmd->add_option("--values", values_csv, "comma-separated axis values")->required();
  sweep_cmd->add_option("--jobs", jobs, "parallel sweep points");

  CLI::App* privacy_cmd = app.add_subcommand("privacy", "privacy accounting only");
  add_common(privacy_cmd, privacy_args);

  CLI::App* verify_cmd = app.add_subcommand("verify", "statistical verification suites");
  add_common(verify_cmd, verify_args);
  verify_cmd->add_option("--suite", suite, "lemma1, lemma2, lemma3, network, or all");
  verify_cmd->add_option("--trials", trials, "Monte Carlo trials per check");

  CLI11_PARSE(app, argc, argv);

  std::string out_dir = "out";
  for (const CommonArgs* args : {&run_args, &sweep_args, &privacy_args, &verify_args}) {
    if (!args->out_override.empty()) out_dir = args->out_override;
  }
  try {
    if (run_cmd->parsed()) {
      const scfl::ExperimentConfig cfg = load(run_args);
      out_dir = cfg.run.out_dir;
      return scfl::run_experiment(cfg, out_dir);
    }
    if (sweep_cmd->parsed()) {
      const scfl::ExperimentConfig cfg = load(sweep_args);
      out_dir = cfg.run.out_dir;
      std::vector<double> values;
      std::size_t pos = 0;
      while (pos <= values_csv.size()) {
        const std::size_t comma = values_csv.find(',', pos);
        const std::string item = values_csv.substr(
            pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (item.empty()) throw scfl::ConfigError("sweep --values: empty element");
        values.push_back(std::stod(item));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
      return scfl::run_sweep(cfg, axis, values, out_dir, jobs);
    }
    if (privacy_cmd->parsed()) {
      const scfl::ExperimentConfig cfg = load(privacy_args);
      out_dir = cfg.run.out_dir;
      return scfl::run_privacy(cfg, out_dir);
    }
    const scfl::ExperimentConfig cfg = load(verify_args);
    out_dir = cfg.run.out_dir;
    return scfl::run_verify(cfg, suite, out_dir, trials);
  } catch (const scfl::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    scfl::write_error_json(out_dir, "config", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    scfl::write_error_json(out_dir, "runtime", e.what());
    return 3;
  }
}
