// Command-line front end: finetune / evaluate / sweep / oracle-check / sample
// driven by a declarative JSON config. Exit codes: 0 ok, 2 config error,
// 3 runtime error, 4 oracle threshold breach.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "elegant/runner.hpp"

namespace {

elegant::ExperimentConfig load_with_overrides(const std::string& config_path,
                                              const std::string& out_dir,
                                              std::optional<uint64_t> seed_override,
                                              std::optional<int> n_override) {
  elegant::ExperimentConfig cfg = elegant::load_config(config_path);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (seed_override) elegant::apply_seed_override(cfg, *seed_override);
  if (n_override) elegant::apply_n_override(cfg, *n_override);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"entropy-regularized control fine-tuning of analytic diffusion models"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::vector<std::string> manifests;
  std::optional<uint64_t> seed_override;
  std::optional<int> n_override;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config)
      sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out-dir", out_dir, "override the config output directory");
    sub->add_option("--seed-override", seed_override, "re-derive every seed from this value");
    sub->add_option("--n-override", n_override, "override the evaluation sample count");
  };

  CLI::App* finetune = app.add_subcommand("finetune", "run the configured method end to end");
  add_common(finetune, true);
  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate one or more finished runs");
  evaluate->add_option("--manifest", manifests, "manifest.json of a finished run")->required();
  evaluate->add_option("--out-dir", out_dir, "directory for the comparison table");
  evaluate->add_option("--seed-override", seed_override, "re-derive the evaluation seed");
  evaluate->add_option("--n-override", n_override, "override the evaluation sample count");
  CLI::App* sweep = app.add_subcommand("sweep", "finetune + evaluate per alpha in alpha_sweep");
  add_common(sweep, true);
  CLI::App* oracle = app.add_subcommand("oracle-check", "verify the exact tilting identities");
  oracle->add_option("--out-dir", out_dir, "directory for the JSON report");
  CLI::App* sample = app.add_subcommand("sample", "dump raw terminal samples as CSV");
  add_common(sample, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*finetune) {
      auto cfg = load_with_overrides(config_path, out_dir, seed_override, n_override);
      elegant::RunManifest manifest = elegant::cmd_finetune(cfg);
      std::cout << "finetune done: method=" << manifest.method
                << " config_hash=" << manifest.config_hash << " out=" << cfg.output_dir << "\n";
    } else if (*evaluate) {
      std::vector<std::pair<std::string, elegant::EvalReport>> rows;
      for (const std::string& m : manifests) {
        elegant::EvaluateResult res = elegant::cmd_evaluate(m, seed_override, n_override);
        const auto mj = elegant::rundetail::read_json(m);
        rows.emplace_back(mj.value("method", "?"), res.report);
        std::cout << "evaluated " << m << ": reward=" << res.report.reward_mean
                  << " kl_div=" << res.report.kl_total << " div=" << res.report.div << "\n";
      }
      if (rows.size() > 1) {
        const std::string dir = out_dir.empty() ? "." : out_dir;
        std::filesystem::create_directories(dir);
        const std::string path = dir + "/comparison.csv";
        elegant::write_comparison_csv(rows, path);
        std::cout << "comparison table: " << path << "\n";
      }
    } else if (*sweep) {
      auto cfg = load_with_overrides(config_path, out_dir, seed_override, n_override);
      elegant::SweepResult res = elegant::cmd_sweep(cfg);
      for (size_t i = 0; i < res.alphas.size(); ++i) {
        std::cout << "alpha=" << res.alphas[i];
        if (res.errors[i].empty())
          std::cout << " reward=" << res.reports[i].reward_mean << " div=" << res.reports[i].div;
        else
          std::cout << " FAILED: " << res.errors[i];
        std::cout << "\n";
      }
      std::cout << "trends: reward_nonincreasing_in_alpha=" << res.reward_monotone
                << " div_nondecreasing_in_alpha=" << res.div_monotone << "\n";
    } else if (*oracle) {
      elegant::OracleCheckResult res = elegant::cmd_oracle_check();
      const std::string dir = out_dir.empty() ? "." : out_dir;
      std::filesystem::create_directories(dir);
      elegant::rundetail::write_json(res.report, dir + "/oracle_report.json");
      std::cout << res.report.dump(1) << "\n";
      if (!res.pass) {
        std::cerr << "oracle-check FAILED: " << res.first_failure << "\n";
        return 4;
      }
    } else if (*sample) {
      auto cfg = load_with_overrides(config_path, out_dir, seed_override, n_override);
      const std::string path = elegant::cmd_sample(cfg, cfg.output_dir);
      std::cout << "samples: " << path << "\n";
    }
  } catch (const elegant::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
