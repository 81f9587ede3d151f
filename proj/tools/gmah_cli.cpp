// Command-line front end. Talks to the library only through gmah.h.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gmah/gmah.h"

namespace {

using json = nlohmann::json;

// Exit codes: 0 success, 2 config, 3 dependency, 4 numeric, 1 anything else.
int exit_code(int status) {
  switch (status) {
    case GMAH_OK: return 0;
    case GMAH_ERR_CONFIG:
    case GMAH_ERR_PARSE:
    case GMAH_ERR_SCHEMA: return 2;
    case GMAH_ERR_DEPENDENCY: return 3;
    case GMAH_ERR_NUMERIC: return 4;
    default: return 1;
  }
}

struct Failure {
  int status;
};

void check(int status) {
  if (status != GMAH_OK) throw Failure{status};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  gmah_string_free(s);
  return out;
}

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string from;
  std::string stage;
  std::string env;
  std::string adapt;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool with_stage) {
  cmd->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "single seed, overrides the config's seed list");
  cmd->add_option("--out", f.out, "output directory (GMAH_OUT overrides)");
  cmd->add_option("--from", f.from, "directory with earlier-stage artifacts (default: the output directory)");
  if (with_stage) cmd->add_option("--stage", f.stage, "stage to run")->check(CLI::IsMember({"low", "high", "mix", "a2c"}));
  cmd->add_option("--env", f.env, "environment")->check(CLI::IsMember({"doorkey", "trashgrid"}));
  cmd->add_option("--adapt", f.adapt, "proactive goal updates")->check(CLI::IsMember({"on", "off"}));
}

// Config file (or environment defaults) with the command-line overrides applied.
gmah_config* resolve(const RunFlags& f) {
  gmah_config* cfg = nullptr;
  if (!f.config.empty()) {
    check(gmah_config_load(f.config.c_str(), &cfg));
    if (!f.env.empty()) {
      char* env = nullptr;
      check(gmah_config_get_env(cfg, &env));
      const std::string cfg_env = take(env);
      if (cfg_env != f.env) {
        gmah_config_free(cfg);
        std::fprintf(stderr, "error: --env %s conflicts with env '%s' in %s\n", f.env.c_str(), cfg_env.c_str(),
                     f.config.c_str());
        throw Failure{GMAH_ERR_CONFIG};
      }
    }
  } else {
    check(gmah_config_default(f.env.empty() ? "doorkey" : f.env.c_str(), &cfg));
  }
  std::string out = f.out;
  if (const char* env_out = std::getenv("GMAH_OUT"); env_out && *env_out) out = env_out;
  if (!out.empty()) check(gmah_config_set_out_dir(cfg, out.c_str()));
  if (!f.from.empty()) check(gmah_config_set_from(cfg, f.from.c_str()));
  if (f.seed) check(gmah_config_set_seed(cfg, *f.seed));
  if (!f.stage.empty()) check(gmah_config_set_stage(cfg, f.stage.c_str()));
  if (!f.adapt.empty()) check(gmah_config_set_adapt(cfg, f.adapt == "on"));
  return cfg;
}

struct ConfigHandle {
  gmah_config* p;
  ~ConfigHandle() { gmah_config_free(p); }
};

void print_parameter_counts(const json& counts) {
  std::string line = "parameters:";
  long gmah_total = 0;
  for (const auto& [name, v] : counts.items()) {
    line += " " + name + "=" + std::to_string(v.get<long>());
    if (name != "a2c_equivalent") gmah_total += v.get<long>();
  }
  if (counts.contains("a2c_equivalent") && counts["a2c_equivalent"].get<long>() > 0) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " ratio_vs_a2c=%.2f", static_cast<double>(gmah_total) / counts["a2c_equivalent"].get<double>());
    line += " total=" + std::to_string(gmah_total) + buf;
  }
  std::cout << line << "\n";
}

int cmd_train(const RunFlags& f) {
  ConfigHandle cfg{resolve(f)};
  char* summary = nullptr;
  check(gmah_train(cfg.p, &summary));
  const json runs = json::parse(take(summary));
  for (const auto& r : runs) {
    std::cout << "seed " << r["seed"].get<std::uint64_t>() << ": stage " << r["stage"].get<std::string>() << ", "
              << r["steps"].get<long>() << " steps, " << r["episodes"].get<long>() << " episodes"
              << (r["plateau_stopped"].get<bool>() ? ", stopped on plateau" : "")
              << ", proactive updates " << r["proactive_updates"].get<std::uint64_t>() << " -> "
              << r["out_dir"].get<std::string>() << "\n";
    if (r.contains("summary") && r["summary"].contains("parameter_counts"))
      print_parameter_counts(r["summary"]["parameter_counts"]);
  }
  return 0;
}

int cmd_eval(const RunFlags& f, const std::string& mode, int episodes, const std::string& report_dir) {
  ConfigHandle cfg{resolve(f)};
  char* cfg_json = nullptr;
  check(gmah_config_to_json(cfg.p, &cfg_json));
  const json resolved = json::parse(take(cfg_json));
  const std::string artifacts = resolved.value("from", std::string()).empty() ? resolved["out_dir"].get<std::string>()
                                                                               : resolved["from"].get<std::string>();
  const std::string dir = report_dir.empty() ? (std::filesystem::path(artifacts) / ("eval_" + mode)).string() : report_dir;
  const std::uint64_t seed = f.seed.value_or(resolved["seeds"][0].get<std::uint64_t>());
  const bool adapt = f.adapt.empty() ? resolved["adapt"].get<bool>() : f.adapt == "on";
  char* report = nullptr;
  check(gmah_evaluate(cfg.p, mode.c_str(), episodes, seed, adapt, dir.c_str(), &report));
  const json r = json::parse(take(report));
  std::printf("%s %s: %d episodes, mean reward %.4f, min reward %.4f, mean length %.2f\n",
              r["env"].get<std::string>().c_str(), mode.c_str(), r["episodes"].get<int>(),
              r["mean_reward"].get<double>(), r["min_reward"].get<double>(), r["mean_length"].get<double>());
  for (std::size_t g = 0; g < r["subgoal_names"].size(); ++g)
    std::printf("  %-14s success %.2f (issued in %d episodes)\n", r["subgoal_names"][g].get<std::string>().c_str(),
                r["subgoal_success"][g].get<double>(), r["subgoal_issued"][g].get<int>());
  if (r.contains("proactive_updates"))
    std::printf("  proactive updates %llu\n", static_cast<unsigned long long>(r["proactive_updates"].get<std::uint64_t>()));
  std::printf("report written to %s\n", dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical multi-agent goal learning: training, evaluation and plotting"};
  app.require_subcommand(1);

  RunFlags train_flags;
  auto* train = app.add_subcommand("train", "run one training stage for every seed");
  add_run_flags(train, train_flags, true);

  RunFlags eval_flags;
  std::string mode = "gmah", report_dir;
  int episodes = 100;
  auto* eval = app.add_subcommand("eval", "evaluate saved policies greedily");
  add_run_flags(eval, eval_flags, false);
  eval->add_option("--episodes", episodes, "evaluation episodes")->check(CLI::PositiveNumber);
  eval->add_option("--mode", mode, "policy to evaluate")->check(CLI::IsMember({"gmah", "low", "a2c", "stay"}));
  eval->add_option("--report-dir", report_dir, "where to write eval_report.json and trace.csv");

  std::vector<std::string> csvs, labels;
  std::string columns = "reward_mean", title, plot_out = "curves.svg";
  double weight = 0.89;
  auto* plot = app.add_subcommand("plot", "render metrics CSVs as smoothed curves (SVG)");
  plot->add_option("csv", csvs, "metrics CSV files")->required()->check(CLI::ExistingFile);
  plot->add_option("--labels", labels, "one label per CSV");
  plot->add_option("--columns", columns, "comma-separated columns, e.g. reward_mean or reward_min");
  plot->add_option("--weight", weight, "exponential smoothing weight")->check(CLI::Range(0.0, 0.999999));
  plot->add_option("--title", title, "plot title");
  plot->add_option("-o,--output", plot_out, "output SVG");

  std::string report_path, heat_out = "heatmap.svg";
  auto* heat = app.add_subcommand("heatmap", "render the visit heatmaps of an eval report (SVG)");
  heat->add_option("report", report_path, "eval_report.json")->required()->check(CLI::ExistingFile);
  heat->add_option("-o,--output", heat_out, "output SVG");

  std::string conf_env = "doorkey", conf_config;
  std::uint64_t conf_seed = 7;
  auto* conf = app.add_subcommand("conformance", "run the environment conformance suite");
  conf->add_option("--env", conf_env, "environment")->check(CLI::IsMember({"doorkey", "trashgrid"}));
  conf->add_option("--env-config", conf_config, "environment config as inline JSON");
  conf->add_option("--seed", conf_seed, "seed");

  int gc_seeds = 5;
  auto* gc = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  gc->add_option("--seeds", gc_seeds, "number of seeds")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return cmd_train(train_flags);
    if (*eval) return cmd_eval(eval_flags, mode, episodes, report_dir);
    if (*plot) {
      if (!labels.empty() && labels.size() != csvs.size()) {
        std::fprintf(stderr, "error: %zu labels for %zu CSV files\n", labels.size(), csvs.size());
        return 2;
      }
      std::vector<const char*> paths, names;
      for (const auto& c : csvs) paths.push_back(c.c_str());
      for (const auto& l : labels) names.push_back(l.c_str());
      check(gmah_plot_curves(paths.data(), labels.empty() ? nullptr : names.data(), paths.size(), columns.c_str(),
                             weight, title.c_str(), plot_out.c_str()));
      std::cout << "wrote " << plot_out << "\n";
      return 0;
    }
    if (*heat) {
      check(gmah_plot_heatmap(report_path.c_str(), heat_out.c_str()));
      std::cout << "wrote " << heat_out << "\n";
      return 0;
    }
    if (*conf) {
      int passed = 0;
      char* text = nullptr;
      check(gmah_conformance(conf_env.c_str(), conf_config.c_str(), conf_seed, &passed, &text));
      std::cout << take(text);
      return passed ? 0 : 1;
    }
    if (*gc) {
      double worst = 0.0;
      char* report = nullptr;
      check(gmah_gradcheck(gc_seeds, &worst, &report));
      for (const auto& r : json::parse(take(report)))
        std::printf("%-28s seed %llu  max rel error %.3g\n", r["family"].get<std::string>().c_str(),
                    static_cast<unsigned long long>(r["seed"].get<std::uint64_t>()), r["max_rel_error"].get<double>());
      std::printf("worst %.3g (%s 1e-4)\n", worst, worst < 1e-4 ? "below" : "NOT below");
      return worst < 1e-4 ? 0 : 4;
    }
  } catch (const Failure& f) {
    const char* msg = gmah_last_error();
    if (msg && *msg) std::fprintf(stderr, "error: %s\n", msg);
    return exit_code(f.status);
  }
  return 1;
}
