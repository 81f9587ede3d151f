#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gmah/checkpoint.hpp"
#include "gmah/error.hpp"
#include "gmah/plot.hpp"
#include "gmah/trainer.hpp"

using namespace gmah;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig smoke(const std::string& env, long steps, const fs::path& out) {
  RunConfig c = parse_config_text(nlohmann::json{{"env", env},
                                                 {"total_steps", steps},
                                                 {"log_interval", 500},
                                                 {"out_dir", out.string()},
                                                 {"autoencoder", {{"samples", 400}, {"max_steps", 100}}},
                                                 {"eval", {{"interval", steps / 2}, {"episodes", 3}}}}
                                      .dump());
  return c;
}

}  // namespace

TEST_CASE("stage-1 smoke run writes its artifacts and is bit-reproducible") {
  TempDir dir("gmah_test_trainer_s1");
  const RunConfig cfg = smoke("doorkey", 5000, dir.path / "a");
  const StageOutcome o = stage1_low(cfg, 7, dir.path / "a");
  CHECK(o.steps == 5000);
  CHECK(o.episodes > 0);
  for (const char* f : {"metrics_low.csv", "eval_low.csv", "low.json", "summary_low.json"})
    CHECK(fs::exists(dir.path / "a" / f));
  stage1_low(cfg, 7, dir.path / "b");
  CHECK(slurp(dir.path / "a" / "metrics_low.csv") == slurp(dir.path / "b" / "metrics_low.csv"));
  CHECK(slurp(dir.path / "a" / "low.json") == slurp(dir.path / "b" / "low.json"));
  stage1_low(cfg, 8, dir.path / "c");
  CHECK(slurp(dir.path / "a" / "metrics_low.csv") != slurp(dir.path / "c" / "metrics_low.csv"));

  const CsvTable t = read_csv(dir.path / "a" / "metrics_low.csv");
  CHECK(t.columns == metrics_columns(3));
  const auto step = t.column("step");
  for (std::size_t i = 1; i < step.size(); ++i) CHECK(step[i] > step[i - 1]);
  for (double v : t.column("success_g0"))
    if (!std::isnan(v)) CHECK((v >= 0.0 && v <= 1.0));
  const auto summary = nlohmann::json::parse(slurp(dir.path / "a" / "summary_low.json"));
  CHECK(summary.at("parameter_counts").at("low").get<long>() > 0);
}

TEST_CASE("later stages require earlier artifacts") {
  TempDir dir("gmah_test_trainer_dep");
  const RunConfig cfg = smoke("doorkey", 2000, dir.path);
  CHECK_THROWS_AS(stage2_high(cfg, 0, dir.path / "out", dir.path / "empty"), DependencyError);
  RunConfig tg = smoke("trashgrid", 2000, dir.path);
  CHECK_THROWS_AS(stage3_mix(tg, 0, dir.path / "out", dir.path / "empty"), DependencyError);
  CHECK_THROWS_AS(stage3_mix(cfg, 0, dir.path / "out", dir.path / "empty"), DomainError);
  EvalOptions opts;
  opts.episodes = 2;
  RunConfig missing = cfg;
  missing.from = (dir.path / "empty").string();
  CHECK_THROWS_AS(evaluate(missing, opts), DependencyError);

  // A Door-Key low-level checkpoint does not fit Trash-Grid.
  stage1_low(smoke("doorkey", 600, dir.path / "dk"), 0, dir.path / "dk");
  CHECK_THROWS_AS(stage2_high(tg, 0, dir.path / "out", dir.path / "dk"), DependencyError);
}

TEST_CASE("Door-Key high-level stage, adapt and no-adapt") {
  TempDir dir("gmah_test_trainer_s2");
  RunConfig cfg = smoke("doorkey", 3000, dir.path / "low");
  stage1_low(cfg, 1, dir.path / "low");

  cfg.stage = "high";
  const StageOutcome on = stage2_high(cfg, 1, dir.path / "adapt", dir.path / "low");
  for (const char* f : {"metrics_high.csv", "high.json", "low.json", "ae.json", "ae_pretrain.csv", "trigger_log.csv"})
    CHECK(fs::exists(dir.path / "adapt" / f));
  const auto summary = nlohmann::json::parse(slurp(dir.path / "adapt" / "summary_high.json"));
  const auto& trig = summary.at("trigger");
  CHECK(trig.at("stage2_evaluations") == trig.at("stage1_failures"));
  CHECK(trig.at("fired").get<long>() == static_cast<long>(on.proactive_updates));

  cfg.adapt = false;
  const StageOutcome off = stage2_high(cfg, 1, dir.path / "noadapt", dir.path / "low");
  CHECK(off.proactive_updates == 0);
  CHECK_FALSE(fs::exists(dir.path / "noadapt" / "trigger_log.csv"));

  SUBCASE("evaluation report invariants") {
    RunConfig ec = cfg;
    ec.from = (dir.path / "adapt").string();
    EvalOptions opts;
    opts.episodes = 12;
    opts.seed = 3;
    const EvalReport r = evaluate(ec, opts);
    CHECK(r.episodes == 12);
    CHECK(r.min_reward <= r.mean_reward);
    long total = 0;
    for (const auto& e : r.episode_summaries) total += e.length;
    CHECK(r.heatmap_total() == total);
    CHECK(r.grid_width == 8);
    CHECK(r.heatmaps.size() == 1);
    for (double s : r.subgoal_success) CHECK((s >= 0.0 && s <= 1.0));
    CHECK(r.trace.size() == static_cast<std::size_t>(total));
    const EvalReport back = eval_report_from_json(to_json(r));
    CHECK(back.mean_reward == r.mean_reward);
    CHECK(back.heatmaps == r.heatmaps);
    CHECK(evaluate(ec, opts).mean_reward == r.mean_reward);

    opts.mode = "stay";
    const EvalReport stay = evaluate(ec, opts);
    CHECK(stay.mean_reward == 0.0);
    CHECK(stay.mean_length == 65.0);  // actions at t = 0..T
    opts.episodes = 1;
    CHECK(evaluate(ec, opts).distinct_cells() == 1);
    CHECK_THROWS_AS(eval_report_from_json(nlohmann::json{{"env", "doorkey"}}), SchemaError);
  }
}

TEST_CASE("A2C baseline smoke run lowers its policy entropy") {
  TempDir dir("gmah_test_trainer_a2c");
  RunConfig cfg = smoke("doorkey", 20000, dir.path);
  cfg.stage = "a2c";
  cfg.eval.interval = 0;
  const StageOutcome o = a2c_baseline(cfg, 2, dir.path);
  CHECK(o.steps == 20000);
  CHECK(fs::exists(dir.path / "a2c_policy.json"));
  const auto entropy = read_csv(dir.path / "metrics_a2c.csv").column("entropy");
  REQUIRE(entropy.size() >= 10);
  const std::size_t k = entropy.size() / 10;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    first += entropy[i];
    last += entropy[entropy.size() - 1 - i];
  }
  CHECK(last < first);
  EvalOptions opts;
  opts.mode = "a2c";
  opts.episodes = 3;
  cfg.from = dir.path.string();
  CHECK(evaluate(cfg, opts).episodes == 3);
}

TEST_CASE("Trash-Grid three-stage smoke run") {
  TempDir dir("gmah_test_trainer_tg");
  RunConfig cfg = smoke("trashgrid", 3000, dir.path);
  cfg.mixer.learn_start = 100;
  cfg.mixer.batch_size = 8;
  stage1_low(cfg, 4, dir.path);
  cfg.stage = "high";
  stage2_high(cfg, 4, dir.path, dir.path);
  cfg.stage = "mix";
  const StageOutcome o = stage3_mix(cfg, 4, dir.path, dir.path);
  CHECK(o.steps >= 3000);
  for (const char* f : {"metrics_mix.csv", "mixer.json", "high_finetuned.json"}) CHECK(fs::exists(dir.path / f));
  const auto summary = nlohmann::json::parse(slurp(dir.path / "summary_mix.json"));
  CHECK(summary.at("mixer_updates").get<long>() > 0);
  CHECK(summary.at("monotonicity_probe").get<double>() >= -1e-8);
  const auto loss = read_csv(dir.path / "metrics_mix.csv").column("loss_mix");
  bool any = false;
  for (double v : loss) any |= std::isfinite(v);
  CHECK(any);

  EvalOptions opts;
  opts.episodes = 2;
  const EvalReport r = evaluate(cfg, opts);
  CHECK(r.heatmaps.size() == 3);
  CHECK(r.min_reward <= r.mean_reward);
  long total = 0;
  for (const auto& e : r.episode_summaries) total += e.length;
  CHECK(r.heatmap_total() == total);
  write_eval_report(r, dir.path / "report");
  CHECK(fs::exists(dir.path / "report" / "eval_report.json"));
  CHECK(fs::exists(dir.path / "report" / "trace.csv"));
}

TEST_CASE("multi-seed train writes per-seed directories and the resolved config") {
  TempDir dir("gmah_test_trainer_multi");
  RunConfig cfg = smoke("doorkey", 600, dir.path);
  cfg.seeds = {5, 6};
  cfg.eval.interval = 0;
  const auto outs = train(cfg);
  REQUIRE(outs.size() == 2);
  CHECK(fs::exists(dir.path / "seed_5" / "low.json"));
  CHECK(fs::exists(dir.path / "seed_6" / "low.json"));
  CHECK(fs::exists(dir.path / "resolved_config_low.json"));
  CHECK(parse_config(dir.path / "resolved_config_low.json") == cfg);
}

TEST_CASE("plateau rule") {
  CHECK_FALSE(plateaued({0.5, 0.6}, 0.02, 3));
  CHECK(plateaued({0.2, 0.5, 0.5, 0.505, 0.5}, 0.02, 3));
  CHECK_FALSE(plateaued({0.2, 0.5, 0.6, 0.6, 0.6}, 0.02, 3));
  CHECK_FALSE(plateaued({0.0, 0.0, 0.0, 0.0}, 0.02, 3));
}
