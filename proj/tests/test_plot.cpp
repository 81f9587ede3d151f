#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <regex>
#include <set>

#include "gmah/checkpoint.hpp"
#include "gmah/error.hpp"
#include "gmah/plot.hpp"

using namespace gmah;
namespace fs = std::filesystem;

namespace {

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("smooth examples") {
  const std::vector<double> x{0.0, 1.0};
  const auto y = smooth(x, 0.89);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == doctest::Approx(0.11).epsilon(1e-12));
  const std::vector<double> c(20, 3.5);
  for (double v : smooth(c, 0.89)) CHECK(v == doctest::Approx(3.5));
  const std::vector<double> z{0.3, -1.0, 7.0};
  CHECK(smooth(z, 0.0) == z);
  CHECK_THROWS_AS(smooth(std::vector<double>{}, 0.5), DomainError);
  CHECK_THROWS_AS(smooth(z, 1.0), DomainError);
}

TEST_CASE("smooth preserves order of monotone inputs and matches the recurrence") {
  Rng rng(1, "smooth");
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(1 + rng.below(40));
    double acc = rng.normal();
    for (double& v : x) v = (acc += rng.uniform());
    const double w = 0.99 * rng.uniform();
    const auto y = smooth(x, w);
    double ref = x[0];
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (i > 0) ref = w * ref + (1 - w) * x[i];
      CHECK(y[i] == doctest::Approx(ref).epsilon(1e-12));
      if (i > 0) CHECK(y[i] >= y[i - 1]);
    }
  }
}

TEST_CASE("curves render one raw and one smoothed path per run") {
  TempDir dir("gmah_test_plot_curves");
  write_text_file(dir.path / "a.csv", "step,reward_mean,reward_min\n100,0.1,0\n200,0.3,nan\n300,0.5,0.2\n");
  write_text_file(dir.path / "b.csv", "step,reward_mean,reward_min\n100,0.2,0.1\n200,0.2,0.1\n300,0.4,0.3\n");
  const std::vector<CurveRun> runs{{"adapt", dir.path / "a.csv"}, {"no-adapt", dir.path / "b.csv"}};
  CurveOptions opts;
  const std::string svg = render_curves(runs, opts);
  CHECK(count(svg, "<path") == 4);
  CHECK(count(svg, "stroke-opacity=\"0.3\"") == 2);
  CHECK(svg.find(">adapt<") != std::string::npos);
  CHECK(svg.find(">no-adapt<") != std::string::npos);
  CHECK(render_curves(runs, opts) == svg);

  opts.columns = {"reward_min"};
  CHECK(count(render_curves(runs, opts), "<path") == 4);
  opts.columns = {"reward_mean", "reward_min"};
  CHECK(count(render_curves(runs, opts), "<path") == 8);
  opts.columns = {"loss_mix"};
  CHECK_THROWS_AS(render_curves(runs, opts), SchemaError);

  write_curves(runs, CurveOptions{}, dir.path / "out.svg");
  CHECK(fs::exists(dir.path / "out.svg"));
}

TEST_CASE("csv reader errors") {
  TempDir dir("gmah_test_plot_csv");
  write_text_file(dir.path / "ragged.csv", "step,x\n1,2\n3\n");
  CHECK_THROWS_AS(read_csv(dir.path / "ragged.csv"), SchemaError);
  write_text_file(dir.path / "text.csv", "step,x\n1,abc\n");
  CHECK_THROWS_AS(read_csv(dir.path / "text.csv"), ParseError);
  CHECK_THROWS_AS(read_csv(dir.path / "missing.csv"), IoError);
  write_text_file(dir.path / "ok.csv", "step,x\n1,nan\n");
  const CsvTable t = read_csv(dir.path / "ok.csv");
  CHECK(std::isnan(t.column("x")[0]));
  CHECK(t.has("step"));
}

TEST_CASE("heatmap panels and color scale") {
  EvalReport r;
  r.grid_width = 3;
  r.grid_height = 2;
  r.heatmaps = {{0, 1, 2, 3, 4, 5}, {5, 4, 3, 2, 1, 0}, {0, 0, 0, 0, 0, 9}};
  const std::string svg = render_heatmap(r);
  CHECK(count(svg, "<g id=\"agent") == 3);
  CHECK(svg.find("agent 2") != std::string::npos);
  CHECK(render_heatmap(r) == svg);

  // Cell fills of the first panel, in count order, darken monotonically.
  const std::regex fill("fill=\"rgb\\((\\d+),(\\d+),(\\d+)\\)\"");
  std::vector<int> sums;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), fill); it != std::sregex_iterator(); ++it)
    sums.push_back(std::stoi((*it)[1]) + std::stoi((*it)[2]) + std::stoi((*it)[3]));
  REQUIRE(sums.size() == 18);
  for (int i = 1; i < 6; ++i) CHECK(sums[i] < sums[i - 1]);

  EvalReport zero = r;
  zero.heatmaps = {{0, 0, 0, 0, 0, 0}};
  const std::string z = render_heatmap(zero);
  std::set<std::string> fills;
  for (auto it = std::sregex_iterator(z.begin(), z.end(), fill); it != std::sregex_iterator(); ++it)
    fills.insert(it->str());
  CHECK(fills.size() == 1);

  EvalReport bad = r;
  bad.heatmaps[0].pop_back();
  CHECK_THROWS_AS(render_heatmap(bad), SchemaError);
}
