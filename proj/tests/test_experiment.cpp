#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "lrisk/config.hpp"
#include "lrisk/errors.hpp"
#include "lrisk/experiment.hpp"
#include "lrisk/io.hpp"

using namespace lrisk;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.name = "small";
  c.dataset.n = 100;
  c.dataset.d = 3;
  c.dataset.seed = 2;
  c.spectra = {Spectrum::extremile(2.0), Spectrum::superquantile(0.5)};
  c.algorithms = {Algorithm::Sgd, Algorithm::LsvrgUniform};
  c.lr_grid = {0.003, 0.03, 0.3};
  c.seeds = {1, 2};
  c.batch_size = 16;
  c.max_passes = 6;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lrisk_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_config(R"(# comment
name = "demo"   # trailing comment
dataset = simulated
dataset_n = 200
spectra = [{"kind": "extremile", "param": 2}, {"kind": "esrm", "param": 1}, "uniform"]
algorithms = ["sgd", "lsvrg"]
lr_grid = [0.1, 0.01]
seeds = [3, 4]
batch_size = 32
max_passes = 10
mu_scale = 10
smoothing_nu = 0.5
record_timing = true
)");
  CHECK(c.name == "demo");
  CHECK(c.dataset.n == 200);
  REQUIRE(c.spectra.size() == 3);
  CHECK(c.spectra[0] == Spectrum::extremile(2.0));
  CHECK(c.spectra[2] == Spectrum::uniform());
  CHECK(c.algorithms == std::vector<Algorithm>{Algorithm::Sgd, Algorithm::LsvrgUniform});
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(c.batch_size == 32);
  CHECK(c.mu_for(100) == doctest::Approx(0.1));
  CHECK(c.smoothing->nu == 0.5);
  CHECK(c.record_timing);

  const ExperimentConfig defaults = parse_config("");
  CHECK(defaults.seeds.size() == 5);
  CHECK(defaults.batch_size == 64);
  CHECK(defaults.max_passes == 64);
  CHECK(defaults.mu_for(800) == doctest::Approx(1.0 / 800));
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("bogus = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("seeds = [1]\nseeds = [2]"), ConfigError);
  try {
    parse_config("name = a\nthis line has no equals sign\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 2);
  }
  CHECK_THROWS_AS(parse_config("lr_grid = [0.1, -1]").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("lr_grid = []").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("seeds = [1, 1]").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("algorithms = [\"lsvrg_smoothed\"]").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("algorithms = [\"qsvrg\"]").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("loss = kmeans").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("spectrum = {\"kind\": \"nope\"}"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.cfg"), ConfigError);
}

TEST_CASE("config renders and parses back") {
  ExperimentConfig c = small_config();
  c.smoothing = SmoothingConfig{0.25, Regularizer::Entropic};
  c.quantile_grid = {0.5, 0.9, 1.0};
  c.mu = 0.01;
  const ExperimentConfig back = parse_config(render_config(c));
  CHECK(render_config(back) == render_config(c));
  CHECK(back.spectra == c.spectra);
  CHECK(back.lr_grid == c.lr_grid);
  CHECK(back.smoothing->regularizer == Regularizer::Entropic);
  CHECK(*back.mu == 0.01);
}

TEST_CASE("number formatting") {
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(format_number(INFINITY) == "inf");
  CHECK(format_number(-INFINITY) == "-inf");
  CHECK(format_number(NAN) == "nan");
  CHECK(json_number(INFINITY).is_null());
  CHECK(json_number(2.5) == 2.5);
  CHECK(run_file_name("simulated", "extremile_2", "sgd", 3) == "simulated_extremile_2_sgd_3.jsonl");
}

TEST_CASE("problem construction") {
  const Problem p = build_problem(small_config());
  CHECK(p.data.train.n == 80);
  CHECK(p.data.test.n == 20);
  CHECK(p.train->name() == "squared");
  ExperimentConfig c = small_config();
  c.loss = LossKind::Logistic;
  CHECK_THROWS_AS(build_problem(c), ConfigError);
  c = small_config();
  c.dataset.source = DatasetSource::Clusters;
  c.loss = LossKind::KMeans;
  c.clusters = 3;
  const Problem k = build_problem(c);
  CHECK(k.train->dim() == 6);
  CHECK(!k.train->convex());
}

TEST_CASE("grid search") {
  const ExperimentConfig config = small_config();
  const Problem p = build_problem(config);
  const RegularizedObjective obj(discretize(config.spectra[0], p.train->size()), config.mu_for(p.train->size()),
                                 *p.train);

  SUBCASE("single point grid") {
    ExperimentConfig c = config;
    c.lr_grid = {0.05};
    const GridChoice g = grid_search(c, obj, c.spectra[0], Algorithm::Sgd);
    CHECK(g.eta == 0.05);
    CHECK(g.points.size() == 1);
  }
  SUBCASE("divergent rates score infinity and lose") {
    ExperimentConfig c = config;
    c.lr_grid = {1e7, 0.03, 1e6};
    const GridChoice g = grid_search(c, obj, c.spectra[0], Algorithm::Sgd);
    CHECK(g.eta == 0.03);
    REQUIRE(g.points.size() == 3);
    CHECK(g.points[0].eta == 0.03);
    CHECK(std::isinf(g.points[1].score));
    CHECK(std::isinf(g.points[2].score));
  }
  SUBCASE("every rate diverging is an error") {
    ExperimentConfig c = config;
    c.lr_grid = {1e6};
    CHECK_THROWS_AS(grid_search(c, obj, c.spectra[0], Algorithm::Sgd), AllDivergedError);
  }
  SUBCASE("the choice minimizes the score, ties toward the smaller rate") {
    ExperimentConfig c = config;
    c.lr_grid = {0.3, 0.03, 0.03, 0.003};
    const GridChoice g = grid_search(c, obj, c.spectra[0], Algorithm::LsvrgUniform);
    for (std::size_t k = 1; k < g.points.size(); ++k) CHECK(g.points[k - 1].eta <= g.points[k].eta);
    std::size_t best = 0;
    for (std::size_t k = 1; k < g.points.size(); ++k)
      if (g.points[k].score < g.points[best].score) best = k;
    CHECK(g.eta == g.points[best].eta);
  }
  SUBCASE("thread count does not change the outcome") {
    const GridChoice one = grid_search(config, obj, config.spectra[0], Algorithm::Sgd, 1);
    const GridChoice many = grid_search(config, obj, config.spectra[0], Algorithm::Sgd, 3);
    CHECK(one.eta == many.eta);
    for (std::size_t k = 0; k < one.points.size(); ++k) CHECK(one.points[k].score == many.points[k].score);
  }
}

TEST_CASE("gap curves and plot data") {
  RunRecord r;
  for (double v : {5.0, 3.0, 2.0}) {
    MeasurementRow row;
    row.pass = r.rows.size();
    row.objective = v;
    r.rows.push_back(row);
  }
  const auto gaps = gap_curve(r, 1.0);
  CHECK(gaps == std::vector<double>{1.0, 0.5, 0.25});

  std::ostringstream empty;
  CHECK(emit_plot_data({}, empty) == 0);
  CHECK(empty.str() == "objective,algorithm,seed,pass,gap\n");

  std::vector<PlotCurve> curves;
  for (const char* objective : {"a", "b", "c", "d", "e"})
    for (const char* algorithm : {"sgd", "srda", "lsvrg"})
      for (std::uint64_t seed = 1; seed <= 64; ++seed) curves.push_back({objective, algorithm, seed, {1.0, 0.5}});
  std::ostringstream out;
  CHECK(emit_plot_data(curves, out) == 960);
  std::size_t lines = 0;
  for (char ch : out.str()) lines += ch == '\n';
  CHECK(lines == 961);
}

TEST_CASE("full experiment run and outputs") {
  ExperimentConfig config = small_config();
  config.record_timing = true;
  const ExperimentResult one = run_experiment(config, 1);
  REQUIRE(one.objectives.size() == 2);
  for (const ObjectiveRun& obj : one.objectives) {
    CHECK(obj.reference_certified);
    CHECK(obj.runs.size() == 4);
    for (const auto& g : obj.gaps) {
      CHECK(g.front() == 1.0);
      for (double x : g) CHECK(x >= -1e-9);
    }
  }

  const fs::path dir_a = fresh_dir("run_a"), dir_b = fresh_dir("run_b");
  write_experiment(config, one, dir_a);
  config.record_timing = false;
  write_experiment(config, run_experiment(config, 3), dir_b);

  CHECK(fs::exists(dir_a / "timing.csv"));
  CHECK(!fs::exists(dir_b / "timing.csv"));
  const std::string file = run_file_name("simulated", "extremile_2", "sgd", 1);
  CHECK(read_text(dir_a / file) == read_text(dir_b / file));
  CHECK(read_text(dir_a / "gaps.csv") == read_text(dir_b / "gaps.csv"));
  CHECK(read_text(dir_a / "summary.json") == read_text(dir_b / "summary.json"));

  std::istringstream lines(read_text(dir_a / file));
  std::string line;
  std::size_t rows = 0;
  bool summary = false;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("summary")) {
      summary = true;
    } else {
      CHECK(j["pass"] == rows);
      ++rows;
    }
  }
  CHECK(summary);
  CHECK(rows == config.max_passes + 1);
}

TEST_CASE("label-permutation accuracy") {
  Dataset d;
  d.n = 4;
  d.d = 1;
  d.features = {0.0, 0.1, 5.0, 5.1};
  d.labels = {0, 0, 1, -1};
  const KMeansLoss model(d, 2);
  CHECK(best_permutation_accuracy(model, std::vector<double>{5.0, 0.0}, d) == 1.0);
  CHECK(best_permutation_accuracy(model, std::vector<double>{0.0, 5.0}, d) == 1.0);
  CHECK(best_permutation_accuracy(model, std::vector<double>{0.05, 100.0}, d) == doctest::Approx(2.0 / 3.0));
  const KMeansLoss single(d, 1);
  CHECK(best_permutation_accuracy(single, std::vector<double>{1.0}, d) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("parallel_for rethrows the first failure") {
  std::vector<int> hit(20, 0);
  parallel_for(20, 4, [&](std::size_t i) { hit[i] = 1; });
  CHECK(std::count(hit.begin(), hit.end(), 1) == 20);
  try {
    parallel_for(10, 3, [](std::size_t i) {
      if (i == 3 || i == 7) throw std::runtime_error("boom " + std::to_string(i));
    });
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "boom 3");
  }
}
