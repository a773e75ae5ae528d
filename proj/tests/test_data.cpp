#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "lrisk/data.hpp"
#include "lrisk/errors.hpp"
#include "lrisk/rng.hpp"
#include "oracles.hpp"

using namespace lrisk;

namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void check_gradient(const LossModel& model, std::span<const double> params, std::size_t i) {
  const auto [value, grad] = model.loss_and_grad(params, i);
  const auto fd = oracle::fd_gradient([&](std::span<const double> x) { return model.loss(x, i); },
                                      std::vector<double>(params.begin(), params.end()));
  double scale = 1.0;
  for (double g : fd) scale = std::max(scale, std::abs(g));
  for (std::size_t j = 0; j < fd.size(); ++j) CHECK(std::abs(grad[j] - fd[j]) <= 1e-5 * scale);
  CHECK(value == model.loss(params, i));
}

std::filesystem::path temp_file(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / ("lrisk_test_" + name);
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("counter generator follows its documented formula") {
  const std::uint64_t seed = 42;
  const std::uint64_t key = splitmix(seed);
  CounterRng rng(seed);
  for (std::uint64_t k = 1; k <= 100; ++k) CHECK(rng.next() == splitmix(key + k * 0x9E3779B97F4A7C15ULL));
  CHECK(rng.counter() == 100);

  CounterRng child = CounterRng(seed).split(7);
  const std::uint64_t child_key = splitmix(key ^ splitmix(7 + 0xD1B54A32D192ED03ULL));
  CHECK(child.next() == splitmix(child_key + 0x9E3779B97F4A7C15ULL));

  CounterRng u(3), raw(3);
  CHECK(u.uniform() == static_cast<double>(raw.next() >> 11) * 0x1.0p-53);
  CHECK(u.uniform_open() == (static_cast<double>(raw.next() >> 11) + 0.5) * 0x1.0p-53);
}

TEST_CASE("bounded draws are uniform") {
  CounterRng rng(5);
  std::vector<int> counts(7, 0);
  const int draws = 70000;
  for (int k = 0; k < draws; ++k) ++counts[rng.below(7)];
  for (int c : counts) CHECK(std::abs(c - draws / 7) < 5 * std::sqrt(draws / 7.0));
  CHECK(rng.below(1) == 0);
}

TEST_CASE("simulated data") {
  const SplitDataset s = generate_simulated(1000, 10, 3);
  CHECK(s.train.n == 800);
  CHECK(s.test.n == 200);
  CHECK(s.train.d == 10);
  CHECK(s.train.split == Split::Train);
  CHECK(s.test.split == Split::Test);

  const SplitDataset again = generate_simulated(1000, 10, 3);
  CHECK(again.train.features == s.train.features);
  CHECK(again.test.targets == s.test.targets);
  CHECK(generate_simulated(1000, 10, 4).train.features != s.train.features);

  // Raw features are standard normal: covariance close to identity.
  const std::size_t n = 4000, d = 5;
  const Dataset raw = simulated_regression(n, d, 11);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      double cov = 0.0;
      for (std::size_t i = 0; i < n; ++i) cov += raw.features[i * d + a] * raw.features[i * d + b];
      cov /= static_cast<double>(n);
      CHECK(std::abs(cov - (a == b ? 1.0 : 0.0)) <= 5.0 / std::sqrt(static_cast<double>(n)));
    }
  CHECK_THROWS_AS(simulated_regression(0, 3, 1), InvalidParameter);
}

TEST_CASE("standardization") {
  Dataset data = simulated_regression(300, 4, 2);
  for (std::size_t i = 0; i < data.n; ++i) data.features[i * 4 + 1] = 3.0 * data.features[i * 4 + 1] + 7.0;
  standardize(data, true);
  for (std::size_t j = 0; j < data.d; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < data.n; ++i) mean += data.features[i * data.d + j] / data.n;
    for (std::size_t i = 0; i < data.n; ++i)
      var += (data.features[i * data.d + j] - mean) * (data.features[i * data.d + j] - mean) / data.n;
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(var - 1.0) <= 1e-6);
  }
  const double ty = std::accumulate(data.targets.begin(), data.targets.end(), 0.0) / data.n;
  CHECK(std::abs(ty) <= 1e-9);

  Dataset twice = data;
  const StandardizationReport report = standardize(twice, true);
  CHECK(report.dropped_columns.empty());
  for (std::size_t k = 0; k < data.features.size(); ++k) CHECK(twice.features[k] == doctest::Approx(data.features[k]).epsilon(1e-12));
}

TEST_CASE("train/test split") {
  Dataset data;
  data.n = 11;
  data.d = 1;
  for (std::size_t i = 0; i < data.n; ++i) {
    data.features.push_back(static_cast<double>(i));
    data.targets.push_back(static_cast<double>(i));
  }
  const SplitDataset s = train_test_split(data, 9);
  CHECK(s.test.n == 3);  // ceil(2.2)
  CHECK(s.train.n == 8);
  std::multiset<double> seen(s.train.features.begin(), s.train.features.end());
  seen.insert(s.test.features.begin(), s.test.features.end());
  CHECK(seen == std::multiset<double>(data.features.begin(), data.features.end()));
  CHECK(train_test_split(data, 9).test.features == s.test.features);
  for (std::size_t i = 0; i < s.train.n; ++i) CHECK(s.train.targets[i] == s.train.features[i]);
}

TEST_CASE("gaussian clusters") {
  const SplitDataset s = generate_gaussian_clusters({}, 1);
  CHECK(s.train.n == 400);
  CHECK(s.test.n == 300);
  CHECK(s.train.d == 2);
  CHECK(std::count(s.train.labels.begin(), s.train.labels.end(), -1) == 100);
  CHECK(std::count(s.test.labels.begin(), s.test.labels.end(), -1) == 0);
  for (int c = 0; c < 3; ++c) CHECK(std::count(s.test.labels.begin(), s.test.labels.end(), c) == 100);

  ClusterLayout exact;
  exact.cluster_variance = 0.0;
  exact.outliers = 0;
  const SplitDataset z = generate_gaussian_clusters(exact, 2);
  for (std::size_t i = 0; i < z.train.n; ++i) {
    const auto& center = exact.centers[static_cast<std::size_t>(z.train.labels[i])];
    CHECK(z.train.row(i)[0] == center[0]);
    CHECK(z.train.row(i)[1] == center[1]);
  }
}

TEST_CASE("CSV parsing") {
  SUBCASE("basic with target by name") {
    const Dataset d = parse_csv("a,y,b\n1,10,2\n3,20,4\n", {.target_column = "y"});
    CHECK(d.n == 2);
    CHECK(d.d == 2);
    CHECK(d.features == std::vector<double>{1, 2, 3, 4});
    CHECK(d.targets == std::vector<double>{10, 20});
    CHECK(d.target_name == "y");
  }
  SUBCASE("classification labels become indices") {
    const Dataset d = parse_csv("x,c\n0.5,3\n1.5,1\n2.5,3\n", {.target_kind = TargetKind::Classification});
    CHECK(d.classes == std::vector<int>{1, 0, 1});
  }
  SUBCASE("malformed row reports its row") {
    try {
      parse_csv("a,b\n1,2\n3\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.row() == 3);
    }
  }
  SUBCASE("non-numeric cell reports row and column") {
    try {
      parse_csv("a,b\n1,2\n3,x\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.row() == 3);
      CHECK(e.column() == 2);
    }
  }
  SUBCASE("missing header") { CHECK_THROWS_AS(parse_csv("1,2\n3,4\n"), ParseError); }
  SUBCASE("empty input") { CHECK_THROWS_AS(parse_csv(""), ParseError); }
  SUBCASE("unknown target column") { CHECK_THROWS_AS(parse_csv("a,b\n1,2\n", {.target_column = "z"}), ParseError); }
}

TEST_CASE("load_csv") {
  SUBCASE("yacht-sized file splits 244/62") {
    std::ostringstream text;
    text << "f1,f2,f3,f4,f5,f6,resistance\n";
    CounterRng rng(1);
    for (int i = 0; i < 306; ++i) {
      for (int j = 0; j < 7; ++j) text << rng.normal() << (j < 6 ? "," : "\n");
    }
    const LoadedCsv loaded = load_csv(temp_file("yacht.csv", text.str()));
    CHECK(loaded.data.train.d == 6);
    CHECK(loaded.data.train.n == 244);
    CHECK(loaded.data.test.n == 62);
  }
  SUBCASE("constant column is dropped") {
    const LoadedCsv loaded = load_csv(temp_file("const.csv", "a,k,b,y\n1,5,2,1\n2,5,1,0\n3,5,5,2\n4,5,0,3\n"));
    CHECK(loaded.report.dropped_columns == std::vector<std::string>{"k"});
    CHECK(loaded.data.train.d == 2);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), ParseError); }
  SUBCASE("round trip through write_csv") {
    const SplitDataset s = generate_simulated(20, 3, 1);
    const auto path = std::filesystem::temp_directory_path() / "lrisk_test_roundtrip.csv";
    write_csv(s.train, path);
    std::ifstream in(path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    const Dataset back = parse_csv(buffer.str());
    CHECK(back.n == s.train.n);
    CHECK(back.features == s.train.features);
    CHECK(back.targets == s.train.targets);
  }
}

TEST_CASE("squared loss") {
  Dataset d;
  d.n = 3;
  d.d = 2;
  d.features = {1, 2, -1, 0.5, 3, -2};
  const std::vector<double> w_star{0.7, -1.3};
  for (std::size_t i = 0; i < 3; ++i) d.targets.push_back(w_star[0] * d.features[2 * i] + w_star[1] * d.features[2 * i + 1]);
  const SquaredLoss model(d);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto [l, g] = model.loss_and_grad(w_star, i);
    CHECK(l <= 1e-30);
    CHECK(std::abs(g[0]) <= 1e-15);
    CHECK(std::abs(g[1]) <= 1e-15);
  }
  CHECK(model.loss(std::vector<double>{0, 0}, 0) == doctest::Approx(0.5 * d.targets[0] * d.targets[0]));
  CHECK_THROWS_AS(model.loss(w_star, 3), DimensionError);
  CHECK(model.convex());
}

TEST_CASE("logistic loss") {
  Dataset d;
  d.n = 4;
  d.d = 3;
  CounterRng rng(4);
  for (int k = 0; k < 12; ++k) d.features.push_back(rng.normal());
  d.classes = {0, 1, 1, 0};
  const MultinomialLogistic binary(d, 2);
  CHECK(binary.dim() == 6);
  for (std::size_t i = 0; i < 4; ++i) CHECK(binary.loss(std::vector<double>(6, 0.0), i) == doctest::Approx(std::log(2.0)));

  d.classes = {0, 2, 1, 2};
  const MultinomialLogistic three(d, 3);
  CHECK(three.loss(std::vector<double>(9, 0.0), 1) == doctest::Approx(std::log(3.0)));
  // Huge scores must not overflow.
  std::vector<double> big(9, 0.0);
  big[0] = 1e3;
  CHECK(std::isfinite(three.loss(big, 1)));
  CHECK(three.loss(big, 1) >= 0.0);
  d.classes = {0, 3, 1, 2};
  CHECK_THROWS_AS(MultinomialLogistic(d, 3), InvalidInput);
}

TEST_CASE("k-means loss") {
  Dataset d;
  d.n = 3;
  d.d = 2;
  d.features = {1, 1, 0, 0, 2, 0};
  const KMeansLoss model(d, 2);
  const std::vector<double> centers{1, 1, 5, 5};
  CHECK(model.loss(centers, 0) == 0.0);
  CHECK(model.loss(centers, 1) == 2.0);
  const auto [l, g] = model.loss_and_grad(centers, 1);
  CHECK(g == std::vector<double>{2, 2, 0, 0});
  CHECK(!model.convex());
  // Point (1, 0) sits between centers (0, 0) and (2, 0): the lowest index wins.
  Dataset tie;
  tie.n = 2;
  tie.d = 2;
  tie.features = {1, 0, 9, 9};
  const KMeansLoss tied(tie, 2);
  CHECK(tied.assign(std::vector<double>{0, 0, 2, 0}, tie.row(0)) == 0);
  CHECK(tied.assign(std::vector<double>{2, 0, 0, 0}, tie.row(0)) == 0);
  CHECK_THROWS_AS(KMeansLoss(tie, 2).loss(std::vector<double>{0, 0, 2, 0}, 2), DimensionError);
  CHECK_THROWS_AS(KMeansLoss(tie, 0), InvalidParameter);
  CHECK_THROWS_AS(KMeansLoss(tie, 3), InvalidParameter);
}

TEST_CASE("gradients match finite differences") {
  CounterRng rng(21);
  const SplitDataset reg = generate_simulated(120, 6, 2);
  const SquaredLoss squared(reg.train);

  Dataset cls = reg.train;
  cls.targets.clear();
  for (std::size_t i = 0; i < cls.n; ++i) cls.classes.push_back(static_cast<int>(rng.below(3)));
  const MultinomialLogistic logistic(cls, 3);

  const SplitDataset clusters = generate_gaussian_clusters({}, 3);
  const KMeansLoss kmeans(clusters.train, 3);

  for (const LossModel* model : std::initializer_list<const LossModel*>{&squared, &logistic, &kmeans}) {
    CAPTURE(model->name());
    for (int draw = 0; draw < 100; ++draw) {
      std::vector<double> params(model->dim());
      for (double& p : params) p = rng.normal();
      const std::size_t i = rng.below(model->size());
      check_gradient(*model, params, i);
    }
  }
}
