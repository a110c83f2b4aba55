#include <catch2/catch.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pmle/data.hpp"
#include "pmle/metrics.hpp"
#include "pmle/models/logistic_regression.hpp"

using namespace pmle;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "pmle_data_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
}

void append_be32(std::string& buffer, std::uint32_t value) {
  buffer.push_back(static_cast<char>((value >> 24) & 0xff));
  buffer.push_back(static_cast<char>((value >> 16) & 0xff));
  buffer.push_back(static_cast<char>((value >> 8) & 0xff));
  buffer.push_back(static_cast<char>(value & 0xff));
}

// Tiny IDX pair: `count` images of 2x2 pixels with the given labels.
void write_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels,
                    const std::vector<std::uint8_t>& label_values,
                    std::uint32_t image_magic = 2051, std::uint32_t label_magic = 2049) {
  std::string img;
  append_be32(img, image_magic);
  append_be32(img, static_cast<std::uint32_t>(label_values.size()));
  append_be32(img, 2);
  append_be32(img, 2);
  for (std::size_t i = 0; i < label_values.size(); ++i) {
    img.push_back(static_cast<char>(10 * i + 1));
    img.push_back(static_cast<char>(10 * i + 2));
    img.push_back(static_cast<char>(10 * i + 3));
    img.push_back(static_cast<char>(0));  // constant column; must z-score to 0
  }
  write_text(images, img);

  std::string lab;
  append_be32(lab, label_magic);
  append_be32(lab, static_cast<std::uint32_t>(label_values.size()));
  for (auto l : label_values) lab.push_back(static_cast<char>(l));
  write_text(labels, lab);
}

// Oracle-style predictor: the first feature carries the probability of
// label 1, so predictions can be controlled per test point.
struct FeatureProbModel final : LatentModel {
  Index theta_dim() const override { return 1; }
  Index latent_dim() const override { return 1; }
  std::string name() const override { return "feature-prob"; }
  bool has_predictor() const override { return true; }
  double prob_label_one(const Vector&, const Vector& features) const override {
    return features[0];
  }
 protected:
  double do_log_joint(const Vector&, const Vector&) const override { return 0.0; }
  Vector do_grad_theta(const Vector&, const Vector&) const override {
    return Vector::Zero(1);
  }
  Vector do_grad_x(const Vector&, const Vector&) const override { return Vector::Zero(1); }
};

}  // namespace

TEST_CASE("wbc loader parses, drops missing rows, and recodes labels", "[data-metrics]") {
  const auto path = temp_dir() / "wbc_small.data";
  std::string contents;
  // 12 complete rows (alternating classes) and 2 rows with missing fields.
  for (int i = 0; i < 12; ++i) {
    contents += std::to_string(1000 + i);
    for (int j = 0; j < 9; ++j) contents += "," + std::to_string((i + j) % 10 + 1);
    contents += (i % 2 == 0) ? ",2\n" : ",4\n";
  }
  contents += "2000,5,1,?,1,2,1,3,1,1,2\n";
  contents += "2001,5,1,1,1,2,?,3,1,1,4\n";
  write_text(path, contents);

  const Dataset ds = load_wbc(path.string(), 3);
  REQUIRE(ds.features.rows() == 12);
  REQUIRE(ds.labels.minCoeff() == 0);
  REQUIRE(ds.labels.maxCoeff() == 1);
  REQUIRE(ds.labels.sum() == 6);

  // z-scored columns: zero mean, unit population std.
  for (Index j = 0; j < 9; ++j) {
    REQUIRE(std::abs(ds.features.col(j).mean()) < 1e-10);
    const double var = ds.features.col(j).array().square().mean();
    REQUIRE(std::abs(std::sqrt(var) - 1.0) < 1e-10);
  }

  // round(0.2 * 12) = 2 test rows; split is disjoint and exhaustive.
  REQUIRE(ds.test_indices.size() == 2);
  REQUIRE(ds.train_indices.size() == 10);
  std::vector<bool> seen(12, false);
  for (Index i : ds.train_indices) seen[static_cast<std::size_t>(i)] = true;
  for (Index i : ds.test_indices) {
    REQUIRE_FALSE(seen[static_cast<std::size_t>(i)]);
    seen[static_cast<std::size_t>(i)] = true;
  }
  for (bool s : seen) REQUIRE(s);
}

TEST_CASE("wbc loader reports malformed input with line numbers", "[data-metrics]") {
  const auto bad_cols = temp_dir() / "wbc_badcols.data";
  write_text(bad_cols, "1,2,3,4\n");
  try {
    load_wbc(bad_cols.string(), 0);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    REQUIRE(e.line == 1);
  }

  const auto bad_value = temp_dir() / "wbc_badvalue.data";
  write_text(bad_value, "1,1,2,3,4,5,6,7,8,oops,2\n");
  REQUIRE_THROWS_AS(load_wbc(bad_value.string(), 0), DataError);

  const auto bad_class = temp_dir() / "wbc_badclass.data";
  write_text(bad_class, "1,1,2,3,4,5,6,7,8,9,7\n");
  REQUIRE_THROWS_AS(load_wbc(bad_class.string(), 0), DataError);

  REQUIRE_THROWS_AS(load_wbc((temp_dir() / "missing.data").string(), 0), DataError);
}

TEST_CASE("mnist loader selects classes and normalizes", "[data-metrics]") {
  const auto images = temp_dir() / "imgs.idx3";
  const auto labels = temp_dir() / "labels.idx1";
  write_idx_pair(images, labels, {4, 9, 1, 4, 9, 4, 7, 9});

  const Dataset ds = load_mnist_subset(images.string(), labels.string(), 4, 9, 4, 11, 12);
  REQUIRE(ds.features.rows() == 4);
  REQUIRE(ds.features.cols() == 4);
  REQUIRE(ds.labels.minCoeff() >= 0);
  REQUIRE(ds.labels.maxCoeff() <= 1);
  REQUIRE(ds.features.allFinite());
  // The constant-zero pixel column must map to zero, not NaN.
  REQUIRE(ds.features.col(3).isZero());

  const Dataset again = load_mnist_subset(images.string(), labels.string(), 4, 9, 4, 11, 12);
  REQUIRE(ds.features == again.features);
  REQUIRE(ds.labels == again.labels);
  REQUIRE(ds.train_indices == again.train_indices);
  REQUIRE(ds.test_indices == again.test_indices);
}

TEST_CASE("mnist loader rejects bad magic and oversubscription", "[data-metrics]") {
  const auto images = temp_dir() / "bad_imgs.idx3";
  const auto labels = temp_dir() / "bad_labels.idx1";
  write_idx_pair(images, labels, {4, 9, 4}, 2052, 2049);
  REQUIRE_THROWS_AS(load_mnist_subset(images.string(), labels.string(), 4, 9, 2, 0, 0),
                    DataError);

  write_idx_pair(images, labels, {4, 9, 4}, 2051, 2048);
  REQUIRE_THROWS_AS(load_mnist_subset(images.string(), labels.string(), 4, 9, 2, 0, 0),
                    DataError);

  write_idx_pair(images, labels, {4, 9, 1});
  REQUIRE_THROWS_AS(load_mnist_subset(images.string(), labels.string(), 4, 9, 3, 0, 0),
                    DataError);
}

TEST_CASE("synthetic logistic data is deterministic and balanced enough", "[data-metrics]") {
  const Dataset a = synthetic_logistic(683, 9, 5, 6);
  const Dataset b = synthetic_logistic(683, 9, 5, 6);
  REQUIRE(a.features == b.features);
  REQUIRE(a.labels == b.labels);
  REQUIRE(a.test_indices.size() == 137);
  REQUIRE(a.train_indices.size() == 546);
  REQUIRE(a.labels.sum() > 100);
  REQUIRE(a.labels.sum() < 583);
}

TEST_CASE("classifier probabilities are normalized", "[data-metrics]") {
  const Dataset data = synthetic_logistic(50, 5, 21, 22);
  const LogisticRegressionModel model(data.train_features(), data.train_labels());
  Matrix cloud(8, 5);
  cloud.setRandom();
  const auto classifier = CloudClassifier::from_cloud(model, cloud);
  for (Index i = 0; i < 10; ++i) {
    const Vector f = data.features.row(i).transpose();
    REQUIRE(classifier.prob(0, f) + classifier.prob(1, f) == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("test error and lppd on oracle and constant classifiers", "[data-metrics]") {
  FeatureProbModel model;
  Matrix cloud(1, 1);
  cloud.setZero();
  const auto classifier = CloudClassifier::from_cloud(model, cloud);

  // 10 points, 30% positives; the first feature encodes the prediction.
  Matrix perfect(10, 1);
  Eigen::VectorXi labels(10);
  for (int i = 0; i < 10; ++i) {
    labels[i] = i < 3 ? 1 : 0;
    perfect(i, 0) = labels[i];
  }
  REQUIRE(test_error(classifier, perfect, labels) == 0.0);
  REQUIRE(lppd(classifier, perfect, labels) == 0.0);

  Matrix constant_one = Matrix::Ones(10, 1);
  REQUIRE(test_error(classifier, constant_one, labels) == Approx(0.7));

  Matrix uniform = Matrix::Constant(10, 1, 0.5);
  REQUIRE(lppd(classifier, uniform, labels) == Approx(std::log(0.5)));

  // Corrupting a fraction of the oracle's predictions raises the error by
  // exactly that fraction.
  Matrix corrupted = perfect;
  for (int i = 0; i < 2; ++i) corrupted(i * 4, 0) = 1.0 - corrupted(i * 4, 0);
  REQUIRE(test_error(classifier, corrupted, labels) == Approx(0.2));

  // Degenerate probabilities are floored, not -inf.
  Matrix zeros = Matrix::Zero(10, 1);
  Eigen::VectorXi ones = Eigen::VectorXi::Ones(10);
  REQUIRE(std::isfinite(lppd(classifier, zeros, ones)));
}

TEST_CASE("posterior variance estimator", "[data-metrics]") {
  Matrix same = Matrix::Constant(5, 3, 1.25);
  REQUIRE(posterior_variance_estimate(same).isZero());

  Matrix single(1, 2);
  single.setZero();
  REQUIRE_THROWS_AS(posterior_variance_estimate(single), ContractViolation);

  // Pooled over snapshots: matches the direct two-sample formula.
  Matrix a(2, 1), b(2, 1);
  a << 1.0, 3.0;
  b << 5.0, 7.0;
  const Vector v = posterior_variance_estimate(std::vector<Matrix>{a, b});
  REQUIRE(v[0] == Approx(20.0 / 3.0));  // var of {1,3,5,7}, ddof = 1
}
