#ifndef PMLE_METRICS_HPP
#define PMLE_METRICS_HPP

#include <cmath>
#include <utility>
#include <vector>

#include "pmle/errors.hpp"
#include "pmle/model.hpp"

namespace pmle {

// Posterior-predictive classifier backed by a pool of particles: the class
// probability is the particle average of the model's predictive probability,
//   g(l | f) = mean_m p(l | f, Z^m),
// so g(0|f) + g(1|f) = 1 holds whenever the per-particle probabilities do.
class CloudClassifier {
 public:
  CloudClassifier(const LatentModel& model, std::vector<Matrix> particle_pools)
      : model_(model), pools_(std::move(particle_pools)) {
    if (!model_.has_predictor())
      throw UnsupportedCapability(model_.name() + " cannot back a classifier");
    total_ = 0;
    for (const auto& pool : pools_) {
      if (pool.cols() != model_.latent_dim())
        throw ContractViolation("classifier: particle dimension mismatch");
      total_ += pool.rows();
    }
    if (total_ < 1) throw ContractViolation("classifier: empty particle pool");
  }

  static CloudClassifier from_cloud(const LatentModel& model, const Matrix& cloud) {
    return CloudClassifier(model, {cloud});
  }

  Index particle_count() const { return total_; }

  double prob(int label, const Vector& features) const {
    double sum = 0.0;
    for (const auto& pool : pools_)
      for (Index m = 0; m < pool.rows(); ++m)
        sum += model_.prob_label_one(pool.row(m).transpose(), features);
    const double p_one = sum / static_cast<double>(total_);
    return label == 1 ? p_one : 1.0 - p_one;
  }

  // Argmax prediction; ties resolve to label 0.
  int predict(const Vector& features) const { return prob(1, features) > 0.5 ? 1 : 0; }

 private:
  const LatentModel& model_;
  std::vector<Matrix> pools_;
  Index total_ = 0;
};

// Fraction of mislabelled test points.
inline double test_error(const CloudClassifier& classifier, const Matrix& test_features,
                         const Eigen::VectorXi& test_labels) {
  if (test_features.rows() != test_labels.size())
    throw ContractViolation("test_error: feature/label counts differ");
  if (test_features.rows() == 0) throw ContractViolation("test_error: empty test set");
  long wrong = 0;
  Vector errs(test_features.rows());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < test_features.rows(); ++i)
    errs[i] = classifier.predict(test_features.row(i).transpose()) == test_labels[i] ? 0.0 : 1.0;
  for (Index i = 0; i < test_features.rows(); ++i) wrong += errs[i] > 0.5 ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(test_features.rows());
}

// Log pointwise predictive density: mean log probability assigned to the
// held-out labels. Probabilities are floored at 1e-300 so a degenerate cloud
// yields a very negative value rather than -inf.
inline double lppd(const CloudClassifier& classifier, const Matrix& test_features,
                   const Eigen::VectorXi& test_labels) {
  if (test_features.rows() != test_labels.size())
    throw ContractViolation("lppd: feature/label counts differ");
  if (test_features.rows() == 0) throw ContractViolation("lppd: empty test set");
  Vector logs(test_features.rows());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < test_features.rows(); ++i) {
    const double g = classifier.prob(test_labels[i], test_features.row(i).transpose());
    logs[i] = std::log(std::max(g, 1e-300));
  }
  double total = 0.0;
  for (Index i = 0; i < test_features.rows(); ++i) total += logs[i];
  return total / static_cast<double>(test_features.rows());
}

// Unbiased per-coordinate sample variance over all particles pooled across
// the given snapshots.
inline Vector posterior_variance_estimate(const std::vector<Matrix>& snapshots) {
  Index total = 0;
  Index dim = 0;
  for (const auto& snap : snapshots) {
    if (dim == 0) dim = snap.cols();
    if (snap.cols() != dim)
      throw ContractViolation("posterior_variance_estimate: snapshot dimensions differ");
    total += snap.rows();
  }
  if (total < 2)
    throw ContractViolation("posterior_variance_estimate: need at least two samples");

  Vector mean = Vector::Zero(dim);
  for (const auto& snap : snapshots)
    for (Index i = 0; i < snap.rows(); ++i) mean += snap.row(i).transpose();
  mean /= static_cast<double>(total);

  Vector ss = Vector::Zero(dim);
  for (const auto& snap : snapshots)
    for (Index i = 0; i < snap.rows(); ++i)
      ss += (snap.row(i).transpose() - mean).array().square().matrix();
  return ss / static_cast<double>(total - 1);
}

inline Vector posterior_variance_estimate(const Matrix& cloud) {
  return posterior_variance_estimate(std::vector<Matrix>{cloud});
}

}  // namespace pmle

#endif  // PMLE_METRICS_HPP
