#ifndef PMLE_DATA_HPP
#define PMLE_DATA_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pmle/errors.hpp"
#include "pmle/model.hpp"
#include "pmle/rng.hpp"

namespace pmle {

// Feature matrix with 0/1 labels, a deterministic 80/20 split, and the
// z-scoring statistics that were applied. Normalization always runs over the
// full dataset before splitting.
struct Dataset {
  Matrix features;
  Eigen::VectorXi labels;
  std::vector<Index> train_indices;
  std::vector<Index> test_indices;
  Vector feature_mean;
  Vector feature_std;

  Matrix train_features() const { return select_rows(train_indices); }
  Matrix test_features() const { return select_rows(test_indices); }
  Eigen::VectorXi train_labels() const { return select_labels(train_indices); }
  Eigen::VectorXi test_labels() const { return select_labels(test_indices); }

 private:
  Matrix select_rows(const std::vector<Index>& idx) const {
    Matrix out(static_cast<Index>(idx.size()), features.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = features.row(idx[i]);
    return out;
  }
  Eigen::VectorXi select_labels(const std::vector<Index>& idx) const {
    Eigen::VectorXi out(static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = labels[idx[i]];
    return out;
  }
};

namespace detail {

// In-place z-scoring with population (ddof = 0) standard deviation; constant
// columns map to zero, never NaN.
inline void zscore_columns(Matrix& features, Vector& mean_out, Vector& std_out) {
  const Index m = features.rows();
  const Index d = features.cols();
  mean_out.resize(d);
  std_out.resize(d);
  for (Index j = 0; j < d; ++j) {
    const double mean = features.col(j).mean();
    const double var = (features.col(j).array() - mean).square().sum() / static_cast<double>(m);
    const double sd = std::sqrt(var);
    mean_out[j] = mean;
    std_out[j] = sd;
    if (sd > 0.0) {
      features.col(j) = (features.col(j).array() - mean) / sd;
    } else {
      features.col(j).setZero();
    }
  }
}

// Deterministic Fisher-Yates 80/20 split; test size = round(0.2 M).
inline void split_80_20(Index count, std::uint64_t split_seed, std::vector<Index>& train,
                        std::vector<Index>& test) {
  const auto perm = shuffled_indices(count, split_seed);
  const auto test_size =
      static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(count)));
  test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(test_size));
  train.assign(perm.begin() + static_cast<std::ptrdiff_t>(test_size), perm.end());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Wisconsin breast cancer CSV (UCI layout): id, 9 integer features, class
// label 2 (benign) or 4 (malign). Rows with missing values ('?') are dropped;
// labels are recoded benign -> 0, malign -> 1.
// ---------------------------------------------------------------------------

inline Dataset load_wbc(const std::string& path, std::uint64_t split_seed) {
  std::ifstream file(path);
  if (!file) throw DataError("cannot open dataset file: " + path);

  std::vector<std::array<double, 9>> rows;
  std::vector<int> labels;
  std::string line;
  long line_number = 0;
  long dropped = 0;
  while (std::getline(file, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 11)
      throw DataError("expected 11 comma-separated columns, got " +
                          std::to_string(fields.size()),
                      line_number);
    bool missing = false;
    for (const auto& f : fields)
      if (f == "?") missing = true;
    if (missing) {
      ++dropped;
      continue;
    }
    std::array<double, 9> values{};
    try {
      for (int j = 0; j < 9; ++j) values[static_cast<std::size_t>(j)] = std::stod(fields[static_cast<std::size_t>(j + 1)]);
      const int cls = std::stoi(fields[10]);
      if (cls != 2 && cls != 4) throw DataError("class label must be 2 or 4", line_number);
      labels.push_back(cls == 2 ? 0 : 1);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      throw DataError("malformed numeric field", line_number);
    }
    rows.push_back(values);
  }
  if (rows.empty()) throw DataError("no usable rows in " + path);

  Dataset ds;
  ds.features.resize(static_cast<Index>(rows.size()), 9);
  ds.labels.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < 9; ++j) ds.features(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    ds.labels[static_cast<Index>(i)] = labels[i];
  }
  detail::zscore_columns(ds.features, ds.feature_mean, ds.feature_std);
  detail::split_80_20(ds.features.rows(), split_seed, ds.train_indices, ds.test_indices);
  return ds;
}

// ---------------------------------------------------------------------------
// MNIST IDX loaders: big-endian magic 2051 for images, 2049 for labels.
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_be32(std::ifstream& file, const std::string& what) {
  unsigned char bytes[4];
  if (!file.read(reinterpret_cast<char*>(bytes), 4))
    throw DataError("truncated IDX header while reading " + what);
  return (static_cast<std::uint32_t>(bytes[0]) << 24) |
         (static_cast<std::uint32_t>(bytes[1]) << 16) |
         (static_cast<std::uint32_t>(bytes[2]) << 8) | static_cast<std::uint32_t>(bytes[3]);
}

}  // namespace detail

// Draws `count` rows uniformly without replacement from the rows whose label
// is in {class_zero, class_one}, recodes class_zero -> 0 and class_one -> 1,
// z-scores pixels over the drawn subset, and splits 80/20.
inline Dataset load_mnist_subset(const std::string& images_path, const std::string& labels_path,
                                 int class_zero, int class_one, Index count,
                                 std::uint64_t subsample_seed, std::uint64_t split_seed) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw DataError("cannot open IDX image file: " + images_path);
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw DataError("cannot open IDX label file: " + labels_path);

  const std::uint32_t image_magic = detail::read_be32(images, "image magic");
  if (image_magic != 2051)
    throw DataError("bad IDX image magic " + std::to_string(image_magic) + ", expected 2051");
  const std::uint32_t image_count = detail::read_be32(images, "image count");
  const std::uint32_t rows = detail::read_be32(images, "row count");
  const std::uint32_t cols = detail::read_be32(images, "column count");

  const std::uint32_t label_magic = detail::read_be32(labels, "label magic");
  if (label_magic != 2049)
    throw DataError("bad IDX label magic " + std::to_string(label_magic) + ", expected 2049");
  const std::uint32_t label_count = detail::read_be32(labels, "label count");
  if (label_count != image_count)
    throw DataError("IDX image/label counts differ");

  std::vector<std::uint8_t> raw_labels(label_count);
  if (!labels.read(reinterpret_cast<char*>(raw_labels.data()), label_count))
    throw DataError("truncated IDX label payload");

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  std::vector<std::uint8_t> raw_images(static_cast<std::size_t>(image_count) * pixels);
  if (!images.read(reinterpret_cast<char*>(raw_images.data()),
                   static_cast<std::streamsize>(raw_images.size())))
    throw DataError("truncated IDX image payload");

  std::vector<Index> eligible;
  for (std::uint32_t i = 0; i < label_count; ++i)
    if (raw_labels[i] == class_zero || raw_labels[i] == class_one)
      eligible.push_back(static_cast<Index>(i));
  if (static_cast<Index>(eligible.size()) < count)
    throw DataError("requested " + std::to_string(count) + " rows but only " +
                    std::to_string(eligible.size()) + " have the selected classes");

  const auto perm = shuffled_indices(static_cast<Index>(eligible.size()), subsample_seed);
  Dataset ds;
  ds.features.resize(count, static_cast<Index>(pixels));
  ds.labels.resize(count);
  for (Index i = 0; i < count; ++i) {
    const Index source = eligible[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    const std::uint8_t* pixel_row = raw_images.data() + static_cast<std::size_t>(source) * pixels;
    for (std::size_t j = 0; j < pixels; ++j)
      ds.features(i, static_cast<Index>(j)) = static_cast<double>(pixel_row[j]);
    ds.labels[i] = raw_labels[static_cast<std::size_t>(source)] == class_zero ? 0 : 1;
  }
  detail::zscore_columns(ds.features, ds.feature_mean, ds.feature_std);
  detail::split_80_20(count, split_seed, ds.train_indices, ds.test_indices);
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic logistic data: features are z-scored Gaussians, labels are drawn
// from a fixed ground-truth weight vector. Keeps the full pipeline runnable
// when the real datasets are absent.
// ---------------------------------------------------------------------------

inline Dataset synthetic_logistic(Index count, Index dim, std::uint64_t seed,
                                  std::uint64_t split_seed) {
  CounterRng rng(seed);
  Dataset ds;
  ds.features.resize(count, dim);
  ds.labels.resize(count);

  Vector truth(dim);
  for (Index j = 0; j < dim; ++j)
    truth[j] = 1.5 * std::cos(1.0 + 0.9 * static_cast<double>(j));

  Vector row(dim);
  for (Index i = 0; i < count; ++i) {
    rng.fill_normal(StreamKind::init, 1, static_cast<std::uint64_t>(i), row);
    ds.features.row(i) = row.transpose();
    const double p = 1.0 / (1.0 + std::exp(-row.dot(truth)));
    const double u = rng.uniform(StreamKind::init, 2, static_cast<std::uint64_t>(i));
    ds.labels[i] = u < p ? 1 : 0;
  }
  detail::zscore_columns(ds.features, ds.feature_mean, ds.feature_std);
  detail::split_80_20(count, split_seed, ds.train_indices, ds.test_indices);
  return ds;
}

// Synthetic stand-in for the image task: same generator, sized for the BNN.
inline Dataset synthetic_bnn(Index count, Index dim, std::uint64_t seed,
                             std::uint64_t split_seed) {
  return synthetic_logistic(count, dim, seed, split_seed);
}

}  // namespace pmle

#endif  // PMLE_DATA_HPP
