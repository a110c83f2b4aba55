#ifndef PMLE_RNG_HPP
#define PMLE_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

// Counter-based random streams (Philox4x32-10). Every draw is addressed by
// (seed, kind, step, stream, index), so particles can be updated in any order
// or in parallel and still see exactly the same noise.

namespace pmle {

enum class StreamKind : std::uint32_t {
  latent_noise = 0,  // Gaussian innovations of the latent updates
  accept = 1,        // uniforms for accept/reject decisions
  init = 2,          // initialization draws (prior samples, data synthesis)
  shuffle = 3,       // dataset shuffling / subsampling
};

namespace detail {

struct PhiloxState {
  std::array<std::uint32_t, 4> ctr;
  std::array<std::uint32_t, 2> key;
};

inline void philox_round(PhiloxState& s) {
  constexpr std::uint64_t m0 = 0xD2511F53ull;
  constexpr std::uint64_t m1 = 0xCD9E8D57ull;
  const std::uint64_t p0 = m0 * s.ctr[0];
  const std::uint64_t p1 = m1 * s.ctr[2];
  const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
  const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
  s.ctr = {hi1 ^ s.ctr[1] ^ s.key[0], lo1, hi0 ^ s.ctr[3] ^ s.key[1], lo0};
  s.key[0] += 0x9E3779B9u;
  s.key[1] += 0xBB67AE85u;
}

inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  PhiloxState s{ctr, key};
  for (int round = 0; round < 10; ++round) philox_round(s);
  return s.ctr;
}

// Maps two 32-bit words to a double in the open interval (0, 1).
inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

// One keyed generator per run; stateless, so copies are free and safe.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Two standard normals per counter block via Box-Muller.
  std::array<double, 2> normal_pair(StreamKind kind, std::uint64_t step,
                                    std::uint64_t stream, std::uint32_t block) const {
    const auto r = block_bits(kind, step, stream, block);
    const double u1 = detail::to_open_unit(r[0], r[1]);
    const double u2 = detail::to_open_unit(r[2], r[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  // Fills `out` with independent standard normals for (step, stream).
  void fill_normal(StreamKind kind, std::uint64_t step, std::uint64_t stream,
                   Eigen::Ref<Eigen::VectorXd> out) const {
    const Eigen::Index n = out.size();
    for (Eigen::Index i = 0; i < n; i += 2) {
      const auto z = normal_pair(kind, step, stream, static_cast<std::uint32_t>(i / 2));
      out[i] = z[0];
      if (i + 1 < n) out[i + 1] = z[1];
    }
  }

  double normal(StreamKind kind, std::uint64_t step, std::uint64_t stream,
                std::uint32_t index) const {
    const auto z = normal_pair(kind, step, stream, index / 2);
    return z[index % 2];
  }

  // Uniform draw in (0, 1).
  double uniform(StreamKind kind, std::uint64_t step, std::uint64_t stream,
                 std::uint32_t index = 0) const {
    const auto r = block_bits(kind, step, stream, index);
    return detail::to_open_unit(r[0], r[1]);
  }

  // Uniform integer in [0, bound); bound must be positive.
  std::uint64_t uniform_index(StreamKind kind, std::uint64_t step, std::uint64_t stream,
                              std::uint32_t index, std::uint64_t bound) const {
    const auto r = block_bits(kind, step, stream, index);
    const std::uint64_t bits = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
    return bits % bound;
  }

 private:
  std::array<std::uint32_t, 4> block_bits(StreamKind kind, std::uint64_t step,
                                          std::uint64_t stream, std::uint32_t block) const {
    // step and stream each get 32 bits; the kind tag is folded into the key so
    // distinct stream kinds never collide even at equal counters.
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
        static_cast<std::uint32_t>(stream),
        block ^ (static_cast<std::uint32_t>(kind) << 28)};
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                              static_cast<std::uint32_t>(seed_ >> 32)};
    std::array<std::uint32_t, 4> mixed = ctr;
    mixed[1] ^= static_cast<std::uint32_t>(stream >> 32);
    return detail::philox4x32(mixed, key);
  }

  std::uint64_t seed_;
};

// Deterministic Fisher-Yates permutation of {0, ..., count-1}.
inline std::vector<Eigen::Index> shuffled_indices(Eigen::Index count, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index i = count - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng.uniform_index(
        StreamKind::shuffle, 0, static_cast<std::uint64_t>(i), 0,
        static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

}  // namespace pmle

#endif  // PMLE_RNG_HPP
