#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string_view>

namespace linsamp {

// Counter-based pseudo-random stream: draw i is a fixed 64-bit mix of
// (key, i). Streams are split by name/index so that per-sample draws are
// independent and do not depend on thread scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  // Derives a stream key from a root seed, a stream name and an index.
  static std::uint64_t derive_key(std::uint64_t root, std::string_view name,
                                  std::uint64_t index = 0);
  static Rng stream(std::uint64_t root, std::string_view name,
                    std::uint64_t index = 0) {
    return Rng(derive_key(root, name, index));
  }

  std::uint64_t next_u64();

  // Uniform in (0, 1].
  double next_uniform();

  // Standard normal via Box-Muller on the counter stream.
  double next_gaussian();

  Eigen::VectorXd gaussian_vector(Eigen::Index n);

  // Uniform integer in [0, bound), rejection-sampled to avoid modulo bias.
  std::uint64_t next_below(std::uint64_t bound);

  template <typename Container>
  void shuffle(Container& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace linsamp
