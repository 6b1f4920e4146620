#pragma once

#include <cstdint>
#include <random>

namespace ksp {

/// Seeded random stream. Two streams built from the same (seed, stream_id)
/// produce identical draws; distinct stream ids give independent streams.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  /// Child stream keyed by a label; depends only on (seed, stream_id, label),
  /// never on how many draws this stream has made.
  RngStream derive(std::uint64_t label) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace ksp
