#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace viewclean {

// Deterministic, platform-independent generator (xoshiro256**, seeded
// through splitmix64).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  double uniform();                      // [0, 1)
  double uniform_open_closed();          // (0, 1]
  std::size_t below(std::size_t bound);  // [0, bound)

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t x);

// Seed for one run of a sweep: a splitmix64 chain over the master seed and
// the run's grid indices. Re-running any single run only needs these values.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> indices);

// Successive draws without replacement, each proportional to weight among
// the items not yet drawn (Efraimidis-Spirakis keys). Zero-weight items come
// only after all positive-weight items, uniformly ordered. Returns
// min(k, weights.size()) indices in draw order. Scaling all weights by a
// positive constant does not change the result.
std::vector<std::size_t> weighted_sample(std::span<const double> weights, std::size_t k, Rng& rng);

std::vector<std::size_t> uniform_sample(std::size_t n, std::size_t k, Rng& rng);

}  // namespace viewclean
