#include "viewclean/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace viewclean {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) {
    x = splitmix64(x);
    s = x;
  }
}

std::uint64_t Rng::next() {
  const auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform_open_closed() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

std::size_t Rng::below(std::size_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::below(0)");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return static_cast<std::size_t>(x % bound);
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> indices) {
  std::uint64_t h = splitmix64(master);
  for (auto i : indices) h = splitmix64(h ^ splitmix64(i + 0x632BE59BD9B4E019ULL));
  return h;
}

std::vector<std::size_t> uniform_sample(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

std::vector<std::size_t> weighted_sample(std::span<const double> weights, std::size_t k, Rng& rng) {
  double max_weight = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("sampling weights must be finite and >= 0");
    max_weight = std::max(max_weight, w);
  }
  struct Keyed {
    double key;
    std::size_t index;
  };
  std::vector<Keyed> positive;
  std::vector<std::size_t> zero;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    // One draw per item regardless of weight, so the stream consumed is the
    // same for any weight vector of the same length.
    const double u = rng.uniform_open_closed();
    if (weights[i] > 0.0) {
      positive.push_back({std::log(u) / (weights[i] / max_weight), i});
    } else {
      zero.push_back(i);
    }
  }
  std::sort(positive.begin(), positive.end(), [](const Keyed& a, const Keyed& b) {
    return a.key != b.key ? a.key > b.key : a.index < b.index;
  });
  k = std::min(k, weights.size());
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < positive.size() && out.size() < k; ++i) out.push_back(positive[i].index);
  if (out.size() < k) {
    for (auto pick : uniform_sample(zero.size(), k - out.size(), rng)) out.push_back(zero[pick]);
  }
  return out;
}

}  // namespace viewclean
