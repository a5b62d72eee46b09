#pragma once

#include <numeric>
#include <vector>

#include "ppocma/rng.hpp"

namespace ppocma::detail {

/// Uniform minibatch index sampler over a pool of n samples. Each draw is
/// without replacement when the pool is large enough, with replacement
/// otherwise (small-batch edge case).
class MinibatchSampler {
 public:
  explicit MinibatchSampler(int pool_size) : pool_(pool_size) {
    std::iota(pool_.begin(), pool_.end(), 0);
  }

  std::vector<int> draw(int count, RandomStream& rng) {
    std::vector<int> out(count);
    const int n = static_cast<int>(pool_.size());
    if (count > n) {
      for (int i = 0; i < count; ++i) out[i] = static_cast<int>(rng.uniform_int(n));
      return out;
    }
    // partial Fisher-Yates over the persistent index pool
    for (int i = 0; i < count; ++i) {
      const int j = i + static_cast<int>(rng.uniform_int(n - i));
      std::swap(pool_[i], pool_[j]);
      out[i] = pool_[i];
    }
    return out;
  }

 private:
  std::vector<int> pool_;
};

}  // namespace ppocma::detail
