// Small shared numerics helpers: d-vector operations on flat storage,
// deterministic RNG streams, and a bounded worker pool for embarrassingly
// parallel loops.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace flock {

// ---------------------------------------------------------------------------
// Dense d-vector helpers. Agent states are stored flat (N*d doubles); these
// helpers act on spans so no temporaries are allocated in inner loops.
// ---------------------------------------------------------------------------

inline double squared_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

inline double norm(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

inline double distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// Return the i-th length-d block of a flat array. The read-only variant has
// its own name so calls with a mutable container are never ambiguous.
inline std::span<double> block(std::span<double> flat, std::size_t i, std::size_t d) {
  return flat.subspan(i * d, d);
}
inline std::span<const double> cblock(std::span<const double> flat, std::size_t i,
                                      std::size_t d) {
  return flat.subspan(i * d, d);
}

// ---------------------------------------------------------------------------
// Deterministic random streams. All sampling in the project goes through
// these helpers so results are reproducible bit-for-bit for a given seed,
// independent of the standard library's distribution implementations.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based generator: cheap to construct, and stream `k` of seed `s` is
// stable no matter how many other streams exist. Used for nested sampling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(splitmix64(seed ^ splitmix64(stream + 0x5851f42d4c957f2dULL))) {}

  std::uint64_t next_u64() {
    state_ = splitmix64(state_);
    return state_;
  }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Uniform point in the closed d-ball of given radius (rejection sampling).
  void uniform_in_ball(double radius, std::span<double> out) {
    for (;;) {
      double acc = 0.0;
      for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = uniform(-1.0, 1.0);
        acc += out[k] * out[k];
      }
      if (acc <= 1.0) {
        for (double& x : out) x *= radius;
        return;
      }
    }
  }

  // Uniform point on the unit sphere (d >= 1).
  void unit_vector(std::span<double> out) {
    for (;;) {
      uniform_in_ball(1.0, out);
      const double n = norm(std::span<const double>(out.data(), out.size()));
      if (n > 1e-6) {
        for (double& x : out) x /= n;
        return;
      }
    }
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Worker pool. Honors the FLOCKSIM_WORKERS environment variable; each task
// writes only to its own output slot, so scheduling cannot affect results.
// ---------------------------------------------------------------------------

int worker_count();

// Runs fn(i) for i in [0, n). Falls back to a serial loop when n is small or
// only one worker is configured. Exceptions from tasks are rethrown (first
// one wins) after all threads join.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace flock
