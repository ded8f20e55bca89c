#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "flocksim/error.hpp"
#include "flocksim/util.hpp"

using namespace flock;

TEST_CASE("norms and distances") {
  std::vector<double> a = {3.0, 4.0};
  std::vector<double> b = {0.0, 0.0};
  CHECK(norm(std::span<const double>(a)) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(distance(std::span<const double>(a), std::span<const double>(b)) ==
        doctest::Approx(5.0).epsilon(1e-15));
  CHECK(dot(std::span<const double>(a), std::span<const double>(a)) ==
        doctest::Approx(25.0).epsilon(1e-15));
  CHECK(all_finite(std::span<const double>(a)));
  a[0] = std::nan("");
  CHECK_FALSE(all_finite(std::span<const double>(a)));
}

TEST_CASE("block views address flat storage") {
  std::vector<double> flat = {1, 2, 3, 4, 5, 6};
  auto row1 = block(flat, 1, 3);
  CHECK(row1.size() == 3);
  CHECK(row1[0] == 4);
  row1[2] = 9;
  CHECK(flat[5] == 9);
  auto crow0 = cblock(flat, 0, 3);
  CHECK(crow0[1] == 2);
}

TEST_CASE("rng streams are deterministic and decorrelated") {
  Rng a(42, 0);
  Rng a2(42, 0);
  Rng b(42, 1);
  bool all_equal = true;
  bool any_equal_cross = false;
  for (int k = 0; k < 100; ++k) {
    const std::uint64_t u = a.next_u64();
    all_equal = all_equal && (u == a2.next_u64());
    any_equal_cross = any_equal_cross || (u == b.next_u64());
  }
  CHECK(all_equal);
  CHECK_FALSE(any_equal_cross);

  Rng c(7, 3);
  for (int k = 0; k < 1000; ++k) {
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = c.uniform(-2.0, 5.0);
    CHECK(v >= -2.0);
    CHECK(v < 5.0);
    const long long i = c.uniform_int(3, 9);
    CHECK(i >= 3);
    CHECK(i <= 9);
  }
}

TEST_CASE("rng ball and sphere sampling stay inside their radius") {
  Rng rng(11, 0);
  std::vector<double> x(3);
  for (int k = 0; k < 200; ++k) {
    rng.uniform_in_ball(2.5, std::span<double>(x));
    CHECK(norm(std::span<const double>(x)) <= 2.5 + 1e-12);
    rng.unit_vector(std::span<double>(x));
    CHECK(norm(std::span<const double>(x)) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("parallel_for covers every index exactly once") {
  const std::size_t n = 10007;
  std::vector<std::atomic<int>> hits(n);
  parallel_for(n, [&](std::size_t i) { hits[i].fetch_add(1); });
  bool ok = true;
  for (std::size_t i = 0; i < n; ++i) ok = ok && hits[i].load() == 1;
  CHECK(ok);
}

TEST_CASE("parallel_for propagates the first exception") {
  CHECK_THROWS_AS(
      parallel_for(1000,
                   [&](std::size_t i) {
                     if (i == 137) raise(ErrorCode::Domain, "boom");
                   }),
      Error);
}

TEST_CASE("worker_count respects the environment override") {
  ::setenv("FLOCKSIM_WORKERS", "3", 1);
  CHECK(worker_count() == 3);
  ::setenv("FLOCKSIM_WORKERS", "0", 1);
  CHECK(worker_count() == 1);  // clamped to at least one worker
  ::unsetenv("FLOCKSIM_WORKERS");
  CHECK(worker_count() >= 1);
}
