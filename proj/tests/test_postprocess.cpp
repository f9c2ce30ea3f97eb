// Copyright 2026 The forge authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "forge/metrics.hpp"
#include "forge/rng.hpp"
#include "forge/savgol.hpp"

using namespace forge;
using geo::NormalizedSequence;

namespace {

std::vector<double> sample_poly(const std::vector<double>& coeffs, int n) {
  std::vector<double> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double acc = 0.0, pw = 1.0;
    // Scaled abscissa keeps magnitudes moderate over long sequences.
    const double x = 0.2 * static_cast<double>(i);
    for (double c : coeffs) {
      acc += c * pw;
      pw *= x;
    }
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

NormalizedSequence seq_from(std::vector<std::array<double, 2>> values) {
  NormalizedSequence s;
  s.values = std::move(values);
  s.source_bounds = {0, 1, 0, 1};
  return s;
}

NormalizedSequence random_point_seq(Rng& rng, double lat_shift = 0.0,
                                    double lon_shift = 0.0) {
  // Length-1 sequences act as plain 2-D points for the distribution metrics.
  return seq_from({{rng.normal() + lat_shift, rng.normal() + lon_shift}});
}

double second_difference_variance(const std::vector<double>& y) {
  std::vector<double> d2;
  for (std::size_t i = 2; i < y.size(); ++i) {
    d2.push_back(y[i] - 2 * y[i - 1] + y[i - 2]);
  }
  double mean = 0.0;
  for (double v : d2) mean += v;
  mean /= static_cast<double>(d2.size());
  double var = 0.0;
  for (double v : d2) var += (v - mean) * (v - mean);
  return var / static_cast<double>(d2.size());
}

}  // namespace

TEST_CASE("savgol reproduces polynomials up to the fit order") {
  Rng rng(17);
  const eval::SavitzkyGolay filter(11, 3);
  for (int degree = 0; degree <= 3; ++degree) {
    std::vector<double> coeffs(static_cast<std::size_t>(degree) + 1);
    for (auto& c : coeffs) c = rng.uniform(-1.0, 1.0);
    const auto y = sample_poly(coeffs, 51);
    const auto smoothed = filter.apply(y);
    for (std::size_t i = 0; i < y.size(); ++i) {
      CHECK(std::abs(smoothed[i] - y[i]) < 1e-9);
    }
  }
}

TEST_CASE("savgol trajectory smoothing basics") {
  geo::Trajectory cubic;
  cubic.id = "cubic";
  cubic.dt = 10.0;
  const auto lat = sample_poly({0.2, 0.01, -0.003, 0.0004}, 40);
  const auto lon = sample_poly({-0.1, 0.02, 0.001, -0.0002}, 40);
  for (int i = 0; i < 40; ++i) {
    cubic.states.push_back({i * 10.0, {lat[static_cast<std::size_t>(i)],
                                       lon[static_cast<std::size_t>(i)]}});
  }
  const auto smoothed = eval::savgol_smooth(cubic, 11, 3);
  REQUIRE(smoothed.states.size() == cubic.states.size());
  for (std::size_t i = 0; i < cubic.states.size(); ++i) {
    CHECK(smoothed.states[i].t == cubic.states[i].t);
    CHECK(std::abs(smoothed.states[i].pos.lat - cubic.states[i].pos.lat) < 1e-9);
    CHECK(std::abs(smoothed.states[i].pos.lon - cubic.states[i].pos.lon) < 1e-9);
  }

  geo::Trajectory constant;
  constant.id = "const";
  for (int i = 0; i < 20; ++i) constant.states.push_back({i * 10.0, {1.5, 2.5}});
  const auto still = eval::savgol_smooth(constant, 11, 3);
  for (const auto& s : still.states) {
    CHECK_THAT(s.pos.lat, Catch::Matchers::WithinAbs(1.5, 1e-12));
    CHECK_THAT(s.pos.lon, Catch::Matchers::WithinAbs(2.5, 1e-12));
  }

  geo::Trajectory tooshort;
  for (int i = 0; i < 5; ++i) tooshort.states.push_back({i * 10.0, {0, 0}});
  CHECK_THROWS_MATCHES(eval::savgol_smooth(tooshort, 11, 3), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::WindowTooLarge;
                       }));
  CHECK_THROWS_AS(eval::SavitzkyGolay(10, 3), Error);
  CHECK_THROWS_AS(eval::SavitzkyGolay(11, 11), Error);
}

TEST_CASE("savgol damps noise on a sine track") {
  Rng rng(23);
  std::vector<double> noisy(200);
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    noisy[i] = std::sin(0.08 * static_cast<double>(i)) + 0.05 * rng.normal();
  }
  const auto smoothed = eval::SavitzkyGolay(11, 3).apply(noisy);
  CHECK(second_difference_variance(smoothed) < second_difference_variance(noisy));
}

TEST_CASE("pairwise_errors closed forms") {
  Rng rng(31);
  std::vector<NormalizedSequence> set;
  set.push_back(seq_from({{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}}));

  const auto [mae0, mse0] = eval::pairwise_errors(set, set);
  CHECK(mae0 == 0.0);
  CHECK(mse0 == 0.0);

  auto shifted = set;
  for (auto& v : shifted[0].values) {
    v[0] += 0.1;
    v[1] += 0.1;
  }
  const auto [mae, mse] = eval::pairwise_errors(shifted, set);
  CHECK_THAT(mae, Catch::Matchers::WithinAbs(0.1, 1e-12));
  CHECK_THAT(mse, Catch::Matchers::WithinAbs(0.01, 1e-12));
}

TEST_CASE("pairwise_errors equals the brute-force double loop bitwise") {
  Rng rng(37);
  auto random_set = [&rng](std::size_t count, std::size_t len) {
    std::vector<NormalizedSequence> set;
    for (std::size_t i = 0; i < count; ++i) {
      std::vector<std::array<double, 2>> vals(len);
      for (auto& v : vals) v = {rng.uniform01(), rng.uniform01()};
      set.push_back(seq_from(std::move(vals)));
    }
    return set;
  };
  const auto gen = random_set(3, 4);
  const auto ref = random_set(4, 4);

  // Independent naive reimplementation.
  double mae_acc = 0.0, mse_acc = 0.0;
  for (const auto& g : gen) {
    for (const auto& r : ref) {
      double a = 0.0, s = 0.0;
      for (std::size_t t = 0; t < 4; ++t) {
        for (int c = 0; c < 2; ++c) {
          const double d = g.values[t][static_cast<std::size_t>(c)] -
                           r.values[t][static_cast<std::size_t>(c)];
          a += std::abs(d);
          s += d * d;
        }
      }
      mae_acc += a / 8.0;
      mse_acc += s / 8.0;
    }
  }
  const auto [mae, mse] = eval::pairwise_errors(gen, ref);
  CHECK(mae == mae_acc / 12.0);
  CHECK(mse == mse_acc / 12.0);

  auto ragged = ref;
  ragged[0].values.pop_back();
  CHECK_THROWS_MATCHES(eval::pairwise_errors(gen, ragged), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::LengthMismatch;
                       }));
}

TEST_CASE("frechet_dm closed forms") {
  // Identical sets.
  Rng rng(41);
  std::vector<NormalizedSequence> same;
  for (int i = 0; i < 6; ++i) same.push_back(random_point_seq(rng));
  CHECK(eval::frechet_dm(same, same) < 1e-8);

  // Equal-variance 1-D Gaussians a distance `a` apart: dm = |a|. Length-1
  // sequences with a frozen lon coordinate make the second axis inert.
  const double a = 0.75;
  std::vector<NormalizedSequence> x{seq_from({{-1.0, 0.0}}), seq_from({{1.0, 0.0}})};
  std::vector<NormalizedSequence> y{seq_from({{a - 1.0, 0.0}}), seq_from({{a + 1.0, 0.0}})};
  CHECK_THAT(eval::frechet_dm(x, y), Catch::Matchers::WithinAbs(a, 1e-8));

  // Sigma1 = 4I, Sigma2 = I, equal means, dim 2: dm^2 = tr(4I + I - 2*2I) = 2.
  // Cross patterns have exact sample covariance c^2 * 2/3 * I (unbiased).
  auto cross = [](double c) {
    std::vector<NormalizedSequence> set;
    set.push_back(seq_from({{c, 0.0}}));
    set.push_back(seq_from({{-c, 0.0}}));
    set.push_back(seq_from({{0.0, c}}));
    set.push_back(seq_from({{0.0, -c}}));
    return set;
  };
  const auto sigma4 = cross(std::sqrt(6.0));   // covariance 4I
  const auto sigma1 = cross(std::sqrt(1.5));   // covariance I
  const double dm = eval::frechet_dm(sigma4, sigma1);
  CHECK_THAT(dm * dm, Catch::Matchers::WithinAbs(2.0, 1e-8));
}

TEST_CASE("frechet_dm is symmetric") {
  Rng rng(43);
  std::vector<NormalizedSequence> x, y;
  for (int i = 0; i < 8; ++i) x.push_back(random_point_seq(rng));
  for (int i = 0; i < 9; ++i) y.push_back(random_point_seq(rng, 0.3, -0.2));
  CHECK(std::abs(eval::frechet_dm(x, y) - eval::frechet_dm(y, x)) < 1e-10);
}

TEST_CASE("mmd_squared properties") {
  Rng rng(47);
  std::vector<NormalizedSequence> x, y;
  for (int i = 0; i < 40; ++i) x.push_back(random_point_seq(rng));
  for (int i = 0; i < 50; ++i) y.push_back(random_point_seq(rng, 0.5, 0.0));

  SECTION("exactly symmetric") {
    CHECK(eval::mmd_squared(x, y) == eval::mmd_squared(y, x));
  }

  SECTION("invariant under simultaneous permutation with a fixed bandwidth") {
    const double base = eval::mmd_squared(x, y, 1.3);
    auto xp = x;
    auto yp = y;
    Rng shuffler(48);
    shuffler.shuffle(xp);
    shuffler.shuffle(yp);
    CHECK_THAT(eval::mmd_squared(xp, yp, 1.3), Catch::Matchers::WithinAbs(base, 1e-12));
  }

  SECTION("same distribution is near zero, a 5-sigma shift separates") {
    std::vector<NormalizedSequence> big_x, big_x2, big_y, shifted;
    Rng big(49);
    for (int i = 0; i < 1000; ++i) big_x.push_back(random_point_seq(big));
    for (int i = 0; i < 1000; ++i) big_x2.push_back(random_point_seq(big));
    for (int i = 0; i < 1000; ++i) big_y.push_back(random_point_seq(big));
    for (int i = 0; i < 1000; ++i) shifted.push_back(random_point_seq(big, 5.0, 0.0));

    const double same = eval::mmd_squared(big_y, big_x);
    CHECK(std::abs(same) < 0.01);
    CHECK(same > -1e-6);  // unbiased estimator may dip slightly negative

    const double far = eval::mmd_squared(shifted, big_x);
    const double baseline = eval::mmd_squared(big_x2, big_x);
    CHECK(far > 10.0 * std::abs(baseline));
  }
}
