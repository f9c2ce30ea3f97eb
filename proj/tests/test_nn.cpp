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

#include "forge/nn.hpp"
#include "test_util.hpp"

using namespace forge;
using nn::Tensor;
using testutil::random_tensor;
using testutil::weighted_sum;

TEST_CASE("dense forward basics") {
  const Tensor identity({2, 2}, {1, 0, 0, 1});
  const Tensor x({1, 2}, {1, 2});
  const Tensor zero_b({2}, {0, 0});
  const Tensor y = nn::dense(x, identity, zero_b);
  CHECK(y.values() == std::vector<double>{1, 2});

  const Tensor ones_b({2}, {1, 1});
  const Tensor y2 = nn::dense(x, identity, ones_b);
  CHECK(y2.values() == std::vector<double>{2, 3});

  CHECK_THROWS_AS(nn::dense(x, Tensor({3, 2}, {1, 2, 3, 4, 5, 6}), zero_b), Error);
}

TEST_CASE("dense gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 3}, rng);
    Tensor w = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4}, rng);
    const Tensor probe = random_tensor({2, 4}, rng);
    auto f = [&] { return weighted_sum(nn::dense(x, w, b), probe); };
    CHECK(nn::gradient_check(f, {x, w, b}) < 1e-6);
  }
}

TEST_CASE("conv1d identity kernels") {
  Rng rng(3);
  const Tensor x = random_tensor({2, 1, 6}, rng);
  const Tensor zero_b({1}, {0.0});

  const Tensor k1({1, 1, 1}, {1.0});
  CHECK(nn::conv1d(x, k1, zero_b).values() == x.values());

  const Tensor k3({1, 1, 3}, {0.0, 1.0, 0.0});
  CHECK(nn::conv1d(x, k3, zero_b).values() == x.values());

  CHECK_THROWS_AS(nn::conv1d(x, Tensor({1, 1, 2}, {1, 1}), zero_b), Error);
  CHECK_THROWS_AS(nn::conv1d(x, Tensor({1, 2, 3}, std::vector<double>(6, 0.0)), zero_b),
                  Error);
}

TEST_CASE("conv1d gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 11);
    Tensor x = random_tensor({1, 2, 8}, rng);
    Tensor k = random_tensor({3, 2, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    const Tensor probe = random_tensor({1, 3, 8}, rng);
    auto f = [&] { return weighted_sum(nn::conv1d(x, k, b), probe); };
    CHECK(nn::gradient_check(f, {x, k, b}) < 1e-6);
  }
}

TEST_CASE("conv1d_transpose is the adjoint of conv1d") {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    const int B = 1 + static_cast<int>(rng.below(3));
    const int ci = 1 + static_cast<int>(rng.below(4));
    const int co = 1 + static_cast<int>(rng.below(4));
    const int L = 4 + static_cast<int>(rng.below(9));
    const int k = 1 + 2 * static_cast<int>(rng.below(3));
    const Tensor x = random_tensor({B, ci, L}, rng);
    const Tensor y = random_tensor({B, co, L}, rng);
    const Tensor kern = random_tensor({co, ci, k}, rng);
    const Tensor zb_co = Tensor::zeros({co});
    const Tensor zb_ci = Tensor::zeros({ci});

    const Tensor ax = nn::conv1d(x, kern, zb_co);
    const Tensor aty = nn::conv1d_transpose(y, kern, zb_ci);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i) lhs += ax.data()[i] * y.data()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data()[i] * aty.data()[i];
    CHECK(std::abs(lhs - rhs) / std::max(1e-12, std::abs(lhs) + std::abs(rhs)) < 1e-12);
  }
}

TEST_CASE("conv1d_transpose identity and gradients") {
  Rng rng(7);
  const Tensor x = random_tensor({2, 1, 5}, rng);
  const Tensor k1({1, 1, 1}, {1.0});
  CHECK(nn::conv1d_transpose(x, k1, Tensor::zeros({1})).values() == x.values());

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng r2(seed * 17);
    Tensor xi = random_tensor({1, 3, 7}, r2);
    Tensor k = random_tensor({3, 2, 3}, r2);
    Tensor b = random_tensor({2}, r2);
    const Tensor probe = random_tensor({1, 2, 7}, r2);
    auto f = [&] { return weighted_sum(nn::conv1d_transpose(xi, k, b), probe); };
    CHECK(nn::gradient_check(f, {xi, k, b}) < 1e-6);
  }
}

TEST_CASE("activations") {
  const Tensor x({1, 4}, {-1.0, 0.0, 2.0, 0.5});
  const Tensor r = nn::relu(x);
  CHECK(r.values() == std::vector<double>{0.0, 0.0, 2.0, 0.5});
  const Tensor s = nn::sigmoid(Tensor({1}, {0.0}));
  CHECK(s.value() == 0.5);

  // Probe away from the rectifier kink (|x| > 1e-3).
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 23);
    std::vector<double> vals(8);
    for (auto& v : vals) {
      v = rng.uniform(0.05, 1.0) * (rng.below(2) ? 1.0 : -1.0);
    }
    Tensor in({2, 4}, vals);
    const Tensor probe = random_tensor({2, 4}, rng);
    auto f_relu = [&] { return weighted_sum(nn::relu(in), probe); };
    auto f_sig = [&] { return weighted_sum(nn::sigmoid(in), probe); };
    CHECK(nn::gradient_check(f_relu, {in}) < 1e-6);
    CHECK(nn::gradient_check(f_sig, {in}) < 1e-6);
  }
}

TEST_CASE("ema_scan limits and closed form") {
  Rng rng(5);
  const Tensor u = random_tensor({1, 6, 2}, rng);

  // alpha -> 1 leaves the input untouched.
  const Tensor ones({2}, {1.0, 1.0});
  CHECK(nn::ema_scan(u, ones).values() == u.values());

  // Constant input converges as c*(1-(1-alpha)^t).
  const double alpha = 0.3, c = 0.8;
  const Tensor uc = Tensor::full({1, 5, 1}, c);
  const Tensor a({1}, {alpha});
  const Tensor y = nn::ema_scan(uc, a);
  for (int t = 0; t < 5; ++t) {
    const double expect = c * (1.0 - std::pow(1.0 - alpha, t + 1));
    CHECK_THAT(y.data()[t], Catch::Matchers::WithinAbs(expect, 1e-12));
    if (t > 0) CHECK(y.data()[t] > y.data()[t - 1]);  // monotone approach
  }
}

TEST_CASE("ema_scan gradients through input and pre-sigmoid decay") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 31);
    Tensor u = random_tensor({1, 6, 2}, rng);
    Tensor rho = random_tensor({2}, rng);
    const Tensor probe = random_tensor({1, 6, 2}, rng);
    auto f = [&] { return weighted_sum(nn::ema_scan(u, nn::sigmoid(rho)), probe); };
    CHECK(nn::gradient_check(f, {u, rho}) < 1e-5);
  }
}

TEST_CASE("ema_scan output is bounded by the running max of |input|") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor u = random_tensor({1, 12, 3}, rng, -2.0, 2.0);
    std::vector<double> alpha(3);
    for (auto& a : alpha) a = rng.uniform(0.05, 0.95);
    const Tensor y = nn::ema_scan(u, Tensor({3}, alpha));
    for (int c = 0; c < 3; ++c) {
      double running = 0.0;
      for (int t = 0; t < 12; ++t) {
        running = std::max(running, std::abs(u.data()[t * 3 + c]));
        CHECK(std::abs(y.data()[t * 3 + c]) <= running + 1e-12);
      }
    }
  }
}

TEST_CASE("multi_head_ema configs") {
  CHECK_NOTHROW(nn::EmaBranchConfig::make(64, 32, 4));
  CHECK_THROWS_MATCHES(nn::EmaBranchConfig::make(64, 33, 4), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::ShapeMismatch;
                       }));
  const auto cfg = nn::EmaBranchConfig::make(64, 32, 4);
  REQUIRE(cfg.decay_init.size() == 4);
  CHECK_THAT(cfg.decay_init.front(), Catch::Matchers::WithinAbs(0.01, 1e-12));
  CHECK_THAT(cfg.decay_init.back(), Catch::Matchers::WithinAbs(0.5, 1e-12));
  for (double a : cfg.decay_init) CHECK((a > 0.0 && a < 1.0));
}

TEST_CASE("multi_head_ema degenerate configuration reproduces the projection") {
  // Identity in/out projections and decays pushed to 1 make the branch an
  // identity map (up to the vanishing (1-alpha) memory).
  nn::ParameterStore store;
  Rng rng(1);
  auto branch = nn::EmaBranch::create(store, "b", nn::EmaBranchConfig::make(2, 2, 1), rng);
  branch.w_in.values() = {1, 0, 0, 1};
  branch.w_out.values() = {1, 0, 0, 1};
  branch.b_out.values() = {0, 0};
  branch.rho.values() = {40.0, 40.0};  // sigmoid ~ 1

  const Tensor x = random_tensor({1, 5, 2}, rng);
  const Tensor y = branch.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK_THAT(y.data()[i], Catch::Matchers::WithinAbs(x.data()[i], 1e-12));
  }
}

TEST_CASE("multi_head_ema full finite-difference check over every parameter") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    nn::ParameterStore store;
    Rng rng(seed * 13);
    auto branch =
        nn::EmaBranch::create(store, "b", nn::EmaBranchConfig::make(4, 4, 2), rng);
    Tensor x = random_tensor({1, 5, 4}, rng);
    const Tensor probe = random_tensor({1, 5, 4}, rng);
    auto f = [&] { return weighted_sum(branch.forward(x), probe); };
    CHECK(nn::gradient_check(f, {x, branch.w_in, branch.rho, branch.w_out,
                                 branch.b_out}) < 1e-5);
  }
}

TEST_CASE("conflux_fuse weights") {
  Rng rng(9);
  const Tensor x = random_tensor({1, 3, 2}, rng);
  const Tensor ys = random_tensor({1, 3, 2}, rng);
  const Tensor ym = random_tensor({1, 3, 2}, rng);
  const Tensor yl = random_tensor({1, 3, 2}, rng);

  // Zero logits: uniform weights.
  const Tensor uniform = nn::conflux_fuse(x, ys, ym, yl, Tensor({3}, {0, 0, 0}));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double expect = x.data()[i] + (ys.data()[i] + ym.data()[i] + yl.data()[i]) / 3.0;
    CHECK_THAT(uniform.data()[i], Catch::Matchers::WithinAbs(expect, 1e-12));
  }

  // Zero branches: residual passthrough for any logits.
  const Tensor zeros = Tensor::zeros({1, 3, 2});
  const Tensor pass = nn::conflux_fuse(x, zeros, zeros, zeros, Tensor({3}, {2.0, -1.0, 0.5}));
  CHECK(pass.values() == x.values());

  // logits (ln 2, 0, 0) -> weights (1/2, 1/4, 1/4).
  const Tensor w = nn::conflux_fuse(x, ys, ym, yl, Tensor({3}, {std::log(2.0), 0.0, 0.0}));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double expect =
        x.data()[i] + 0.5 * ys.data()[i] + 0.25 * ym.data()[i] + 0.25 * yl.data()[i];
    CHECK_THAT(w.data()[i], Catch::Matchers::WithinAbs(expect, 1e-12));
  }
}

TEST_CASE("softmax gate weights are positive and sum to one") {
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    const double l0 = rng.uniform(-30, 30), l1 = rng.uniform(-30, 30),
                 l2 = rng.uniform(-30, 30);
    const double mx = std::max({l0, l1, l2});
    const double e0 = std::exp(l0 - mx), e1 = std::exp(l1 - mx), e2 = std::exp(l2 - mx);
    const double z = e0 + e1 + e2;
    // Recover the effective weights through the op itself.
    const Tensor x = Tensor::zeros({1, 1, 1});
    const Tensor one = Tensor::full({1, 1, 1}, 1.0);
    const Tensor zero = Tensor::zeros({1, 1, 1});
    const Tensor logits({3}, {l0, l1, l2});
    const double w0 = nn::conflux_fuse(x, one, zero, zero, logits).value();
    const double w1 = nn::conflux_fuse(x, zero, one, zero, logits).value();
    const double w2 = nn::conflux_fuse(x, zero, zero, one, logits).value();
    CHECK(w0 > 0.0);
    CHECK(w1 > 0.0);
    CHECK(w2 > 0.0);
    CHECK_THAT(w0 + w1 + w2, Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(w0, Catch::Matchers::WithinAbs(e0 / z, 1e-12));
  }
}

TEST_CASE("conflux_fuse gradients") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 41);
    Tensor x = random_tensor({1, 4, 2}, rng);
    Tensor ys = random_tensor({1, 4, 2}, rng);
    Tensor ym = random_tensor({1, 4, 2}, rng);
    Tensor yl = random_tensor({1, 4, 2}, rng);
    Tensor logits = random_tensor({3}, rng);
    const Tensor probe = random_tensor({1, 4, 2}, rng);
    auto f = [&] { return weighted_sum(nn::conflux_fuse(x, ys, ym, yl, logits), probe); };
    CHECK(nn::gradient_check(f, {x, ys, ym, yl, logits}) < 1e-6);
  }
}

TEST_CASE("ceconv block structure") {
  const auto cfgs = nn::CeconvBlock::default_branches(64);
  CHECK(cfgs[0].d_branch == 32);
  CHECK(cfgs[0].heads == 4);
  CHECK(cfgs[1].d_branch == 64);
  CHECK(cfgs[1].heads == 8);
  CHECK(cfgs[2].d_branch == 128);
  CHECK(cfgs[2].heads == 16);

  // With all EMA output projections zeroed the block reduces to conv + act.
  nn::ParameterStore store;
  Rng rng(2);
  auto blk = nn::CeconvBlock::create(store, "ce", 4, nn::CeconvBlock::Variant::Full, rng);
  for (auto& br : blk.branches) {
    std::fill(br.w_out.values().begin(), br.w_out.values().end(), 0.0);
    std::fill(br.b_out.values().begin(), br.b_out.values().end(), 0.0);
  }
  const Tensor x = testutil::random_tensor({2, 4, 6}, rng);
  const Tensor expected = nn::relu(nn::conv1d(x, blk.conv_k, blk.conv_b));
  const Tensor got = blk.forward(x);
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK_THAT(got.data()[i], Catch::Matchers::WithinAbs(expected.data()[i], 1e-14));
  }
}

TEST_CASE("ceconv block end-to-end gradients") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    nn::ParameterStore store;
    Rng rng(seed * 53);
    auto blk =
        nn::CeconvBlock::create(store, "ce", 4, nn::CeconvBlock::Variant::Full, rng);
    Tensor x = random_tensor({1, 4, 6}, rng, 0.05, 1.0);  // keep relu off its kink
    const Tensor probe = random_tensor({1, 4, 6}, rng);
    std::vector<Tensor> params{x};
    for (const auto& [name, t] : store.params()) params.push_back(t);
    auto f = [&] { return weighted_sum(blk.forward(x), probe); };
    CHECK(nn::gradient_check(f, params, 1e-5, 24) < 1e-4);
  }
}

TEST_CASE("loss closed forms") {
  const Tensor mu0 = Tensor::zeros({1, 4});
  const Tensor lv0 = Tensor::zeros({1, 4});
  CHECK(nn::kl_loss(mu0, lv0).value() == 0.0);

  Tensor e1 = Tensor::zeros({1, 4});
  e1.data()[0] = 1.0;
  CHECK_THAT(nn::kl_loss(e1, lv0).value(), Catch::Matchers::WithinAbs(0.5, 1e-12));

  Rng rng(8);
  const Tensor x = random_tensor({2, 3}, rng);
  CHECK(nn::mse_loss(x, x).value() == 0.0);

  Tensor y = x;
  Tensor shifted({2, 3}, x.values());
  for (auto& v : shifted.values()) v += 0.1;
  CHECK_THAT(nn::mse_loss(x, shifted).value(), Catch::Matchers::WithinAbs(0.01, 1e-12));
}

TEST_CASE("loss gradients") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 61);
    Tensor x = random_tensor({2, 3}, rng);
    Tensor xh = random_tensor({2, 3}, rng);
    Tensor mu = random_tensor({2, 4}, rng);
    Tensor lv = random_tensor({2, 4}, rng);
    auto f_mse = [&] { return nn::mse_loss(x, xh); };
    auto f_kl = [&] { return nn::kl_loss(mu, lv); };
    CHECK(nn::gradient_check(f_mse, {x, xh}) < 1e-6);
    CHECK(nn::gradient_check(f_kl, {mu, lv}) < 1e-6);
  }
}

TEST_CASE("adam_step") {
  SECTION("zero gradient leaves parameters, advances the step counter") {
    nn::ParameterStore store;
    Tensor p = store.create("p", Tensor({2}, {1.0, -2.0}));
    p.node()->ensure_grad();
    nn::adam_step(store, 1e-3);
    CHECK(p.values() == std::vector<double>{1.0, -2.0});
    CHECK(store.step() == 1);
  }

  SECTION("constant gradient matches the hand-derived recursion") {
    const double g = 0.37, lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    nn::ParameterStore store;
    Tensor p = store.create("p", Tensor({1}, {5.0}));

    double m = 0.0, v = 0.0, expect = 5.0;
    for (int t = 1; t <= 5; ++t) {
      p.node()->ensure_grad();
      p.grad()[0] = g;
      nn::adam_step(store, lr, b1, b2, eps);
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      const double mh = m / (1 - std::pow(b1, t));
      const double vh = v / (1 - std::pow(b2, t));
      expect -= lr * mh / (std::sqrt(vh) + eps);
      CHECK_THAT(p.values()[0], Catch::Matchers::WithinAbs(expect, 1e-15));
      p.zero_grad();
    }
  }

  SECTION("missing gradient is rejected") {
    nn::ParameterStore store;
    store.create("p", Tensor({1}, {0.0}));
    CHECK_THROWS_MATCHES(nn::adam_step(store, 1e-3), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == ErrorCode::MissingGradient;
                         }));
  }

  SECTION("two identical runs produce bitwise-identical parameters") {
    auto run = [] {
      nn::ParameterStore store;
      Rng rng(4);
      Tensor p = store.create("p", testutil::random_tensor({8}, rng));
      for (int step = 0; step < 20; ++step) {
        auto loss = nn::sum(nn::mul(p, p));
        store.zero_grad();
        loss.backward();
        nn::adam_step(store, 1e-2);
      }
      return p.values();
    };
    CHECK(run() == run());
  }
}

TEST_CASE("gradient_check harness sanity") {
  Tensor p({1}, {3.0});
  auto f = [&] { return nn::mul(p, p); };
  CHECK(nn::gradient_check(f, {p}) <= 1e-10);
  // And the analytic derivative really is 6 at p = 3.
  p.zero_grad();
  p.set_requires_grad(true);
  auto out = f();
  out.backward();
  CHECK_THAT(p.grad()[0], Catch::Matchers::WithinAbs(6.0, 1e-12));
}

TEST_CASE("forward and backward stay finite on random networks") {
  Rng rng(3141);
  for (int trial = 0; trial < 5; ++trial) {
    nn::ParameterStore store;
    auto blk = nn::CeconvBlock::create(store, "ce", 8, nn::CeconvBlock::Variant::Full, rng);
    Tensor x = random_tensor({2, 8, 10}, rng, -3.0, 3.0);
    x.set_requires_grad(true);
    Tensor out = blk.forward(x);
    CHECK(testutil::all_finite(out));
    Tensor loss = nn::mean(nn::mul(out, out));
    store.zero_grad();
    loss.backward();
    CHECK(std::isfinite(loss.value()));
    for (const auto& [name, t] : store.params()) {
      for (double v : t.grad()) CHECK(std::isfinite(v));
    }
  }
}
