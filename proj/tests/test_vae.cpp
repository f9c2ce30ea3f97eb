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
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "forge/synth.hpp"
#include "forge/vae.hpp"
#include "forge/weights_io.hpp"
#include "test_util.hpp"

using namespace forge;
using nn::Tensor;

namespace {

vae::ModelConfig tiny_config() {
  vae::ModelConfig cfg;
  cfg.seq_len = 8;
  cfg.hidden_channels = 4;
  cfg.latent_dim = 3;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  return cfg;
}

geo::RouteDataset synthetic_dataset(std::size_t count, std::size_t steps,
                                    std::uint64_t seed) {
  synth::SynthConfig scfg;
  auto trajs = synth::make_crossing_flow(scfg, 1, count, steps, 10.0, seed);
  return geo::make_route_dataset("synthetic", std::move(trajs));
}

Tensor random_batch(int b, int l, Rng& rng) {
  std::vector<double> data(static_cast<std::size_t>(b) * l * 2);
  for (auto& v : data) v = rng.uniform01();
  return Tensor({b, l, 2}, std::move(data));
}

std::string temp_file(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("encode produces latent heads of the configured width") {
  vae::ModelConfig cfg;
  cfg.seq_len = 8;  // default J = 100 and hidden 64 kept
  Rng init(1);
  vae::ConfluxVae model(cfg, init);
  Rng rng(2);
  const Tensor x = random_batch(3, 8, rng);
  const auto [mu, logvar] = model.encode(x);
  CHECK(mu.shape() == std::vector<int>{3, 100});
  CHECK(logvar.shape() == std::vector<int>{3, 100});
  for (double v : logvar.values()) CHECK((v >= -10.0 && v <= 10.0));
}

TEST_CASE("identical input rows give identical latent rows") {
  Rng init(3);
  vae::ConfluxVae model(tiny_config(), init);
  Rng rng(4);
  const Tensor one = random_batch(1, 8, rng);
  std::vector<double> doubled = one.values();
  doubled.insert(doubled.end(), one.values().begin(), one.values().end());
  const Tensor two({2, 8, 2}, doubled);
  const auto [mu, logvar] = model.encode(two);
  for (int j = 0; j < 3; ++j) {
    CHECK(mu.data()[j] == mu.data()[3 + j]);
    CHECK(logvar.data()[j] == logvar.data()[3 + j]);
  }
}

TEST_CASE("ablation variants encode with valid shapes and shrink the model") {
  auto count_params = [](vae::ModelConfig cfg) {
    Rng init(5);
    vae::ConfluxVae model(cfg, init);
    Rng rng(6);
    const Tensor x = random_batch(2, cfg.seq_len, rng);
    const auto [mu, logvar] = model.encode(x);
    REQUIRE(mu.shape() == (std::vector<int>{2, cfg.latent_dim}));
    const Tensor out = model.decode(mu);
    REQUIRE(out.shape() == (std::vector<int>{2, cfg.seq_len, 2}));
    return model.parameter_count();
  };
  vae::ModelConfig full = tiny_config();
  vae::ModelConfig no_ema = full;
  no_ema.disable_conflux_ema = true;
  vae::ModelConfig no_block = full;
  no_block.disable_conflux_block = true;

  const auto n_full = count_params(full);
  const auto n_no_ema = count_params(no_ema);
  const auto n_no_block = count_params(no_block);
  CHECK(n_full > n_no_ema);
  CHECK(n_no_ema > n_no_block);
}

TEST_CASE("reparameterize") {
  SECTION("clamped-down logvar collapses onto mu") {
    const Tensor mu({1, 3}, {0.5, -0.25, 1.0});
    const Tensor logvar = Tensor::full({1, 3}, -10.0);
    const Tensor eps({1, 3}, {1.0, -1.0, 0.5});
    const Tensor z = vae::reparameterize(mu, logvar, eps);
    for (int j = 0; j < 3; ++j) {
      CHECK(std::abs(z.data()[j] - mu.data()[j]) <= std::exp(-5.0) * (1.0 + 1e-12));
    }
  }

  SECTION("fixed seed reproduces z") {
    const Tensor mu = Tensor::zeros({2, 4});
    const Tensor logvar = Tensor::zeros({2, 4});
    Rng a(9), b(9);
    CHECK(vae::reparameterize(mu, logvar, a).values() ==
          vae::reparameterize(mu, logvar, b).values());
  }

  SECTION("sample mean concentrates (law of large numbers)") {
    const int draws = 100000;
    const Tensor mu = Tensor::zeros({1, 4});
    const Tensor logvar = Tensor::zeros({1, 4});
    Rng rng(10);
    std::array<double, 4> acc{};
    for (int i = 0; i < draws; ++i) {
      const Tensor z = vae::reparameterize(mu, logvar, rng);
      for (int j = 0; j < 4; ++j) acc[static_cast<std::size_t>(j)] += z.data()[j];
    }
    for (double a : acc) CHECK(std::abs(a / draws) < 0.02);
  }
}

TEST_CASE("decode stays in (0,1) and is deterministic") {
  Rng init(11);
  vae::ConfluxVae model(tiny_config(), init);
  Rng rng(12);
  const Tensor z = testutil::random_tensor({2, 3}, rng, -3.0, 3.0);
  const Tensor a = model.decode(z);
  for (double v : a.values()) CHECK((v > 0.0 && v < 1.0));
  const Tensor b = model.decode(z);
  CHECK(a.values() == b.values());

  const Tensor mean_a = model.decode(Tensor::zeros({1, 3}));
  const Tensor mean_b = model.decode(Tensor::zeros({1, 3}));
  CHECK(mean_a.values() == mean_b.values());
}

TEST_CASE("total_loss arithmetic") {
  vae::ModelConfig cfg = tiny_config();
  cfg.beta = 1e-3;
  Rng init(13);
  vae::ConfluxVae model(cfg, init);

  Rng rng(14);
  const Tensor x = random_batch(1, 8, rng);
  Tensor x_shift({1, 8, 2}, x.values());
  for (auto& v : x_shift.values()) v += 0.1;  // mse exactly 0.01
  Tensor mu = Tensor::zeros({1, 3});
  mu.data()[0] = 2.0;  // kl = 0.5 * mu^2 = 2.0
  const Tensor logvar = Tensor::zeros({1, 3});

  const auto [total, parts] = model.total_loss(x, x_shift, mu, logvar);
  CHECK_THAT(parts.recon, Catch::Matchers::WithinAbs(0.01, 1e-12));
  CHECK_THAT(parts.kl, Catch::Matchers::WithinAbs(2.0, 1e-12));
  CHECK_THAT(parts.total, Catch::Matchers::WithinAbs(0.012, 1e-12));

  vae::ModelConfig cfg0 = cfg;
  cfg0.beta = 0.0;
  Rng init2(13);
  vae::ConfluxVae model0(cfg0, init2);
  const auto [total0, parts0] = model0.total_loss(x, x_shift, mu, logvar);
  CHECK(parts0.total == parts0.recon);

  const auto [tx, px] = model.total_loss(x, x, Tensor::zeros({1, 3}), Tensor::zeros({1, 3}));
  CHECK(px.total == 0.0);
}

TEST_CASE("training is deterministic and improves the loss") {
  const auto ds = synthetic_dataset(8, 8, 21);
  vae::ModelConfig cfg = tiny_config();
  cfg.epochs = 5;

  const auto a = vae::train(ds, cfg, 77);
  const auto b = vae::train(ds, cfg, 77);
  REQUIRE(a.history.size() == 5);
  CHECK(a.weights.params.size() == b.weights.params.size());
  for (const auto& [name, t] : a.weights.params) {
    CHECK(t.values() == b.weights.params.at(name).values());
  }
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].total == b.history[e].total);
  }
  CHECK(a.history.back().recon <= a.history.front().recon);

  geo::RouteDataset empty;
  CHECK_THROWS_MATCHES(vae::train(empty, cfg, 1), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::EmptyDataset;
                       }));
}

TEST_CASE("single-trajectory overfit is monotone with the KL term off") {
  auto ds = synthetic_dataset(1, 16, 31);
  vae::ModelConfig cfg;
  cfg.seq_len = 16;
  cfg.hidden_channels = 8;
  cfg.latent_dim = 4;
  cfg.beta = 0.0;  // deterministic z = mu path
  cfg.epochs = 300;
  cfg.batch_size = 1;
  cfg.learning_rate = 1e-3;

  const auto result = vae::train(ds, cfg, 5);
  for (int e = 1; e < 50; ++e) {
    CHECK(result.history[static_cast<std::size_t>(e)].recon <=
          result.history[static_cast<std::size_t>(e) - 1].recon + 1e-8);
  }

  // decode(encode(x).mu) reconstructs the memorized trajectory.
  vae::ConfluxVae model(result.weights);
  const auto seq = geo::normalize(ds.trajectories[0], ds.bounds);
  std::vector<double> data;
  for (const auto& v : seq.values) {
    data.push_back(v[0]);
    data.push_back(v[1]);
  }
  const Tensor x({1, 16, 2}, data);
  const auto [mu, logvar] = model.encode(x);
  const Tensor recon = model.decode(mu);
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.data()[i] - recon.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.size());
  CHECK(mse < 1e-3);
}

TEST_CASE("generation contract") {
  const auto ds = synthetic_dataset(6, 8, 41);
  vae::ModelConfig cfg = tiny_config();
  cfg.epochs = 2;
  const auto trained = vae::train(ds, cfg, 3);

  const auto tracks = vae::generate(trained.weights, 5, 1234);
  REQUIRE(tracks.size() == 5);
  for (const auto& t : tracks) {
    CHECK(t.length() == 8);
    CHECK(t.dt == 10.0);
    CHECK(t.states.front().t == 0.0);
    for (const auto& s : t.states) {
      CHECK(trained.weights.bounds.contains(s.pos));
    }
  }

  // Different seeds give different samples.
  const auto other = vae::generate(trained.weights, 5, 999);
  bool any_diff = false;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    any_diff = any_diff || !(tracks[i].states[0].pos == other[i].states[0].pos);
  }
  CHECK(any_diff);

  // Batch partitioning: one call of 4 equals two calls of 2 with the
  // documented start-index split.
  const auto whole = vae::generate(trained.weights, 4, 77);
  const auto first = vae::generate(trained.weights, 2, 77, 0);
  const auto second = vae::generate(trained.weights, 2, 77, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < whole[i].states.size(); ++k) {
      CHECK(whole[i].states[k] == first[i].states[k]);
      CHECK(whole[i + 2].states[k] == second[i].states[k]);
    }
  }
}

TEST_CASE("weights persistence round trip") {
  const auto ds = synthetic_dataset(4, 8, 51);
  vae::ModelConfig cfg = tiny_config();
  cfg.epochs = 2;
  const auto trained = vae::train(ds, cfg, 9);

  const std::string path = temp_file("forge_test_weights.bin");
  vae::save_weights(trained.weights, path);
  const auto loaded = vae::load_weights(path);

  CHECK(loaded.config == trained.weights.config);
  CHECK(loaded.bounds == trained.weights.bounds);
  CHECK(loaded.rng_seed == trained.weights.rng_seed);
  for (const auto& [name, t] : trained.weights.params) {
    CHECK(t.values() == loaded.params.at(name).values());
  }

  const auto a = vae::generate(trained.weights, 3, 4242);
  const auto b = vae::generate(loaded, 3, 4242);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].states.size(); ++k) {
      CHECK(a[i].states[k] == b[i].states[k]);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("weights container detects damage") {
  const auto ds = synthetic_dataset(4, 8, 61);
  vae::ModelConfig cfg = tiny_config();
  cfg.epochs = 1;
  const auto trained = vae::train(ds, cfg, 13);
  const std::string path = temp_file("forge_test_weights_damage.bin");
  vae::save_weights(trained.weights, path);

  SECTION("truncation") {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_MATCHES(vae::load_weights(path), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == ErrorCode::CorruptFile;
                         }));
  }

  SECTION("bumped version field") {
    std::fstream file(path, std::ios::binary | std::ios::in | std::ios::out);
    file.seekp(8);  // version u32 sits right after the magic
    const std::uint32_t bumped = vae::kWeightsFormatVersion + 1;
    file.write(reinterpret_cast<const char*>(&bumped), sizeof(bumped));
    file.close();
    CHECK_THROWS_MATCHES(vae::load_weights(path), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == ErrorCode::FormatVersionMismatch;
                         }));
  }

  SECTION("flipped payload byte") {
    std::fstream file(path, std::ios::binary | std::ios::in | std::ios::out);
    file.seekg(0, std::ios::end);
    const auto size = file.tellg();
    file.seekg(static_cast<std::streamoff>(size) - 20);
    char byte;
    file.read(&byte, 1);
    byte = static_cast<char>(byte ^ 0x5A);
    file.seekp(static_cast<std::streamoff>(size) - 20);
    file.write(&byte, 1);
    file.close();
    CHECK_THROWS_MATCHES(vae::load_weights(path), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == ErrorCode::CorruptFile;
                         }));
  }

  std::filesystem::remove(path);
}

TEST_CASE("end-to-end loss gradient matches finite differences on a toy model") {
  vae::ModelConfig cfg;
  cfg.seq_len = 8;
  cfg.hidden_channels = 4;
  cfg.latent_dim = 4;
  cfg.beta = 1e-3;
  Rng init(2024);
  vae::ConfluxVae model(cfg, init);

  Rng rng(7);
  const Tensor x = random_batch(2, 8, rng);
  std::vector<double> eps_data(2 * 4);
  for (auto& v : eps_data) v = rng.normal();
  const Tensor eps({2, 4}, eps_data);

  auto f = [&] {
    const auto [mu, logvar] = model.encode(x);
    const Tensor z = vae::reparameterize(mu, logvar, eps);
    const Tensor x_hat = model.decode(z);
    auto [total, parts] = model.total_loss(x, x_hat, mu, logvar);
    return total;
  };
  std::vector<Tensor> params;
  for (const auto& [name, t] : model.store().params()) params.push_back(t);
  CHECK(nn::gradient_check(f, params, 1e-5, 12) < 1e-4);
}
