#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ahl/errors.hpp"
#include "ahl/smoothing.hpp"
#include "ahl/train.hpp"

using namespace ahl;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.num_layers = 2;
  c.num_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.vocab_size = 20;
  c.max_seq_len = 12;
  return c;
}

std::vector<Example> small_batch(std::uint64_t seed, int count, int len = 8) {
  std::mt19937_64 rng(seed);
  std::vector<Example> out;
  for (int i = 0; i < count; ++i) {
    Example ex;
    ex.tokens.push_back(kClsId);
    for (int t = 1; t < len; ++t) ex.tokens.push_back(kFirstContentId + static_cast<int>(rng() % 16));
    ex.label = static_cast<int>(rng() % 2);
    out.push_back(ex);
  }
  return out;
}

std::vector<const Example*> pointers(const std::vector<Example>& v) {
  std::vector<const Example*> p;
  for (const auto& e : v) p.push_back(&e);
  return p;
}

std::vector<double> flat_params(const TransformerModel& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters())
    for (double x : p.value.values()) out.push_back(x);
  return out;
}

}  // namespace

TEST_CASE("alpha_s 0 reproduces the plain training step bit for bit") {
  const auto data = small_batch(1, 6);
  const auto batch = pointers(data);
  TransformerModel a(small_config(), 3), b(small_config(), 3);
  Adam oa, ob;
  std::mt19937_64 rng(9);
  SmoothingConfig s;
  for (int step = 0; step < 3; ++step) {
    const double la = train_step(a, batch, oa);
    const double lb = smoothed_step(b, batch, s, ob, rng).loss;
    CHECK(la == lb);
  }
  CHECK(flat_params(a) == flat_params(b));
}

TEST_CASE("alpha_s 0 training trajectory equals the baseline trainer") {
  const auto data = small_batch(2, 20);
  TrainConfig plain;
  plain.epochs = 2;
  plain.batch_size = 4;
  plain.seed = 5;
  TrainConfig smoothed = plain;
  smoothed.smoothing.resample = Resample::per_example;
  TransformerModel a(small_config(), 4), b(small_config(), 4);
  const auto ra = train(a, data, data, plain);
  const auto rb = train(b, data, data, smoothed);
  CHECK(flat_params(a) == flat_params(b));
  REQUIRE(ra.curve.size() == rb.curve.size());
  for (std::size_t i = 0; i < ra.curve.size(); ++i) CHECK(ra.curve[i].mean_loss == rb.curve[i].mean_loss);
}

TEST_CASE("smoothed steps are deterministic given the seed") {
  const auto data = small_batch(3, 5);
  const auto batch = pointers(data);
  SmoothingConfig s{0.2};
  auto run = [&](std::uint64_t seed) {
    TransformerModel m(small_config(), 7);
    Adam opt;
    std::mt19937_64 rng(seed);
    smoothed_step(m, batch, s, opt, rng);
    smoothed_step(m, batch, s, opt, rng);
    return flat_params(m);
  };
  CHECK(run(11) == run(11));
  CHECK_FALSE(run(11) == run(12));
}

TEST_CASE("smoothing actually changes the update") {
  const auto data = small_batch(4, 4);
  const auto batch = pointers(data);
  TransformerModel a(small_config(), 8), b(small_config(), 8);
  Adam oa, ob;
  std::mt19937_64 rng(1);
  train_step(a, batch, oa);
  smoothed_step(b, batch, SmoothingConfig{0.5}, ob, rng);
  CHECK_FALSE(flat_params(a) == flat_params(b));
}

TEST_CASE("masked fraction matches alpha_s over a million cells") {
  // Count cells across enough steps to exceed 1e6; lr is irrelevant, so the
  // optimizer work is incidental.
  const auto data = small_batch(5, 32, 12);
  const auto batch = pointers(data);
  for (double alpha : {0.1, 0.2, 0.5}) {
    for (Resample mode : {Resample::per_batch, Resample::per_example}) {
      TransformerModel m(small_config(), 1);
      Adam opt;
      std::mt19937_64 rng(static_cast<std::uint64_t>(alpha * 100));
      std::size_t masked = 0, cells = 0;
      while (cells < 1'000'000) {
        const auto r = smoothed_step(m, batch, SmoothingConfig{alpha, mode}, opt, rng);
        masked += r.masked_cells;
        cells += r.total_cells;
      }
      const double frac = static_cast<double>(masked) / static_cast<double>(cells);
      CHECK(std::abs(frac - alpha) <= 0.005);
    }
  }
}

TEST_CASE("training masks respect the row safeguard") {
  // At alpha_s close to one on short rows the safeguard must kick in; a fully
  // masked row would put non-finite values into the loss.
  const auto data = small_batch(6, 8, 3);
  const auto batch = pointers(data);
  TransformerModel m(small_config(), 2);
  Adam opt;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto r = smoothed_step(m, batch, SmoothingConfig{0.95, Resample::per_example}, opt, rng);
    CHECK(std::isfinite(r.loss));
    CHECK(r.masked_cells <= r.total_cells - r.total_cells / 3);
  }
}

TEST_CASE("smoothing config validation") {
  const auto data = small_batch(7, 2);
  const auto batch = pointers(data);
  TransformerModel m(small_config(), 2);
  Adam opt;
  std::mt19937_64 rng(3);
  CHECK_THROWS_AS(smoothed_step(m, batch, SmoothingConfig{1.0}, opt, rng), ContractError);
  CHECK_THROWS_AS(smoothed_step(m, batch, SmoothingConfig{-0.1}, opt, rng), ContractError);
  CHECK_THROWS_AS(smoothed_step(m, {}, SmoothingConfig{0.1}, opt, rng), ContractError);
  CHECK(resample_from_string("per_example") == Resample::per_example);
  CHECK_THROWS_AS(resample_from_string("sometimes"), ContractError);
}

TEST_CASE("evaluation ignores smoothing unless asked") {
  const auto data = small_batch(8, 40);
  TransformerModel m(small_config(), 6);
  SmoothingConfig s{0.5};
  CHECK(evaluate_clean(m, data, s, 1) == evaluate_clean(m, data));
  s.apply_at_eval = true;
  CHECK(evaluate_clean(m, data, s, 1) == evaluate_clean(m, data, s, 1));
}
