#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "lgsgm/trainer.hpp"
#include "oracles.hpp"

using namespace lgsgm;
using num::Tensor;

namespace {

const ModelDims kDims{4, 6, 5, 4};

SyntheticCorpus tiny_corpus(std::size_t n_train = 8, std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.n_train = n_train;
  spec.n_val = 4;
  spec.n_test = 4;
  spec.image_dim = kDims.image_dim;
  spec.seed = seed;
  return gen_synthetic_corpus(spec);
}

TrainConfig tiny_config(std::size_t epochs) {
  TrainConfig c;
  c.batch_size = 4;
  c.epochs = epochs;
  c.seed = 11;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("lgsgm_trainer_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

double loss_of(const oracle::Mat& s, double m, NegativeMining mining = NegativeMining::kHardest) {
  return batch_loss(oracle::to_tensor(s), m, mining).item();
}

}  // namespace

TEST_CASE("loss examples") {
  CHECK(loss_of({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, 0.35) == 0.0);
  CHECK(loss_of({{0.5, 0.6}, {0.4, 0.9}}, 0.35) == doctest::Approx(0.75).epsilon(1e-14));
  // Least-matching picks the other (only) negative here too.
  CHECK(loss_of({{0.5, 0.6}, {0.4, 0.9}}, 0.35, NegativeMining::kLeastMatching) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK_THROWS_AS(loss_of({{1}}, 0.35), ContractError);
  CHECK_THROWS_AS(batch_loss(Tensor::zeros(2, 3), 0.35), ContractError);
  CHECK(parse_negative_mining("least") == NegativeMining::kLeastMatching);
  CHECK_THROWS_AS(parse_negative_mining("softest"), ConfigError);
}

TEST_CASE("loss matches the oracle and is zero exactly when margins hold") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 5;
    oracle::Mat s = oracle::random_mat(n, n, rng);
    for (bool hardest : {true, false}) {
      const double got = loss_of(s, 0.35, hardest ? NegativeMining::kHardest : NegativeMining::kLeastMatching);
      CHECK(got == doctest::Approx(oracle::batch_loss(s, 0.35, hardest)).epsilon(1e-12));
      CHECK(got >= 0.0);
    }
    // Push the diagonal clear of every negative by the margin.
    for (std::size_t k = 0; k < n; ++k) s[k][k] = 1.0 + 0.35 + 0.01 * trial;
    CHECK(loss_of(s, 0.35) == 0.0);
    s[0][n - 1] = s[0][0] - 0.3;
    CHECK(loss_of(s, 0.35) > 0.0);
  }
}

TEST_CASE("the true pair is never its own negative") {
  // Duplicate pairs: every entry equal, so only the diagonal exclusion keeps
  // the loss at exactly 2 m per row.
  const oracle::Mat same(3, oracle::Vec(3, 0.7));
  CHECK(loss_of(same, 0.35) == doctest::Approx(6 * 0.35).epsilon(1e-14));
  oracle::Mat diag_high = same;
  for (int k = 0; k < 3; ++k) diag_high[k][k] = 100.0;
  CHECK(loss_of(diag_high, 0.35) == 0.0);
}

TEST_CASE("loss gradient matches central differences") {
  std::mt19937_64 rng(2);
  for (int seed = 0; seed < 20; ++seed) {
    // Values on a 0.07 grid with a margin off that grid keep every max and
    // hinge away from its kink.
    const std::size_t n = 4;
    std::vector<double> vals(n * n);
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.07 * static_cast<double>(i) + 0.013;
    std::shuffle(vals.begin(), vals.end(), rng);
    const Tensor s = Tensor::from(n, n, vals);
    for (auto mining : {NegativeMining::kHardest, NegativeMining::kLeastMatching})
      CHECK(oracle::gradient_check({s}, [&] { return batch_loss(s, 0.33, mining); }) < 1e-4);
  }
}

TEST_CASE("adam") {
  ParameterSet reg;
  Tensor w = reg.add("w", Tensor::from(1, 3, {0.5, -1.0, 2.0}));
  Tensor frozen = reg.add("buffer", Tensor::zeros(1, 2), false);
  w.set_requires_grad(true);

  SUBCASE("zero gradient leaves parameters unchanged") {
    reg.zero_grads();
    Adam adam;
    adam.step(reg);
    CHECK(oracle::row_of(w) == oracle::Vec{0.5, -1.0, 2.0});
    CHECK(adam.steps() == 1);
  }
  SUBCASE("first step moves by the learning rate against the gradient") {
    reg.zero_grads();
    auto g = w.mutable_grad();
    g[0] = 0.2;
    g[1] = -3.0;
    g[2] = 1e-3;
    Adam adam(AdamConfig{0.01});
    adam.step(reg);
    CHECK(w.at(0, 0) == doctest::Approx(0.5 - 0.01 * 0.2 / (0.2 + 1e-8)).epsilon(1e-12));
    CHECK(w.at(0, 1) == doctest::Approx(-1.0 + 0.01 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
    CHECK(w.at(0, 2) == doctest::Approx(2.0 - 0.01 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("constant gradient keeps a unit-size step") {
    Adam adam(AdamConfig{0.01});
    for (int t = 0; t < 5; ++t) {
      reg.zero_grads();
      for (double& x : w.mutable_grad()) x = 0.5;
      adam.step(reg);
    }
    CHECK(w.at(0, 0) == doctest::Approx(0.5 - 0.05).epsilon(1e-9));
  }
  SUBCASE("missing gradient names the parameter") {
    Tensor fresh = reg.add("fresh", Tensor::zeros(1, 1));
    reg.zero_grads();
    Tensor(reg.get("fresh")).mutable_grad();
    ParameterSet other;
    other.add("w", w);
    other.add("no_grad", Tensor::zeros(1, 1));
    Adam adam;
    try {
      adam.step(other);
      FAIL("expected an error");
    } catch (const ContractError& e) {
      CHECK(std::string(e.what()).find("no_grad") != std::string::npos);
    }
    CHECK(oracle::row_of(w) == oracle::Vec{0.5, -1.0, 2.0});
  }
  (void)frozen;
}

TEST_CASE("one epoch over two pairs") {
  const SyntheticCorpus c = tiny_corpus(2);
  Model model(ModelConfig::for_vocab(c.vocab, kDims));
  TrainConfig cfg = tiny_config(1);
  cfg.batch_size = 2;
  TrainState state;
  train(model, c.train, nullptr, cfg, state);
  CHECK(state.log.size() == 1);
  CHECK(state.epochs_done == 1);
  CHECK(state.log[0].batch_losses.size() == 1);
  CHECK(state.adam.steps() == 1);
}

TEST_CASE("training validation") {
  const SyntheticCorpus c = tiny_corpus(4);
  Model model(ModelConfig::for_vocab(c.vocab, kDims));
  TrainState state;
  TrainConfig bad = tiny_config(1);
  bad.margin = 0.0;
  CHECK_THROWS_AS(train(model, c.train, nullptr, bad, state), ConfigError);
  bad = tiny_config(1);
  bad.batch_size = 1;
  CHECK_THROWS_AS(train(model, c.train, nullptr, bad, state), ConfigError);
  PairedDataset one = c.train;
  one.items.resize(1);
  CHECK_THROWS_AS(train(model, one, nullptr, tiny_config(1), state), DataError);
  PairedDataset mute = c.train;
  mute.items[2].captions.clear();
  CHECK_THROWS_AS(train(model, mute, nullptr, tiny_config(1), state), DataError);
}

TEST_CASE("identical seeds give identical trajectories") {
  const SyntheticCorpus c = tiny_corpus(10);
  auto run = [&] {
    Model model(ModelConfig::for_vocab(c.vocab, kDims));
    TrainState state;
    train(model, c.train, &c.val, tiny_config(3), state);
    return std::pair{state.log, model.params().clone()};
  };
  const auto [log_a, params_a] = run();
  const auto [log_b, params_b] = run();
  REQUIRE(log_a.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(log_a[e].batch_losses == log_b[e].batch_losses);
    CHECK(log_a[e].val_rsum == log_b[e].val_rsum);
  }
  CHECK(params_a.bitwise_equal(params_b));

  Model other(ModelConfig::for_vocab(c.vocab, kDims));
  TrainState state;
  TrainConfig cfg = tiny_config(3);
  cfg.seed = 12;
  train(other, c.train, &c.val, cfg, state);
  CHECK(state.log[0].batch_losses != log_a[0].batch_losses);
}

TEST_CASE("resuming reproduces the uninterrupted run") {
  const SyntheticCorpus c = tiny_corpus(10);
  const ModelConfig mc = ModelConfig::for_vocab(c.vocab, kDims);

  Model straight(mc);
  TrainState s1;
  train(straight, c.train, &c.val, tiny_config(4), s1);

  Model first(mc);
  TrainState s2;
  const TrainConfig half = tiny_config(2);
  train(first, c.train, &c.val, half, s2);
  const std::string bytes = encode_checkpoint(make_checkpoint(first, &s2, &half));

  const Checkpoint ck = decode_checkpoint(bytes);
  std::unique_ptr<Model> resumed = model_from_checkpoint(ck);
  TrainState s3;
  restore_train_state(ck, s3);
  CHECK(s3.epochs_done == 2);
  CHECK(s3.adam.steps() == s2.adam.steps());
  train(*resumed, c.train, &c.val, tiny_config(4), s3);
  REQUIRE(s3.log.size() == 4);
  for (std::size_t e = 0; e < 4; ++e) CHECK(s3.log[e].batch_losses == s1.log[e].batch_losses);
  CHECK(resumed->params().bitwise_equal(straight.params()));
}

TEST_CASE("best parameters follow validation and patience stops early") {
  const SyntheticCorpus c = tiny_corpus(8);
  Model model(ModelConfig::for_vocab(c.vocab, kDims));
  TrainState state;
  TrainConfig cfg = tiny_config(40);
  cfg.patience = 2;
  std::size_t calls = 0;
  train(model, c.train, &c.val, cfg, state, [&](const EpochLog&, const TrainState&) { ++calls; });
  CHECK(calls == state.log.size());
  CHECK(state.best_epoch >= 1);
  CHECK(state.best_params.size() == model.params().size());
  double best = -1.0;
  for (const auto& e : state.log) best = std::max(best, e.val_rsum);
  CHECK(state.best_val_rsum == best);
  if (state.stopped_early) CHECK(state.log.size() == state.best_epoch + 2);
}

TEST_CASE("checkpoint round trips") {
  const SyntheticCorpus c = tiny_corpus(4);
  Model model(ModelConfig::for_vocab(c.vocab, kDims));
  TrainState state;
  const TrainConfig cfg = tiny_config(1);
  train(model, c.train, nullptr, cfg, state);
  const Checkpoint ck = make_checkpoint(model, &state, &cfg);
  const auto dir = temp_dir("roundtrip");

  SUBCASE("bit-exact in 64-bit mode") {
    save_checkpoint(dir / "a.ckpt", ck);
    const Checkpoint back = load_checkpoint(dir / "a.ckpt");
    CHECK(back.tensors.bitwise_equal(model.params()));
    CHECK(back.optimizer_steps == state.adam.steps());
    CHECK(back.model_config == to_json(model.config()));
    CHECK(encode_checkpoint(back) == encode_checkpoint(ck));
    for (const auto& [name, mom] : state.adam.moments()) {
      CHECK(back.optimizer.at(name).m == mom.m);
      CHECK(back.optimizer.at(name).v == mom.v);
    }
    CHECK(train_config_from_json(back.extra.at("train_config")).margin == 0.35);
  }
  SUBCASE("32-bit storage rounds each value") {
    const Checkpoint back = decode_checkpoint(encode_checkpoint(ck, CheckpointDtype::kF32));
    const auto& a = model.params().entries();
    for (std::size_t k = 0; k < a.size(); ++k) {
      const auto got = back.tensors.get(a[k].name).values();
      const auto want = a[k].tensor.values();
      for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == static_cast<double>(static_cast<float>(want[i])));
    }
  }
  SUBCASE("truncated file is rejected without a partial load") {
    const std::string bytes = encode_checkpoint(ck);
    for (std::size_t cut : {std::size_t{3}, bytes.size() / 3, bytes.size() - 1}) {
      CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, cut)), IoError);
    }
    const std::string before = encode_checkpoint(make_checkpoint(model));
    {
      std::ofstream f(dir / "short.ckpt", std::ios::binary);
      f << bytes.substr(0, bytes.size() - 8);
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), IoError);
    CHECK(encode_checkpoint(make_checkpoint(model)) == before);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
  }
  SUBCASE("version mismatch") {
    std::string bytes = encode_checkpoint(ck);
    const auto at = bytes.find("\"format_version\":1");
    REQUIRE(at != std::string::npos);
    bytes.replace(at, 18, "\"format_version\":9");
    CHECK_THROWS_AS(decode_checkpoint(bytes), IoError);
  }
  SUBCASE("different width names the tensor") {
    ModelDims wider = kDims;
    wider.hidden_dim = 6;
    Model other(ModelConfig::for_vocab(c.vocab, wider));
    const ParameterSet before = other.params().clone();
    try {
      restore_params(ck, other.params());
      FAIL("expected a dimension error");
    } catch (const DimensionError& e) {
      CHECK(std::string(e.what()).find("visual.gcn.layer0") != std::string::npos);
    }
    CHECK(other.params().bitwise_equal(before));
  }
}

TEST_CASE("loss falls over fifty epochs on the default synthetic corpus") {
  const SyntheticCorpus c = gen_synthetic(64, 7, ModelDims::desk().image_dim);
  Model model(ModelConfig::for_vocab(c.vocab));
  TrainConfig cfg;
  cfg.epochs = 50;
  TrainState state;
  train(model, c.train, nullptr, cfg, state);
  CHECK(state.log.back().mean_loss < state.log.front().mean_loss);
}
