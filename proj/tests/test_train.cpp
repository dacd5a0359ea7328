#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "vitl/train.hpp"

using namespace vitl;

namespace {

ViTConfig small_vit() {
  ViTConfig cfg;
  cfg.img_size = 20;
  cfg.patch_size = 10;
  cfg.channels = 3;
  cfg.d_model = 16;
  cfg.num_heads = 2;
  cfg.num_layers = 1;
  cfg.d_ff = 32;
  cfg.dropout_rate = 0.1;
  return cfg;
}

}  // namespace

TEST_CASE("adam first step with unit gradients decreases by ~lr") {
  TrainConfig cfg;
  auto p = Tensor<double>::from({4}, {1.0, -2.0, 0.5, 3.0});
  p.ensure_grad();
  for (size_t i = 0; i < 4; ++i) p.grad()[i] = 1.0;
  std::vector<Tensor<double>> params = {p};
  auto state = AdamState<double>::init(params);
  const std::vector<double> before = {1.0, -2.0, 0.5, 3.0};
  adam_step(params, state, cfg);
  const double expect = 0.001 / (1.0 + 1e-8);
  for (size_t i = 0; i < 4; ++i)
    CHECK(before[i] - p.at(i) == doctest::Approx(expect).epsilon(1e-8));
  CHECK(state.t == 1);
}

TEST_CASE("adam with zero gradients and zero state leaves parameters unchanged") {
  TrainConfig cfg;
  auto p = Tensor<double>::from({3}, {1.0, 2.0, 3.0});
  p.zero_grad();
  std::vector<Tensor<double>> params = {p};
  auto state = AdamState<double>::init(params);
  adam_step(params, state, cfg);
  CHECK(p.at(0) == 1.0);
  CHECK(p.at(1) == 2.0);
  CHECK(p.at(2) == 3.0);
}

TEST_CASE("adam with lr scaled to zero is the identity on parameters") {
  TrainConfig cfg;
  cfg.lr = 1e-300;  // validate() requires lr > 0; this is an effective zero
  auto p = Tensor<double>::from({2}, {1.0, -1.0});
  p.ensure_grad();
  p.grad()[0] = 5.0;
  p.grad()[1] = -7.0;
  std::vector<Tensor<double>> params = {p};
  auto state = AdamState<double>::init(params);
  adam_step(params, state, cfg);
  CHECK(p.at(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.at(1) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("adam minimizes a scalar quadratic") {
  TrainConfig cfg;
  cfg.lr = 0.1;
  auto x = Tensor<double>::scalar(1.0);
  std::vector<Tensor<double>> params = {x};
  auto state = AdamState<double>::init(params);
  for (int step = 0; step < 200; ++step) {
    x.zero_grad();
    x.grad()[0] = 2.0 * x.at(0);  // d(x^2)/dx
    adam_step(params, state, cfg);
  }
  CHECK(std::abs(x.at(0)) < 0.01);
}

TEST_CASE("epoch log line is byte-exact") {
  CHECK(format_epoch_log({1, 30, 0.2341}) == "[Epoch 1, Batch of: 30] loss: 0.234");
  CHECK(format_epoch_log({20, 30, 0.158}) == "[Epoch 20, Batch of: 30] loss: 0.158");
  CHECK(format_epoch_log({500, 32, 0.0011}) == "[Epoch 500, Batch of: 32] loss: 0.001");
}

TEST_CASE("training loss falls from epoch 1 to epoch 20 on the synthetic task") {
  ViTConfig cfg = small_vit();
  TrainConfig tc;
  tc.num_epochs = 20;
  tc.batch_size = 16;
  tc.seed = 42;
  auto patches = generate_synthetic_dataset<double>(30, cfg.img_size, tc.seed);
  auto split = split_dataset(patches, 0.9, 0.0, 0.1, tc.seed);
  SeededRng init_rng(derive_seed(tc.seed, size_t(RngStream::kInit)));
  auto model = ViTModel<double>::init(cfg, init_rng);
  SeededRng train_rng(derive_seed(tc.seed, size_t(RngStream::kTrain)));
  auto logs = train_model(model.parameters(), make_vit_forward(&model, &cfg), split, tc,
                          train_rng, nullptr);
  REQUIRE(logs.size() == 20);
  CHECK(logs[19].mean_loss < logs[0].mean_loss);
  for (const auto& log : logs) CHECK(log.mean_loss >= 0.0);
}

TEST_CASE("zero epochs returns the model unchanged with an empty log") {
  ViTConfig cfg = small_vit();
  TrainConfig tc;
  tc.num_epochs = 0;
  auto patches = generate_synthetic_dataset<double>(4, cfg.img_size, 3);
  auto split = split_dataset(patches, 1.0, 0.0, 0.0, 3);
  SeededRng init_rng(1);
  auto model = ViTModel<double>::init(cfg, init_rng);
  auto before = model.patch_w.p->value;
  SeededRng train_rng(2);
  auto logs = train_model(model.parameters(), make_vit_forward(&model, &cfg), split, tc,
                          train_rng, nullptr);
  CHECK(logs.empty());
  CHECK(model.patch_w.p->value == before);
}

TEST_CASE("training twice with the same seed is bit-identical") {
  ViTConfig cfg = small_vit();
  TrainConfig tc;
  tc.num_epochs = 3;
  tc.batch_size = 8;
  tc.seed = 7;
  auto run = [&](std::string* text) {
    auto patches = generate_synthetic_dataset<double>(10, cfg.img_size, tc.seed);
    auto split = split_dataset(patches, 0.8, 0.1, 0.1, tc.seed);
    SeededRng init_rng(derive_seed(tc.seed, size_t(RngStream::kInit)));
    auto model = ViTModel<double>::init(cfg, init_rng);
    SeededRng train_rng(derive_seed(tc.seed, size_t(RngStream::kTrain)));
    std::ostringstream log;
    train_model(model.parameters(), make_vit_forward(&model, &cfg), split, tc, train_rng, &log);
    *text = log.str();
    return model;
  };
  std::string log1, log2;
  auto m1 = run(&log1);
  auto m2 = run(&log2);
  CHECK(log1 == log2);
  CHECK(!log1.empty());
  auto p1 = m1.parameters(), p2 = m2.parameters();
  REQUIRE(p1.size() == p2.size());
  for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].p->value == p2[i].p->value);
}

TEST_CASE("non-finite loss aborts with the epoch and batch named") {
  ViTConfig cfg = small_vit();
  cfg.dropout_rate = 0.0;
  TrainConfig tc;
  tc.num_epochs = 5;
  tc.batch_size = 4;
  tc.lr = 1e200;  // overflows the layer-norm variance within a step or two
  auto patches = generate_synthetic_dataset<double>(4, cfg.img_size, 5);
  auto split = split_dataset(patches, 1.0, 0.0, 0.0, 5);
  SeededRng init_rng(1);
  auto model = ViTModel<double>::init(cfg, init_rng);
  SeededRng train_rng(2);
  try {
    train_model(model.parameters(), make_vit_forward(&model, &cfg), split, tc, train_rng, nullptr);
    FAIL("expected non-finite loss abort");
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("non-finite loss") != std::string::npos);
    CHECK(msg.find("epoch") != std::string::npos);
    CHECK(msg.find("batch") != std::string::npos);
  }
}

TEST_CASE("empty training split is rejected") {
  ViTConfig cfg = small_vit();
  TrainConfig tc;
  DatasetSplit<double> split;
  SeededRng rng(1);
  auto model = ViTModel<double>::init(cfg, rng);
  CHECK_THROWS_AS(
      train_model(model.parameters(), make_vit_forward(&model, &cfg), split, tc, rng, nullptr),
      std::invalid_argument);
}

TEST_CASE("evaluate applies the accuracy formula exactly") {
  // Four patches; a stub forward predicts class 1 for everything.
  std::vector<LabeledPatch<double>> test(4);
  for (size_t i = 0; i < 4; ++i) {
    test[i].pixels = {0.0};
    test[i].channels = test[i].height = test[i].width = 1;
    test[i].label = (i < 3) ? 1 : 0;  // 3 of 4 will be correct
  }
  auto stub = [](Tape<double>& tape, const LabeledPatch<double>&, SeededRng&, bool) {
    (void)tape;
    return Tensor<double>::from({1, 2}, {0.0, 1.0});
  };
  auto result = evaluate_model<double>(stub, test);
  CHECK(result.accuracy_percent == 75.0);
  REQUIRE(result.records.size() == 4);
  size_t correct = 0, incorrect = 0;
  for (const auto& r : result.records) (r.label == r.predicted ? correct : incorrect)++;
  CHECK(correct + incorrect == 4);
  CHECK(correct == 3);

  // All wrong -> 0%.
  for (auto& p : test) p.label = 0;
  CHECK(evaluate_model<double>(stub, test).accuracy_percent == 0.0);

  // All right -> 100%.
  for (auto& p : test) p.label = 1;
  CHECK(evaluate_model<double>(stub, test).accuracy_percent == 100.0);

  test.clear();
  CHECK_THROWS_AS(evaluate_model<double>(stub, test), std::invalid_argument);
}

TEST_CASE("evaluation is pure and repeatable") {
  ViTConfig cfg = small_vit();
  SeededRng rng(9);
  auto model = ViTModel<double>::init(cfg, rng);
  auto patches = generate_synthetic_dataset<double>(6, cfg.img_size, 9);
  auto params_before = model.patch_w.p->value;
  auto fwd = make_vit_forward(&model, &cfg);
  auto r1 = evaluate_model<double>(fwd, patches);
  auto r2 = evaluate_model<double>(fwd, patches);
  CHECK(r1.accuracy_percent == r2.accuracy_percent);
  REQUIRE(r1.records.size() == r2.records.size());
  for (size_t i = 0; i < r1.records.size(); ++i) {
    CHECK(r1.records[i].label == r2.records[i].label);
    CHECK(r1.records[i].predicted == r2.records[i].predicted);
  }
  CHECK(model.patch_w.p->value == params_before);
  CHECK(r1.accuracy_percent >= 0.0);
  CHECK(r1.accuracy_percent <= 100.0);
}
