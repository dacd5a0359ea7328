#pragma once

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitl/cnn.hpp"
#include "vitl/data.hpp"
#include "vitl/ops.hpp"
#include "vitl/rng.hpp"
#include "vitl/tensor.hpp"
#include "vitl/vit.hpp"

namespace vitl {

struct TrainConfig {
  double lr = 0.001;
  size_t num_epochs = 200;
  size_t batch_size = 32;
  uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(lr > 0)) throw std::invalid_argument("train config: lr must be > 0");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  }
};

// Per-parameter first/second moment buffers; t counts optimizer steps.
template <class S>
struct AdamState {
  struct Moments {
    std::vector<S> m, v;
  };
  std::vector<Moments> slots;
  size_t t = 0;

  static AdamState init(const std::vector<Tensor<S>>& params) {
    AdamState st;
    st.slots.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      st.slots[i].m.assign(params[i].size(), S(0));
      st.slots[i].v.assign(params[i].size(), S(0));
    }
    return st;
  }
};

// One Adam update over every parameter, reading gradients from the
// tensors' grad buffers:
//   m <- b1 m + (1-b1) g ; v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * mhat / (sqrt(vhat) + eps)
template <class S>
void adam_step(std::vector<Tensor<S>>& params, AdamState<S>& state, const TrainConfig& cfg) {
  if (params.size() != state.slots.size())
    throw std::invalid_argument("adam_step: state has " + std::to_string(state.slots.size()) +
                                " slots for " + std::to_string(params.size()) + " parameters");
  state.t += 1;
  const S b1 = S(cfg.beta1), b2 = S(cfg.beta2);
  const S corr1 = S(1.0 - std::pow(cfg.beta1, double(state.t)));
  const S corr2 = S(1.0 - std::pow(cfg.beta2, double(state.t)));
  const S lr = S(cfg.lr), eps = S(cfg.eps);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    p.ensure_grad();
    S* theta = p.data();
    const S* g = p.grad_data();
    S* m = state.slots[pi].m.data();
    S* v = state.slots[pi].v.data();
    const size_t n = p.size();
#pragma omp parallel for schedule(static) if (n > 8192)
    for (size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (S(1) - b1) * g[i];
      v[i] = b2 * v[i] + (S(1) - b2) * g[i] * g[i];
      const S mhat = m[i] / corr1;
      const S vhat = v[i] / corr2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

struct EpochLog {
  size_t epoch = 0;       // 1-based
  size_t batch_size = 0;  // configured batch size
  double mean_loss = 0;   // sample-weighted mean training loss
};

// Byte-exact per-epoch line.
inline std::string format_epoch_log(const EpochLog& log) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "[Epoch %zu, Batch of: %zu] loss: %.3f", log.epoch,
                log.batch_size, log.mean_loss);
  return buf;
}

template <class S>
struct EvalRecord {
  int label;
  int predicted;
};

template <class S>
struct EvalResult {
  double accuracy_percent = 0;
  std::vector<EvalRecord<S>> records;  // input order
};

// Accuracy = 100 * correct / total, plus the full per-image record.
// Inference runs dropout-free on non-recording tapes and may parallelize
// over images; records land in slots indexed by position so the output is
// order-independent.
template <class S, class ForwardFn>
EvalResult<S> evaluate_model(ForwardFn&& forward, const std::vector<LabeledPatch<S>>& test) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test split");
  EvalResult<S> result;
  result.records.resize(test.size());
  const long n = long(test.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    Tape<S> tape(false);
    SeededRng unused(0);
    auto logits = forward(tape, test[size_t(i)], unused, false);
    result.records[size_t(i)] = {test[size_t(i)].label, predict_class(logits)};
  }
  size_t correct = 0;
  for (const auto& r : result.records)
    if (r.label == r.predicted) ++correct;
  result.accuracy_percent = 100.0 * double(correct) / double(test.size());
  return result;
}

// Epoch loop: seeded shuffle, batches of batch_size (final partial batch
// kept), forward/loss/backward/adam per batch. Emits one loss line per
// epoch, plus a validation accuracy line when a validation split exists.
// Aborts with the epoch/batch named if the loss turns non-finite.
template <class S, class ForwardFn>
std::vector<EpochLog> train_model(std::vector<Tensor<S>> params, ForwardFn&& forward,
                                  const DatasetSplit<S>& split, const TrainConfig& cfg,
                                  SeededRng& rng, std::ostream* log_stream) {
  cfg.validate();
  if (split.train.empty()) throw std::invalid_argument("train: empty training split");
  auto state = AdamState<S>::init(params);
  std::vector<EpochLog> logs;
  std::vector<size_t> order(split.train.size());
  for (size_t e = 1; e <= cfg.num_epochs; ++e) {
    std::iota(order.begin(), order.end(), size_t{0});
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    size_t batch_index = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const size_t end = std::min(start + cfg.batch_size, order.size());
      Tape<S> tape;
      std::vector<Tensor<S>> logits;
      std::vector<int> labels;
      logits.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        const auto& patch = split.train[order[i]];
        logits.push_back(forward(tape, patch, rng, true));
        labels.push_back(patch.label);
      }
      auto batch_logits = logits.size() == 1 ? logits[0] : concat_rows(tape, logits);
      auto loss = cross_entropy_loss(tape, batch_logits, labels);
      const double loss_value = double(loss.at(0));
      if (!std::isfinite(loss_value))
        throw std::runtime_error("training aborted: non-finite loss at epoch " +
                                 std::to_string(e) + ", batch " + std::to_string(batch_index + 1));
      for (auto& p : params) p.zero_grad();
      tape.backward(loss);
      adam_step(params, state, cfg);
      loss_sum += loss_value * double(end - start);
    }
    EpochLog entry{e, cfg.batch_size, loss_sum / double(order.size())};
    logs.push_back(entry);
    if (log_stream) *log_stream << format_epoch_log(entry) << '\n';
    if (!split.validation.empty()) {
      auto val = evaluate_model<S>(forward, split.validation);
      if (log_stream) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "[Epoch %zu] validation accuracy: %.1f %%", e,
                      val.accuracy_percent);
        *log_stream << buf << '\n';
      }
    }
  }
  return logs;
}

// Adapters binding the two architectures to the shared train/eval loop.
template <class S>
auto make_vit_forward(const ViTModel<S>* model, const ViTConfig* cfg) {
  return [model, cfg](Tape<S>& tape, const LabeledPatch<S>& p, SeededRng& rng, bool training) {
    return vit_forward(tape, ImageView<S>{p.pixels.data(), p.channels, p.height, p.width}, *model,
                       *cfg, rng, training);
  };
}

template <class S>
auto make_cnn_forward(const CNNModel<S>* model, const CNNConfig* cfg) {
  return [model, cfg](Tape<S>& tape, const LabeledPatch<S>& p, SeededRng& rng, bool training) {
    (void)rng;
    (void)training;
    return cnn_forward(tape, ImageView<S>{p.pixels.data(), p.channels, p.height, p.width}, *model,
                       *cfg);
  };
}

}  // namespace vitl
