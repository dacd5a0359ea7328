// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 2-4 share a single synthetic training run; criterion 5
// exercises the installed CLI binary end to end (path passed as argv[1]).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "vitl/commands.hpp"
#include "vitl/gradcheck.hpp"
#include "vitl/reference.hpp"

using namespace vitl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "<missing:" + p.string() + ">";
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct RunResult {
  int exit_code;
  std::string output;
};

RunResult run_command(const std::string& cmd) {
  RunResult res{-1, {}};
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return res;
  char buf[4096];
  size_t got;
  while ((got = fread(buf, 1, sizeof(buf), pipe)) > 0) res.output.append(buf, got);
  const int status = pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

double parse_accuracy(const std::string& report_text) {
  const std::string needle = "test images: ";
  const size_t pos = report_text.find(needle);
  if (pos == std::string::npos) return -1.0;
  return std::atof(report_text.c_str() + pos + needle.size());
}

std::vector<double> parse_epoch_losses(const std::string& log) {
  std::vector<double> losses;
  std::istringstream in(log);
  std::string line;
  while (std::getline(in, line)) {
    double loss;
    size_t epoch, batch;
    if (std::sscanf(line.c_str(), "[Epoch %zu, Batch of: %zu] loss: %lf", &epoch, &batch, &loss) == 3)
      losses.push_back(loss);
  }
  return losses;
}

// ---- criterion 1: gradient correctness under the finite-difference oracle

void criterion_1() {
  const auto t0 = Clock::now();

  ViTConfig vcfg;
  vcfg.img_size = 20;
  vcfg.patch_size = 10;
  vcfg.channels = 3;
  vcfg.d_model = 8;
  vcfg.num_heads = 2;
  vcfg.num_layers = 1;
  vcfg.d_ff = 16;
  vcfg.dropout_rate = 0.0;
  SeededRng vrng(11);
  auto vit = ViTModel<double>::init(vcfg, vrng);
  std::vector<double> vpx(vcfg.channels * vcfg.img_size * vcfg.img_size);
  for (auto& v : vpx) v = vrng.uniform();
  ImageView<double> vimg{vpx.data(), vcfg.channels, vcfg.img_size, vcfg.img_size};
  const double vit_err = finite_diff_check<double>(
      [&](Tape<double>& t) {
        SeededRng unused(0);
        return cross_entropy_loss(t, vit_forward(t, vimg, vit, vcfg, unused, false), {1});
      },
      vit.parameters(), 1e-6);

  CNNConfig ccfg;
  ccfg.img_size = 8;
  ccfg.channels = 1;
  ccfg.stages = {{2, 3, 1}};
  ccfg.fc_widths = {6};
  SeededRng crng(13);
  auto cnn = CNNModel<double>::init(ccfg, crng);
  std::vector<double> cpx(ccfg.channels * ccfg.img_size * ccfg.img_size);
  for (auto& v : cpx) v = crng.uniform();
  ImageView<double> cimg{cpx.data(), ccfg.channels, ccfg.img_size, ccfg.img_size};
  const double cnn_err = finite_diff_check<double>(
      [&](Tape<double>& t) { return cross_entropy_loss(t, cnn_forward(t, cimg, cnn, ccfg), {0}); },
      cnn.parameters(), 1e-6);

  const double elapsed = seconds_since(t0);
  char detail[160];
  std::snprintf(detail, sizeof(detail), "vit max rel err %.2e, cnn max rel err %.2e, %.1fs",
                vit_err, cnn_err, elapsed);
  report(1, vit_err < 1e-4 && cnn_err < 1e-4 && elapsed < 120.0,
         "gradient correctness of the tiny ViT and CNN", detail);
}

// ---- criteria 2-4: the synthetic end-to-end reproduction

struct SyntheticRun {
  double accuracy = -1;
  std::vector<double> losses;
  std::string checkpoint;
  double train_seconds = 0;
  size_t train_size = 0, test_size = 0;
};

SyntheticRun run_synthetic(const std::string& arch, const fs::path& dir) {
  SyntheticRun run;
  TrainCmdOptions opt;
  opt.arch = arch;
  opt.data.synthetic_per_class = 600;
  opt.train.seed = 42;
  opt.train.num_epochs = 20;
  // Reduced preset permitted for runtime; geometry stays at the defaults.
  opt.vit.d_model = 64;
  opt.vit.num_layers = 3;
  opt.vit.d_ff = 256;
  opt.out_path = (dir / (arch + ".ckpt")).string();
  opt.command_line = "acceptance " + arch;
  run.checkpoint = opt.out_path;

  const auto t0 = Clock::now();
  std::ostringstream train_log;
  cmd_train<float>(opt, train_log);
  run.train_seconds = seconds_since(t0);
  run.losses = parse_epoch_losses(train_log.str());

  const std::string text = train_log.str();
  std::sscanf(text.c_str() + text.find("Training set: "), "Training set: %zu", &run.train_size);
  std::sscanf(text.c_str() + text.find("Testing set: "), "Testing set: %zu", &run.test_size);

  EvalCmdOptions eopt;
  eopt.checkpoint = opt.out_path;
  eopt.data.synthetic_per_class = 600;
  eopt.data.ratios_given = true;
  eopt.seed = 42;
  std::ostringstream eval_out;
  cmd_eval<float>(eopt, eval_out);
  run.accuracy = parse_accuracy(eval_out.str());
  return run;
}

void criteria_2_3_4(const fs::path& dir, SyntheticRun& vit_run) {
  vit_run = run_synthetic("vit", dir);
  {
    char detail[200];
    std::snprintf(detail, sizeof(detail),
                  "split %zu/%zu, accuracy %.1f%%, %zu epochs, %.0fs train time", vit_run.train_size,
                  vit_run.test_size, vit_run.accuracy, vit_run.losses.size(),
                  vit_run.train_seconds);
    report(2, vit_run.train_size == 1080 && vit_run.test_size == 120 && vit_run.accuracy >= 99.0 &&
               vit_run.train_seconds < 1800.0,
           "synthetic ViT run reaches the headline accuracy", detail);
  }

  SyntheticRun cnn_run = run_synthetic("cnn", dir);
  {
    const double gap = std::abs(vit_run.accuracy - cnn_run.accuracy);
    char detail[160];
    std::snprintf(detail, sizeof(detail), "cnn accuracy %.1f%%, |vit-cnn| = %.1f points",
                  cnn_run.accuracy, gap);
    report(3, cnn_run.accuracy >= 99.0 && gap <= 1.0,
           "CNN baseline on the identical split is comparable", detail);
  }

  {
    const bool have20 = vit_run.losses.size() >= 20;
    const double e1 = have20 ? vit_run.losses[0] : -1;
    const double e20 = have20 ? vit_run.losses[19] : -1;
    const double last = have20 ? vit_run.losses.back() : -1;
    char detail[160];
    std::snprintf(detail, sizeof(detail), "epoch1 %.3f, epoch20 %.3f, final %.3f", e1, e20, last);
    report(4, have20 && e20 < e1 && last < 0.05, "training loss declines per the published curve",
           detail);
  }
}

// ---- criterion 5: bit-identical reruns through the CLI binary (f64)

void criterion_5(const std::string& cli, const fs::path& dir) {
  const std::string flags =
      " train --arch vit --synthetic 600 --seed 42 --epochs 2"
      " --d-model 64 --num-layers 3 --d-ff 256 --precision f64 --out ";
  const std::string ck_a = (dir / "det_a.ckpt").string();
  const std::string ck_b = (dir / "det_b.ckpt").string();
  auto run_a = run_command(cli + flags + ck_a);
  auto run_b = run_command(cli + flags + ck_b);

  const std::string eval_flags = " --synthetic 600 --ratios 0.9,0,0.1 --seed 42 --precision f64";
  auto eval_a = run_command(cli + " eval " + ck_a + eval_flags);
  auto eval_b = run_command(cli + " eval " + ck_b + eval_flags);

  const bool logs_equal = run_a.exit_code == 0 && run_b.exit_code == 0 && run_a.output == run_b.output;
  const bool ckpt_equal = file_bytes(ck_a) == file_bytes(ck_b);
  const bool split_equal = file_bytes(ck_a + ".split.tsv") == file_bytes(ck_b + ".split.tsv");
  const bool report_equal =
      eval_a.exit_code == 0 && eval_b.exit_code == 0 && eval_a.output == eval_b.output;
  char detail[200];
  std::snprintf(detail, sizeof(detail), "logs %s, checkpoints %s, split manifests %s, reports %s",
                logs_equal ? "identical" : "DIFFER", ckpt_equal ? "identical" : "DIFFER",
                split_equal ? "identical" : "DIFFER", report_equal ? "identical" : "DIFFER");
  report(5, logs_equal && ckpt_equal && split_equal && report_equal,
         "identical flags and seed reproduce the run byte-for-byte", detail);
}

// ---- criterion 6: oracle equivalence on randomized instances

void criterion_6() {
  SeededRng rng(21);
  double worst_conv = 0, worst_attn = 0, worst_softmax = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const size_t h = 3 + rng.uniform_index(6), w = 3 + rng.uniform_index(6);
    const size_t cin = 1 + rng.uniform_index(3), cout = 1 + rng.uniform_index(3);
    const size_t ks = 1 + rng.uniform_index(3), stride = 1 + rng.uniform_index(2);
    std::vector<double> x(cin * h * w), k(cout * cin * ks * ks), b(cout);
    for (auto* vec : {&x, &k, &b})
      for (auto& v : *vec) v = rng.uniform(-1, 1);
    const size_t oh = (h - ks) / stride + 1, ow = (w - ks) / stride + 1;
    std::vector<double> got(cout * oh * ow), expect(cout * oh * ow);
    kernels::conv2d(x.data(), k.data(), b.data(), got.data(), cin, h, w, cout, ks, stride, oh, ow);
    ref::conv2d_naive(x.data(), k.data(), b.data(), expect.data(), cin, h, w, cout, ks, stride, oh,
                      ow);
    for (size_t i = 0; i < got.size(); ++i)
      worst_conv = std::max(worst_conv, std::abs(got[i] - expect[i]));
  }
  for (int trial = 0; trial < 100; ++trial) {
    const size_t s = 1 + rng.uniform_index(6), dk = 1 + rng.uniform_index(8);
    std::vector<double> q(s * dk), k(s * dk), v(s * dk);
    for (auto* vec : {&q, &k, &v})
      for (auto& val : *vec) val = rng.uniform(-2, 2);
    Tape<double> tape(false);
    auto got = scaled_dot_product_attention(tape, Tensor<double>::from({s, dk}, q),
                                            Tensor<double>::from({s, dk}, k),
                                            Tensor<double>::from({s, dk}, v));
    auto expect = ref::attention_naive(q, k, v, s, dk);
    for (size_t i = 0; i < expect.size(); ++i)
      worst_attn = std::max(worst_attn, std::abs(got.at(i) - expect[i]));
  }
  for (int trial = 0; trial < 100; ++trial) {
    const size_t rows = 1 + rng.uniform_index(6), cols = 1 + rng.uniform_index(9);
    auto x = Tensor<double>::zeros({rows, cols});
    for (size_t i = 0; i < x.size(); ++i) x.at(i) = rng.uniform(-30, 30);
    Tape<double> tape(false);
    auto y = softmax_lastdim(tape, x);
    for (size_t r = 0; r < rows; ++r) {
      double sum = 0;
      for (size_t j = 0; j < cols; ++j) sum += y.at(r * cols + j);
      worst_softmax = std::max(worst_softmax, std::abs(sum - 1.0));
    }
  }
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "conv max|diff| %.2e, attention max|diff| %.2e, softmax row-sum err %.2e",
                worst_conv, worst_attn, worst_softmax);
  report(6, worst_conv < 1e-6 && worst_attn < 1e-6 && worst_softmax < 1e-6,
         "kernels match the naive references on 100 random instances each", detail);
}

// ---- criterion 7: structural invariants

void criterion_7() {
  ViTConfig cfg;
  bool ok = cfg.seq_len() == 25 && cfg.d_model == 128 && cfg.num_heads == 4 &&
            cfg.d_model % cfg.num_heads == 0;
  std::string detail = "seq_len " + std::to_string(cfg.seq_len()) + ", d_model " +
                       std::to_string(cfg.d_model) + " / " + std::to_string(cfg.num_heads) +
                       " heads";

  // Accuracy formula on a hand-crafted 3-of-4 prediction set.
  std::vector<LabeledPatch<double>> test(4);
  for (size_t i = 0; i < 4; ++i) {
    test[i].pixels = {0.0};
    test[i].channels = test[i].height = test[i].width = 1;
    test[i].label = i < 3 ? 1 : 0;
  }
  auto stub = [](Tape<double>&, const LabeledPatch<double>&, SeededRng&, bool) {
    return Tensor<double>::from({1, 2}, {0.0, 1.0});
  };
  const double acc = evaluate_model<double>(stub, test).accuracy_percent;
  ok = ok && acc == 75.0;
  char accbuf[48];
  std::snprintf(accbuf, sizeof(accbuf), ", 3-of-4 accuracy %.1f%%", acc);
  report(7, ok, "structural invariants and the accuracy formula", detail + accbuf);
}

// ---- criterion 8: checkpoint round-trip fidelity

void criterion_8(const fs::path& dir, const SyntheticRun& vit_run) {
  auto [cfg, model] = load_vit_checkpoint<float>(vit_run.checkpoint);
  const std::string copy = (dir / "roundtrip.ckpt").string();
  save_vit_checkpoint(copy, cfg, model);
  const bool bytes_equal = file_bytes(vit_run.checkpoint) == file_bytes(copy);

  auto patches = generate_synthetic_dataset<float>(600, cfg.img_size, 42);
  auto split = split_dataset(patches, 0.9, 0.0, 0.1, 42);
  auto in_memory = evaluate_model<float>(make_vit_forward(&model, &cfg), split.test);
  auto [cfg2, model2] = load_vit_checkpoint<float>(copy);
  auto reloaded = evaluate_model<float>(make_vit_forward(&model2, &cfg2), split.test);
  bool eval_equal = in_memory.accuracy_percent == reloaded.accuracy_percent;
  for (size_t i = 0; i < in_memory.records.size() && eval_equal; ++i)
    eval_equal = in_memory.records[i].predicted == reloaded.records[i].predicted;

  // Every parameter survives bit-exactly.
  auto p1 = model.parameters(), p2 = model2.parameters();
  bool params_equal = p1.size() == p2.size();
  for (size_t i = 0; i < p1.size() && params_equal; ++i)
    params_equal = p1[i].p->value == p2[i].p->value;

  char detail[160];
  std::snprintf(detail, sizeof(detail), "bytes %s, parameters %s, reloaded eval %s",
                bytes_equal ? "identical" : "DIFFER", params_equal ? "identical" : "DIFFER",
                eval_equal ? "identical" : "DIFFER");
  report(8, bytes_equal && params_equal && eval_equal,
         "checkpoint save/load round-trip is exact", detail);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path-to-vitl-cli>\n");
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path dir = fs::temp_directory_path() / "vitl_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  criterion_1();
  SyntheticRun vit_run;
  criteria_2_3_4(dir, vit_run);
  criterion_5(cli, dir);
  criterion_6();
  criterion_7();
  criterion_8(dir, vit_run);

  fs::remove_all(dir);
  if (g_failures) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}
