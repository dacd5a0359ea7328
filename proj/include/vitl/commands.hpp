#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "vitl/checkpoint.hpp"
#include "vitl/data.hpp"
#include "vitl/image_io.hpp"
#include "vitl/train.hpp"

namespace vitl {

// The two DX codes of the default binary task.
inline const char* kClassNames[2] = {"Anaplastic Large Cell Lymphoma",
                                     "Classical Hodgkin Lymphoma"};
inline const char* kDxLegend =
    "- DX code: Anaplastic Large cell Lymphoma->0; Classical Hodgkin lymphoma->1";

struct DataOptions {
  std::string data_dir;             // directory layout root/<class>/*.{png,jpg}
  size_t synthetic_per_class = 0;   // > 0 selects the synthetic generator
  double ratios[3] = {0.90, 0.0, 0.10};
  bool ratios_given = false;
};

struct TrainCmdOptions {
  std::string arch = "vit";  // "vit" | "cnn"
  DataOptions data;
  ViTConfig vit;
  CNNConfig cnn;
  TrainConfig train;
  std::string out_path = "model.ckpt";
  std::string command_line;  // recorded in the run manifest
  std::string precision = "f32";
};

struct EvalCmdOptions {
  std::string checkpoint;
  DataOptions data;
  uint64_t seed = 0;
};

struct PredictCmdOptions {
  std::string checkpoint;
  std::vector<std::string> images;
  bool paper_format = false;
};

namespace cli_detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline std::string ratios_str(const double r[3]) {
  return format_double(r[0]) + "," + format_double(r[1]) + "," + format_double(r[2]);
}

inline std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc;
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

// Dataset assembly shared by train and eval.
template <class S>
DatasetSplit<S> prepare_split(const DataOptions& data, size_t img_size, size_t channels,
                              uint64_t seed, std::vector<std::string>* class_names) {
  std::vector<LabeledPatch<S>> patches;
  if (data.synthetic_per_class > 0) {
    if (channels != 3)
      throw std::invalid_argument("synthetic data is generated with 3 channels; got config with " +
                                  std::to_string(channels));
    patches = generate_synthetic_dataset<S>(data.synthetic_per_class, img_size, seed);
    if (class_names) *class_names = {kClassNames[0], kClassNames[1]};
  } else if (!data.data_dir.empty()) {
    auto ds = load_dataset<S>(data.data_dir, img_size, channels);
    patches = std::move(ds.patches);
    if (class_names) *class_names = std::move(ds.class_names);
  } else {
    throw std::invalid_argument("no dataset given: pass --data DIR or --synthetic N");
  }
  return split_dataset(patches, data.ratios[0], data.ratios[1], data.ratios[2], seed);
}

inline void print_banner_header(std::ostream& out, const std::string& arch) {
  out << "+++++++\n";
  if (arch == "vit") {
    out << "VISION TRANSFORMER MODEL\n"
        << "Image-patch classifier to assist diagnosing Anaplastic Large Cell Lymphoma versus\n"
        << "Classical Hodgkin Lymphoma\n"
        << "\n"
        << "This model is designed with Multi-head Attention, sine/cosine embedding function,\n"
        << "and residual connections\n";
  } else {
    out << "CONVOLUTIONAL NEURAL NETWORK MODEL\n"
        << "Image-patch classifier to assist diagnosing Anaplastic Large Cell Lymphoma versus\n"
        << "Classical Hodgkin Lymphoma\n"
        << "\n"
        << "This model is designed with convolution, max pooling, and fully connected layers\n";
  }
  out << "*****\n";
}

template <class S>
void print_parameters(std::ostream& out, const TrainCmdOptions& opt, const DatasetSplit<S>& split) {
  out << "PARAMETERS OF MODEL:\n";
  out << "Number of images in Training set: " << split.train.size() << "\n";
  if (!split.validation.empty())
    out << "Number of images in Validation set: " << split.validation.size() << "\n";
  out << "Number of images in Testing set: " << split.test.size() << "\n";
  if (opt.arch == "vit") {
    const auto& v = opt.vit;
    out << "Size of images: " << v.img_size << "\n";
    out << "Size of image patches: " << v.patch_size << "\n";
    out << "Dimensionality of the model: " << v.d_model << "\n";
    out << "Number of attention heads: " << v.num_heads << "\n";
    out << "Number of transformer layers: " << v.num_layers << "\n";
    out << "learning rate: " << format_double(opt.train.lr) << "\n";
    out << "Feedforward dimension: " << v.d_ff << "\n";
    out << "Number of epochs: " << opt.train.num_epochs << "\n";
    out << "Number of prediction classes: " << v.num_classes << "\n";
    out << "Number of cases in each reading batch for datasets: " << opt.train.batch_size << "\n";
  } else {
    const auto& c = opt.cnn;
    out << "Size of images: " << c.img_size << "\n";
    out << "Convolution stages (filters,kernel,stride):";
    for (const auto& s : c.stages) out << " (" << s.filters << "," << s.kernel << "," << s.stride << ")";
    out << "\n";
    out << "Max pooling side: " << c.pool_side << "\n";
    out << "Fully connected widths:";
    for (size_t w : c.fc_widths) out << " " << w;
    out << "\n";
    out << "learning rate: " << format_double(opt.train.lr) << "\n";
    out << "Number of epochs: " << opt.train.num_epochs << "\n";
    out << "Number of prediction classes: " << c.num_classes << "\n";
    out << "Number of cases in each reading batch for datasets: " << opt.train.batch_size << "\n";
  }
  out << "+++++++\n";
}

template <class S>
void write_run_manifest(const TrainCmdOptions& opt, const DatasetSplit<S>& split) {
  std::ofstream out(opt.out_path + ".manifest");
  if (!out) throw std::runtime_error("cannot write manifest '" + opt.out_path + ".manifest'");
  out << "command: " << opt.command_line << "\n";
  out << "timestamp: " << timestamp_utc() << "\n";
  out << "checkpoint: " << opt.out_path << "\n";
  out << "arch: " << opt.arch << "\n";
  out << "precision: " << opt.precision << "\n";
  out << "seed: " << opt.train.seed << "\n";
  out << "data: "
      << (opt.data.synthetic_per_class > 0
              ? "synthetic per_class=" + std::to_string(opt.data.synthetic_per_class)
              : "dir=" + opt.data.data_dir)
      << "\n";
  out << "ratios: " << ratios_str(opt.data.ratios) << "\n";
  out << "train_size: " << split.train.size() << "\n";
  out << "val_size: " << split.validation.size() << "\n";
  out << "test_size: " << split.test.size() << "\n";
  out << "lr: " << format_double(opt.train.lr) << "\n";
  out << "num_epochs: " << opt.train.num_epochs << "\n";
  out << "batch_size: " << opt.train.batch_size << "\n";
  if (opt.arch == "vit") {
    const auto& v = opt.vit;
    out << "img_size: " << v.img_size << "\n";
    out << "patch_size: " << v.patch_size << "\n";
    out << "channels: " << v.channels << "\n";
    out << "d_model: " << v.d_model << "\n";
    out << "num_heads: " << v.num_heads << "\n";
    out << "num_layers: " << v.num_layers << "\n";
    out << "d_ff: " << v.d_ff << "\n";
    out << "dropout: " << format_double(v.dropout_rate) << "\n";
    out << "num_classes: " << v.num_classes << "\n";
  } else {
    const auto& c = opt.cnn;
    out << "img_size: " << c.img_size << "\n";
    out << "channels: " << c.channels << "\n";
    out << "stages:";
    for (const auto& s : c.stages) out << " " << s.filters << "," << s.kernel << "," << s.stride;
    out << "\n";
    out << "pool_side: " << c.pool_side << "\n";
    out << "fc_widths:";
    for (size_t w : c.fc_widths) out << " " << w;
    out << "\n";
    out << "num_classes: " << c.num_classes << "\n";
  }
}

// Shared eval report: accuracy line, DX legend, then one block per image.
template <class S>
void print_eval_report(std::ostream& out, const EvalResult<S>& result, size_t test_size,
                       const std::vector<std::string>& class_names) {
  char acc[64];
  std::snprintf(acc, sizeof(acc), "%.1f", result.accuracy_percent);
  out << "- Results: accuracy of the network on " << test_size << " test images: " << acc
      << " %\n";
  const bool default_names = class_names.size() == 2 && class_names[0] == kClassNames[0] &&
                             class_names[1] == kClassNames[1];
  if (default_names || class_names.empty()) {
    out << kDxLegend << "\n";
  } else {
    out << "- DX code:";
    for (size_t i = 0; i < class_names.size(); ++i)
      out << (i ? "; " : " ") << class_names[i] << "->" << i;
    out << "\n";
  }
  out << "+++++\n";
  for (size_t i = 0; i < result.records.size(); ++i) {
    out << "[Image " << (i + 1) << "]\n";
    out << "DX: " << result.records[i].label << " ; Predicted DX: " << result.records[i].predicted
        << "\n";
    out << "+++++\n";
  }
}

}  // namespace cli_detail

// Trains an architecture on the requested dataset, streaming the parameter
// banner and per-epoch loss lines, then writes checkpoint + split manifest +
// run manifest.
template <class S>
int cmd_train(const TrainCmdOptions& opt, std::ostream& out) {
  opt.train.validate();
  const size_t img_size = opt.arch == "vit" ? opt.vit.img_size : opt.cnn.img_size;
  const size_t channels = opt.arch == "vit" ? opt.vit.channels : opt.cnn.channels;
  if (opt.arch == "vit")
    opt.vit.validate();
  else if (opt.arch == "cnn")
    opt.cnn.validate();
  else
    throw std::invalid_argument("unknown architecture '" + opt.arch + "' (expected vit or cnn)");

  auto split = cli_detail::prepare_split<S>(opt.data, img_size, channels, opt.train.seed, nullptr);

  cli_detail::print_banner_header(out, opt.arch);
  cli_detail::print_parameters(out, opt, split);
  out << (opt.arch == "vit" ? "TRAINING THE VISION TRANSFORMER MODEL:"
                            : "TRAINING THE CONVOLUTIONAL NEURAL NETWORK MODEL:")
      << "\n";
  out << "Loss in each epoch, with number of test images in each Batch:\n";

  SeededRng init_rng(derive_seed(opt.train.seed, size_t(RngStream::kInit)));
  SeededRng train_rng(derive_seed(opt.train.seed, size_t(RngStream::kTrain)));
  if (opt.arch == "vit") {
    auto model = ViTModel<S>::init(opt.vit, init_rng);
    train_model(model.parameters(), make_vit_forward(&model, &opt.vit), split, opt.train,
                train_rng, &out);
    save_vit_checkpoint(opt.out_path, opt.vit, model);
  } else {
    auto model = CNNModel<S>::init(opt.cnn, init_rng);
    train_model(model.parameters(), make_cnn_forward(&model, &opt.cnn), split, opt.train,
                train_rng, &out);
    save_cnn_checkpoint(opt.out_path, opt.cnn, model);
  }
  out << "+++++\n";
  out << "- Training was completed\n";
  write_split_manifest(opt.out_path + ".split.tsv", split);
  cli_detail::write_run_manifest(opt, split);
  return 0;
}

// Evaluates a checkpoint on a test set and prints the per-image report.
// With --ratios (or synthetic data) the dataset is re-split with the given
// seed and the test slice is used; a plain --data directory is evaluated
// in full.
template <class S>
int cmd_eval(const EvalCmdOptions& opt, std::ostream& out) {
  const std::string magic = peek_checkpoint_magic(opt.checkpoint);
  std::vector<std::string> class_names;
  std::vector<LabeledPatch<S>> test;

  auto assemble = [&](size_t img_size, size_t channels) {
    DataOptions data = opt.data;
    if (data.synthetic_per_class == 0 && data.data_dir.empty())
      throw std::invalid_argument("no dataset given: pass --data DIR or --synthetic N");
    if (data.synthetic_per_class == 0 && !data.ratios_given) {
      // Whole directory as the test set.
      auto ds = load_dataset<S>(data.data_dir, img_size, channels);
      class_names = std::move(ds.class_names);
      test = std::move(ds.patches);
    } else {
      auto split = cli_detail::prepare_split<S>(data, img_size, channels, opt.seed, &class_names);
      test = std::move(split.test);
    }
  };

  EvalResult<S> result;
  if (magic == "VITL") {
    auto [cfg, model] = load_vit_checkpoint<S>(opt.checkpoint);
    assemble(cfg.img_size, cfg.channels);
    if (test.empty()) throw std::invalid_argument("evaluate: empty test split");
    result = evaluate_model<S>(make_vit_forward(&model, &cfg), test);
  } else if (magic == "CNNL") {
    auto [cfg, model] = load_cnn_checkpoint<S>(opt.checkpoint);
    assemble(cfg.img_size, cfg.channels);
    if (test.empty()) throw std::invalid_argument("evaluate: empty test split");
    result = evaluate_model<S>(make_cnn_forward(&model, &cfg), test);
  } else {
    throw std::runtime_error("checkpoint '" + opt.checkpoint + "' has unknown magic");
  }
  cli_detail::print_eval_report(out, result, test.size(), class_names);
  return 0;
}

// Production protocol: per unknown image, the predicted DX code, class name,
// and softmax confidence. Decode or dimension errors are reported per file
// and the remaining files are still processed.
template <class S>
int cmd_predict(const PredictCmdOptions& opt, std::ostream& out, std::ostream& err) {
  const std::string magic = peek_checkpoint_magic(opt.checkpoint);
  ViTConfig vit_cfg;
  CNNConfig cnn_cfg;
  ViTModel<S> vit_model;
  CNNModel<S> cnn_model;
  size_t img_size, channels, num_classes;
  if (magic == "VITL") {
    std::tie(vit_cfg, vit_model) = load_vit_checkpoint<S>(opt.checkpoint);
    img_size = vit_cfg.img_size;
    channels = vit_cfg.channels;
    num_classes = vit_cfg.num_classes;
  } else if (magic == "CNNL") {
    std::tie(cnn_cfg, cnn_model) = load_cnn_checkpoint<S>(opt.checkpoint);
    img_size = cnn_cfg.img_size;
    channels = cnn_cfg.channels;
    num_classes = cnn_cfg.num_classes;
  } else {
    throw std::runtime_error("checkpoint '" + opt.checkpoint + "' has unknown magic");
  }
  if (opt.images.empty()) throw std::invalid_argument("predict: no image files given");

  auto class_name = [&](int k) -> std::string {
    if (num_classes == 2) return kClassNames[k];
    return "class " + std::to_string(k);
  };

  int failures = 0;
  for (const auto& path : opt.images) {
    try {
      ImageU8 raw = load_image(path);
      if (raw.width != img_size || raw.height != img_size)
        throw std::runtime_error("image '" + path + "' is " + std::to_string(raw.width) + "x" +
                                 std::to_string(raw.height) + ", expected " +
                                 std::to_string(img_size) + "x" + std::to_string(img_size));
      const auto pixels = detail::planar_pixels<S>(raw, channels);
      Tape<S> tape(false);
      SeededRng unused(0);
      ImageView<S> view{pixels.data(), channels, img_size, img_size};
      Tensor<S> logits = magic == "VITL"
                             ? vit_forward(tape, view, vit_model, vit_cfg, unused, false)
                             : cnn_forward(tape, view, cnn_model, cnn_cfg);
      const int dx = predict_class(logits);
      auto probs = softmax_lastdim(tape, logits);
      if (opt.paper_format) {
        out << "+++++\n";
        out << "[Image " << path << "]\n";
        out << "Predicted DX: " << dx << " ; " << class_name(dx) << "\n";
      } else {
        char conf[32];
        std::snprintf(conf, sizeof(conf), "%.3f", double(probs.at(size_t(dx))));
        out << path << ": predicted DX " << dx << " (" << class_name(dx) << "), confidence "
            << conf << "\n";
      }
    } catch (const std::exception& e) {
      ++failures;
      err << "error: " << e.what() << "\n";
    }
  }
  if (opt.paper_format) out << "+++++\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace vitl
