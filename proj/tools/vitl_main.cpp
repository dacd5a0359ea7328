// Command-line front end: train / eval / predict over the two architectures.

#include <CLI11.hpp>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "vitl/commands.hpp"

namespace {

using namespace vitl;

std::vector<double> parse_ratio_list(const std::string& text) {
  if (text == "paper-val") return {0.81, 0.09, 0.10};
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  if (out.size() != 3)
    throw CLI::ValidationError("--ratios", "expected three comma-separated values, got '" + text + "'");
  return out;
}

std::vector<ConvStageSpec> parse_stage_list(const std::string& text) {
  std::vector<ConvStageSpec> out;
  std::stringstream ss(text);
  std::string stage;
  while (std::getline(ss, stage, ';')) {
    std::stringstream fields(stage);
    std::string field;
    std::vector<size_t> vals;
    while (std::getline(fields, field, ',')) vals.push_back(std::stoul(field));
    if (vals.size() != 3)
      throw CLI::ValidationError("--stages", "each stage needs filters,kernel,stride; got '" + stage + "'");
    out.push_back({vals[0], vals[1], vals[2]});
  }
  if (out.empty()) throw CLI::ValidationError("--stages", "no stages in '" + text + "'");
  return out;
}

std::vector<size_t> parse_width_list(const std::string& text) {
  std::vector<size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
  return out;
}

std::string join_argv(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

template <class Fn>
int dispatch_precision(const std::string& precision, Fn&& fn) {
  if (precision == "f32") return fn(float{});
  if (precision == "f64") return fn(double{});
  throw CLI::ValidationError("--precision", "expected f32 or f64, got '" + precision + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vision-transformer and CNN image-patch diagnosis engine"};
  app.require_subcommand(1);

  TrainCmdOptions train_opt;
  EvalCmdOptions eval_opt;
  PredictCmdOptions predict_opt;
  std::string train_ratios, eval_ratios, stages_text, fc_text;
  std::string eval_precision = "f32", predict_precision = "f32";
  size_t eval_synthetic = 0;

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  train->add_option("--arch", train_opt.arch, "Architecture: vit or cnn")
      ->check(CLI::IsMember({"vit", "cnn"}));
  train->add_option("--data", train_opt.data.data_dir, "Dataset root: <root>/<class>/*.{png,jpg}");
  train->add_option("--synthetic", train_opt.data.synthetic_per_class,
                    "Generate N synthetic patches per class instead of reading --data");
  train->add_option("--epochs", train_opt.train.num_epochs, "Training epochs");
  train->add_option("--batch-size", train_opt.train.batch_size, "Batch size");
  train->add_option("--lr", train_opt.train.lr, "Adam learning rate");
  train->add_option("--seed", train_opt.train.seed, "Run seed (data, split, init, training)");
  train->add_option("--out", train_opt.out_path, "Checkpoint output path");
  train->add_option("--ratios", train_ratios, "train,val,test ratios (or 'paper-val')");
  train->add_option("--precision", train_opt.precision, "Numeric mode: f32 or f64");
  // ViT hyperparameters.
  train->add_option("--img-size", train_opt.vit.img_size, "Image side in pixels");
  train->add_option("--patch-size", train_opt.vit.patch_size, "Patch side in pixels");
  train->add_option("--channels", train_opt.vit.channels, "Image channels");
  train->add_option("--d-model", train_opt.vit.d_model, "Embedding width");
  train->add_option("--num-heads", train_opt.vit.num_heads, "Attention heads");
  train->add_option("--num-layers", train_opt.vit.num_layers, "Transformer layers");
  train->add_option("--d-ff", train_opt.vit.d_ff, "Feed-forward width");
  train->add_option("--dropout", train_opt.vit.dropout_rate, "Residual dropout rate");
  train->add_option("--num-classes", train_opt.vit.num_classes, "Prediction classes");
  // CNN hyperparameters.
  train->add_option("--stages", stages_text, "Conv stages as filters,kernel,stride;...");
  train->add_option("--pool-side", train_opt.cnn.pool_side, "Max-pool window side");
  train->add_option("--fc", fc_text, "Hidden fully-connected widths, comma separated");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a test set");
  eval->add_option("checkpoint", eval_opt.checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", eval_opt.data.data_dir, "Dataset root (used in full unless --ratios)");
  eval->add_option("--synthetic", eval_synthetic, "Regenerate N synthetic patches per class");
  eval->add_option("--ratios", eval_ratios, "Re-split ratios; the test slice is evaluated");
  eval->add_option("--seed", eval_opt.seed, "Seed matching the training run");
  eval->add_option("--precision", eval_precision, "Numeric mode: f32 or f64");

  auto* predict = app.add_subcommand("predict", "Predict DX codes for unknown images");
  predict->add_option("checkpoint", predict_opt.checkpoint, "Checkpoint file")->required();
  predict->add_option("images", predict_opt.images, "Image files")->required()->expected(-1);
  predict->add_flag("--paper-format", predict_opt.paper_format,
                    "Block-style report without confidence values");
  predict->add_option("--precision", predict_precision, "Numeric mode: f32 or f64");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      if (!train_ratios.empty()) {
        auto r = parse_ratio_list(train_ratios);
        train_opt.data.ratios[0] = r[0];
        train_opt.data.ratios[1] = r[1];
        train_opt.data.ratios[2] = r[2];
        train_opt.data.ratios_given = true;
      }
      if (!stages_text.empty()) train_opt.cnn.stages = parse_stage_list(stages_text);
      if (!fc_text.empty()) train_opt.cnn.fc_widths = parse_width_list(fc_text);
      // The shared geometry flags drive both architectures.
      train_opt.cnn.img_size = train_opt.vit.img_size;
      train_opt.cnn.channels = train_opt.vit.channels;
      train_opt.cnn.num_classes = train_opt.vit.num_classes;
      train_opt.command_line = join_argv(argc, argv);
      return dispatch_precision(train_opt.precision, [&](auto tag) {
        return cmd_train<decltype(tag)>(train_opt, std::cout);
      });
    }
    if (eval->parsed()) {
      if (!eval_ratios.empty()) {
        auto r = parse_ratio_list(eval_ratios);
        eval_opt.data.ratios[0] = r[0];
        eval_opt.data.ratios[1] = r[1];
        eval_opt.data.ratios[2] = r[2];
        eval_opt.data.ratios_given = true;
      }
      eval_opt.data.synthetic_per_class = eval_synthetic;
      return dispatch_precision(eval_precision, [&](auto tag) {
        return cmd_eval<decltype(tag)>(eval_opt, std::cout);
      });
    }
    return dispatch_precision(predict_precision, [&](auto tag) {
      return cmd_predict<decltype(tag)>(predict_opt, std::cout, std::cerr);
    });
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
