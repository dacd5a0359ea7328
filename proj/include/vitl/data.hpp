#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitl/image_io.hpp"
#include "vitl/rng.hpp"

namespace vitl {

// One fixed-size image patch with its class label. Pixels are planar
// [channels x height x width] reals in [0, 1].
template <class S>
struct LabeledPatch {
  std::vector<S> pixels;
  size_t channels = 0, height = 0, width = 0;
  int label = -1;
  std::string source_id;
  std::string path;
};

template <class S>
struct DatasetSplit {
  std::vector<LabeledPatch<S>> train, validation, test;
  uint64_t seed = 0;
  double ratios[3] = {0, 0, 0};
};

template <class S>
struct LoadedDataset {
  std::vector<LabeledPatch<S>> patches;
  std::vector<std::string> class_names;  // index == label
};

namespace detail {

template <class S>
std::vector<S> planar_pixels(const ImageU8& img, size_t channels) {
  const size_t hw = img.height * img.width;
  std::vector<S> out(channels * hw);
  if (channels == 3) {
    for (size_t i = 0; i < hw; ++i)
      for (size_t c = 0; c < 3; ++c) out[c * hw + i] = S(img.rgb[i * 3 + c]) / S(255);
  } else if (channels == 1) {
    // Rec. 601 luma.
    for (size_t i = 0; i < hw; ++i)
      out[i] = S(0.299 * img.rgb[i * 3] + 0.587 * img.rgb[i * 3 + 1] + 0.114 * img.rgb[i * 3 + 2]) /
               S(255);
  } else {
    throw std::invalid_argument("load_dataset: unsupported channel count " +
                                std::to_string(channels));
  }
  return out;
}

}  // namespace detail

// Reads class names in index order: an optional root/classes.txt (one
// directory name per line) overrides the sorted-directory-name mapping.
inline std::vector<std::string> dataset_class_names(const std::string& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root))
    throw std::runtime_error("dataset root '" + root + "' is not a directory");
  std::vector<std::string> names;
  const fs::path mapping = fs::path(root) / "classes.txt";
  if (fs::exists(mapping)) {
    std::ifstream in(mapping);
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) names.push_back(line);
    }
    for (const auto& n : names)
      if (!fs::is_directory(fs::path(root) / n))
        throw std::runtime_error("classes.txt names '" + n + "' but " + root +
                                 " has no such directory");
  } else {
    for (const auto& entry : fs::directory_iterator(root))
      if (entry.is_directory()) names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
  }
  if (names.empty()) throw std::runtime_error("dataset root '" + root + "' has no class directories");
  return names;
}

// Loads root/<class-name>/*.{png,jpg}: decoded, scaled to [0,1], and
// dimension-checked against the expected geometry. Output order is the
// sorted path order within each class, classes in index order; no RNG is
// touched.
template <class S>
LoadedDataset<S> load_dataset(const std::string& root, size_t img_size, size_t channels) {
  namespace fs = std::filesystem;
  LoadedDataset<S> ds;
  ds.class_names = dataset_class_names(root);
  for (size_t label = 0; label < ds.class_names.size(); ++label) {
    const fs::path dir = fs::path(root) / ds.class_names[label];
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string ext = entry.path().extension().string();
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".PNG" || ext == ".JPG")
        files.push_back(entry.path().string());
    }
    if (files.empty())
      throw std::runtime_error("class directory '" + dir.string() + "' contains no images");
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      ImageU8 img = load_image(file);
      if (img.width != img_size || img.height != img_size)
        throw std::runtime_error("image '" + file + "' is " + std::to_string(img.width) + "x" +
                                 std::to_string(img.height) + ", expected " +
                                 std::to_string(img_size) + "x" + std::to_string(img_size));
      LabeledPatch<S> patch;
      patch.pixels = detail::planar_pixels<S>(img, channels);
      patch.channels = channels;
      patch.height = img_size;
      patch.width = img_size;
      patch.label = int(label);
      patch.source_id = ds.class_names[label];
      patch.path = file;
      ds.patches.push_back(std::move(patch));
    }
  }
  return ds;
}

// Grid position of an extracted patch (row-major enumeration order).
struct GridPos {
  size_t row, col;
};

template <class S>
struct ExtractedPatches {
  std::vector<std::vector<S>> pixels;  // each [channels x side x side]
  std::vector<GridPos> positions;
};

// Enumerates non-overlapping grid positions row-major; when the count limit
// is below the grid capacity a seeded sample without replacement is taken
// (kept in row-major order).
template <class S>
ExtractedPatches<S> extract_patches_grid(const S* image, size_t channels, size_t height,
                                         size_t width, size_t side, size_t limit, SeededRng& rng) {
  if (height < side || width < side)
    throw std::invalid_argument("extract_patches_grid: image " + std::to_string(height) + "x" +
                                std::to_string(width) + " smaller than patch side " +
                                std::to_string(side));
  const size_t rows = height / side, cols = width / side;
  std::vector<size_t> chosen(rows * cols);
  std::iota(chosen.begin(), chosen.end(), size_t{0});
  if (limit < chosen.size()) {
    // Partial Fisher-Yates: draw `limit` distinct positions, then restore
    // row-major order.
    std::vector<size_t> pool = chosen;
    std::vector<size_t> picks;
    picks.reserve(limit);
    for (size_t i = 0; i < limit; ++i) {
      const size_t j = i + rng.uniform_index(pool.size() - i);
      std::swap(pool[i], pool[j]);
      picks.push_back(pool[i]);
    }
    std::sort(picks.begin(), picks.end());
    chosen = std::move(picks);
  }
  ExtractedPatches<S> out;
  for (size_t idx : chosen) {
    const size_t gy = idx / cols, gx = idx % cols;
    std::vector<S> patch(channels * side * side);
    for (size_t c = 0; c < channels; ++c)
      for (size_t y = 0; y < side; ++y)
        for (size_t x = 0; x < side; ++x)
          patch[(c * side + y) * side + x] =
              image[(c * height + gy * side + y) * width + gx * side + x];
    out.pixels.push_back(std::move(patch));
    out.positions.push_back({gy, gx});
  }
  return out;
}

// Seeded, per-class stratified split: each class is shuffled and sliced
// contiguously [train | validation | test] with floor rounding for the
// validation and test counts; the remainder goes to train.
template <class S>
DatasetSplit<S> split_dataset(const std::vector<LabeledPatch<S>>& patches, double train_ratio,
                              double val_ratio, double test_ratio, uint64_t seed) {
  if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0)
    throw std::invalid_argument("split_dataset: negative ratio");
  const double total = train_ratio + val_ratio + test_ratio;
  if (std::abs(total - 1.0) > 1e-6)
    throw std::invalid_argument("split_dataset: ratios sum to " + std::to_string(total) +
                                ", expected 1");

  int max_label = -1;
  for (const auto& p : patches) max_label = std::max(max_label, p.label);
  std::vector<std::vector<size_t>> by_class(size_t(max_label + 1));
  for (size_t i = 0; i < patches.size(); ++i) by_class[size_t(patches[i].label)].push_back(i);

  SeededRng rng(derive_seed(seed, size_t(RngStream::kSplit)));
  DatasetSplit<S> split;
  split.seed = seed;
  split.ratios[0] = train_ratio;
  split.ratios[1] = val_ratio;
  split.ratios[2] = test_ratio;
  for (auto& cls : by_class) {
    rng.shuffle(cls.begin(), cls.end());
    const size_t n = cls.size();
    const size_t n_val = size_t(std::floor(double(n) * val_ratio));
    const size_t n_test = size_t(std::floor(double(n) * test_ratio));
    const size_t n_train = n - n_val - n_test;
    for (size_t i = 0; i < n; ++i) {
      const auto& p = patches[cls[i]];
      if (i < n_train)
        split.train.push_back(p);
      else if (i < n_train + n_val)
        split.validation.push_back(p);
      else
        split.test.push_back(p);
    }
  }
  if (!patches.empty()) {
    if (train_ratio > 0 && split.train.empty())
      throw std::invalid_argument("split_dataset: train ratio > 0 but the split is empty");
    if (val_ratio > 0 && split.validation.empty())
      throw std::invalid_argument("split_dataset: validation ratio > 0 but the split is empty");
    if (test_ratio > 0 && split.test.empty())
      throw std::invalid_argument("split_dataset: test ratio > 0 but the split is empty");
  }
  return split;
}

// Two separable texture classes standing in for the private slide patches:
// class 0 is a high-frequency diagonal wave, class 1 a horizontal gradient.
// All draws (pixel noise, then per-channel jitter) come from the seed.
template <class S>
std::vector<LabeledPatch<S>> generate_synthetic_dataset(size_t n_per_class, size_t img_side,
                                                        uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("generate_synthetic_dataset: n must be >= 1");
  SeededRng rng(derive_seed(seed, size_t(RngStream::kData)));
  auto clip01 = [](double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); };
  std::vector<LabeledPatch<S>> out;
  out.reserve(2 * n_per_class);
  const double side = double(img_side);
  constexpr double kFreq = 8.0;
  for (int label = 0; label < 2; ++label) {
    for (size_t i = 0; i < n_per_class; ++i) {
      LabeledPatch<S> p;
      p.channels = 3;
      p.height = img_side;
      p.width = img_side;
      p.label = label;
      p.source_id = "synthetic-" + std::to_string(label) + "-" + std::to_string(i);
      p.path = "synthetic/class" + std::to_string(label) + "/patch" + std::to_string(i) + ".png";
      p.pixels.resize(3 * img_side * img_side);
      const size_t hw = img_side * img_side;
      for (size_t y = 0; y < img_side; ++y) {
        for (size_t x = 0; x < img_side; ++x) {
          const double base =
              label == 0 ? 0.5 + 0.3 * std::sin(2.0 * M_PI * kFreq * double(x + y) / side)
                         : 0.2 + 0.6 * double(x) / side;
          const double g = clip01(base + rng.uniform(-0.15, 0.15));
          for (size_t c = 0; c < 3; ++c)
            p.pixels[c * hw + y * img_side + x] = S(clip01(g + rng.uniform(-0.05, 0.05)));
        }
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

// Plain-text audit manifest: path<TAB>label<TAB>split, train then
// validation then test.
template <class S>
void write_split_manifest(const std::string& path, const DatasetSplit<S>& split) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split manifest '" + path + "'");
  auto emit = [&](const std::vector<LabeledPatch<S>>& patches, const char* name) {
    for (const auto& p : patches) out << p.path << '\t' << p.label << '\t' << name << '\n';
  };
  emit(split.train, "train");
  emit(split.validation, "val");
  emit(split.test, "test");
}

}  // namespace vitl
