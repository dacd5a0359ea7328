#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitl/cnn.hpp"
#include "vitl/tensor.hpp"
#include "vitl/vit.hpp"

// Checkpoint container: 4 magic bytes ("VITL" or "CNNL"), a version integer,
// the config fields in declared order, then every parameter tensor as raw
// little-endian 32-bit reals in model field order. Positional tables are not
// stored; they are rebuilt from the config on load. Round-trips are
// byte-exact.

namespace vitl {

inline constexpr uint32_t kCheckpointVersion = 1;

namespace ckpt_detail {

inline void put_u32(std::string& out, uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }

struct Reader {
  const std::string& path;
  std::string bytes;
  size_t pos = 0;

  explicit Reader(const std::string& file) : path(file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + file + "'");
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  uint32_t u32() {
    if (pos + 4 > bytes.size())
      throw std::runtime_error("checkpoint '" + path + "' is truncated");
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | uint8_t(bytes[pos + size_t(i)]);
    pos += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  void expect_end() const {
    if (pos != bytes.size())
      throw std::runtime_error("checkpoint '" + path + "' has trailing bytes");
  }
};

template <class S>
void put_tensor(std::string& out, const Tensor<S>& t) {
  for (size_t i = 0; i < t.size(); ++i) put_f32(out, float(t.at(i)));
}

template <class S>
void read_tensor(Reader& r, Tensor<S>& t) {
  for (size_t i = 0; i < t.size(); ++i) t.at(i) = S(r.f32());
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

inline void check_magic(Reader& r, const char* magic) {
  if (r.bytes.size() < 4 || std::memcmp(r.bytes.data(), magic, 4) != 0)
    throw std::runtime_error("checkpoint '" + r.path + "' does not start with the " +
                             std::string(magic) + " magic");
  r.pos = 4;
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint '" + r.path + "' has version " +
                             std::to_string(version) + ", expected " +
                             std::to_string(kCheckpointVersion));
}

}  // namespace ckpt_detail

// Reads the 4-byte magic so callers can dispatch on the architecture.
inline std::string peek_checkpoint_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  if (in.gcount() != 4) throw std::runtime_error("checkpoint '" + path + "' is truncated");
  return std::string(magic, 4);
}

template <class S>
void save_vit_checkpoint(const std::string& path, const ViTConfig& cfg, const ViTModel<S>& model) {
  std::string out;
  out.append("VITL");
  ckpt_detail::put_u32(out, kCheckpointVersion);
  for (size_t v : {cfg.img_size, cfg.patch_size, cfg.channels, cfg.d_model, cfg.num_heads,
                   cfg.num_layers, cfg.d_ff})
    ckpt_detail::put_u32(out, uint32_t(v));
  ckpt_detail::put_f32(out, float(cfg.dropout_rate));
  ckpt_detail::put_u32(out, uint32_t(cfg.num_classes));
  ckpt_detail::put_u32(out, uint32_t(cfg.seq_len()));
  for (const auto& t : model.parameters()) ckpt_detail::put_tensor(out, t);
  ckpt_detail::write_file(path, out);
}

template <class S>
std::pair<ViTConfig, ViTModel<S>> load_vit_checkpoint(const std::string& path) {
  ckpt_detail::Reader r(path);
  ckpt_detail::check_magic(r, "VITL");
  ViTConfig cfg;
  cfg.img_size = r.u32();
  cfg.patch_size = r.u32();
  cfg.channels = r.u32();
  cfg.d_model = r.u32();
  cfg.num_heads = r.u32();
  cfg.num_layers = r.u32();
  cfg.d_ff = r.u32();
  cfg.dropout_rate = double(r.f32());
  cfg.num_classes = r.u32();
  const uint32_t seq_len = r.u32();
  cfg.validate();
  if (seq_len != cfg.seq_len())
    throw std::runtime_error("checkpoint '" + path + "' stores seq_len " +
                             std::to_string(seq_len) + " but the config derives " +
                             std::to_string(cfg.seq_len()));
  SeededRng dummy(0);
  auto model = ViTModel<S>::init(cfg, dummy);
  for (auto& t : model.parameters()) ckpt_detail::read_tensor(r, t);
  r.expect_end();
  return {cfg, std::move(model)};
}

template <class S>
void save_cnn_checkpoint(const std::string& path, const CNNConfig& cfg, const CNNModel<S>& model) {
  std::string out;
  out.append("CNNL");
  ckpt_detail::put_u32(out, kCheckpointVersion);
  ckpt_detail::put_u32(out, uint32_t(cfg.stages.size()));
  for (const auto& s : cfg.stages) {
    ckpt_detail::put_u32(out, uint32_t(s.filters));
    ckpt_detail::put_u32(out, uint32_t(s.kernel));
    ckpt_detail::put_u32(out, uint32_t(s.stride));
  }
  ckpt_detail::put_u32(out, uint32_t(cfg.pool_side));
  ckpt_detail::put_u32(out, uint32_t(cfg.fc_widths.size()));
  for (size_t w : cfg.fc_widths) ckpt_detail::put_u32(out, uint32_t(w));
  ckpt_detail::put_u32(out, uint32_t(cfg.num_classes));
  ckpt_detail::put_u32(out, uint32_t(cfg.img_size));
  ckpt_detail::put_u32(out, uint32_t(cfg.channels));
  for (const auto& t : model.parameters()) ckpt_detail::put_tensor(out, t);
  ckpt_detail::write_file(path, out);
}

template <class S>
std::pair<CNNConfig, CNNModel<S>> load_cnn_checkpoint(const std::string& path) {
  ckpt_detail::Reader r(path);
  ckpt_detail::check_magic(r, "CNNL");
  CNNConfig cfg;
  cfg.stages.resize(r.u32());
  for (auto& s : cfg.stages) {
    s.filters = r.u32();
    s.kernel = r.u32();
    s.stride = r.u32();
  }
  cfg.pool_side = r.u32();
  cfg.fc_widths.resize(r.u32());
  for (auto& w : cfg.fc_widths) w = r.u32();
  cfg.num_classes = r.u32();
  cfg.img_size = r.u32();
  cfg.channels = r.u32();
  cfg.validate();
  SeededRng dummy(0);
  auto model = CNNModel<S>::init(cfg, dummy);
  for (auto& t : model.parameters()) ckpt_detail::read_tensor(r, t);
  r.expect_end();
  return {cfg, std::move(model)};
}

}  // namespace vitl
