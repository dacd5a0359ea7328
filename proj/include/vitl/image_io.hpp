#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vitl {

// 8-bit interleaved RGB image as decoded from disk.
struct ImageU8 {
  size_t width = 0;
  size_t height = 0;
  std::vector<uint8_t> rgb;  // height * width * 3, row-major
};

// Decodes a PNG or JPEG file (by magic bytes, not extension) to 8-bit RGB.
// Grayscale/palette/alpha inputs are converted. Throws std::runtime_error
// naming the file on any decode problem.
ImageU8 load_image(const std::string& path);

// Writers used by the tests and for exporting synthetic patches.
void save_png(const std::string& path, const ImageU8& img);
void save_jpeg(const std::string& path, const ImageU8& img, int quality = 95);

}  // namespace vitl
