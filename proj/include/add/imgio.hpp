#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace add {

// Row-major, channel-interleaved pixel grid. Images loaded from disk hold
// values in [0,1]; images produced by editing combinations may exceed it.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  Image() = default;
  // Throws ErrorKind::Parameter unless width, height >= 1 and channels is 1 or 3.
  // Gradient computations additionally need at least 3x3.
  Image(int width, int height, int channels, double fill = 0.0);

  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  bool is_gray() const { return channels == 1; }
  bool in_unit_range() const;

  friend bool operator==(const Image&, const Image&) = default;
};

// Binary PGM (P5) or PPM (P6), maxval 255 or 65535.
Image load_image(const std::filesystem::path& path);

// Writes P5 for gray and P6 for RGB images. Values are clamped to [0,1] and
// rounded to the nearest code.
void save_image(const Image& img, const std::filesystem::path& path,
                int maxval = 255);

// ITU-R BT.601 luma weights; gray input is returned unchanged.
Image to_grayscale(const Image& img);

// ---------------------------------------------------------------------------
// ADDF tensor blobs
//
//   offset 0   "ADDF"
//   offset 4   format version (u8)
//   offset 5   rank (u8, 1..3)
//   offset 6   rank x u64 little-endian dimensions
//   then       product(shape) x f32 little-endian values
//
// Metadata is stored next to the blob as "<path>.meta", one "key=value" per
// line.

inline constexpr std::uint8_t kBlobVersion = 1;

constexpr std::size_t blob_header_size(std::size_t rank) {
  return 4 + 1 + 1 + 8 * rank;
}

struct TensorBlob {
  std::vector<std::uint64_t> shape;
  std::vector<float> values;
  std::map<std::string, std::string> metadata;

  std::uint64_t element_count() const;

  friend bool operator==(const TensorBlob&, const TensorBlob&) = default;
};

void write_blob(const TensorBlob& blob, const std::filesystem::path& path);
TensorBlob read_blob(const std::filesystem::path& path);

}  // namespace add
