#include "add/imgio.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "add/error.hpp"

namespace add {

Image::Image(int w, int h, int c, double fill)
    : width(w), height(h), channels(c) {
  require(w >= 1 && h >= 1, ErrorKind::Parameter,
          "image must be non-empty, got " + std::to_string(w) + "x" +
              std::to_string(h));
  require(c == 1 || c == 3, ErrorKind::Parameter,
          "image must have 1 or 3 channels");
  data.assign(static_cast<std::size_t>(w) * h * c, fill);
}

bool Image::in_unit_range() const {
  return std::all_of(data.begin(), data.end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Parses the textual part of a PNM header. `pos` ends on the first payload byte.
class PnmHeaderReader {
 public:
  PnmHeaderReader(const std::vector<unsigned char>& bytes, std::string name)
      : bytes_(bytes), name_(std::move(name)) {}

  long next_number() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_]))
      fail(ErrorKind::Format, "malformed PNM header in " + name_);
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000)
        fail(ErrorKind::Format, "header value overflow in " + name_);
      ++pos_;
    }
    return value;
  }

  // Exactly one whitespace byte separates maxval from the payload.
  void consume_single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
      fail(ErrorKind::Format, "missing separator before payload in " + name_);
    ++pos_;
  }

  std::size_t position() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const std::string name = path.string();
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    fail(ErrorKind::Format, "not a binary PGM/PPM file: " + name);
  const int channels = bytes[1] == '6' ? 3 : 1;

  PnmHeaderReader header(bytes, name);
  header.seek(2);
  const long width = header.next_number();
  const long height = header.next_number();
  const long maxval = header.next_number();
  header.consume_single_space();

  if (maxval != 255 && maxval != 65535)
    fail(ErrorKind::Unsupported,
         "unsupported maxval " + std::to_string(maxval) + " in " + name);
  if (width < 1 || height < 1)
    fail(ErrorKind::Format, "empty image in " + name);

  const std::size_t sample_bytes = maxval == 255 ? 1 : 2;
  const std::size_t samples = static_cast<std::size_t>(width) * height * channels;
  const std::size_t offset = header.position();
  if (bytes.size() - offset < samples * sample_bytes)
    fail(ErrorKind::Io, "truncated payload in " + name);

  Image img(static_cast<int>(width), static_cast<int>(height), channels);
  const double scale = static_cast<double>(maxval);
  for (std::size_t k = 0; k < samples; ++k) {
    unsigned value;
    if (sample_bytes == 1) {
      value = bytes[offset + k];
    } else {
      value = (static_cast<unsigned>(bytes[offset + 2 * k]) << 8) |
              bytes[offset + 2 * k + 1];
    }
    img.data[k] = value / scale;
  }
  return img;
}

void save_image(const Image& img, const std::filesystem::path& path, int maxval) {
  require(maxval == 255 || maxval == 65535, ErrorKind::Unsupported,
          "maxval must be 255 or 65535");
  require(img.channels == 1 || img.channels == 3, ErrorKind::Type,
          "image must have 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << '\n'
      << img.width << ' ' << img.height << '\n'
      << maxval << '\n';
  std::vector<unsigned char> payload;
  payload.reserve(img.data.size() * (maxval == 255 ? 1 : 2));
  for (double v : img.data) {
    const auto code = static_cast<unsigned>(
        std::lround(std::clamp(v, 0.0, 1.0) * maxval));
    if (maxval == 255) {
      payload.push_back(static_cast<unsigned char>(code));
    } else {
      payload.push_back(static_cast<unsigned char>(code >> 8));
      payload.push_back(static_cast<unsigned char>(code & 0xff));
    }
  }
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

Image to_grayscale(const Image& img) {
  if (img.channels == 1) return img;
  require(img.channels == 3, ErrorKind::Type, "image must have 1 or 3 channels");
  Image gray(img.width, img.height, 1);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    const double r = img.data[3 * p];
    const double g = img.data[3 * p + 1];
    const double b = img.data[3 * p + 2];
    gray.data[p] = 0.299 * r + 0.587 * g + 0.114 * b;
  }
  return gray;
}

// ---------------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little,
              "ADDF blob I/O assumes a little-endian host");

constexpr char kBlobMagic[4] = {'A', 'D', 'D', 'F'};

std::filesystem::path meta_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".meta";
  return p;
}

}  // namespace

std::uint64_t TensorBlob::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void write_blob(const TensorBlob& blob, const std::filesystem::path& path) {
  require(!blob.shape.empty() && blob.shape.size() <= 3, ErrorKind::Parameter,
          "blob rank must be 1, 2 or 3");
  require(blob.element_count() == blob.values.size(), ErrorKind::Parameter,
          "blob payload length does not match its shape");
  for (const auto& [key, value] : blob.metadata) {
    require(key.find_first_of("=\n") == std::string::npos &&
                value.find('\n') == std::string::npos,
            ErrorKind::Parameter, "metadata entries must be single-line key=value");
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(kBlobMagic, 4);
  const auto version = static_cast<char>(kBlobVersion);
  const auto rank = static_cast<char>(blob.shape.size());
  out.write(&version, 1);
  out.write(&rank, 1);
  out.write(reinterpret_cast<const char*>(blob.shape.data()),
            static_cast<std::streamsize>(8 * blob.shape.size()));
  out.write(reinterpret_cast<const char*>(blob.values.data()),
            static_cast<std::streamsize>(4 * blob.values.size()));
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());

  std::ofstream meta(meta_path(path));
  if (!meta) fail(ErrorKind::Io, "cannot write " + meta_path(path).string());
  for (const auto& [key, value] : blob.metadata) meta << key << '=' << value << '\n';
}

TensorBlob read_blob(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const std::string name = path.string();
  if (bytes.size() < blob_header_size(0) ||
      std::memcmp(bytes.data(), kBlobMagic, 4) != 0)
    fail(ErrorKind::Format, "bad ADDF magic in " + name);
  if (bytes[4] != kBlobVersion)
    fail(ErrorKind::Unsupported,
         "ADDF version " + std::to_string(bytes[4]) + " not supported in " + name);
  const std::size_t rank = bytes[5];
  if (rank < 1 || rank > 3) fail(ErrorKind::Format, "bad ADDF rank in " + name);
  if (bytes.size() < blob_header_size(rank))
    fail(ErrorKind::Io, "truncated ADDF header in " + name);

  TensorBlob blob;
  blob.shape.resize(rank);
  std::memcpy(blob.shape.data(), bytes.data() + 6, 8 * rank);
  const std::uint64_t count = blob.element_count();
  if (bytes.size() - blob_header_size(rank) != count * 4)
    fail(ErrorKind::Io, "ADDF payload length mismatch in " + name);
  blob.values.resize(count);
  std::memcpy(blob.values.data(), bytes.data() + blob_header_size(rank), 4 * count);

  std::ifstream meta(meta_path(path));
  std::string line;
  while (meta && std::getline(meta, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Format, "bad metadata line in " + meta_path(path).string());
    blob.metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return blob;
}

}  // namespace add
