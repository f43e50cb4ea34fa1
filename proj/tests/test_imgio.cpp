#include <doctest.h>

#include <cstring>
#include <random>

#include "add/error.hpp"
#include "add/imgio.hpp"
#include "support.hpp"

using namespace add;
using testing::TempDir;

using testing::kind_of;

TEST_CASE("image construction enforces a non-empty grid and the channel count") {
  CHECK_NOTHROW(Image(4, 2, 3));
  CHECK(kind_of([] { Image(0, 5, 1); }) == ErrorKind::Parameter);
  CHECK(kind_of([] { Image(5, 5, 2); }) == ErrorKind::Parameter);
  Image img(4, 3, 3, 0.5);
  CHECK(img.data.size() == 36);
  CHECK(img.in_unit_range());
  img.at(0, 0, 2) = 1.5;
  CHECK_FALSE(img.in_unit_range());
}

TEST_CASE("P5 all-white and all-black files load as 1.0 and 0.0") {
  TempDir dir("imgio");
  testing::write_bytes(dir / "white.pgm", "P5\n3 3\n255\n" + std::string(9, '\xff'));
  testing::write_bytes(dir / "black.pgm", "P5\n3 3\n255\n" + std::string(9, '\0'));
  const Image white = load_image(dir / "white.pgm");
  const Image black = load_image(dir / "black.pgm");
  CHECK(white.channels == 1);
  for (double v : white.data) CHECK(v == 1.0);
  for (double v : black.data) CHECK(v == 0.0);
}

TEST_CASE("P6 bytes scale per channel by the maxval") {
  TempDir dir("imgio");
  std::string payload;
  for (int k = 0; k < 8; ++k) payload += std::string("\x80\x00\xff", 3);
  testing::write_bytes(dir / "rgb.ppm", "P6\n4 2\n255\n" + payload);
  const Image img = load_image(dir / "rgb.ppm");
  REQUIRE(img.width == 4);
  REQUIRE(img.height == 2);
  REQUIRE(img.channels == 3);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) {
      CHECK(img.at(x, y, 0) == 128.0 / 255.0);
      CHECK(img.at(x, y, 1) == 0.0);
      CHECK(img.at(x, y, 2) == 1.0);
    }
}

TEST_CASE("headers with comments and 16-bit big-endian samples") {
  TempDir dir("imgio");
  std::string payload;
  for (int k = 0; k < 9; ++k) payload += std::string("\x01\x00", 2);  // 256
  testing::write_bytes(dir / "deep.pgm", "P5\n# a comment\n3 3\n# another\n65535\n" + payload);
  const Image img = load_image(dir / "deep.pgm");
  for (double v : img.data) CHECK(v == doctest::Approx(256.0 / 65535.0).epsilon(1e-15));
}

TEST_CASE("load errors are classified") {
  TempDir dir("imgio");
  testing::write_bytes(dir / "magic.pgm", "P2\n3 3\n255\n" + std::string(9, 'a'));
  testing::write_bytes(dir / "garbage.pgm", "P5\nthree 3\n255\n" + std::string(9, 'a'));
  testing::write_bytes(dir / "short.pgm", "P5\n3 3\n255\n" + std::string(5, 'a'));
  testing::write_bytes(dir / "maxval.pgm", "P5\n3 3\n1023\n" + std::string(18, 'a'));
  CHECK(kind_of([&] { load_image(dir / "magic.pgm"); }) == ErrorKind::Format);
  CHECK(kind_of([&] { load_image(dir / "garbage.pgm"); }) == ErrorKind::Format);
  CHECK(kind_of([&] { load_image(dir / "short.pgm"); }) == ErrorKind::Io);
  CHECK(kind_of([&] { load_image(dir / "maxval.pgm"); }) == ErrorKind::Unsupported);
  CHECK(kind_of([&] { load_image(dir / "missing.pgm"); }) == ErrorKind::Io);
}

TEST_CASE("save then load stays within half a quantization step") {
  TempDir dir("imgio");
  std::mt19937_64 rng(11);
  for (int channels : {1, 3}) {
    Image img(7, 5, channels);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : img.data) v = u(rng);
    const auto path = dir / (channels == 1 ? "a.pgm" : "a.ppm");
    save_image(img, path);
    const Image back = load_image(path);
    REQUIRE(back.channels == channels);
    for (std::size_t k = 0; k < img.data.size(); ++k)
      CHECK(std::abs(back.data[k] - img.data[k]) <= 1.0 / 510.0 + 1e-15);

    save_image(img, path, 65535);
    const Image deep = load_image(path);
    for (std::size_t k = 0; k < img.data.size(); ++k)
      CHECK(std::abs(deep.data[k] - img.data[k]) <= 0.5 / 65535.0 + 1e-15);
  }
}

TEST_CASE("grayscale conversion") {
  Image gray(3, 3, 1, 0.3);
  CHECK(to_grayscale(gray) == gray);

  Image rgb(3, 3, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      rgb.at(x, y, 0) = 0.6;
      rgb.at(x, y, 1) = 0.6;
      rgb.at(x, y, 2) = 0.6;
    }
  rgb.at(1, 1, 0) = 1.0;
  rgb.at(1, 1, 1) = 0.0;
  rgb.at(1, 1, 2) = 0.0;
  const Image g = to_grayscale(rgb);
  CHECK(g.channels == 1);
  CHECK(g.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(g.at(1, 1) == doctest::Approx(0.299).epsilon(1e-15));
  CHECK(to_grayscale(g) == g);
}

TEST_CASE("blob round trips") {
  TempDir dir("blob");
  SUBCASE("empty payload") {
    TensorBlob b{{0}, {}, {}};
    write_blob(b, dir / "e.addf");
    CHECK(read_blob(dir / "e.addf") == b);
  }
  SUBCASE("small matrix with metadata") {
    TensorBlob b{{2, 3}, {0, 1, 2, 3, 4, 5}, {{"kind", "test"}, {"note", "a b"}}};
    write_blob(b, dir / "m.addf");
    CHECK(read_blob(dir / "m.addf") == b);
  }
  SUBCASE("a million random values, header length from the layout") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(-1e6f, 1e6f);
    TensorBlob b;
    b.shape = {1000000};
    b.values.resize(1000000);
    for (float& v : b.values) v = u(rng);
    write_blob(b, dir / "big.addf");
    CHECK(std::filesystem::file_size(dir / "big.addf") == 1000000 * 4 + 4 + 1 + 1 + 8);
    const TensorBlob back = read_blob(dir / "big.addf");
    CHECK(std::memcmp(back.values.data(), b.values.data(), 4000000) == 0);
  }
}

TEST_CASE("blob errors") {
  TempDir dir("blob");
  TensorBlob b{{2}, {1.0f, 2.0f}, {}};
  write_blob(b, dir / "ok.addf");
  std::string bytes = testing::read_bytes(dir / "ok.addf");

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  testing::write_bytes(dir / "magic.addf", bad_magic);
  CHECK(kind_of([&] { read_blob(dir / "magic.addf"); }) == ErrorKind::Format);

  std::string bad_version = bytes;
  bad_version[4] = static_cast<char>(kBlobVersion + 1);
  testing::write_bytes(dir / "version.addf", bad_version);
  CHECK(kind_of([&] { read_blob(dir / "version.addf"); }) == ErrorKind::Unsupported);

  testing::write_bytes(dir / "short.addf", bytes.substr(0, bytes.size() - 2));
  CHECK(kind_of([&] { read_blob(dir / "short.addf"); }) == ErrorKind::Io);
  testing::write_bytes(dir / "long.addf", bytes + "xxxx");
  CHECK(kind_of([&] { read_blob(dir / "long.addf"); }) == ErrorKind::Io);

  TensorBlob mismatch{{3}, {1.0f}, {}};
  CHECK_THROWS_AS(write_blob(mismatch, dir / "x.addf"), Error);
  TensorBlob rank4{{1, 1, 1, 1}, {1.0f}, {}};
  CHECK_THROWS_AS(write_blob(rank4, dir / "y.addf"), Error);
}
