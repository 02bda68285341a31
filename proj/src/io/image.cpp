#include "magc/io/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "magc/error.hpp"
#include "magc/io/bytes.hpp"

namespace magc {
namespace {

struct PnmHeader {
  std::string magic;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t maxval = 0;
  std::size_t offset = 0;  // first raster byte
};

PnmHeader parse_pnm_header(std::span<const std::uint8_t> b, const std::string& what) {
  PnmHeader h;
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < b.size()) {
      if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (std::isspace(b[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&] {
    skip_space();
    std::string t;
    while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') t.push_back(static_cast<char>(b[pos++]));
    if (t.empty()) fail(ErrorCode::kFormat, what + ": truncated header");
    return t;
  };
  auto number = [&] {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
        t.size() > 9) {
      fail(ErrorCode::kFormat, what + ": bad header field '" + t + "'");
    }
    return static_cast<std::size_t>(std::stoul(t));
  };
  h.magic = token();
  h.width = number();
  h.height = number();
  h.maxval = number();
  if (pos >= b.size() || !std::isspace(b[pos])) fail(ErrorCode::kFormat, what + ": malformed header");
  h.offset = pos + 1;
  if (h.width == 0 || h.height == 0) fail(ErrorCode::kFormat, what + ": zero-sized image");
  if (h.maxval != 255) fail(ErrorCode::kFormat, what + ": only 8-bit (maxval 255) files are supported");
  return h;
}

std::vector<std::uint8_t> pnm_bytes(const char* magic, std::size_t w, std::size_t h) {
  const std::string head = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  return {head.begin(), head.end()};
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

Image decode_ppm(std::span<const std::uint8_t> bytes) {
  const PnmHeader h = parse_pnm_header(bytes, "ppm");
  if (h.magic != "P6") fail(ErrorCode::kFormat, "ppm: expected P6, got " + h.magic);
  const std::size_t n = h.width * h.height;
  if (bytes.size() - h.offset < 3 * n) fail(ErrorCode::kFormat, "ppm: truncated pixel data");
  Image img(h.width, h.height);
  const std::uint8_t* px = bytes.data() + h.offset;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.data[c * n + i] = static_cast<float>(px[3 * i + c]) / 255.0f;
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& image) {
  check(image.data.size() == 3 * image.width * image.height && image.width > 0, "ppm: malformed image buffer");
  auto out = pnm_bytes("P6", image.width, image.height);
  const std::size_t n = image.width * image.height;
  out.reserve(out.size() + 3 * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) out.push_back(to_byte(image.data[c * n + i]));
  return out;
}

Image read_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_file(path));
  } catch (const Error& e) {
    rethrow_with_stage(e, path.string());
  }
}

void write_ppm(const std::filesystem::path& path, const Image& image) { write_file(path, encode_ppm(image)); }

MapRaster read_map(const std::filesystem::path& path, std::size_t num_classes) {
  const auto bytes = read_file(path);
  try {
    const PnmHeader h = parse_pnm_header(bytes, "pgm");
    if (h.magic != "P5") fail(ErrorCode::kFormat, "pgm: expected P5, got " + h.magic);
    if (bytes.size() - h.offset < h.width * h.height) fail(ErrorCode::kFormat, "pgm: truncated pixel data");
    MapRaster m(h.width, h.height, num_classes);
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(h.offset), h.width * h.height, m.classes.begin());
    m.validate();
    return m;
  } catch (const Error& e) {
    rethrow_with_stage(e, path.string());
  }
}

void write_map(const std::filesystem::path& path, const MapRaster& map) {
  map.validate();
  auto out = pnm_bytes("P5", map.width, map.height);
  out.insert(out.end(), map.classes.begin(), map.classes.end());
  write_file(path, out);
}

Tensor<float> images_to_tensor(std::span<const Image> images) {
  check(!images.empty(), "images_to_tensor: empty batch");
  const std::size_t w = images[0].width, h = images[0].height;
  Tensor<float> out(Shape{images.size(), 3, h, w});
  float* dst = out.mutable_ptr();
  for (const Image& img : images) {
    check(img.width == w && img.height == h, "images_to_tensor: images differ in size");
    dst = std::copy(img.data.begin(), img.data.end(), dst);
  }
  return out;
}

Image tensor_to_image(const Tensor<float>& t, std::size_t n) {
  check(t.rank() == 4 && t.dim(1) == 3 && n < t.dim(0), "tensor_to_image: expected (N, 3, H, W), got " + shape_str(t.shape()));
  Image img(t.dim(3), t.dim(2));
  const float* src = t.ptr() + n * img.data.size();
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = std::clamp(src[i], 0.0f, 1.0f);
  return img;
}

Image quantize8(const Image& image) {
  Image out = image;
  for (float& v : out.data) v = static_cast<float>(to_byte(v)) / 255.0f;
  return out;
}

}  // namespace magc
