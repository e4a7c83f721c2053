#include "nfer/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include "nfer/errors.hpp"

namespace nfer {

namespace {

std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  for (char& c : e)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return e;
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

unsigned char to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

bool is_image_extension(const std::filesystem::path& path) {
  const auto e = lower_ext(path);
  return e == ".png" || e == ".pgm" || e == ".bmp";
}

Image read_image(const std::filesystem::path& path) {
  const auto e = lower_ext(path);
  if (e == ".png") return read_png(path);
  if (e == ".pgm") return read_pgm(path);
  if (e == ".bmp") return read_bmp(path);
  throw ParseError("unsupported image format: " + path.string());
}

Image read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw ParseError("not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialization failed");
  }
  Image img;
  std::vector<png_bytep> rows;
  std::vector<std::uint16_t> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("corrupt PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);
  // Everything becomes 16-bit so one buffer layout serves every source format.
  if (depth < 16) png_set_expand_16(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const std::size_t w = png_get_image_width(png, info);
  const std::size_t h = png_get_image_height(png, info);
  const std::size_t ch = png_get_channels(png, info);
  buffer.resize(w * h * ch);
  rows.resize(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = reinterpret_cast<png_bytep>(buffer.data() + y * w * ch);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img = Image(ch, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < ch; ++c) img.at(c, y, x) = static_cast<float>(buffer[(y * w + x) * ch + c] / 65535.0);
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw std::invalid_argument("write_png: need 1 or 3 channels");
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot create " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialization failed");
  }
  const std::size_t w = image.width, h = image.height, ch = image.channels;
  std::vector<unsigned char> buffer(w * h * ch);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < ch; ++c) buffer[(y * w + x) * ch + c] = to_byte(image.at(c, y, x));
  std::vector<png_bytep> rows(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = buffer.data() + y * w * ch;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, ch == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_pgm(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) -> ParseError { return ParseError("PGM " + path.string() + ": " + why); };
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (bytes[pos] == ' ' || bytes[pos] == '\t' || bytes[pos] == '\r' || bytes[pos] == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_ws();
    if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') throw fail("expected a number");
    std::size_t v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1u << 30)) throw fail("number out of range");
      ++pos;
    }
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '5')) throw fail("missing P2/P5 magic");
  const bool binary = bytes[1] == '5';
  pos = 2;
  const std::size_t w = number(), h = number(), maxval = number();
  if (w == 0 || h == 0) throw fail("zero size");
  if (maxval == 0 || maxval > 65535) throw fail("bad maxval");
  Image img(1, h, w);
  if (binary) {
    ++pos;  // single whitespace after maxval
    const std::size_t bps = maxval < 256 ? 1 : 2;
    if (bytes.size() < pos + w * h * bps) throw fail("truncated pixel data");
    for (std::size_t i = 0; i < w * h; ++i) {
      std::size_t v = bps == 1 ? bytes[pos + i] : (static_cast<std::size_t>(bytes[pos + 2 * i]) << 8) | bytes[pos + 2 * i + 1];
      if (v > maxval) throw fail("sample exceeds maxval");
      img.pixels[i] = static_cast<float>(static_cast<double>(v) / static_cast<double>(maxval));
    }
  } else {
    for (std::size_t i = 0; i < w * h; ++i) {
      const std::size_t v = number();
      if (v > maxval) throw fail("sample exceeds maxval");
      img.pixels[i] = static_cast<float>(static_cast<double>(v) / static_cast<double>(maxval));
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1) throw std::invalid_argument("write_pgm: image must have one channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create " + path.string());
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  for (float v : image.pixels) out.put(static_cast<char>(to_byte(v)));
  if (!out) throw IoError("failed writing " + path.string());
}

Image read_bmp(const std::filesystem::path& path) {
  const auto b = read_bytes(path);
  auto fail = [&](const std::string& why) -> ParseError { return ParseError("BMP " + path.string() + ": " + why); };
  auto u16 = [&](std::size_t o) -> std::uint32_t {
    if (o + 2 > b.size()) throw fail("truncated header");
    return b[o] | (b[o + 1] << 8);
  };
  auto u32 = [&](std::size_t o) -> std::uint32_t {
    if (o + 4 > b.size()) throw fail("truncated header");
    return b[o] | (b[o + 1] << 8) | (b[o + 2] << 16) | (static_cast<std::uint32_t>(b[o + 3]) << 24);
  };
  if (b.size() < 54 || b[0] != 'B' || b[1] != 'M') throw fail("missing BM magic");
  const std::uint32_t offset = u32(10);
  const std::uint32_t header = u32(14);
  const auto width = static_cast<std::int32_t>(u32(18));
  const auto height_raw = static_cast<std::int32_t>(u32(22));
  const std::uint32_t bpp = u16(28);
  const std::uint32_t compression = u32(30);
  if (width <= 0 || height_raw == 0) throw fail("bad dimensions");
  if (compression != 0 && !(compression == 3 && bpp == 32)) throw fail("compressed BMP not supported");
  if (bpp != 8 && bpp != 24 && bpp != 32) throw fail("unsupported bit depth " + std::to_string(bpp));
  const bool bottom_up = height_raw > 0;
  const std::size_t w = static_cast<std::size_t>(width);
  const std::size_t h = static_cast<std::size_t>(bottom_up ? height_raw : -height_raw);
  const std::size_t stride = ((w * bpp + 31) / 32) * 4;
  if (b.size() < offset + stride * h) throw fail("truncated pixel data");

  std::vector<std::array<unsigned char, 3>> palette;
  bool gray_palette = true;
  if (bpp == 8) {
    std::uint32_t colors = u32(46);
    if (colors == 0) colors = 256;
    const std::size_t pal = 14 + header;
    for (std::uint32_t i = 0; i < colors; ++i) {
      if (pal + 4 * i + 3 > b.size()) throw fail("truncated palette");
      palette.push_back({b[pal + 4 * i + 2], b[pal + 4 * i + 1], b[pal + 4 * i]});
      if (palette.back()[0] != palette.back()[1] || palette.back()[1] != palette.back()[2]) gray_palette = false;
    }
  }
  const std::size_t ch = (bpp == 8 && gray_palette) ? 1 : 3;
  Image img(ch, h, w);
  for (std::size_t row = 0; row < h; ++row) {
    const std::size_t y = bottom_up ? h - 1 - row : row;
    const unsigned char* p = b.data() + offset + row * stride;
    for (std::size_t x = 0; x < w; ++x) {
      std::array<unsigned char, 3> rgb;
      if (bpp == 8) {
        if (p[x] >= palette.size()) throw fail("palette index out of range");
        rgb = palette[p[x]];
      } else {
        const std::size_t k = x * (bpp / 8);
        rgb = {p[k + 2], p[k + 1], p[k]};
      }
      for (std::size_t c = 0; c < ch; ++c) img.at(c, y, x) = rgb[c] / 255.0f;
    }
  }
  return img;
}

Image to_channels(const Image& image, std::size_t channels) {
  if (image.channels == channels) return image;
  if (channels == 1 && image.channels == 3) {
    Image out(1, image.height, image.width);
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x)
        out.at(0, y, x) = 0.299f * image.at(0, y, x) + 0.587f * image.at(1, y, x) + 0.114f * image.at(2, y, x);
    return out;
  }
  if (channels == 3 && image.channels == 1) {
    Image out(3, image.height, image.width);
    for (std::size_t c = 0; c < 3; ++c)
      std::copy(image.pixels.begin(), image.pixels.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>(c * image.height * image.width));
    return out;
  }
  throw std::invalid_argument("to_channels: cannot convert " + std::to_string(image.channels) + " channels to " + std::to_string(channels));
}

}  // namespace nfer
