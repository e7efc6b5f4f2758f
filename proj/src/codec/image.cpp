#include "lumos/codec/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lumos {

void clamp01(Image& img) {
  for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
}

std::vector<float> luma(const Image& img) {
  const std::size_t n = img.height * img.width;
  std::vector<float> out(n);
  if (img.channels == 1) {
    std::copy(img.data.begin(), img.data.begin() + static_cast<std::ptrdiff_t>(n), out.begin());
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = 0.299f * img.data[i] + 0.587f * img.data[n + i] + 0.114f * img.data[2 * n + i];
  }
  return out;
}

double mean_luma(const Image& img) {
  const auto l = luma(img);
  double s = 0.0;
  for (float v : l) s += v;
  return l.empty() ? 0.0 : s / static_cast<double>(l.size());
}

Image center_crop(const Image& img, std::size_t h, std::size_t w) {
  if (h > img.height || w > img.width) {
    throw ImageError("center_crop: " + std::to_string(h) + "x" + std::to_string(w) +
                     " exceeds image " + std::to_string(img.height) + "x" +
                     std::to_string(img.width));
  }
  const std::size_t y0 = (img.height - h) / 2, x0 = (img.width - w) / 2;
  Image out(img.channels, h, w);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

Tensor to_tensor(const Image& img, DType dtype) { return to_batch({&img}, dtype); }

Tensor to_batch(const std::vector<const Image*>& imgs, DType dtype) {
  if (imgs.empty()) throw ImageError("to_batch: no images");
  const Image& first = *imgs.front();
  std::vector<double> all;
  all.reserve(imgs.size() * first.data.size());
  for (const Image* im : imgs) {
    if (im->channels != first.channels || im->height != first.height || im->width != first.width) {
      throw ImageError("to_batch: images differ in size");
    }
    all.insert(all.end(), im->data.begin(), im->data.end());
  }
  return Tensor::from_values({imgs.size(), first.channels, first.height, first.width}, all, dtype);
}

Image from_tensor(const Tensor& t, std::size_t n) {
  if (t.rank() != 4 || n >= t.dim(0)) {
    throw ShapeError("from_tensor: expected [N, C, H, W], got " + shape_str(t.shape()));
  }
  Image img(t.dim(1), t.dim(2), t.dim(3));
  const std::size_t per = img.data.size();
  for (std::size_t i = 0; i < per; ++i) img.data[i] = static_cast<float>(t.at(n * per + i));
  clamp01(img);
  return img;
}

namespace {

struct PngReadState {
  const std::string* bytes;
  std::size_t pos = 0;
};

void read_cb(png_structp png, png_bytep out, png_size_t len) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + len > st->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(out, st->bytes->data() + st->pos, len);
  st->pos += len;
}

void write_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), len);
}

void flush_cb(png_structp) {}

[[noreturn]] void error_cb(png_structp, png_const_charp msg) { throw ImageError(std::string("png: ") + msg); }
void warning_cb(png_structp, png_const_charp) {}

}  // namespace

Image decode_png(const std::string& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw ImageError("not a PNG stream");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_cb, warning_cb);
  png_infop info = png_create_info_struct(png);
  PngReadState st{&bytes};
  Image img;
  try {
    png_set_read_fn(png, &st, read_cb);
    png_read_info(png, info);
    const auto depth = png_get_bit_depth(png, info);
    const auto type = png_get_color_type(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (type == PNG_COLOR_TYPE_GRAY || type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const std::size_t w = png_get_image_width(png, info), h = png_get_image_height(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != 3 * w) throw ImageError("png: unexpected row layout");
    std::vector<unsigned char> raw(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (std::size_t y = 0; y < h; ++y) rows[y] = raw.data() + y * rowbytes;
    png_read_image(png, rows.data());
    img = Image(3, h, w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = raw[y * rowbytes + 3 * x + c] / 255.0f;
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

std::string encode_png(const Image& img) {
  if (img.channels != 3 && img.channels != 1) throw ImageError("encode_png: need 1 or 3 channels");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_cb, warning_cb);
  png_infop info = png_create_info_struct(png);
  std::string out;
  try {
    png_set_write_fn(png, &out, write_cb, flush_cb);
    const int type = img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(img.width * img.channels);
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x)
        for (std::size_t c = 0; c < img.channels; ++c) {
          const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
          row[x * img.channels + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
        }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

Image read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const ImageError& e) {
    throw ImageError(path.string() + ": " + e.what());
  }
}

void write_png(const Image& img, const std::filesystem::path& path) {
  const std::string bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError("cannot write " + path.string());
}

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::string& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                       (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                       static_cast<unsigned char>(bytes[i + 2]);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
    if (rest == 2) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(const std::string& text) {
  std::array<int, 256> table;
  table.fill(-1);
  for (int i = 0; i < 64; ++i) table[static_cast<unsigned char>(kAlphabet[i])] = i;
  std::string out;
  unsigned acc = 0;
  int bits = 0;
  std::size_t pad = 0;
  for (char ch : text) {
    if (ch == '=') {
      ++pad;
      continue;
    }
    if (ch == '\n' || ch == '\r' || ch == ' ') continue;
    const int v = table[static_cast<unsigned char>(ch)];
    if (v < 0 || pad > 0) throw ImageError("malformed base64");
    acc = (acc << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += static_cast<char>((acc >> bits) & 0xFF);
    }
  }
  if (pad > 2) throw ImageError("malformed base64 padding");
  return out;
}

}  // namespace lumos
