#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "mtur/error.hpp"
#include "mtur/image.hpp"
#include "mtur/mttb.hpp"

namespace mtur {

std::uint8_t quantize8(double v) noexcept {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

namespace {

// Decoded raster before conversion to the image types.
struct Raster {
  std::size_t height = 0, width = 0, channels = 0;  // channels: 1 or 3
  std::vector<double> values;                      // interleaved, [0, 1]
};

std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf) *buf = msg;
  png_longjmp(png, 1);
}
void png_warning_fn(png_structp, png_const_charp) {}

Raster read_png(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("'" + path.string() + "' is not a PNG file");
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  Raster r;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG '" + path.string() + "': " + err);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  r.width = png_get_image_width(png, info);
  r.height = png_get_image_height(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG channel layout in '" + path.string() + "'");
  }
  r.channels = static_cast<std::size_t>(channels);
  const std::size_t stride = png_get_rowbytes(png, info);
  std::vector<unsigned char> data(stride * r.height);
  rows.resize(r.height);
  for (std::size_t y = 0; y < r.height; ++y) rows[y] = data.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  r.values.resize(r.height * r.width * r.channels);
  const std::size_t per_row = r.width * r.channels;
  for (std::size_t y = 0; y < r.height; ++y) {
    const unsigned char* row = data.data() + y * stride;
    for (std::size_t i = 0; i < per_row; ++i) {
      double v;
      if (out_depth == 16) {
        v = static_cast<double>((row[2 * i] << 8) | row[2 * i + 1]) / 65535.0;
      } else {
        v = static_cast<double>(row[i]) / 255.0;
      }
      r.values[y * per_row + i] = v;
    }
  }
  return r;
}

void write_png(const std::filesystem::path& path, std::size_t height, std::size_t width, std::size_t channels,
               const std::vector<std::uint8_t>& bytes) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_const_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed for '" + path.string() + "': " + err);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y) rows[y] = bytes.data() + y * width * channels;
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Binary netpbm (P5 / P6), maxval up to 65535.
Raster read_pnm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  auto token = [&]() {
    std::string t;
    char c;
    while (f.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(f, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    return t;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P6") throw IoError("'" + path.string() + "' is not a binary PGM/PPM file");
  Raster r;
  try {
    r.width = std::stoul(token());
    r.height = std::stoul(token());
    const unsigned long maxval = std::stoul(token());
    if (maxval == 0 || maxval > 65535) throw IoError("bad maxval");
    r.channels = magic == "P6" ? 3 : 1;
    const std::size_t n = r.width * r.height * r.channels;
    const std::size_t bps = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(n * bps);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(f.gcount()) != raw.size()) throw IoError("truncated pixel data");
    r.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned v = bps == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
      r.values[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
  } catch (const IoError& e) {
    throw IoError("corrupt PGM/PPM '" + path.string() + "': " + e.what());
  } catch (const std::exception&) {
    throw IoError("corrupt PGM/PPM header in '" + path.string() + "'");
  }
  return r;
}

void write_pnm(const std::filesystem::path& path, std::size_t height, std::size_t width, std::size_t channels,
               const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << (channels == 3 ? "P6" : "P5") << '\n' << width << ' ' << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

Raster read_mttb_image(const std::filesystem::path& path) {
  const auto entries = read_mttb(path);
  const auto& e = find_entry(entries, "image");
  Raster r;
  std::visit(
      [&](const auto& t) {
        if (t.rank() != 3 || (t.dim(2) != 1 && t.dim(2) != 3)) {
          throw IoError("'" + path.string() + "': image tensor must be HxWx1 or HxWx3, got " +
                        shape_string(t.shape()));
        }
        r.height = t.dim(0);
        r.width = t.dim(1);
        r.channels = t.dim(2);
        r.values.assign(t.data().begin(), t.data().end());
      },
      e.tensor);
  for (double v : r.values) {
    if (!std::isfinite(v)) throw IoError("'" + path.string() + "': non-finite pixel value");
  }
  return r;
}

void write_mttb_image(const std::filesystem::path& path, std::size_t height, std::size_t width, std::size_t channels,
                      const std::vector<double>& values) {
  std::vector<float> data(values.begin(), values.end());
  write_mttb(path, {MttbEntry{"image", Tensor<float>(Shape{height, width, channels}, std::move(data))}});
}

Raster read_any(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file '" + path.string() + "'");
  const auto ext = lower_ext(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return read_pnm(path);
  if (ext == ".mttb") return read_mttb_image(path);
  throw IoError("unsupported image format '" + ext + "' for '" + path.string() + "'");
}

void write_any(const std::filesystem::path& path, std::size_t height, std::size_t width, std::size_t channels,
               const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericalError("save_image: non-finite value for '" + path.string() + "'");
  }
  const auto ext = lower_ext(path);
  if (ext == ".mttb") {
    write_mttb_image(path, height, width, channels, values);
    return;
  }
  std::vector<std::uint8_t> bytes(values.size());
  std::transform(values.begin(), values.end(), bytes.begin(), quantize8);
  if (ext == ".png") {
    write_png(path, height, width, channels, bytes);
  } else if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
    write_pnm(path, height, width, channels, bytes);
  } else {
    throw IoError("unsupported image format '" + ext + "' for '" + path.string() + "'");
  }
}

}  // namespace

ImageRGB load_image(const std::filesystem::path& path) {
  Raster r = read_any(path);
  if (r.channels == 3) return ImageRGB(r.height, r.width, std::move(r.values));
  std::vector<double> px(r.height * r.width * 3);
  for (std::size_t i = 0; i < r.height * r.width; ++i) px[3 * i] = px[3 * i + 1] = px[3 * i + 2] = r.values[i];
  return ImageRGB(r.height, r.width, std::move(px));
}

ImageGray load_gray(const std::filesystem::path& path) {
  Raster r = read_any(path);
  if (r.channels == 1) return ImageGray(r.height, r.width, std::move(r.values));
  std::vector<double> v(r.height * r.width);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = r.values[3 * i];
  return ImageGray(r.height, r.width, std::move(v));
}

void save_image(const ImageRGB& img, const std::filesystem::path& path) {
  write_any(path, img.height(), img.width(), 3, img.pixels());
}

void save_image(const ImageGray& img, const std::filesystem::path& path) {
  write_any(path, img.height(), img.width(), 1, img.values());
}

}  // namespace mtur
