#include "ssu/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace ssu {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::vector<unsigned char> quantize(const Tensor& image, int channels) {
  int H = image.dim(1), W = image.dim(2);
  std::vector<unsigned char> bytes(static_cast<size_t>(H) * W * channels);
  const real* p = image.data();
  std::int64_t plane = static_cast<std::int64_t>(H) * W;
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int c = 0; c < channels; ++c) {
      double v = std::clamp(static_cast<double>(p[c * plane + i]), 0.0, 1.0);
      bytes[static_cast<size_t>(i) * channels + c] =
          static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  return bytes;
}

void write_png(const std::string& path, int H, int W, int channels,
               const std::vector<unsigned char>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open '" + path + "' for writing");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng write failure for '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H),
               8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(H));
  for (int y = 0; y < H; ++y) {
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(
        bytes.data() + static_cast<size_t>(y) * W * channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor read_image_gray(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IngestionError("cannot open image '" + path + "'");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IngestionError("'" + path + "' is not a PNG file");
  }
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestionError("malformed PNG '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);
  int H = static_cast<int>(png_get_image_height(png, info));
  int W = static_cast<int>(png_get_image_width(png, info));
  if (bit_depth != 8 || color_type != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestionError("'" + path + "' is not 8-bit grayscale");
  }
  std::vector<unsigned char> bytes(static_cast<size_t>(H) * W);
  std::vector<png_bytep> rows(static_cast<size_t>(H));
  for (int y = 0; y < H; ++y) {
    rows[static_cast<size_t>(y)] = bytes.data() + static_cast<size_t>(y) * W;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<real> data(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) {
    data[i] = static_cast<real>(bytes[i] / 255.0);
  }
  return Tensor::from_data({1, H, W}, std::move(data));
}

void write_image_gray(const Tensor& image, const std::string& path) {
  if (image.ndim() != 3 || image.dim(0) != 1) {
    throw UsageError("write_image_gray expects [1,H,W], got " +
                     shape_str(image.shape()));
  }
  write_png(path, image.dim(1), image.dim(2), 1, quantize(image, 1));
}

void write_image_rgb(const Tensor& image, const std::string& path) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw UsageError("write_image_rgb expects [3,H,W], got " +
                     shape_str(image.shape()));
  }
  write_png(path, image.dim(1), image.dim(2), 3, quantize(image, 3));
}

namespace {

constexpr char kRawMagic[4] = {'S', 'S', 'U', 'F'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_raw_plane(const Tensor& plane, const std::string& path) {
  if (plane.ndim() != 3 || plane.dim(0) != 1) {
    throw UsageError("write_raw_plane expects [1,H,W], got " +
                     shape_str(plane.shape()));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kRawMagic, 4);
  put_u32(out, 0);  // dtype 0: float32
  put_u32(out, static_cast<std::uint32_t>(plane.dim(1)));
  put_u32(out, static_cast<std::uint32_t>(plane.dim(2)));
  const real* p = plane.data();
  std::vector<float> buf(static_cast<size_t>(plane.size()));
  for (std::int64_t i = 0; i < plane.size(); ++i) {
    buf[static_cast<size_t>(i)] = static_cast<float>(p[i]);
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw IoError("write failure on '" + path + "'");
}

Tensor read_raw_plane(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open raw plane '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kRawMagic, 4) != 0) {
    throw IngestionError("'" + path + "' is not an SSUF raw plane");
  }
  std::uint32_t dtype = get_u32(in);
  std::uint32_t H = get_u32(in);
  std::uint32_t W = get_u32(in);
  if (dtype != 0) throw IngestionError("unsupported raw dtype in '" + path + "'");
  std::vector<float> buf(static_cast<size_t>(H) * W);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw IngestionError("raw plane '" + path + "' truncated");
  std::vector<real> data(buf.size());
  for (size_t i = 0; i < buf.size(); ++i) data[i] = static_cast<real>(buf[i]);
  return Tensor::from_data({1, static_cast<int>(H), static_cast<int>(W)},
                           std::move(data));
}

void write_map_rescaled(const Tensor& map, const std::string& png_path) {
  if (map.ndim() != 3 || map.dim(0) != 1) {
    throw UsageError("write_map_rescaled expects [1,H,W], got " +
                     shape_str(map.shape()));
  }
  const real* p = map.data();
  double lo = static_cast<double>(p[0]), hi = static_cast<double>(p[0]);
  for (std::int64_t i = 1; i < map.size(); ++i) {
    lo = std::min(lo, static_cast<double>(p[i]));
    hi = std::max(hi, static_cast<double>(p[i]));
  }
  double span = hi - lo;
  std::vector<real> scaled(static_cast<size_t>(map.size()));
  for (std::int64_t i = 0; i < map.size(); ++i) {
    scaled[static_cast<size_t>(i)] =
        span > 0.0 ? static_cast<real>((static_cast<double>(p[i]) - lo) / span)
                   : real(0);
  }
  write_image_gray(Tensor::from_data(map.shape(), std::move(scaled)), png_path);
  std::ofstream side(png_path + ".minmax.txt");
  if (!side) throw IoError("cannot write sidecar for '" + png_path + "'");
  char buf[128];
  std::snprintf(buf, sizeof buf, "min %.9g\nmax %.9g\n", lo, hi);
  side << buf;
}

}  // namespace ssu
