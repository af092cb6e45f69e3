#include "outpaint/image_io.hpp"

#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <png.h>
#include <torch/torch.h>

#include "outpaint/errors.hpp"

namespace outpaint {
namespace {

// libpng reports errors by longjmp. Every function that calls setjmp below
// declares its automatic C++ objects before the setjmp call, so the jump never
// skips a destructor.

struct ReadCursor {
  const unsigned char* data;
  std::size_t size;
  std::size_t offset;
};

void read_callback(png_structp png, png_bytep out, png_size_t length) {
  auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + length > cursor->size) png_error(png, "truncated PNG stream");
  std::memcpy(out, cursor->data + cursor->offset, length);
  cursor->offset += length;
}

void write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void flush_callback(png_structp) {}

struct DecodedRaster {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<unsigned char> bytes;
  std::string error;
};

enum class ReadMode { rgb8, raw_single_channel };

bool decode_png(std::string_view input, ReadMode mode, DecodedRaster& raster) {
  std::vector<png_bytep> rows;
  ReadCursor cursor{reinterpret_cast<const unsigned char*>(input.data()), input.size(), 0};

  if (input.size() < 8 ||
      png_sig_cmp(reinterpret_cast<png_const_bytep>(input.data()), 0, 8) != 0) {
    raster.error = "not a PNG stream";
    return false;
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) {
    raster.error = "png_create_read_struct failed";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    raster.error = "png_create_info_struct failed";
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    raster.error = "corrupt PNG stream";
    return false;
  }

  png_set_read_fn(png, &cursor, read_callback);
  png_read_info(png, info);
  raster.width = png_get_image_width(png, info);
  raster.height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (mode == ReadMode::rgb8) {
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    raster.channels = 3;
    raster.bit_depth = 8;
  } else {
    if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_PALETTE) {
      png_destroy_read_struct(&png, &info, nullptr);
      raster.error = "label map must be single-channel (grayscale or palette)";
      return false;
    }
    if (depth < 8) png_set_packing(png);
    raster.channels = 1;
    raster.bit_depth = depth == 16 ? 16 : 8;
  }
  png_read_update_info(png, info);

  const std::size_t row_bytes = png_get_rowbytes(png, info);
  const std::size_t expected =
      static_cast<std::size_t>(raster.width) * raster.channels * (raster.bit_depth / 8);
  if (row_bytes != expected) {
    png_destroy_read_struct(&png, &info, nullptr);
    raster.error = "unexpected PNG row layout";
    return false;
  }
  raster.bytes.resize(row_bytes * raster.height);
  rows.resize(raster.height);
  for (std::uint32_t y = 0; y < raster.height; ++y) rows[y] = raster.bytes.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool encode_png(const unsigned char* data, std::uint32_t width, std::uint32_t height,
                int channels, int bit_depth, std::string& out, std::string& error) {
  std::vector<png_bytep> rows;

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) {
    error = "png_create_write_struct failed";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    error = "png_create_info_struct failed";
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    error = "PNG encoding failed";
    return false;
  }
  png_set_write_fn(png, &out, write_callback, flush_callback);
  png_set_IHDR(png, info, width, height, bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t row_bytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  rows.resize(height);
  for (std::uint32_t y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(data + y * row_bytes);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

std::string encode_or_throw(const unsigned char* data, std::int64_t width, std::int64_t height,
                            int channels, int bit_depth) {
  std::string out, error;
  if (!encode_png(data, static_cast<std::uint32_t>(width), static_cast<std::uint32_t>(height),
                  channels, bit_depth, out, error))
    throw std::runtime_error(error);
  return out;
}

}  // namespace

torch::Tensor to_rgb8(const torch::Tensor& pixels) {
  if (pixels.dim() != 3 || pixels.size(0) != 3)
    throw InvalidArgument("pixels must be [3, H, W]");
  auto scaled = ((pixels.detach().to(torch::kCPU, torch::kFloat) + 1.0) * 127.5)
                    .round()
                    .clamp(0, 255)
                    .to(torch::kUInt8);
  return scaled.permute({1, 2, 0}).contiguous();
}

torch::Tensor from_rgb8(const torch::Tensor& rgb8) {
  if (rgb8.dim() != 3 || rgb8.size(2) != 3) throw InvalidArgument("raster must be [H, W, 3]");
  return rgb8.permute({2, 0, 1}).to(torch::kFloat).div(127.5).sub(1.0).contiguous();
}

torch::Tensor decode_rgb_png(std::string_view bytes) {
  DecodedRaster raster;
  if (!decode_png(bytes, ReadMode::rgb8, raster)) throw InvalidArgument("PNG: " + raster.error);
  auto rgb = torch::from_blob(raster.bytes.data(),
                              {static_cast<std::int64_t>(raster.height),
                               static_cast<std::int64_t>(raster.width), 3},
                              torch::kUInt8);
  return from_rgb8(rgb);
}

std::string encode_rgb8_png(const torch::Tensor& rgb8) {
  if (rgb8.dim() != 3 || rgb8.size(2) != 3 || rgb8.scalar_type() != torch::kUInt8)
    throw InvalidArgument("raster must be uint8 [H, W, 3]");
  auto contiguous = rgb8.contiguous();
  return encode_or_throw(contiguous.data_ptr<std::uint8_t>(), contiguous.size(1),
                         contiguous.size(0), 3, 8);
}

std::string encode_rgb_png(const torch::Tensor& pixels) { return encode_rgb8_png(to_rgb8(pixels)); }

torch::Tensor read_rgb_png(const std::filesystem::path& path) {
  return decode_rgb_png(read_file(path));
}

void write_rgb_png(const std::filesystem::path& path, const torch::Tensor& pixels) {
  write_file(path, encode_rgb_png(pixels));
}

void write_rgb8_png(const std::filesystem::path& path, const torch::Tensor& rgb8) {
  write_file(path, encode_rgb8_png(rgb8));
}

torch::Tensor decode_label_png(std::string_view bytes) {
  DecodedRaster raster;
  if (!decode_png(bytes, ReadMode::raw_single_channel, raster))
    throw InvalidArgument("label PNG: " + raster.error);
  const auto height = static_cast<std::int64_t>(raster.height);
  const auto width = static_cast<std::int64_t>(raster.width);
  auto labels = torch::empty({height, width}, torch::kLong);
  auto* out = labels.data_ptr<std::int64_t>();
  const auto count = height * width;
  if (raster.bit_depth == 16) {
    for (std::int64_t i = 0; i < count; ++i)
      out[i] = (static_cast<std::int64_t>(raster.bytes[2 * i]) << 8) | raster.bytes[2 * i + 1];
  } else {
    for (std::int64_t i = 0; i < count; ++i) out[i] = raster.bytes[i];
  }
  return labels;
}

std::string encode_label_png(const torch::Tensor& labels) {
  if (labels.dim() != 2) throw InvalidArgument("labels must be [H, W]");
  auto values = labels.to(torch::kCPU, torch::kLong).contiguous();
  if (values.numel() > 0 && (values.min().item<std::int64_t>() < 0 ||
                             values.max().item<std::int64_t>() > 65535))
    throw InvalidArgument("labels must lie in [0, 65535] for a PNG label map");
  const auto height = values.size(0);
  const auto width = values.size(1);
  const bool wide = values.numel() > 0 && values.max().item<std::int64_t>() > 255;
  const auto* in = values.data_ptr<std::int64_t>();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(values.numel()) * (wide ? 2 : 1));
  for (std::int64_t i = 0; i < values.numel(); ++i) {
    if (wide) {
      bytes[2 * i] = static_cast<unsigned char>(in[i] >> 8);
      bytes[2 * i + 1] = static_cast<unsigned char>(in[i] & 0xff);
    } else {
      bytes[i] = static_cast<unsigned char>(in[i]);
    }
  }
  return encode_or_throw(bytes.data(), width, height, 1, wide ? 16 : 8);
}

torch::Tensor read_label_png(const std::filesystem::path& path) {
  return decode_label_png(read_file(path));
}

void write_label_png(const std::filesystem::path& path, const torch::Tensor& labels) {
  write_file(path, encode_label_png(labels));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace outpaint
