#include "tplreg/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "tplreg/error.hpp"

namespace tplreg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return f;
}

double collapse(const double* px, int channels, ChannelPolicy policy) {
  // channels: 1 gray, 2 gray+alpha, 3 rgb, 4 rgba
  if (channels <= 2) return px[0];
  if (policy == ChannelPolicy::Green) return px[1];
  return 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
}

RasterImage read_png(const std::filesystem::path& path, ChannelPolicy policy) {
  FilePtr file = open_file(path, "rb");
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw Error(ErrorCode::Format, path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::Io, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::Io, "png_create_info_struct failed");
  }
  // Locals touched after setjmp live in this struct so longjmp cannot clobber them.
  struct State {
    std::vector<png_byte> buffer;
    std::vector<png_bytep> rows;
  } state;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::Format, "corrupt PNG data in " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (bit_depth == 16) png_set_swap(png);  // host little-endian 16-bit words
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const int depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  state.buffer.resize(rowbytes * height);
  state.rows.resize(height);
  for (int y = 0; y < height; ++y) state.rows[y] = state.buffer.data() + rowbytes * y;
  png_read_image(png, state.rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<double> values(static_cast<std::size_t>(width) * height);
  std::vector<double> px(channels);
  for (int y = 0; y < height; ++y) {
    const png_byte* row = state.rows[y];
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        if (depth == 16) {
          std::uint16_t v;
          std::memcpy(&v, row + 2 * (x * channels + c), 2);
          px[c] = v / 65535.0;
        } else {
          px[c] = row[x * channels + c] / 255.0;
        }
      }
      values[static_cast<std::size_t>(y) * width + x] = collapse(px.data(), channels, policy);
    }
  }
  return RasterImage(width, height, std::move(values));
}

// Minimal PGM reader: P2 (ASCII) and P5 (binary), maxval up to 65535.
RasterImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  auto next_token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  const std::string magic = next_token();
  if (magic != "P2" && magic != "P5") throw Error(ErrorCode::Format, path.string() + " is not a PGM");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::Format, "malformed PGM header in " + path.string());
  }
  if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) {
    throw Error(ErrorCode::Format, "unsupported PGM header in " + path.string());
  }
  // 8-bit data scales by 1/255 and 16-bit by 1/65535 regardless of maxval.
  const double scale = maxval < 256 ? 1.0 / 255.0 : 1.0 / 65535.0;
  std::vector<double> values(static_cast<std::size_t>(width) * height);
  if (magic == "P5") {
    const bool wide = maxval >= 256;
    std::vector<unsigned char> raw(values.size() * (wide ? 2 : 1));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
      throw Error(ErrorCode::Format, "truncated PGM data in " + path.string());
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const unsigned v = wide ? (raw[2 * i] << 8 | raw[2 * i + 1]) : raw[i];
      values[i] = v * scale;
    }
  } else {
    for (double& v : values) {
      const std::string tok = next_token();
      if (tok.empty()) throw Error(ErrorCode::Format, "truncated PGM data in " + path.string());
      v = std::stoi(tok) * scale;
    }
  }
  return RasterImage(width, height, std::move(values));
}

std::vector<png_byte> quantize(const RasterImage& image) {
  std::vector<png_byte> out(image.size());
  auto px = image.pixels();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<png_byte>(std::lround(255.0 * px[i]));
  }
  return out;
}

}  // namespace

RasterImage read_image(const std::filesystem::path& path, ChannelPolicy policy) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw Error(ErrorCode::Io, "cannot open " + path.string());
  char magic[2] = {0, 0};
  probe.read(magic, 2);
  if (magic[0] == 'P' && (magic[1] == '2' || magic[1] == '5')) return read_pgm(path);
  return read_png(path, policy);
}

void write_png(const std::filesystem::path& path, const RasterImage& image) {
  std::vector<png_byte> data = quantize(image);
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::Io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::Io, "png_create_info_struct failed");
  }
  std::vector<png_bytep> rows(image.height());
  for (int y = 0; y < image.height(); ++y) {
    rows[y] = data.data() + static_cast<std::size_t>(y) * image.width();
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width(), image.height(), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_pgm(const std::filesystem::path& path, const RasterImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out << "P5\n" << image.width() << " " << image.height() << "\n255\n";
  const std::vector<png_byte> data = quantize(image);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

}  // namespace tplreg
