#include "her2/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "her2/error.hpp"
#include "her2/text.hpp"

namespace her2 {

namespace fs = std::filesystem;

RgbImage::RgbImage(int w, int h, Rgb fill) : width(w), height(h) {
  if (w < 1 || h < 1) throw Error(ErrorKind::shape, "image dimensions must be positive");
  data.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < data.size(); i += 3) {
    data[i] = fill.r;
    data[i + 1] = fill.g;
    data[i + 2] = fill.b;
  }
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

RgbImage crop(const RgbImage& img, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > img.width || y + h > img.height) {
    throw Error(ErrorKind::shape, "crop rectangle outside image");
  }
  RgbImage out(w, h);
  for (int r = 0; r < h; ++r) {
    const auto* src = &img.data[(static_cast<std::size_t>(y + r) * img.width + x) * 3];
    std::copy(src, src + static_cast<std::size_t>(w) * 3, &out.data[static_cast<std::size_t>(r) * w * 3]);
  }
  return out;
}

RgbImage resize(const RgbImage& img, int w, int h) {
  if (w < 1 || h < 1) throw Error(ErrorKind::shape, "resize target must be positive");
  if (w == img.width && h == img.height) return img;
  RgbImage out(w, h);
  const double sx = static_cast<double>(img.width) / w;
  const double sy = static_cast<double>(img.height) / h;
  if (sx >= 1.0 && sy >= 1.0) {
    // area average over the source footprint of each output pixel
    for (int y = 0; y < h; ++y) {
      const double y0 = y * sy, y1 = (y + 1) * sy;
      for (int x = 0; x < w; ++x) {
        const double x0 = x * sx, x1 = (x + 1) * sx;
        double acc[3] = {0, 0, 0}, wsum = 0;
        for (int yy = static_cast<int>(y0); yy < std::min<int>(img.height, static_cast<int>(std::ceil(y1))); ++yy) {
          const double wy = std::min<double>(yy + 1, y1) - std::max<double>(yy, y0);
          for (int xx = static_cast<int>(x0); xx < std::min<int>(img.width, static_cast<int>(std::ceil(x1))); ++xx) {
            const double wx = std::min<double>(xx + 1, x1) - std::max<double>(xx, x0);
            const double wgt = wx * wy;
            if (wgt <= 0) continue;
            const Rgb p = img.at(xx, yy);
            acc[0] += wgt * p.r;
            acc[1] += wgt * p.g;
            acc[2] += wgt * p.b;
            wsum += wgt;
          }
        }
        out.set(x, y, {static_cast<std::uint8_t>(std::lround(acc[0] / wsum)),
                       static_cast<std::uint8_t>(std::lround(acc[1] / wsum)),
                       static_cast<std::uint8_t>(std::lround(acc[2] / wsum))});
      }
    }
    return out;
  }
  for (int y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - x0;
      const Rgb a = img.at(x0, y0), b = img.at(x1, y0), c = img.at(x0, y1), d = img.at(x1, y1);
      auto mix = [&](double pa, double pb, double pc, double pd) {
        const double v = (1 - ty) * ((1 - tx) * pa + tx * pb) + ty * ((1 - tx) * pc + tx * pd);
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      };
      out.set(x, y, {mix(a.r, b.r, c.r, d.r), mix(a.g, b.g, c.g, d.g), mix(a.b, b.b, c.b, d.b)});
    }
  }
  return out;
}

GrayImage to_gray(const RgbImage& img) {
  GrayImage g(img.width, img.height);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double v = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
    g.data[i] = static_cast<std::uint8_t>(std::lround(v));
  }
  return g;
}

// ---- PNG ----

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "short write to " + path.string());
}

bool has_png_signature(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return b.size() >= 8 && std::equal(sig, sig + 8, b.begin());
}

bool has_tiff_signature(std::span<const std::uint8_t> b) {
  return b.size() >= 4 && ((b[0] == 'I' && b[1] == 'I' && b[2] == 42 && b[3] == 0) ||
                           (b[0] == 'M' && b[1] == 'M' && b[2] == 0 && b[3] == 42));
}

}  // namespace

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorKind::format, std::string("png: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorKind::format, "png: " + msg);
  }
  return out;
}

RgbImage read_png(const fs::path& path) { return decode_png(read_bytes(path)); }

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.data.data(), 0, nullptr)) {
    throw Error(ErrorKind::format, std::string("png: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.data.data(), 0, nullptr)) {
    throw Error(ErrorKind::format, std::string("png: ") + image.message);
  }
  out.resize(size);
  return out;
}

void write_png(const fs::path& path, const RgbImage& img) { write_bytes(path, encode_png(img)); }

std::pair<int, int> png_dimensions(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::uint8_t head[24] = {};
  in.read(reinterpret_cast<char*>(head), sizeof head);
  if (in.gcount() != 24 || !has_png_signature(head) || std::memcmp(head + 12, "IHDR", 4) != 0) {
    throw Error(ErrorKind::format, "not a PNG file: " + path.string());
  }
  auto be32 = [&](int o) {
    return static_cast<int>((std::uint32_t{head[o]} << 24) | (std::uint32_t{head[o + 1]} << 16) |
                            (std::uint32_t{head[o + 2]} << 8) | head[o + 3]);
  };
  return {be32(16), be32(20)};
}

// ---- TIFF (baseline, uncompressed, chunky 8-bit RGB) ----

namespace {

struct TiffReader {
  std::span<const std::uint8_t> b;
  bool le = true;

  std::uint32_t u16(std::size_t o) const {
    if (o + 2 > b.size()) throw Error(ErrorKind::format, "tiff: truncated");
    return le ? (b[o] | (b[o + 1] << 8)) : ((b[o] << 8) | b[o + 1]);
  }
  std::uint32_t u32(std::size_t o) const {
    if (o + 4 > b.size()) throw Error(ErrorKind::format, "tiff: truncated");
    return le ? (std::uint32_t{b[o]} | (std::uint32_t{b[o + 1]} << 8) | (std::uint32_t{b[o + 2]} << 16) |
                 (std::uint32_t{b[o + 3]} << 24))
              : ((std::uint32_t{b[o]} << 24) | (std::uint32_t{b[o + 1]} << 16) |
                 (std::uint32_t{b[o + 2]} << 8) | std::uint32_t{b[o + 3]});
  }

  // Values of a SHORT or LONG entry, inline or at an offset.
  std::vector<std::uint32_t> values(std::size_t entry) const {
    const std::uint32_t type = u16(entry + 2);
    const std::uint32_t count = u32(entry + 4);
    const std::size_t unit = type == 3 ? 2 : type == 4 ? 4 : 0;
    if (unit == 0) throw Error(ErrorKind::format, "tiff: unsupported field type");
    if (count > b.size()) throw Error(ErrorKind::format, "tiff: bad field count");
    const std::size_t base = unit * count <= 4 ? entry + 8 : u32(entry + 8);
    std::vector<std::uint32_t> out(count);
    for (std::uint32_t i = 0; i < count; ++i) out[i] = unit == 2 ? u16(base + 2 * i) : u32(base + 4 * i);
    return out;
  }
};

void put16(std::vector<std::uint8_t>& o, std::uint32_t v) {
  o.push_back(v & 0xff);
  o.push_back((v >> 8) & 0xff);
}
void put32(std::vector<std::uint8_t>& o, std::uint32_t v) {
  put16(o, v & 0xffff);
  put16(o, v >> 16);
}

}  // namespace

RgbImage decode_tiff(std::span<const std::uint8_t> bytes) {
  if (!has_tiff_signature(bytes)) throw Error(ErrorKind::format, "tiff: bad signature");
  TiffReader r{bytes, bytes[0] == 'I'};
  const std::size_t ifd = r.u32(4);
  const std::uint32_t n = r.u16(ifd);
  std::uint32_t width = 0, height = 0, compression = 1, photometric = 2, spp = 1, planar = 1;
  std::uint32_t rows_per_strip = 0xffffffffu;
  std::vector<std::uint32_t> bits{1}, offsets, counts;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t e = ifd + 2 + 12 * i;
    const std::uint32_t tag = r.u16(e);
    switch (tag) {
      case 256: width = r.values(e).at(0); break;
      case 257: height = r.values(e).at(0); break;
      case 258: bits = r.values(e); break;
      case 259: compression = r.values(e).at(0); break;
      case 262: photometric = r.values(e).at(0); break;
      case 273: offsets = r.values(e); break;
      case 277: spp = r.values(e).at(0); break;
      case 278: rows_per_strip = r.values(e).at(0); break;
      case 279: counts = r.values(e); break;
      case 284: planar = r.values(e).at(0); break;
      default: break;
    }
  }
  if (width == 0 || height == 0) throw Error(ErrorKind::format, "tiff: missing dimensions");
  if (compression != 1) throw Error(ErrorKind::format, "tiff: only uncompressed images are supported");
  if (photometric != 2 || (spp != 3 && spp != 4) || planar != 1) {
    throw Error(ErrorKind::format, "tiff: only chunky RGB images are supported");
  }
  for (auto v : bits) {
    if (v != 8) throw Error(ErrorKind::format, "tiff: only 8-bit samples are supported");
  }
  if (offsets.empty() || offsets.size() != counts.size()) throw Error(ErrorKind::format, "tiff: bad strips");

  RgbImage out(static_cast<int>(width), static_cast<int>(height));
  const std::size_t row_bytes = static_cast<std::size_t>(width) * spp;
  const std::size_t rps = std::min<std::size_t>(rows_per_strip, height);
  std::size_t row = 0;
  for (std::size_t s = 0; s < offsets.size() && row < height; ++s) {
    const std::size_t rows = std::min(rps, height - row);
    if (static_cast<std::size_t>(offsets[s]) + rows * row_bytes > bytes.size()) {
      throw Error(ErrorKind::format, "tiff: strip outside file");
    }
    for (std::size_t k = 0; k < rows; ++k, ++row) {
      const std::uint8_t* src = bytes.data() + offsets[s] + k * row_bytes;
      std::uint8_t* dst = &out.data[row * width * 3];
      for (std::uint32_t x = 0; x < width; ++x) {
        dst[3 * x] = src[spp * x];
        dst[3 * x + 1] = src[spp * x + 1];
        dst[3 * x + 2] = src[spp * x + 2];
      }
    }
  }
  if (row != height) throw Error(ErrorKind::format, "tiff: missing strips");
  return out;
}

std::vector<std::uint8_t> encode_tiff(const RgbImage& img) {
  const std::uint32_t pixels = static_cast<std::uint32_t>(img.data.size());
  const std::uint32_t bits_off = 8 + pixels;
  const std::uint32_t ifd_off = bits_off + 6 + (pixels % 2);  // word aligned
  std::vector<std::uint8_t> o;
  o.reserve(ifd_off + 2 + 12 * 10 + 4);
  o.insert(o.end(), {'I', 'I', 42, 0});
  put32(o, ifd_off);
  o.insert(o.end(), img.data.begin(), img.data.end());
  put16(o, 8);
  put16(o, 8);
  put16(o, 8);
  if (pixels % 2) o.push_back(0);

  struct Entry {
    std::uint16_t tag, type;
    std::uint32_t count, value;
  };
  const Entry entries[] = {
      {256, 4, 1, static_cast<std::uint32_t>(img.width)},
      {257, 4, 1, static_cast<std::uint32_t>(img.height)},
      {258, 3, 3, bits_off},
      {259, 3, 1, 1},
      {262, 3, 1, 2},
      {273, 4, 1, 8},
      {277, 3, 1, 3},
      {278, 4, 1, static_cast<std::uint32_t>(img.height)},
      {279, 4, 1, pixels},
      {284, 3, 1, 1},
  };
  put16(o, std::size(entries));
  for (const auto& e : entries) {
    put16(o, e.tag);
    put16(o, e.type);
    put32(o, e.count);
    if (e.type == 3 && e.count == 1) {
      put16(o, e.value);
      put16(o, 0);
    } else {
      put32(o, e.value);
    }
  }
  put32(o, 0);
  return o;
}

RgbImage read_tiff(const fs::path& path) { return decode_tiff(read_bytes(path)); }
void write_tiff(const fs::path& path, const RgbImage& img) { write_bytes(path, encode_tiff(img)); }

RgbImage read_image(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (has_png_signature(bytes)) return decode_png(bytes);
  if (has_tiff_signature(bytes)) return decode_tiff(bytes);
  throw Error(ErrorKind::format, "unrecognised image format: " + path.string());
}

void write_image(const fs::path& path, const RgbImage& img) {
  const std::string ext = text::to_lower(path.extension().string());
  if (ext == ".png") return write_png(path, img);
  if (ext == ".tif" || ext == ".tiff") return write_tiff(path, img);
  throw Error(ErrorKind::format, "unsupported image extension: " + path.string());
}

bool is_image_file(const fs::path& path) {
  const std::string ext = text::to_lower(path.extension().string());
  return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

}  // namespace her2
