#include "mtlswin/png.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mtlswin {

namespace {

void put_u32be(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

void put_chunk(std::string& out, const char type[4], const std::string& data) {
  put_u32be(out, static_cast<uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  const uint32_t crc = static_cast<uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
  put_u32be(out, crc);
}

}  // namespace

void write_png_rgb(const std::string& path, int64_t w, int64_t h, const std::vector<uint8_t>& rgb) {
  if (static_cast<int64_t>(rgb.size()) != w * h * 3) {
    throw std::invalid_argument("png: byte count mismatch");
  }
  std::string raw;
  raw.reserve(static_cast<size_t>(h * (w * 3 + 1)));
  for (int64_t y = 0; y < h; ++y) {
    raw.push_back('\0');  // filter type 0
    raw.append(reinterpret_cast<const char*>(rgb.data() + y * w * 3), static_cast<size_t>(w * 3));
  }
  uLongf comp_bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<Bytef> comp(comp_bound);
  if (compress2(comp.data(), &comp_bound, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw std::runtime_error("png: zlib compression failed");
  }

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32be(ihdr, static_cast<uint32_t>(w));
  put_u32be(ihdr, static_cast<uint32_t>(h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", std::string(reinterpret_cast<char*>(comp.data()), comp_bound));
  put_chunk(out, "IEND", "");

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("png: cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("png: short write to " + path);
}

std::vector<uint8_t> heat_overlay_rgb(const std::vector<float>& gray, const std::vector<float>& heat) {
  if (gray.size() != heat.size()) throw std::invalid_argument("overlay: size mismatch");
  std::vector<uint8_t> rgb(gray.size() * 3);
  for (size_t i = 0; i < gray.size(); ++i) {
    const double g = std::clamp(static_cast<double>(gray[i]), 0.0, 1.0);
    const double t = std::clamp(static_cast<double>(heat[i]), 0.0, 1.0);
    const double r = std::clamp(3.0 * t, 0.0, 1.0);
    const double gg = std::clamp(3.0 * t - 1.0, 0.0, 1.0);
    const double b = std::clamp(3.0 * t - 2.0, 0.0, 1.0);
    const double alpha = 0.5 * t;  // stronger heat, stronger tint
    rgb[3 * i + 0] = static_cast<uint8_t>(std::lround(255.0 * ((1 - alpha) * g + alpha * r)));
    rgb[3 * i + 1] = static_cast<uint8_t>(std::lround(255.0 * ((1 - alpha) * g + alpha * gg)));
    rgb[3 * i + 2] = static_cast<uint8_t>(std::lround(255.0 * ((1 - alpha) * g + alpha * b)));
  }
  return rgb;
}

}  // namespace mtlswin
