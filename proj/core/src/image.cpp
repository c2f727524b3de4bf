#include "camel/image.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <fstream>

namespace camel {

std::string to_string(Label l) { return l == Label::CA ? "CA" : "NC"; }

Label parse_label(const std::string& s) {
  if (s == "CA" || s == "1") return Label::CA;
  if (s == "NC" || s == "0") return Label::NC;
  throw ConfigError("unknown label '" + s + "'");
}

float quantize8(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<float>(std::lround(c * 255.0f)) / 255.0f;
}

namespace {

void write_header(std::ofstream& out, const char* magic, int w, int h) {
  out << magic << "\n" << w << " " << h << "\n255\n";
}

// Reads a P5/P6 header; returns width, height.
std::pair<int, int> read_header(std::ifstream& in, const std::string& magic, const std::filesystem::path& path) {
  auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string rest;
        std::getline(in, rest);
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
  if (token() != magic) throw IoError(path.string() + ": expected " + magic);
  const int w = std::stoi(token());
  const int h = std::stoi(token());
  if (std::stoi(token()) != 255) throw IoError(path.string() + ": only maxval 255 supported");
  if (w <= 0 || h <= 0) throw IoError(path.string() + ": bad dimensions");
  return {w, h};
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Image& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ConfigError("write_ppm: expected a 3-channel image");
  const int h = img.dim(1), w = img.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_header(out, "P6", w, h);
  std::string buf(static_cast<std::size_t>(w) * h * 3, '\0');
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] = static_cast<char>(std::lround(v * 255.0f));
      }
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing image " + path.string());
  const auto [w, h] = read_header(in, "P6", path);
  std::string buf(static_cast<std::size_t>(w) * h * 3, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!in) throw IoError(path.string() + ": truncated pixel data");
  Image img({3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) = static_cast<float>(static_cast<unsigned char>(buf[(static_cast<std::size_t>(y) * w + x) * 3 + c])) / 255.0f;
      }
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const Mask& mask) {
  if (mask.rank() != 2) throw ConfigError("write_pgm: expected a 2-d mask");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_header(out, "P5", mask.dim(1), mask.dim(0));
  std::string buf(mask.size(), '\0');
  for (std::size_t i = 0; i < mask.size(); ++i) buf[i] = mask[i] ? static_cast<char>(255) : 0;
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Mask read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing mask " + path.string());
  const auto [w, h] = read_header(in, "P5", path);
  std::string buf(static_cast<std::size_t>(w) * h, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!in) throw IoError(path.string() + ": truncated pixel data");
  Mask mask({h, w});
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = static_cast<unsigned char>(buf[i]) >= 128 ? 1 : 0;
  return mask;
}

}  // namespace camel
