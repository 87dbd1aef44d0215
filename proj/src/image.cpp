// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <tuple>

#include "cpcnn/binio.hpp"

namespace cpcnn {

namespace {

void require_chw(const Tensor<float>& t, const char* what) {
  if (t.rank() != 3) fail(ErrorCode::kShapeMismatch, std::string(what) + ": expected [C,H,W], got " + shape_str(t.shape()));
}

}  // namespace

int image_height(const Tensor<float>& t) {
  require_chw(t, "image_height");
  return t.dim(1);
}

int image_width(const Tensor<float>& t) {
  require_chw(t, "image_width");
  return t.dim(2);
}

Tensor<float> crop(const Tensor<float>& t, const Rect& r) {
  require_chw(t, "crop");
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  if (r.width <= 0 || r.height <= 0 || r.x < 0 || r.y < 0 || r.x + r.width > w || r.y + r.height > h) {
    fail(ErrorCode::kInvalidArgument, "crop: rect (" + std::to_string(r.x) + "," + std::to_string(r.y) + " " +
                                          std::to_string(r.width) + "x" + std::to_string(r.height) +
                                          ") outside " + std::to_string(w) + "x" + std::to_string(h));
  }
  Tensor<float> out({c, r.height, r.width});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < r.height; ++y)
      std::copy_n(&t.at(ch, r.y + y, r.x), r.width, &out.at(ch, y, 0));
  return out;
}

Tensor<float> flip_horizontal(const Tensor<float>& t) {
  require_chw(t, "flip_horizontal");
  Tensor<float> out = t;
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y) std::reverse(&out.at(ch, y, 0), &out.at(ch, y, 0) + w);
  return out;
}

Tensor<float> resize_bilinear(const Tensor<float>& t, int out_h, int out_w) {
  require_chw(t, "resize_bilinear");
  if (out_h <= 0 || out_w <= 0) fail(ErrorCode::kInvalidArgument, "resize_bilinear: non-positive target size");
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  if (h == out_h && w == out_w) return t;
  auto taps = [](int out, int in, int i) {
    const double src = (i + 0.5) * static_cast<double>(in) / out - 0.5;
    const double clamped = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(clamped));
    const int hi = std::min(lo + 1, in - 1);
    return std::make_tuple(lo, hi, static_cast<float>(clamped - lo));
  };
  Tensor<float> out({c, out_h, out_w});
  for (int y = 0; y < out_h; ++y) {
    const auto [y0, y1, fy] = taps(out_h, h, y);
    for (int x = 0; x < out_w; ++x) {
      const auto [x0, x1, fx] = taps(out_w, w, x);
      for (int ch = 0; ch < c; ++ch) {
        const float top = t.at(ch, y0, x0) * (1 - fx) + t.at(ch, y0, x1) * fx;
        const float bottom = t.at(ch, y1, x0) * (1 - fx) + t.at(ch, y1, x1) * fx;
        out.at(ch, y, x) = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

Tensor<float> sum_pool(const Tensor<float>& t, int factor) {
  require_chw(t, "sum_pool");
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  if (factor <= 0 || h % factor != 0 || w % factor != 0) {
    fail(ErrorCode::kShapeMismatch, "pooling factor " + std::to_string(factor) + " does not divide " +
                                        std::to_string(w) + "x" + std::to_string(h));
  }
  Tensor<float> out({c, h / factor, w / factor});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h / factor; ++y)
      for (int x = 0; x < w / factor; ++x) {
        double s = 0.0;
        for (int i = 0; i < factor; ++i)
          for (int j = 0; j < factor; ++j) s += t.at(ch, y * factor + i, x * factor + j);
        out.at(ch, y, x) = static_cast<float>(s);
      }
  return out;
}

Tensor<float> box_downsample(const Tensor<float>& t, int factor) {
  Tensor<float> out = sum_pool(t, factor);
  const float inv = 1.0f / static_cast<float>(factor * factor);
  for (float& v : out.data()) v *= inv;
  return out;
}

Tensor<float> mass_upsample(const Tensor<float>& t, int factor) {
  require_chw(t, "mass_upsample");
  if (factor <= 0) fail(ErrorCode::kInvalidArgument, "mass_upsample: non-positive factor");
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  const float inv = 1.0f / static_cast<float>(factor * factor);
  Tensor<float> out({c, h * factor, w * factor});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h * factor; ++y)
      for (int x = 0; x < w * factor; ++x) out.at(ch, y, x) = t.at(ch, y / factor, x / factor) * inv;
  return out;
}

Image read_pgm(const std::string& path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  // Header tokens are separated by whitespace and may be interleaved with # comments.
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (token() != "P5") fail(ErrorCode::kMagicMismatch, path + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    fail(ErrorCode::kInvalidArgument, path + ": malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    fail(ErrorCode::kInvalidArgument, path + ": unsupported PGM geometry or maxval");
  }
  ++pos;  // single whitespace byte before the raster
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() < pos + n) fail(ErrorCode::kTruncated, path + ": PGM raster truncated");
  Image img({1, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    img[i] = static_cast<float>(static_cast<unsigned char>(bytes[pos + i])) / static_cast<float>(maxval);
  }
  return img;
}

void write_pgm(const std::string& path, const Image& img) {
  const int h = image_height(img), w = image_width(img);
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float v = std::clamp(img.at(0, y, x), 0.0f, 1.0f);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
  write_file(path, out);
}

void write_pgm_scaled(const std::string& path, const Tensor<float>& map) {
  float peak = 0.0f;
  for (float v : map.data()) peak = std::max(peak, v);
  Image scaled = map;
  if (peak > 0.0f) {
    for (float& v : scaled.data()) v /= peak;
  }
  write_pgm(path, scaled);
}

}  // namespace cpcnn
