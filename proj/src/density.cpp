// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cpcnn/binio.hpp"

namespace cpcnn {

DensityMap render_density(const DotScene& scene, double sigma) {
  if (!(sigma > 0.0)) fail(ErrorCode::kInvalidArgument, "render_density: sigma must be positive");
  if (scene.width <= 0 || scene.height <= 0) fail(ErrorCode::kInvalidArgument, "render_density: empty image");
  const int w = scene.width, h = scene.height;
  const double radius = 4.0 * sigma;
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> acc(static_cast<std::size_t>(w) * h, 0.0);
  std::vector<double> kernel;

  for (const Dot& d : scene.dots) {
    if (!(d.x >= 0.0 && d.x < w && d.y >= 0.0 && d.y < h)) {
      std::ostringstream os;
      os << "render_density: dot (" << d.x << ", " << d.y << ") outside " << w << "x" << h;
      fail(ErrorCode::kInvalidArgument, os.str());
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(d.x - radius)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(d.x + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(d.y - radius)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(d.y + radius)));
    const int bw = x1 - x0 + 1;
    kernel.assign(static_cast<std::size_t>(bw) * (y1 - y0 + 1), 0.0);
    double mass = 0.0;
    for (int y = y0; y <= y1; ++y) {
      const double dy = y + 0.5 - d.y;
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - d.x;
        const double r2 = dx * dx + dy * dy;
        if (r2 > radius * radius) continue;
        const double v = std::exp(-r2 * inv_two_var);
        kernel[static_cast<std::size_t>(y - y0) * bw + (x - x0)] = v;
        mass += v;
      }
    }
    if (mass <= 0.0) {
      // sigma so small that no pixel centre is inside the support
      acc[static_cast<std::size_t>(d.y) * w + static_cast<std::size_t>(d.x)] += 1.0;
      continue;
    }
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        acc[static_cast<std::size_t>(y) * w + x] += kernel[static_cast<std::size_t>(y - y0) * bw + (x - x0)] / mass;
  }

  DensityMap map({1, h, w});
  for (std::size_t i = 0; i < acc.size(); ++i) map[i] = static_cast<float>(acc[i]);
  return map;
}

double count_of(const DensityMap& map) { return tensor_sum(map); }

DensityMap crop_density(const DensityMap& map, const Rect& rect) { return crop(map, rect); }

std::string format_scene(const DotScene& scene) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << scene.width << ' ' << scene.height << '\n';
  for (const Dot& d : scene.dots) os << d.x << ' ' << d.y << '\n';
  return os.str();
}

DotScene parse_scene(const std::string& text) {
  std::istringstream in(text);
  DotScene scene;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kInvalidArgument, "scene: missing `W H` header");
  {
    std::istringstream hdr(line);
    if (!(hdr >> scene.width >> scene.height) || scene.width <= 0 || scene.height <= 0) {
      fail(ErrorCode::kInvalidArgument, "scene: bad header `" + line + "`");
    }
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    Dot d;
    if (!(row >> d.x >> d.y)) fail(ErrorCode::kInvalidArgument, "scene: bad dot on line " + std::to_string(lineno));
    if (!(d.x >= 0.0 && d.x < scene.width && d.y >= 0.0 && d.y < scene.height)) {
      fail(ErrorCode::kInvalidArgument, "scene: dot outside image on line " + std::to_string(lineno));
    }
    scene.dots.push_back(d);
  }
  return scene;
}

void save_scene(const std::string& path, const DotScene& scene) { write_file(path, format_scene(scene)); }

DotScene load_scene(const std::string& path) { return parse_scene(read_file(path)); }

std::string encode_density(const DensityMap& map) {
  const int h = image_height(map), w = image_width(map);
  ByteWriter out;
  out.bytes("CPDM");
  out.u32(static_cast<std::uint32_t>(w));
  out.u32(static_cast<std::uint32_t>(h));
  for (float v : map.data()) out.f32(v);
  return out.data();
}

DensityMap decode_density(const std::string& bytes) {
  ByteReader in(bytes, "density map");
  if (in.bytes(4) != "CPDM") fail(ErrorCode::kMagicMismatch, "density map: bad magic (expected CPDM)");
  const std::uint32_t w = in.u32();
  const std::uint32_t h = in.u32();
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) {
    fail(ErrorCode::kInvalidArgument, "density map: implausible size " + std::to_string(w) + "x" + std::to_string(h));
  }
  if (in.remaining() < static_cast<std::size_t>(w) * h * 4) {
    fail(ErrorCode::kTruncated, "density map: truncated raster");
  }
  DensityMap map({1, static_cast<int>(h), static_cast<int>(w)});
  for (float& v : map.data()) v = in.f32();
  return map;
}

void save_density(const std::string& path, const DensityMap& map) { write_file(path, encode_density(map)); }

DensityMap load_density(const std::string& path) { return decode_density(read_file(path)); }

}  // namespace cpcnn
