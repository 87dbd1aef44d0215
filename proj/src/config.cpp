// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "cpcnn/binio.hpp"

namespace cpcnn {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  fail(ErrorCode::kInvalidArgument,
       "config key `" + std::string(key) + "`: `" + std::string(value) + "` is not " + expected);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "a number");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) bad_value(key, value, "a finite number");
  }
  return out;
}

int positive_int(std::string_view key, std::string_view value) {
  const int v = parse_number<int>(key, value);
  if (v <= 0) bad_value(key, value, "a positive integer");
  return v;
}

int non_negative_int(std::string_view key, std::string_view value) {
  const int v = parse_number<int>(key, value);
  if (v < 0) bad_value(key, value, "a non-negative integer");
  return v;
}

double positive_real(std::string_view key, std::string_view value) {
  const double v = parse_number<double>(key, value);
  if (v <= 0.0) bad_value(key, value, "a positive number");
  return v;
}

double non_negative_real(std::string_view key, std::string_view value) {
  const double v = parse_number<double>(key, value);
  if (v < 0.0) bad_value(key, value, "a non-negative number");
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

template <std::size_t N>
std::array<int, N> int_list(std::string_view key, std::string_view value) {
  std::array<int, N> out{};
  std::size_t n = 0;
  while (true) {
    const auto comma = value.find(',');
    if (n == N) bad_value(key, value, "a list of the right length");
    out[n++] = positive_int(key, trim(value.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  if (n != N) bad_value(key, value, "a list of the right length");
  return out;
}

template <std::size_t N>
std::string join(const std::array<int, N>& a) {
  std::string s;
  for (std::size_t i = 0; i < N; ++i) s += (i ? "," : "") + std::to_string(a[i]);
  return s;
}

std::string real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Key>& keys() {
  using V = std::string_view;
  static const std::vector<Key> table = {
      {"seed", [](RunConfig& c, V k, V v) { c.seed = parse_number<std::uint64_t>(k, v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"scenes", [](RunConfig& c, V k, V v) { c.scenes = positive_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.scenes); }},
      {"train_fraction",
       [](RunConfig& c, V k, V v) {
         c.train_fraction = parse_number<double>(k, v);
         if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) bad_value(k, v, "in (0, 1)");
       },
       [](const RunConfig& c) { return real(c.train_fraction); }},
      {"scene.width", [](RunConfig& c, V k, V v) { c.scene.width = positive_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.scene.width); }},
      {"scene.height", [](RunConfig& c, V k, V v) { c.scene.height = positive_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.scene.height); }},
      {"scene.count_min", [](RunConfig& c, V k, V v) { c.scene.count_min = non_negative_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.scene.count_min); }},
      {"scene.count_max", [](RunConfig& c, V k, V v) { c.scene.count_max = non_negative_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.scene.count_max); }},
      {"scene.clusters", [](RunConfig& c, V k, V v) { c.scene.cluster_count = positive_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.scene.cluster_count); }},
      {"scene.cluster_spread", [](RunConfig& c, V k, V v) { c.scene.cluster_spread = positive_real(k, v); },
       [](const RunConfig& c) { return real(c.scene.cluster_spread); }},
      {"scene.background", [](RunConfig& c, V k, V v) { c.scene.background = non_negative_real(k, v); },
       [](const RunConfig& c) { return real(c.scene.background); }},
      {"scene.blob_amplitude", [](RunConfig& c, V k, V v) { c.scene.blob_amplitude = non_negative_real(k, v); },
       [](const RunConfig& c) { return real(c.scene.blob_amplitude); }},
      {"scene.blob_sigma", [](RunConfig& c, V k, V v) { c.scene.blob_sigma = positive_real(k, v); },
       [](const RunConfig& c) { return real(c.scene.blob_sigma); }},
      {"scene.noise_sigma", [](RunConfig& c, V k, V v) { c.scene.noise_sigma = non_negative_real(k, v); },
       [](const RunConfig& c) { return real(c.scene.noise_sigma); }},
      {"sigma", [](RunConfig& c, V k, V v) { c.sigma = positive_real(k, v); },
       [](const RunConfig& c) { return real(c.sigma); }},
      {"classes",
       [](RunConfig& c, V k, V v) {
         c.classes = parse_number<int>(k, v);
         if (c.classes != kNumClasses) {
           fail(ErrorCode::kInvalidArgument, "config key `classes`: the density-level classifiers have exactly 5 "
                                             "classes, got " + std::string(v));
         }
       },
       [](const RunConfig& c) { return std::to_string(c.classes); }},
      {"gce.input", [](RunConfig& c, V k, V v) { c.gce_input = positive_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.gce_input); }},
      {"gce.epochs", [](RunConfig& c, V k, V v) { c.gce.epochs = positive_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.gce.epochs); }},
      {"gce.steps", [](RunConfig& c, V k, V v) { c.gce.steps_per_epoch = non_negative_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.gce.steps_per_epoch); }},
      {"gce.lr", [](RunConfig& c, V k, V v) { c.gce.learning_rate = static_cast<float>(positive_real(k, v)); },
       [](const RunConfig& c) { return real(c.gce.learning_rate); }},
      {"gce.decay_epoch", [](RunConfig& c, V k, V v) { c.gce.decay_epoch = non_negative_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.gce.decay_epoch); }},
      {"gce.decay_factor",
       [](RunConfig& c, V k, V v) { c.gce.decay_factor = static_cast<float>(positive_real(k, v)); },
       [](const RunConfig& c) { return real(c.gce.decay_factor); }},
      {"lce.patch", [](RunConfig& c, V k, V v) { c.lce_patch = positive_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.lce_patch); }},
      {"lce.epochs", [](RunConfig& c, V k, V v) { c.lce.epochs = positive_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.lce.epochs); }},
      {"lce.steps", [](RunConfig& c, V k, V v) { c.lce.steps_per_epoch = non_negative_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.lce.steps_per_epoch); }},
      {"lce.lr", [](RunConfig& c, V k, V v) { c.lce.learning_rate = static_cast<float>(positive_real(k, v)); },
       [](const RunConfig& c) { return real(c.lce.learning_rate); }},
      {"lce.decay_epoch", [](RunConfig& c, V k, V v) { c.lce.decay_epoch = non_negative_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.lce.decay_epoch); }},
      {"lce.decay_factor",
       [](RunConfig& c, V k, V v) { c.lce.decay_factor = static_cast<float>(positive_real(k, v)); },
       [](const RunConfig& c) { return real(c.lce.decay_factor); }},
      {"momentum",
       [](RunConfig& c, V k, V v) {
         const double m = parse_number<double>(k, v);
         if (!(m >= 0.0 && m < 1.0)) bad_value(k, v, "in [0, 1)");
         c.gce.momentum = c.lce.momentum = c.full.momentum = static_cast<float>(m);
       },
       [](const RunConfig& c) { return real(c.full.momentum); }},
      {"full.epochs", [](RunConfig& c, V k, V v) { c.full.epochs = positive_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.full.epochs); }},
      {"full.steps", [](RunConfig& c, V k, V v) { c.full.steps_per_epoch = non_negative_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.full.steps_per_epoch); }},
      {"full.lr", [](RunConfig& c, V k, V v) { c.full.learning_rate = static_cast<float>(positive_real(k, v)); },
       [](const RunConfig& c) { return real(c.full.learning_rate); }},
      {"full.disc_lr",
       [](RunConfig& c, V k, V v) { c.full.discriminator_learning_rate = static_cast<float>(positive_real(k, v)); },
       [](const RunConfig& c) { return real(c.full.discriminator_learning_rate); }},
      {"full.decay_epoch", [](RunConfig& c, V k, V v) { c.full.decay_epoch = non_negative_int(k, v); },
       [](const RunConfig& c) { return std::to_string(c.full.decay_epoch); }},
      {"full.decay_factor",
       [](RunConfig& c, V k, V v) { c.full.decay_factor = static_cast<float>(positive_real(k, v)); },
       [](const RunConfig& c) { return real(c.full.decay_factor); }},
      {"full.squared_loss", [](RunConfig& c, V k, V v) { c.full.squared_loss = parse_bool(k, v); },
       [](const RunConfig& c) { return std::string(c.full.squared_loss ? "true" : "false"); }},
      {"lambda_a", [](RunConfig& c, V k, V v) { c.full.lambda_a = static_cast<float>(non_negative_real(k, v)); },
       [](const RunConfig& c) { return real(c.full.lambda_a); }},
      {"fcnn.kernels",
       [](RunConfig& c, V k, V v) {
         c.fcnn_kernels = int_list<3>(k, v);
         for (int x : c.fcnn_kernels) {
           if (x % 2 == 0) bad_value(k, v, "a list of odd kernel sizes");
         }
       },
       [](const RunConfig& c) { return join(c.fcnn_kernels); }},
      {"density_scale",
       [](RunConfig& c, V k, V v) { c.density_scale = static_cast<float>(positive_real(k, v)); },
       [](const RunConfig& c) { return real(c.density_scale); }},
      {"infer.tile",
       [](RunConfig& c, V k, V v) {
         c.infer_tile = non_negative_int(k, v);
         if (c.infer_tile % 4 != 0) bad_value(k, v, "0 or a multiple of 4");
       },
       [](const RunConfig& c) { return std::to_string(c.infer_tile); }},
      {"disc.widths", [](RunConfig& c, V k, V v) { c.discriminator.widths = int_list<5>(k, v); },
       [](const RunConfig& c) { return join(c.discriminator.widths); }},
      {"ablation",
       [](RunConfig& c, V, V v) { c.ablation = ablation_from_tag(std::string(v)); },
       [](const RunConfig& c) { return ablation_tag(c.ablation); }},
  };
  return table;
}

}  // namespace

GeneratorArch RunConfig::generator_arch() const {
  GeneratorArch a;
  a.fcnn_kernels = fcnn_kernels;
  a.density_scale = density_scale;
  a.infer_tile = infer_tile;
  a.ablation = ablation;
  return a;
}

int RunConfig::train_count() const {
  const int n = static_cast<int>(std::lround(train_fraction * scenes));
  return std::clamp(n, 1, scenes - 1);
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  for (const Key& k : keys()) {
    if (key == k.name) {
      k.set(config, key, value);
      return;
    }
  }
  fail(ErrorCode::kInvalidArgument, "unknown config key `" + std::string(key) + "`");
}

RunConfig parse_config(std::string_view text, const std::string& source, RunConfig config) {
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) fail(ErrorCode::kInvalidArgument, where + "expected `key = value`");
    try {
      apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      fail(e.code(), where + e.what());
    }
  }
  if (config.scene.count_min > config.scene.count_max) {
    fail(ErrorCode::kInvalidArgument, source + ": scene.count_min exceeds scene.count_max");
  }
  return config;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  return parse_config(read_file(path), path, std::move(base));
}

std::string format_config(const RunConfig& config) {
  std::ostringstream out;
  for (const Key& k : keys()) out << k.name << " = " << k.get(config) << "\n";
  return out.str();
}

}  // namespace cpcnn
