// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance --config ablation.cfg [--work DIR] [--only 1,2,...] [--seeds 3]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "CLI11.hpp"
#include "cpcnn/bundle.hpp"
#include "cpcnn/classifier.hpp"
#include "cpcnn/config.hpp"
#include "cpcnn/density.hpp"
#include "cpcnn/error.hpp"
#include "cpcnn/gradcheck.hpp"
#include "cpcnn/image.hpp"
#include "cpcnn/metrics.hpp"
#include "cpcnn/pipeline.hpp"
#include "cpcnn/rng.hpp"
#include "cpcnn/synth.hpp"
#include "cpcnn/workflow.hpp"

using namespace cpcnn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// 1. gradient fidelity

Verdict gradient_fidelity() {
  const auto t0 = Clock::now();
  const std::vector<GradCheck> checks = all_gradchecks();
  const double secs = seconds_since(t0);
  double worst_layer = 0.0, worst_composite = 0.0;
  std::vector<std::string> failed;
  for (const GradCheck& c : checks) {
    double& worst = c.threshold == kCompositeGradTolerance ? worst_composite : worst_layer;
    worst = std::max(worst, c.max_rel_error);
    if (!c.passed()) failed.push_back(c.name);
  }
  std::string detail = fmt("%zu checks, max rel err %.2e (layers) %.2e (composite), %.1f s", checks.size(),
                           worst_layer, worst_composite, secs);
  for (const std::string& f : failed) detail += "; FAILED " + f;
  return {failed.empty() && secs < 60.0, detail};
}

// ---------------------------------------------------------------------------
// 2. mass conservation

Verdict mass_conservation() {
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::mt19937_64 rng = make_stream(2024, "mass", static_cast<std::uint64_t>(i));
    SceneSpec spec;
    spec.width = std::uniform_int_distribution<int>(16, 96)(rng);
    spec.height = std::uniform_int_distribution<int>(16, 96)(rng);
    spec.count_min = 0;
    spec.count_max = std::uniform_int_distribution<int>(0, 200)(rng);
    spec.cluster_spread = std::uniform_real_distribution<double>(2.0, 20.0)(rng);
    spec.seed = rng();
    const SyntheticScene s = generate_scene(spec);
    const double sigma = std::uniform_real_distribution<double>(0.5, 4.0)(rng);
    const DensityMap m = render_density(s.scene, sigma);
    worst = std::max(worst, std::abs(count_of(m) - static_cast<double>(s.scene.dots.size())));
  }
  return {worst < 1e-4, fmt("100 scenes, sigma in [0.5,4], max |sum - count| = %.3g", worst)};
}

// ---------------------------------------------------------------------------
// 3. resolution contract

Verdict resolution_contract(const RunConfig& config) {
  std::mt19937_64 init = make_stream(config.seed, "init");
  const ClassifierModel gce = make_classifier(gce_arch(config.gce_input), init);
  const ClassifierModel lce = make_classifier(lce_arch(config.lce_patch), init);
  int checked = 0;
  std::string bad;
  for (const AblationConfig& a : kAblationLadder) {
    GeneratorArch arch = config.generator_arch();
    arch.ablation = a;
    const GeneratorModel g = make_generator(arch, init);
    for (int size : {32, 48, 64, 128}) {
      Image img({1, size, size});
      std::mt19937_64 rng(static_cast<std::uint64_t>(size));
      for (float& v : img.data()) v = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
      const ContextMap gc = a.use_gce ? build_global_context_infer(img, gce) : ContextMap{};
      const ContextMap lc = a.use_lce ? build_local_context(img, lce) : ContextMap{};
      const DensityMap out = generate(g, img, a.use_gce ? &gc : nullptr, a.use_lce ? &lc : nullptr);
      const int expect = a.has_fcnn() ? size : size / 4;
      ++checked;
      if (out.shape() != std::vector<int>{1, expect, expect}) {
        bad += fmt(" %s@%d", ablation_tag(a).c_str(), size);
      }
    }
  }
  return {bad.empty(), fmt("%d generator runs (F-CNN rows full size, DME-only at 1/4)", checked) +
                           (bad.empty() ? "" : "; wrong dims:" + bad)};
}

// ---------------------------------------------------------------------------
// 4. metric oracles: direct two-pass windowed statistics with a 2-D Gaussian

double psnr_oracle(const DensityMap& pred, const DensityMap& gt) {
  double peak = 0.0;
  for (float v : gt.data()) peak = std::max(peak, static_cast<double>(v));
  double se = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double a = std::clamp(static_cast<double>(static_cast<float>(pred[i] * (1.0 / peak))), 0.0, 1.0);
    const double b = std::clamp(static_cast<double>(static_cast<float>(gt[i] * (1.0 / peak))), 0.0, 1.0);
    se += (a - b) * (a - b);
  }
  const double mse = se / static_cast<double>(gt.size());
  return mse == 0.0 ? kPsnrCap : std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double ssim_oracle(const DensityMap& pred, const DensityMap& gt) {
  double peak = 0.0;
  for (float v : gt.data()) peak = std::max(peak, static_cast<double>(v));
  const int h = gt.dim(1), w = gt.dim(2);
  auto px = [&](const DensityMap& m, int y, int x) {
    return std::clamp(static_cast<double>(static_cast<float>(m.at(0, y, x) * (1.0 / peak))), 0.0, 1.0);
  };
  double k[11][11], ksum = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) ksum += k[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / (2 * 2.25));
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  int n = 0;
  for (int y = 0; y <= h - 11; ++y)
    for (int x = 0; x <= w - 11; ++x) {
      double mx = 0.0, my = 0.0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          mx += k[i][j] * px(pred, y + i, x + j) / ksum;
          my += k[i][j] * px(gt, y + i, x + j) / ksum;
        }
      double vx = 0.0, vy = 0.0, cv = 0.0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double dx = px(pred, y + i, x + j) - mx, dy = px(gt, y + i, x + j) - my;
          vx += k[i][j] * dx * dx / ksum;
          vy += k[i][j] * dy * dy / ksum;
          cv += k[i][j] * dx * dy / ksum;
        }
      total += (2 * mx * my + c1) * (2 * cv + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++n;
    }
  return total / n;
}

Verdict metric_oracles() {
  std::mt19937_64 rng = make_stream(4, "metrics");
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  double psnr_err = 0.0, ssim_err = 0.0, self_err = 0.0;
  for (int t = 0; t < 50; ++t) {
    DensityMap a({1, 32, 32}), b({1, 32, 32});
    for (float& v : a.data()) v = u(rng) * 0.05f;
    for (float& v : b.data()) v = u(rng) * 0.05f;
    // half the pairs are correlated, so SSIM spans a useful range
    if (t % 2 == 0) {
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.8f * b[i] + 0.2f * a[i];
    }
    psnr_err = std::max(psnr_err, std::abs(psnr(a, b) - psnr_oracle(a, b)));
    ssim_err = std::max(ssim_err, std::abs(ssim(a, b) - ssim_oracle(a, b)));
    self_err = std::max(self_err, std::abs(ssim(b, b) - 1.0));
  }
  int order_violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = std::uniform_int_distribution<int>(1, 50)(rng);
    std::vector<double> gt(n), est(n);
    for (int i = 0; i < n; ++i) {
      gt[i] = 200.0 * u(rng);
      est[i] = 200.0 * u(rng);
    }
    const CountErrors e = mae_mse(gt, est);
    if (e.mae > e.mse) ++order_violations;
  }
  const CountErrors ex = mae_mse({10, 20}, {12, 16});
  const bool example = ex.mae == 3.0 && ex.mse == std::sqrt(10.0);
  const bool ok = psnr_err < 1e-6 && ssim_err < 1e-6 && self_err <= 1e-9 && order_violations == 0 && example;
  return {ok, fmt("50 pairs: |psnr-ref| %.2g, |ssim-ref| %.2g, |ssim(x,x)-1| %.2g; MAE>MSE in %d/1000; "
                  "worked example %s",
                  psnr_err, ssim_err, self_err, order_violations, example ? "exact" : "WRONG")};
}

// ---------------------------------------------------------------------------
// 5-7. seeded ablation runs

struct SeedRun {
  std::uint64_t seed = 0;
  std::map<std::string, EvalReport> reports;
  std::vector<std::string> errors;
  EstimatorAccuracy accuracy;
  bool estimators_unchanged = true;
  double seconds = 0.0;
};

const std::vector<AblationConfig>& trained_rows() {
  static const std::vector<AblationConfig> rows(kAblationLadder.begin(), kAblationLadder.end());
  return rows;
}

SeedRun run_seed(RunConfig config, std::uint64_t seed, const fs::path& root) {
  const auto t0 = Clock::now();
  SeedRun r;
  r.seed = seed;
  config.seed = seed;
  const RunLayout layout{root};
  synth_corpus(config, layout.corpus(), true);
  train_stage(config, layout, Stage::kGce);
  train_stage(config, layout, Stage::kLce);
  r.accuracy = estimator_accuracy(config, layout);
  const std::string gce = slurp(stage_bundle(layout, Stage::kGce, {}));
  const std::string lce = slurp(stage_bundle(layout, Stage::kLce, {}));
  for (const AblationConfig& a : trained_rows()) {
    config.ablation = a;
    const auto ts = Clock::now();
    train_stage(config, layout, Stage::kFull);
    std::printf("  seed %llu: trained %-12s in %6.1f s\n", static_cast<unsigned long long>(seed),
                ablation_tag(a).c_str(), seconds_since(ts));
    std::fflush(stdout);
    r.estimators_unchanged = r.estimators_unchanged && slurp(stage_bundle(layout, Stage::kGce, {})) == gce &&
                             slurp(stage_bundle(layout, Stage::kLce, {})) == lce;
  }
  for (const EvalRow& row : evaluate_rows(config, layout, trained_rows())) {
    if (row.report) {
      r.reports[ablation_tag(row.config)] = *row.report;
    } else {
      r.errors.push_back(row.error);
    }
  }
  r.seconds = seconds_since(t0);
  return r;
}

struct Stat {
  double mean = 0.0, lo = 0.0, hi = 0.0;
  double spread() const { return hi - lo; }
};

Stat stat_of(const std::vector<SeedRun>& runs, const std::string& tag, double EvalReport::*field) {
  Stat s{0.0, 1e300, -1e300};
  for (const SeedRun& r : runs) {
    const double v = r.reports.at(tag).*field;
    s.mean += v;
    s.lo = std::min(s.lo, v);
    s.hi = std::max(s.hi, v);
  }
  s.mean /= static_cast<double>(runs.size());
  return s;
}

Verdict ablation_ordering(const std::vector<SeedRun>& runs, double total_seconds) {
  for (const SeedRun& r : runs) {
    if (!r.errors.empty()) return {false, "evaluation error: " + r.errors.front()};
  }
  std::printf("  %-12s %-6s %10s %10s %10s %10s\n", "config", "seed", "mae", "mse", "psnr", "ssim");
  for (const AblationConfig& a : trained_rows()) {
    const std::string tag = ablation_tag(a);
    for (const SeedRun& r : runs) {
      const EvalReport& e = r.reports.at(tag);
      std::printf("  %-12s %-6llu %10.4f %10.4f %10.4f %10.4f\n", tag.c_str(), static_cast<unsigned long long>(r.seed),
                  e.mae, e.mse, e.mean_psnr, e.mean_ssim);
    }
  }
  const std::string c1 = ablation_tag(kAblationLadder[0]), c3 = ablation_tag(kAblationLadder[2]),
                    c4 = ablation_tag(kAblationLadder[3]);
  const Stat mae1 = stat_of(runs, c1, &EvalReport::mae), mae3 = stat_of(runs, c3, &EvalReport::mae),
             mae4 = stat_of(runs, c4, &EvalReport::mae);
  const Stat ssim1 = stat_of(runs, c1, &EvalReport::mean_ssim), ssim3 = stat_of(runs, c3, &EvalReport::mean_ssim);
  // margin between seed means against the wider of the two per-config seed ranges
  const double mae_margin = mae1.mean - mae3.mean, mae_spread = std::max(mae1.spread(), mae3.spread());
  const double ssim_margin = ssim3.mean - ssim1.mean, ssim_spread = std::max(ssim1.spread(), ssim3.spread());
  const bool mae_ok = mae_margin > mae_spread;
  const bool ssim_ok = ssim_margin > ssim_spread;
  const bool adv_ok = mae4.mean <= 1.10 * mae3.mean;
  const bool time_ok = total_seconds < 30 * 60;
  return {mae_ok && ssim_ok && adv_ok && time_ok,
          fmt("MAE c1 %.3f vs c3 %.3f: margin %.3f, spread %.3f [%s]; SSIM c1 %.4f vs c3 %.4f: margin %.4f, "
              "spread %.4f [%s]; c4 MAE %.3f = %.1f%% of c3 [%s]; %zu seeds in %.0f s [%s]",
              mae1.mean, mae3.mean, mae_margin, mae_spread, mae_ok ? "ok" : "fail", ssim1.mean, ssim3.mean,
              ssim_margin, ssim_spread, ssim_ok ? "ok" : "fail", mae4.mean, 100.0 * mae4.mean / mae3.mean,
              adv_ok ? "ok" : "fail", runs.size(), total_seconds, time_ok ? "ok" : "fail")};
}

Verdict estimator_sanity(const std::vector<SeedRun>& runs) {
  double gce = 1.0, lce = 1.0;
  std::string per_seed;
  for (const SeedRun& r : runs) {
    gce = std::min(gce, r.accuracy.gce);
    lce = std::min(lce, r.accuracy.lce);
    per_seed += fmt(" seed %llu: %.1f%%/%.1f%%", static_cast<unsigned long long>(r.seed), 100 * r.accuracy.gce,
                    100 * r.accuracy.lce);
  }
  return {gce > 0.7 && lce > 0.7, fmt("held-out accuracy GCE/LCE (chance 20%%):") + per_seed};
}

Verdict freeze_contract(const std::vector<SeedRun>& runs) {
  int ok = 0;
  for (const SeedRun& r : runs) ok += r.estimators_unchanged ? 1 : 0;
  return {ok == static_cast<int>(runs.size()),
          fmt("GCE/LCE bundles byte-identical across %zu full-stage runs in %d/%zu seeds",
              trained_rows().size(), ok, runs.size())};
}

// ---------------------------------------------------------------------------
// 8. determinism

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

void pipeline_once(const RunConfig& config, const fs::path& root) {
  const RunLayout layout{root};
  synth_corpus(config, layout.corpus(), true);
  train_stage(config, layout, Stage::kGce);
  train_stage(config, layout, Stage::kLce);
  train_stage(config, layout, Stage::kFull);
  const std::string csv = eval_rows_csv(evaluate_rows(config, layout, {config.ablation}));
  std::ofstream(layout.eval_csv(), std::ios::binary) << csv;
}

Verdict determinism(RunConfig config, const fs::path& work) {
  // a reduced corpus and schedule; every stage and the adversarial row still run
  config.seed = 11;
  apply_setting(config, "scenes", "40");
  apply_setting(config, "gce.steps", "200");
  apply_setting(config, "lce.steps", "200");
  apply_setting(config, "full.epochs", "3");
  apply_setting(config, "full.steps", "40");
  config.ablation = kAblationLadder[3];
  pipeline_once(config, work / "det_a");
  pipeline_once(config, work / "det_b");
  const auto a = tree_bytes(work / "det_a"), b = tree_bytes(work / "det_b");
  std::size_t bundles = 0, csvs = 0;
  for (const auto& [name, bytes] : a) {
    bundles += name.ends_with(".cpnw");
    csvs += name.ends_with(".csv");
  }
  return {a == b && bundles == 3, fmt("two synth->train x3->eval runs: %zu files (%zu bundles, %zu CSV) %s", a.size(),
                                      bundles, csvs, a == b ? "byte-identical" : "DIFFER")};
}

// ---------------------------------------------------------------------------
// 9. format round-trips

template <typename F>
bool structured_error(F&& f, ErrorCode expected) {
  try {
    f();
  } catch (const Error& e) {
    return e.code() == expected;
  } catch (...) {
    return false;
  }
  return false;
}

Verdict format_round_trips(const fs::path& work) {
  std::mt19937_64 rng = make_stream(9, "formats");
  std::uniform_real_distribution<float> u(-1e3f, 1e3f);
  bool exact = true;
  int truncations = 0, truncation_ok = 0;
  for (int t = 0; t < 20; ++t) {
    DensityMap m({1, 4 + t, 9});
    for (float& v : m.data()) v = u(rng);
    m[0] = -0.0f;
    m[1] = std::numeric_limits<float>::denorm_min();
    m[2] = std::numeric_limits<float>::max();
    const std::string bytes = encode_density(m);
    const DensityMap back = decode_density(bytes);
    exact = exact && back.shape() == m.shape() &&
            std::memcmp(back.data().data(), m.data().data(), m.size() * sizeof(float)) == 0;
    for (std::size_t cut = 0; cut < bytes.size(); cut += 1 + bytes.size() / 40) {
      ++truncations;
      truncation_ok += structured_error([&] { decode_density(bytes.substr(0, cut)); }, ErrorCode::kTruncated);
    }
  }
  std::mt19937_64 init = make_stream(9, "init");
  GeneratorArch arch;
  const GeneratorModel g = make_generator(arch, init);
  const DiscriminatorModel d = make_discriminator(init, DiscriminatorArch{{4, 8, 8, 8, 8}});
  const ModelBundle bundle = to_bundle(g, &d);
  const std::string bytes = encode_bundle(bundle);
  exact = exact && encode_bundle(decode_bundle(bytes)) == bytes && decode_bundle(bytes) == bundle;
  const fs::path file = work / "roundtrip.cpnw";
  save_bundle(file.string(), bundle);
  exact = exact && slurp(file) == bytes && encode_bundle(load_bundle(file.string())) == bytes;
  for (std::size_t cut = 0; cut < bytes.size(); cut += 1 + bytes.size() / 200) {
    ++truncations;
    truncation_ok += structured_error([&] { decode_bundle(std::string_view(bytes).substr(0, cut)); },
                                      ErrorCode::kTruncated);
  }
  std::ofstream(file, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() / 2);
  ++truncations;
  truncation_ok += structured_error([&] { load_bundle(file.string()); }, ErrorCode::kTruncated);

  std::string bad_bundle = bytes, bad_density = encode_density(DensityMap({1, 2, 2}));
  bad_bundle[0] ^= 0x5a;
  bad_density[1] ^= 0x5a;
  const bool magic = structured_error([&] { decode_bundle(bad_bundle); }, ErrorCode::kMagicMismatch) &&
                     structured_error([&] { decode_density(bad_density); }, ErrorCode::kMagicMismatch);
  return {exact && magic && truncation_ok == truncations,
          fmt("bit-exact %s; corrupted magic -> %s; %d/%d truncations -> kTruncated", exact ? "yes" : "NO",
              magic ? "kMagicMismatch" : "WRONG", truncation_ok, truncations)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-9"};
  std::string config_path, work_dir, only;
  int seeds = 3;
  app.add_option("--config", config_path, "Ablation run configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--work", work_dir, "Scratch directory (default: a fresh temp dir, removed afterwards)");
  app.add_option("--only", only, "Comma-separated criteria to run");
  app.add_option("--seeds", seeds, "Seeds for the ablation run")->check(CLI::Range(2, 10));
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  for (std::stringstream ss(only); ss.good();) {
    std::string item;
    std::getline(ss, item, ',');
    if (!item.empty()) selected.insert(std::stoi(item));
  }
  auto wanted = [&](int c) { return selected.empty() || selected.count(c) > 0; };

  const bool temp = work_dir.empty();
  const fs::path work = temp ? fs::temp_directory_path() / ("cpcnn_acceptance_" + std::to_string(::getpid()))
                             : fs::path(work_dir);
  fs::create_directories(work);

  std::map<int, Verdict> verdicts;
  auto run = [&](int c, const std::function<Verdict()>& f) {
    if (!wanted(c)) return;
    try {
      verdicts[c] = f();
    } catch (const std::exception& e) {
      verdicts[c] = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[criterion %d done]\n", c);
    std::fflush(stdout);
  };

  RunConfig config;
  try {
    config = load_config(config_path);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  run(1, gradient_fidelity);
  run(2, mass_conservation);
  run(3, [&] { return resolution_contract(config); });
  run(4, metric_oracles);
  if (wanted(5) || wanted(6) || wanted(7)) {
    std::vector<SeedRun> runs;
    const auto t0 = Clock::now();
    std::string error;
    try {
      for (int s = 1; s <= seeds; ++s) {
        runs.push_back(run_seed(config, static_cast<std::uint64_t>(s), work / ("seed" + std::to_string(s))));
      }
    } catch (const std::exception& e) {
      error = std::string("exception: ") + e.what();
    }
    const double total = seconds_since(t0);
    auto guarded = [&](int c, const std::function<Verdict()>& f) {
      run(c, [&]() -> Verdict { return error.empty() ? f() : Verdict{false, error}; });
    };
    guarded(5, [&] { return ablation_ordering(runs, total); });
    guarded(6, [&] { return estimator_sanity(runs); });
    guarded(7, [&] { return freeze_contract(runs); });
  }
  run(8, [&] { return determinism(config, work); });
  run(9, [&] { return format_round_trips(work); });

  static const char* const kNames[] = {"",
                                       "gradient fidelity",
                                       "mass conservation",
                                       "resolution contract",
                                       "metric oracles",
                                       "ablation ordering",
                                       "context estimator sanity",
                                       "freeze contract",
                                       "determinism",
                                       "format round-trips"};
  bool all = true;
  std::printf("\n");
  for (const auto& [c, v] : verdicts) {
    std::printf("criterion %d %-26s %s  %s\n", c, kNames[c], v.pass ? "PASS" : "FAIL", v.detail.c_str());
    all = all && v.pass;
  }
  if (temp) fs::remove_all(work);
  return all ? 0 : 1;
}
