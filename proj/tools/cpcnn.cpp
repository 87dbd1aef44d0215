// SPDX-License-Identifier: Apache-2.0
// Operator commands: synth, train, infer, eval, gradcheck.
// Exit codes: 0 success, 1 usage error, 2 data or contract error.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cpcnn/config.hpp"
#include "cpcnn/density.hpp"
#include "cpcnn/error.hpp"
#include "cpcnn/gradcheck.hpp"
#include "cpcnn/image.hpp"
#include "cpcnn/workflow.hpp"

namespace {

using namespace cpcnn;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  bool force = false;
  std::vector<std::string> settings;
};

// File values first, then --set overrides in order, then --seed.
RunConfig resolve_config(const Globals& g) {
  RunConfig c = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
  for (const std::string& s : g.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kInvalidArgument, "--set expects key=value, got `" + s + "`");
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t"), e = v.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    apply_setting(c, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  if (g.seed) c.seed = *g.seed;
  return c;
}

int cmd_synth(const Globals& g, std::optional<int> n) {
  RunConfig c = resolve_config(g);
  if (n) apply_setting(c, "scenes", std::to_string(*n));
  const RunLayout layout{g.out};
  const SynthSummary s = synth_corpus(c, layout.corpus(), g.force);
  std::printf("wrote %zu scenes to %s\n", s.rows.size(), layout.corpus().string().c_str());
  for (int k = 0; k < kNumClasses; ++k) std::printf("class %d: %d\n", k, s.per_class[static_cast<std::size_t>(k)]);
  return 0;
}

int cmd_train(const Globals& g, const std::string& stage_text, const std::string& ablation) {
  RunConfig c = resolve_config(g);
  if (!ablation.empty()) apply_setting(c, "ablation", ablation);
  const Stage stage = stage_from_name(stage_text);
  const StageResult r = train_stage(c, RunLayout{g.out}, stage);
  std::printf("stage=%s bundle=%s epochs=%zu final_loss=%.6g\n", stage_name(stage).c_str(), r.bundle.string().c_str(),
              r.losses.size(), r.losses.empty() ? 0.0 : r.losses.back());
  return 0;
}

int cmd_infer(const Globals& g, const std::string& image_path, const std::string& ablation) {
  RunConfig c = resolve_config(g);
  if (!ablation.empty()) apply_setting(c, "ablation", ablation);
  const RunLayout layout{g.out};
  const Image image = read_pgm(image_path);
  const LoadedPipeline p = load_pipeline(layout, c.ablation);
  const Inference r = run_inference(p, image);
  std::error_code ec;
  fs::create_directories(layout.infer(), ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + layout.infer().string() + ": " + ec.message());
  const std::string stem = (layout.infer() / fs::path(image_path).stem()).string();
  save_density(stem + ".cpdm", r.density);
  write_pgm_scaled(stem + ".pgm", r.density);
  std::printf("count=%.2f\n", r.count);
  return 0;
}

int cmd_eval(const Globals& g, bool ablation) {
  const RunConfig c = resolve_config(g);
  const RunLayout layout{g.out};
  std::vector<AblationConfig> configs;
  if (ablation) {
    configs.assign(kAblationLadder.begin(), kAblationLadder.end());
  } else {
    configs.push_back(c.ablation);
  }
  const std::vector<EvalRow> rows = evaluate_rows(c, layout, configs);
  const std::string csv = eval_rows_csv(rows);
  std::error_code ec;
  fs::create_directories(layout.root, ec);
  std::ofstream out(layout.eval_csv(), std::ios::binary | std::ios::trunc);
  if (!out || !(out << csv)) fail(ErrorCode::kIo, "cannot write " + layout.eval_csv().string());
  std::fputs(csv.c_str(), stdout);
  for (const EvalRow& r : rows) {
    if (!r.report) return kExitData;
  }
  return 0;
}

int cmd_gradcheck() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<GradCheck> checks = all_gradchecks();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%-32s %12s %10s %7s %9s  %s\n", "check", "max_rel_err", "threshold", "probes", "rejected", "result");
  bool ok = true;
  for (const GradCheck& c : checks) {
    std::printf("%-32s %12.3e %10.0e %7d %9d  %s\n", c.name.c_str(), c.max_rel_error, c.threshold, c.probes, c.rejected,
                c.passed() ? "PASS" : "FAIL");
    ok = ok && c.passed();
  }
  std::printf("%zu checks in %.1f s: %s\n", checks.size(), secs, ok ? "all passed" : "FAILURES");
  return ok ? 0 : kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextual pyramid CNN crowd density estimation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Run seed (overrides the config file)");
  app.add_option("--out", g.out, "Run directory")->capture_default_str();
  app.add_flag("--force", g.force, "Overwrite a non-empty output directory");
  app.add_option("--set", g.settings, "Override one config key, as key=value (repeatable)");

  std::optional<int> synth_n;
  CLI::App* synth = app.add_subcommand("synth", "Generate the synthetic corpus");
  synth->add_option("--n", synth_n, "Number of scenes")->check(CLI::PositiveNumber);

  std::string stage, train_ablation;
  CLI::App* train = app.add_subcommand("train", "Train one stage");
  train->add_option("--stage", stage, "gce, lce or full")->required()->check(CLI::IsMember({"gce", "lce", "full"}));
  train->add_option("--ablation", train_ablation, "Ablation row for the full stage (dme, dme_gce, dme_gce_lce, full)");

  std::string image_path, infer_ablation;
  CLI::App* inf = app.add_subcommand("infer", "Estimate the density map of one PGM image");
  inf->add_option("image", image_path, "Input PGM")->required()->check(CLI::ExistingFile);
  inf->add_option("--ablation", infer_ablation, "Ablation row to run");

  bool eval_ablation = false;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate on the held-out split and write eval.csv");
  eval->add_flag("--ablation", eval_ablation, "Evaluate all four ablation rows");

  CLI::App* grad = app.add_subcommand("gradcheck", "Finite-difference check of every layer and composite network");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(g, synth_n);
    if (*train) return cmd_train(g, stage, train_ablation);
    if (*inf) return cmd_infer(g, image_path, infer_ablation);
    if (*eval) return cmd_eval(g, eval_ablation);
    if (*grad) return cmd_gradcheck();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
