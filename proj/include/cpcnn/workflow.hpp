// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpcnn/config.hpp"
#include "cpcnn/metrics.hpp"
#include "cpcnn/pipeline.hpp"
#include "cpcnn/synth.hpp"

namespace cpcnn {

namespace fs = std::filesystem;

/// Run directory layout:
///   corpus/  scenes/NNNN.txt, images/NNNN.pgm, density/NNNN.cpdm, manifest.csv
///   models/  gce/, lce/, full-<tag>/  each holding model.cpnw and losses.csv
///   infer/   <stem>.cpdm and <stem>.pgm
///   eval.csv
struct RunLayout {
  fs::path root;

  fs::path corpus() const { return root / "corpus"; }
  fs::path models() const { return root / "models"; }
  fs::path infer() const { return root / "infer"; }
  fs::path eval_csv() const { return root / "eval.csv"; }
};

enum class Stage { kGce, kLce, kFull };

Stage stage_from_name(std::string_view name);
std::string stage_name(Stage stage);
/// Directory of a stage under models/; the full stage is keyed by its ablation row.
fs::path stage_dir(const RunLayout& layout, Stage stage, const AblationConfig& ablation);
fs::path stage_bundle(const RunLayout& layout, Stage stage, const AblationConfig& ablation);

struct ManifestRow {
  int id = 0;
  double count = 0.0;
  int label = 0;
};

struct SynthSummary {
  std::vector<ManifestRow> rows;
  std::array<int, kNumClasses> per_class{};
};

/// Scene ids are 0-based; the manifest class is the count quintile over the whole corpus.
/// Throws kInvalidArgument if `dir` exists and is non-empty unless `force`, which clears it.
SynthSummary synth_corpus(const RunConfig& config, const fs::path& dir, bool force);

std::vector<ManifestRow> read_manifest(const fs::path& path);

struct Corpus {
  std::shared_ptr<SourceSet> train;
  std::shared_ptr<SourceSet> test;
};

/// First config.train_count() manifest ids train, the rest are held out.
Corpus load_corpus(const RunConfig& config, const fs::path& dir);

struct StageResult {
  fs::path bundle;
  std::vector<double> losses;
};

/// GCE and LCE stages train from scratch; the full stage loads both estimators, checks they
/// are frozen, and trains the generator of config.ablation. Writes model.cpnw and losses.csv.
StageResult train_stage(const RunConfig& config, const RunLayout& layout, Stage stage);

/// Held-out accuracy of the trained GCE and LCE on the test split.
struct EstimatorAccuracy {
  double gce = 0.0;
  double lce = 0.0;
};
EstimatorAccuracy estimator_accuracy(const RunConfig& config, const RunLayout& layout);

struct LoadedPipeline {
  std::optional<ClassifierModel> gce;
  std::optional<ClassifierModel> lce;
  GeneratorModel generator;
};

/// Loads the generator of `ablation` and the estimators it needs.
LoadedPipeline load_pipeline(const RunLayout& layout, const AblationConfig& ablation);
Inference run_inference(const LoadedPipeline& pipeline, const Image& image);

struct EvalRow {
  AblationConfig config;
  std::optional<EvalReport> report;
  std::string error;
};

EvalReport evaluate_pipeline(const LoadedPipeline& pipeline, const SourceSet& test);
/// Rows in ladder order; a row whose bundles fail to load carries the error instead of a report.
std::vector<EvalRow> evaluate_rows(const RunConfig& config, const RunLayout& layout,
                                   const std::vector<AblationConfig>& configs);
/// Header `config,n,mae,mse,psnr,ssim,error`.
std::string eval_rows_csv(const std::vector<EvalRow>& rows);

}  // namespace cpcnn
