// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/workflow.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cpcnn/bundle.hpp"
#include "cpcnn/classes.hpp"
#include "cpcnn/classifier.hpp"
#include "cpcnn/context.hpp"
#include "cpcnn/density.hpp"
#include "cpcnn/error.hpp"
#include "cpcnn/image.hpp"
#include "cpcnn/rng.hpp"

namespace cpcnn {
namespace {

// Sub-stream indices, so every stage draws from its own generator.
constexpr std::uint64_t kGceStream = 0, kLceStream = 1, kFullStream = 2;
// Held-out accuracy is measured on at most this many test patches per estimator.
constexpr std::size_t kAccuracySamples = 3000;

std::string id_name(int id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", id);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

void prepare_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) {
      fail(ErrorCode::kInvalidArgument, "output directory " + dir.string() + " is not empty; pass --force to overwrite");
    }
    fs::remove_all(dir, ec);
    if (ec) fail(ErrorCode::kIo, "cannot clear " + dir.string() + ": " + ec.message());
  }
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

LabeledSet gce_set(const PatchDataset& d, int input) {
  return {d.size(), [&d, input](std::size_t i) {
            Patch p = d.get(i);
            return LabeledInput{resize_bilinear(p.image, input, input), p.label};
          }};
}

LabeledSet lce_set(const PatchDataset& d) {
  return {d.size(), [&d](std::size_t i) {
            Patch p = d.get(i);
            return LabeledInput{std::move(p.image), p.label};
          }};
}

LabeledSet capped(LabeledSet s) {
  s.size = std::min(s.size, kAccuracySamples);
  return s;
}

void write_losses(const fs::path& path, const std::vector<double>& losses) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < losses.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", e + 1, losses[e]);
    out << buf << std::flush;
  }
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

ClassifierBundle load_estimator(const RunLayout& layout, Stage stage, const char* purpose) {
  const fs::path path = stage_bundle(layout, stage, {});
  if (!fs::exists(path)) {
    fail(ErrorCode::kInvalidArgument, std::string(purpose) + " needs the " + stage_name(stage) + " bundle " +
                                          path.string() + "; run `train --stage " + stage_name(stage) + "` first");
  }
  return classifier_from_bundle(load_bundle(path.string()));
}

StageResult train_estimator(const RunConfig& config, const RunLayout& layout, Stage stage) {
  const Corpus corpus = load_corpus(config, layout.corpus());
  const bool global = stage == Stage::kGce;
  std::mt19937_64 rng = make_stream(config.seed, "train", global ? kGceStream : kLceStream);
  std::mt19937_64 init = make_stream(config.seed, "init", global ? kGceStream : kLceStream);
  PatchDataset data = global ? build_dme_dataset(corpus.train, rng)
                             : build_local_dataset(corpus.train, rng, config.lce_patch);
  const ClassBoundaries boundaries = fit_class_boundaries(data.counts());
  data.assign_labels(boundaries);
  ClassifierModel model = make_classifier(global ? gce_arch(config.gce_input) : lce_arch(config.lce_patch), init);
  StageResult r;
  r.losses = train_classifier(model, global ? gce_set(data, config.gce_input) : lce_set(data),
                              global ? config.gce : config.lce, rng);
  model.params.set_all_trainable(false);
  const fs::path dir = stage_dir(layout, stage, {});
  ensure_dir(dir);
  r.bundle = dir / "model.cpnw";
  save_bundle(r.bundle.string(), to_bundle(model, boundaries));
  write_losses(dir / "losses.csv", r.losses);
  return r;
}

StageResult train_full(const RunConfig& config, const RunLayout& layout) {
  const AblationConfig& a = config.ablation;
  ClassifierBundle gce = load_estimator(layout, Stage::kGce, "train --stage full");
  ClassifierBundle lce = load_estimator(layout, Stage::kLce, "train --stage full");
  const Corpus corpus = load_corpus(config, layout.corpus());
  std::mt19937_64 rng = make_stream(config.seed, "train", kFullStream);
  std::mt19937_64 init = make_stream(config.seed, "init", kFullStream);
  PatchDataset data = build_dme_dataset(corpus.train, rng);
  GeneratorModel generator = make_generator(config.generator_arch(), init);
  std::optional<DiscriminatorModel> disc;
  if (a.use_adversarial) disc = make_discriminator(init, config.discriminator);

  const E2EHistory h = train_end_to_end(data, a.use_gce ? &gce.model : nullptr, a.use_lce ? &lce.model : nullptr,
                                        generator, disc ? &*disc : nullptr, config.full, rng);
  generator.params.set_all_trainable(false);
  const fs::path dir = stage_dir(layout, Stage::kFull, a);
  ensure_dir(dir);
  StageResult r;
  r.bundle = dir / "model.cpnw";
  r.losses = h.total;
  save_bundle(r.bundle.string(), to_bundle(generator, disc ? &*disc : nullptr));
  write_losses(dir / "losses.csv", r.losses);
  return r;
}

}  // namespace

Stage stage_from_name(std::string_view name) {
  if (name == "gce") return Stage::kGce;
  if (name == "lce") return Stage::kLce;
  if (name == "full") return Stage::kFull;
  fail(ErrorCode::kInvalidArgument, "unknown stage `" + std::string(name) + "` (expected gce, lce or full)");
}

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::kGce: return "gce";
    case Stage::kLce: return "lce";
    case Stage::kFull: return "full";
  }
  return "?";
}

fs::path stage_dir(const RunLayout& layout, Stage stage, const AblationConfig& ablation) {
  if (stage == Stage::kFull) return layout.models() / ("full-" + ablation_tag(ablation));
  return layout.models() / stage_name(stage);
}

fs::path stage_bundle(const RunLayout& layout, Stage stage, const AblationConfig& ablation) {
  return stage_dir(layout, stage, ablation) / "model.cpnw";
}

SynthSummary synth_corpus(const RunConfig& config, const fs::path& dir, bool force) {
  prepare_dir(dir, force);
  for (const char* sub : {"scenes", "images", "density"}) ensure_dir(dir / sub);
  SynthSummary s;
  std::vector<double> counts;
  for (int id = 0; id < config.scenes; ++id) {
    SceneSpec spec = config.scene;
    spec.seed = derive_seed(config.seed, "synth", static_cast<std::uint64_t>(id));
    const SyntheticScene scene = generate_scene(spec);
    const std::string name = id_name(id);
    save_scene((dir / "scenes" / (name + ".txt")).string(), scene.scene);
    write_pgm((dir / "images" / (name + ".pgm")).string(), scene.image);
    save_density((dir / "density" / (name + ".cpdm")).string(), render_density(scene.scene, config.sigma));
    s.rows.push_back({id, static_cast<double>(scene.scene.dots.size()), 0});
    counts.push_back(static_cast<double>(scene.scene.dots.size()));
  }
  const ClassBoundaries b = fit_class_boundaries(counts);
  std::string manifest = "id,count,class\n";
  for (ManifestRow& row : s.rows) {
    row.label = b.classify(row.count);
    ++s.per_class[static_cast<std::size_t>(row.label)];
    manifest += id_name(row.id) + "," + std::to_string(static_cast<long long>(row.count)) + "," +
                std::to_string(row.label) + "\n";
  }
  write_text(dir / "manifest.csv", manifest);
  return s;
}

std::vector<ManifestRow> read_manifest(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "id,count,class") {
    fail(ErrorCode::kInvalidArgument, path.string() + ": expected header `id,count,class`");
  }
  std::vector<ManifestRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ManifestRow r;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%d%c", &r.id, &r.count, &r.label, &tail) != 3 || r.id < 0 ||
        r.label < 0 || r.label >= kNumClasses) {
      fail(ErrorCode::kInvalidArgument, path.string() + ":" + std::to_string(lineno) + ": malformed row `" + line + "`");
    }
    rows.push_back(r);
  }
  return rows;
}

Corpus load_corpus(const RunConfig& config, const fs::path& dir) {
  const fs::path manifest = dir / "manifest.csv";
  if (!fs::exists(manifest)) {
    fail(ErrorCode::kInvalidArgument, "no corpus at " + dir.string() + " (missing manifest.csv); run `synth` first");
  }
  const std::vector<ManifestRow> rows = read_manifest(manifest);
  if (rows.size() < 2) fail(ErrorCode::kInvalidArgument, manifest.string() + ": need at least two scenes");
  RunConfig sized = config;
  sized.scenes = static_cast<int>(rows.size());
  const int n_train = sized.train_count();
  Corpus c{std::make_shared<SourceSet>(), std::make_shared<SourceSet>()};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string name = id_name(rows[i].id);
    SourceSet& set = static_cast<int>(i) < n_train ? *c.train : *c.test;
    set.images.push_back(read_pgm((dir / "images" / (name + ".pgm")).string()));
    set.maps.push_back(load_density((dir / "density" / (name + ".cpdm")).string()));
  }
  return c;
}

StageResult train_stage(const RunConfig& config, const RunLayout& layout, Stage stage) {
  return stage == Stage::kFull ? train_full(config, layout) : train_estimator(config, layout, stage);
}

EstimatorAccuracy estimator_accuracy(const RunConfig& config, const RunLayout& layout) {
  const ClassifierBundle gce = load_estimator(layout, Stage::kGce, "accuracy check");
  const ClassifierBundle lce = load_estimator(layout, Stage::kLce, "accuracy check");
  const Corpus corpus = load_corpus(config, layout.corpus());
  std::mt19937_64 rng = make_stream(config.seed, "eval");
  PatchDataset dme = build_dme_dataset(corpus.test, rng);
  dme.assign_labels(gce.boundaries);
  const PatchDataset local = build_local_dataset(corpus.test, rng, lce.model.arch.input_size, &lce.boundaries);
  return {classifier_accuracy(gce.model, capped(gce_set(dme, gce.model.arch.input_size))),
          classifier_accuracy(lce.model, capped(lce_set(local)))};
}

LoadedPipeline load_pipeline(const RunLayout& layout, const AblationConfig& ablation) {
  const fs::path path = stage_bundle(layout, Stage::kFull, ablation);
  if (!fs::exists(path)) {
    fail(ErrorCode::kInvalidArgument, "missing generator bundle " + path.string() + "; run `train --stage full --ablation " +
                                          ablation_tag(ablation) + "` first");
  }
  LoadedPipeline p{std::nullopt, std::nullopt, generator_from_bundle(load_bundle(path.string()))};
  if (p.generator.arch.ablation != ablation) {
    fail(ErrorCode::kContractViolation, path.string() + " holds a " + ablation_tag(p.generator.arch.ablation) +
                                            " generator, expected " + ablation_tag(ablation));
  }
  if (ablation.use_gce) p.gce = load_estimator(layout, Stage::kGce, "inference").model;
  if (ablation.use_lce) p.lce = load_estimator(layout, Stage::kLce, "inference").model;
  return p;
}

Inference run_inference(const LoadedPipeline& p, const Image& image) {
  return infer(image, p.gce ? &*p.gce : nullptr, p.lce ? &*p.lce : nullptr, p.generator);
}

EvalReport evaluate_pipeline(const LoadedPipeline& pipeline, const SourceSet& test) {
  EvalAccumulator acc;
  for (std::size_t i = 0; i < test.images.size(); ++i) {
    const Inference r = run_inference(pipeline, test.images[i]);
    acc.add(count_of(test.maps[i]), r.count, psnr(r.density, test.maps[i]), ssim(r.density, test.maps[i]));
  }
  return acc.report();
}

std::vector<EvalRow> evaluate_rows(const RunConfig& config, const RunLayout& layout,
                                   const std::vector<AblationConfig>& configs) {
  const Corpus corpus = load_corpus(config, layout.corpus());
  std::vector<EvalRow> rows;
  for (const AblationConfig& a : configs) {
    EvalRow row{a, std::nullopt, {}};
    try {
      row.report = evaluate_pipeline(load_pipeline(layout, a), *corpus.test);
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string eval_rows_csv(const std::vector<EvalRow>& rows) {
  std::string out = "config,n,mae,mse,psnr,ssim,error\n";
  for (const EvalRow& r : rows) {
    out += ablation_tag(r.config) + ",";
    if (r.report) {
      out += eval_csv_row(*r.report) + ",\n";
    } else {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out += ",,,,," + msg + "\n";
    }
  }
  return out;
}

}  // namespace cpcnn
