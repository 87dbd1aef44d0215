// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/bundle.hpp"

#include <cmath>

#include "cpcnn/binio.hpp"

namespace cpcnn {

namespace {

constexpr std::string_view kMagic = "CPNW";

Tensor<float> int_record(const std::vector<int>& values) {
  Tensor<float> t({static_cast<int>(values.size())});
  for (std::size_t i = 0; i < values.size(); ++i) t[i] = static_cast<float>(values[i]);
  return t;
}

/// Reads small non-negative integers back out of a meta record.
class MetaReader {
 public:
  MetaReader(const Tensor<float>& t, std::string name) : t_(t), name_(std::move(name)) {}

  int next() {
    if (pos_ >= t_.size()) fail(ErrorCode::kTruncated, "bundle record " + name_ + " is too short");
    const float v = t_[pos_++];
    if (!(v >= 0.0f) || v > 1e6f || std::floor(v) != v) {
      fail(ErrorCode::kInvalidArgument, "bundle record " + name_ + " holds a non-integer field");
    }
    return static_cast<int>(v);
  }
  float next_float() {
    if (pos_ >= t_.size()) fail(ErrorCode::kTruncated, "bundle record " + name_ + " is too short");
    return t_[pos_++];
  }
  std::vector<int> list() {
    const int n = next();
    std::vector<int> out;
    for (int i = 0; i < n; ++i) out.push_back(next());
    return out;
  }
  void finish() const {
    if (pos_ != t_.size()) fail(ErrorCode::kInvalidArgument, "bundle record " + name_ + " has trailing fields");
  }

 private:
  const Tensor<float>& t_;
  std::string name_;
  std::size_t pos_ = 0;
};

void append_params(ModelBundle& b, const ParameterStore<float>& store) {
  for (const auto& e : store.entries()) b.records.push_back({e.name, e.value});
}

/// Overwrites every parameter of `store` from the same-named record.
void fill_params(ParameterStore<float>& store, const ModelBundle& b) {
  for (auto& e : store.entries()) {
    const Tensor<float>& v = b.get(e.name);
    if (v.shape() != e.value.shape()) {
      fail(ErrorCode::kShapeMismatch, "bundle record " + e.name + " has shape " + shape_str(v.shape()) +
                                          ", architecture expects " + shape_str(e.value.shape()));
    }
    e.value = v;
  }
}

}  // namespace

const Tensor<float>* ModelBundle::find(std::string_view name) const {
  for (const BundleRecord& r : records) {
    if (r.name == name) return &r.value;
  }
  return nullptr;
}

const Tensor<float>& ModelBundle::get(std::string_view name) const {
  const Tensor<float>* t = find(name);
  if (!t) fail(ErrorCode::kInvalidArgument, "bundle has no record `" + std::string(name) + "`");
  return *t;
}

std::string encode_bundle(const ModelBundle& bundle) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kBundleVersion);
  w.u32(static_cast<std::uint32_t>(bundle.records.size()));
  for (const BundleRecord& r : bundle.records) {
    if (r.name.size() > 0xFFFF) fail(ErrorCode::kInvalidArgument, "bundle record name too long");
    if (r.value.rank() > 0xFF) fail(ErrorCode::kInvalidArgument, "bundle record rank too large");
    w.u16(static_cast<std::uint16_t>(r.name.size()));
    w.bytes(r.name);
    w.u8(static_cast<std::uint8_t>(r.value.rank()));
    for (int d : r.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : r.value.data()) w.f32(v);
  }
  return w.data();
}

ModelBundle decode_bundle(std::string_view bytes) {
  ByteReader r(bytes, "model bundle");
  if (r.bytes(kMagic.size()) != kMagic) {
    fail(ErrorCode::kMagicMismatch, "model bundle: bad magic (expected CPNW)");
  }
  const std::uint32_t version = r.u32();
  if (version != kBundleVersion) {
    fail(ErrorCode::kVersionMismatch, "model bundle: version " + std::to_string(version) + ", this build reads " +
                                          std::to_string(kBundleVersion));
  }
  const std::uint32_t count = r.u32();
  ModelBundle b;
  for (std::uint32_t i = 0; i < count; ++i) {
    BundleRecord rec;
    rec.name = std::string(r.bytes(r.u16()));
    const int rank = r.u8();
    Shape shape;
    std::uint64_t n = 1;
    for (int d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      if (dim > 0x7FFFFFFF) fail(ErrorCode::kInvalidArgument, "model bundle: implausible dimension in " + rec.name);
      n *= dim;
      if (n * 4 > r.remaining()) {
        fail(ErrorCode::kTruncated, "model bundle: record " + rec.name + " extends past the end of the file");
      }
      shape.push_back(static_cast<int>(dim));
    }
    rec.value = Tensor<float>(shape);
    for (float& v : rec.value.data()) v = r.f32();
    b.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) fail(ErrorCode::kInvalidArgument, "model bundle: trailing bytes after the last record");
  return b;
}

void save_bundle(const std::string& path, const ModelBundle& bundle) { write_file(path, encode_bundle(bundle)); }

ModelBundle load_bundle(const std::string& path) { return decode_bundle(read_file(path)); }

ModelBundle to_bundle(const ClassifierModel& model, const ClassBoundaries& boundaries) {
  const ClassifierArch& a = model.arch;
  std::vector<int> meta{a.input_size, a.kernel, static_cast<int>(a.conv_channels.size())};
  meta.insert(meta.end(), a.conv_channels.begin(), a.conv_channels.end());
  meta.push_back(static_cast<int>(a.hidden.size()));
  meta.insert(meta.end(), a.hidden.begin(), a.hidden.end());
  meta.push_back(a.frozen_prefix);
  ModelBundle b;
  b.records.push_back({"meta.classifier", int_record(meta)});
  b.records.push_back({"meta.dropout", Tensor<float>({1}, a.dropout)});
  Tensor<float> th({kNumClasses - 1});
  for (int i = 0; i < kNumClasses - 1; ++i) th[i] = static_cast<float>(boundaries.thresholds[i]);
  b.records.push_back({"meta.boundaries", th});
  append_params(b, model.params);
  return b;
}

ClassifierBundle classifier_from_bundle(const ModelBundle& b) {
  ClassifierArch a;
  MetaReader m(b.get("meta.classifier"), "meta.classifier");
  a.input_size = m.next();
  a.kernel = m.next();
  a.conv_channels = m.list();
  a.hidden = m.list();
  a.frozen_prefix = m.next();
  m.finish();
  a.dropout = b.get("meta.dropout")[0];
  const Tensor<float>& th = b.get("meta.boundaries");
  if (th.size() != kNumClasses - 1) fail(ErrorCode::kShapeMismatch, "meta.boundaries must hold 4 thresholds");
  ClassBoundaries bounds;
  for (int i = 0; i < kNumClasses - 1; ++i) bounds.thresholds[i] = th[i];

  std::mt19937_64 unused(0);
  ClassifierBundle out{make_classifier(a, unused), bounds};
  fill_params(out.model.params, b);
  out.model.params.set_all_trainable(false);
  return out;
}

ModelBundle to_bundle(const GeneratorModel& generator, const DiscriminatorModel* discriminator) {
  const GeneratorArch& a = generator.arch;
  std::vector<int> meta{static_cast<int>(a.column_kernels.size())};
  meta.insert(meta.end(), a.column_kernels.begin(), a.column_kernels.end());
  meta.push_back(static_cast<int>(a.column_widths.size()));
  meta.insert(meta.end(), a.column_widths.begin(), a.column_widths.end());
  meta.insert(meta.end(), a.fcnn_kernels.begin(), a.fcnn_kernels.end());
  meta.push_back(a.ablation.use_gce ? 1 : 0);
  meta.push_back(a.ablation.use_lce ? 1 : 0);
  meta.push_back(a.ablation.use_adversarial ? 1 : 0);
  meta.push_back(a.infer_tile);
  ModelBundle b;
  b.records.push_back({"meta.generator", int_record(meta)});
  b.records.push_back({"meta.density_scale", Tensor<float>({1}, {generator.arch.density_scale})});
  append_params(b, generator.params);
  if (discriminator) {
    b.records.push_back({"meta.discriminator", int_record({discriminator->arch.widths.begin(),
                                                           discriminator->arch.widths.end()})});
    append_params(b, discriminator->params);
  }
  return b;
}

GeneratorModel generator_from_bundle(const ModelBundle& b) {
  GeneratorArch a;
  MetaReader m(b.get("meta.generator"), "meta.generator");
  a.column_kernels = m.list();
  a.column_widths = m.list();
  for (int& k : a.fcnn_kernels) k = m.next();
  a.ablation.use_gce = m.next() != 0;
  a.ablation.use_lce = m.next() != 0;
  a.ablation.use_adversarial = m.next() != 0;
  a.infer_tile = m.next();
  m.finish();
  const Tensor<float>& scale = b.get("meta.density_scale");
  if (scale.size() != 1) fail(ErrorCode::kInvalidArgument, "meta.density_scale: expected one value");
  a.density_scale = scale[0];
  std::mt19937_64 unused(0);
  GeneratorModel g = make_generator(a, unused);
  fill_params(g.params, b);
  return g;
}

bool has_discriminator(const ModelBundle& b) { return b.find("meta.discriminator") != nullptr; }

DiscriminatorModel discriminator_from_bundle(const ModelBundle& b) {
  DiscriminatorArch a;
  MetaReader m(b.get("meta.discriminator"), "meta.discriminator");
  for (int& w : a.widths) w = m.next();
  m.finish();
  std::mt19937_64 unused(0);
  DiscriminatorModel d = make_discriminator(unused, a);
  fill_params(d.params, b);
  return d;
}

}  // namespace cpcnn
