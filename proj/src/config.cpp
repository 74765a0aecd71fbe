#include "osda/config.hpp"

#include <fstream>
#include <set>

namespace osda {

namespace {

// Reads optional keys from an object and complains about the ones nobody
// asked for.
class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const Json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Json shape_json(const nn::ImageShape& s) { return Json::array({s.channels, s.height, s.width}); }

nn::ImageShape shape_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": image shape must be [channels, height, width]");
  return {j[0].get<long>(), j[1].get<long>(), j[2].get<long>()};
}

}  // namespace

Json to_json(const BackboneSpec& s) {
  return {{"kind", to_string(s.kind)},     {"input_dim", s.input_dim},         {"image", shape_json(s.image)},
          {"hidden", s.hidden},            {"conv_channels", s.conv_channels}, {"feature_dim", s.feature_dim},
          {"batch_norm", s.batch_norm}};
}

BackboneSpec backbone_spec_from_json(const Json& j, BackboneSpec s) {
  Reader r(j, "backbone");
  std::string kind = to_string(s.kind);
  r.get("kind", kind);
  s.kind = backbone_kind_from_string(kind);
  r.get("input_dim", s.input_dim);
  if (const Json* img = r.sub("image")) s.image = shape_from_json(*img, "backbone.image");
  r.get("hidden", s.hidden);
  r.get("conv_channels", s.conv_channels);
  r.get("feature_dim", s.feature_dim);
  r.get("batch_norm", s.batch_norm);
  r.finish();
  return s;
}

Json to_json(const gan::GanConfig& c) {
  return {{"latent_dim", c.latent_dim},
          {"gan_epochs", c.gan_epochs},
          {"disc_variant", gan::to_string(c.disc_variant)},
          {"generator_lr", c.generator_lr},
          {"discriminator_lr", c.discriminator_lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"w_adv", c.w_adv},
          {"w_ent", c.w_ent},
          {"w_agree", c.w_agree},
          {"batch_size", c.batch_size},
          {"mlp_hidden", c.mlp_hidden},
          {"base_channels", c.base_channels},
          {"native_resolution", c.native_resolution},
          {"head_width", c.head_width},
          {"freeze_shared_backbone", c.freeze_shared_backbone}};
}

gan::GanConfig gan_config_from_json(const Json& j, gan::GanConfig c) {
  Reader r(j, "gan");
  r.get("latent_dim", c.latent_dim);
  r.get("gan_epochs", c.gan_epochs);
  std::string variant = gan::to_string(c.disc_variant);
  r.get("disc_variant", variant);
  c.disc_variant = gan::discriminator_variant_from_string(variant);
  r.get("generator_lr", c.generator_lr);
  r.get("discriminator_lr", c.discriminator_lr);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("w_adv", c.w_adv);
  r.get("w_ent", c.w_ent);
  r.get("w_agree", c.w_agree);
  r.get("batch_size", c.batch_size);
  r.get("mlp_hidden", c.mlp_hidden);
  r.get("base_channels", c.base_channels);
  r.get("native_resolution", c.native_resolution);
  r.get("head_width", c.head_width);
  r.get("freeze_shared_backbone", c.freeze_shared_backbone);
  r.finish();
  return c;
}

Json to_json(const AugmentConfig& c) {
  return {{"max_rotation_deg", c.max_rotation_deg}, {"max_translation_frac", c.max_translation_frac},
          {"min_scale", c.min_scale},               {"max_scale", c.max_scale},
          {"blur_kernel", c.blur_kernel},           {"min_blur_sigma", c.min_blur_sigma},
          {"max_blur_sigma", c.max_blur_sigma},     {"noise_fraction", c.noise_fraction}};
}

AugmentConfig augment_config_from_json(const Json& j, AugmentConfig c) {
  Reader r(j, "augment");
  r.get("max_rotation_deg", c.max_rotation_deg);
  r.get("max_translation_frac", c.max_translation_frac);
  r.get("min_scale", c.min_scale);
  r.get("max_scale", c.max_scale);
  r.get("blur_kernel", c.blur_kernel);
  r.get("min_blur_sigma", c.min_blur_sigma);
  r.get("max_blur_sigma", c.max_blur_sigma);
  r.get("noise_fraction", c.noise_fraction);
  r.finish();
  return c;
}

Json to_json(const TrainConfig& c) {
  Json j{{"total_iterations", c.total_iterations},
         {"breakpoint_iteration", c.breakpoint_iteration},
         {"batch_size", c.batch_size},
         {"lr_heads", c.lr_heads},
         {"lr_backbone", c.lr_backbone},
         {"lambda_neg", c.lambda_neg},
         {"strategy", to_string(c.strategy)},
         {"extraction_threshold", c.extraction_threshold},
         {"interleave_interval", nullptr},
         {"gan", to_json(c.gan)},
         {"seed", c.seed},
         {"momentum", c.momentum},
         {"weight_decay", c.weight_decay},
         {"nesterov", c.nesterov},
         {"lr_schedule", to_string(c.lr_schedule)},
         {"lr_gamma", c.lr_gamma},
         {"lr_power", c.lr_power},
         {"freeze_batchnorm_after_breakpoint", c.freeze_batchnorm_after_breakpoint},
         {"augment", to_json(c.augment)},
         {"backbone", to_json(c.backbone)}};
  if (c.interleave_interval) j["interleave_interval"] = *c.interleave_interval;
  return j;
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  Reader r(j, "config");
  if (const Json* p = r.sub("preset")) {
    // A preset only replaces the schedule lengths.
    const TrainConfig pre = preset(p->get<std::string>());
    c.total_iterations = pre.total_iterations;
    c.breakpoint_iteration = pre.breakpoint_iteration;
  }
  r.get("total_iterations", c.total_iterations);
  r.get("breakpoint_iteration", c.breakpoint_iteration);
  r.get("batch_size", c.batch_size);
  r.get("lr_heads", c.lr_heads);
  r.get("lr_backbone", c.lr_backbone);
  r.get("lambda_neg", c.lambda_neg);
  std::string strategy = to_string(c.strategy);
  r.get("strategy", strategy);
  c.strategy = strategy_from_string(strategy);
  r.get("extraction_threshold", c.extraction_threshold);
  if (const Json* t = r.sub("interleave_interval")) c.interleave_interval = t->get<long>();
  if (const Json* g = r.sub("gan")) c.gan = gan_config_from_json(*g, c.gan);
  r.get("seed", c.seed);
  r.get("momentum", c.momentum);
  r.get("weight_decay", c.weight_decay);
  r.get("nesterov", c.nesterov);
  std::string schedule = to_string(c.lr_schedule);
  r.get("lr_schedule", schedule);
  c.lr_schedule = lr_schedule_from_string(schedule);
  r.get("lr_gamma", c.lr_gamma);
  r.get("lr_power", c.lr_power);
  r.get("freeze_batchnorm_after_breakpoint", c.freeze_batchnorm_after_breakpoint);
  if (const Json* a = r.sub("augment")) c.augment = augment_config_from_json(*a, c.augment);
  if (const Json* b = r.sub("backbone")) c.backbone = backbone_spec_from_json(*b, c.backbone);
  r.finish();
  return c;
}

Json to_json(const SyntheticBenchmarkSpec& s) {
  return {{"n_known", s.n_known},
          {"n_unknown", s.n_unknown},
          {"samples_per_class", s.samples_per_class},
          {"feature_dim", s.feature_dim},
          {"radius", s.radius},
          {"unknown_radius", s.unknown_radius},
          {"class_std", s.class_std},
          {"shift_rotation_deg", s.shift_rotation_deg},
          {"shift_translation", s.shift_translation},
          {"seed", s.seed}};
}

SyntheticBenchmarkSpec synthetic_spec_from_json(const Json& j, SyntheticBenchmarkSpec s) {
  Reader r(j, "synthetic");
  r.get("n_known", s.n_known);
  r.get("n_unknown", s.n_unknown);
  r.get("samples_per_class", s.samples_per_class);
  r.get("feature_dim", s.feature_dim);
  r.get("radius", s.radius);
  r.get("unknown_radius", s.unknown_radius);
  r.get("class_std", s.class_std);
  r.get("shift_rotation_deg", s.shift_rotation_deg);
  r.get("shift_translation", s.shift_translation);
  r.get("seed", s.seed);
  r.finish();
  return s;
}

Json to_json(const LabelSpace& ls) { return {{"known", ls.known()}, {"unknown", ls.unknown()}}; }

LabelSpace label_space_from_json(const Json& j) {
  Reader r(j, "label_space");
  std::vector<std::string> known, unknown;
  r.get("known", known);
  r.get("unknown", unknown);
  r.finish();
  return LabelSpace(std::move(known), std::move(unknown), true);
}

Json to_json(const DatasetSpec& d) {
  if (d.synthetic) return {{"synthetic", to_json(*d.synthetic)}};
  Json j{{"source_root", d.source_root.string()}, {"target_root", d.target_root.string()},
         {"image", shape_json(d.image)}};
  if (!d.split_preset.empty()) {
    j["split_preset"] = d.split_preset;
  } else {
    j["n_known"] = d.n_known;
    j["n_unknown"] = d.n_unknown;
  }
  return j;
}

DatasetSpec dataset_spec_from_json(const Json& j) {
  Reader r(j, "dataset");
  DatasetSpec d;
  if (const Json* s = r.sub("synthetic")) d.synthetic = synthetic_spec_from_json(*s);
  std::string src, tgt;
  r.get("source_root", src);
  r.get("target_root", tgt);
  d.source_root = src;
  d.target_root = tgt;
  r.get("split_preset", d.split_preset);
  r.get("n_known", d.n_known);
  r.get("n_unknown", d.n_unknown);
  if (const Json* img = r.sub("image")) d.image = shape_from_json(*img, "dataset.image");
  r.finish();
  if (d.synthetic && (!src.empty() || !tgt.empty()))
    throw ConfigError("dataset: give either a synthetic spec or image-folder roots, not both");
  if (!d.synthetic && (src.empty() || tgt.empty()))
    throw ConfigError("dataset: image folders need both source_root and target_root");
  return d;
}

LoadedData load_data(const DatasetSpec& spec) {
  if (spec.synthetic) {
    auto b = make_synthetic_benchmark(*spec.synthetic);
    return {std::move(b.source), std::move(b.target), std::move(b.label_space)};
  }
  int n_known = spec.n_known, n_unknown = spec.n_unknown;
  if (!spec.split_preset.empty()) {
    const auto p = split_preset(spec.split_preset);
    if (!p) throw ConfigError("dataset: unknown split preset '" + spec.split_preset + "'");
    n_known = p->n_known;
    n_unknown = p->n_unknown;
  }
  for (const auto& root : {spec.source_root, spec.target_root})
    if (!std::filesystem::is_directory(root)) throw ConfigError("dataset: no such directory " + root.string());
  // Classes of the target domain define the split; the source must hold the known ones.
  const LabelSpace ls = osda_split(list_class_directories(spec.target_root), n_known, n_unknown);
  ImageFolderOptions opts;
  opts.shape = spec.image;
  DomainDataset source = load_image_folder(spec.source_root, ls, DomainRole::Source, opts);
  DomainDataset target = load_image_folder(spec.target_root, ls, DomainRole::Target, opts);
  return {std::move(source), std::move(target), ls};
}

void ExperimentManifest::validate() const {
  config.validate();
  if (repeats < 1) throw ConfigError("manifest: repeats must be at least 1");
  if (output_dir.empty()) throw ConfigError("manifest: output_dir is empty");
}

Json to_json(const ExperimentManifest& m) {
  return {{"config", to_json(m.config)},
          {"dataset", to_json(m.dataset)},
          {"repeats", m.repeats},
          {"output_dir", m.output_dir.string()},
          {"task", m.task}};
}

ExperimentManifest manifest_from_json(const Json& j) {
  Reader r(j, "manifest");
  ExperimentManifest m;
  if (const Json* c = r.sub("config")) m.config = train_config_from_json(*c);
  if (const Json* d = r.sub("dataset")) {
    m.dataset = dataset_spec_from_json(*d);
  } else {
    m.dataset.synthetic = SyntheticBenchmarkSpec{};
  }
  r.get("repeats", m.repeats);
  std::string out = m.output_dir.string();
  r.get("output_dir", out);
  m.output_dir = out;
  r.get("task", m.task);
  r.finish();
  return m;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ExperimentManifest read_manifest(const std::filesystem::path& path) { return manifest_from_json(read_json_file(path)); }

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace osda
