#include "osda/trainer.hpp"

#include "osda/checkpoint.hpp"
#include "osda/config.hpp"
#include "osda/losses.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace osda {

namespace {

// Stream tags for Rng::derive.
constexpr std::uint64_t kSourceStream = 0x737263;
constexpr std::uint64_t kTargetStream = 0x746774;
constexpr std::uint64_t kNegativeStream = 0x6e6567;
constexpr std::uint64_t kGanStream = 0x67616e;

}  // namespace

std::string to_string(LrSchedule s) { return s == LrSchedule::Constant ? "constant" : "inverse"; }

LrSchedule lr_schedule_from_string(const std::string& s) {
  if (s == "inverse") return LrSchedule::InverseDecay;
  if (s == "constant") return LrSchedule::Constant;
  throw ConfigError("unknown lr schedule '" + s + "' (expected inverse|constant)");
}

std::string to_string(Phase p) { return p == Phase::Base ? "base" : "strategy"; }

void TrainConfig::validate() const {
  if (!(breakpoint_iteration > 0 && breakpoint_iteration < total_iterations))
    throw ConfigError("config: need 0 < breakpoint_iteration < total_iterations");
  if (!(lambda_neg >= 0.0) || !std::isfinite(lambda_neg)) throw ConfigError("config: lambda_neg must be non-negative");
  if (batch_size < 1) throw ConfigError("config: batch_size must be at least 1");
  if (!(lr_heads >= 0.0) || !(lr_backbone >= 0.0)) throw ConfigError("config: learning rates must be non-negative");
  if (!(extraction_threshold >= 0.0 && extraction_threshold < 1.0))
    throw ConfigError("config: extraction_threshold must lie in [0, 1)");
  if (interleave_interval && *interleave_interval < 1) throw ConfigError("config: interleave_interval must be positive");
  if (interleave_interval && strategy != Strategy::GenerationPP)
    throw ConfigError("config: interleave_interval only applies to the generationpp strategy");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("config: momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be non-negative");
  if (lr_gamma < 0.0 || lr_power < 0.0) throw ConfigError("config: lr_gamma and lr_power must be non-negative");
  gan.validate();
  augment.validate();
}

TrainConfig preset(const std::string& name) {
  TrainConfig c;
  if (name == "desk") {
    c.total_iterations = 2000;
    c.breakpoint_iteration = 1000;
  } else if (name == "half") {
    c.total_iterations = 10000;
    c.breakpoint_iteration = 5000;
  } else if (name == "office-full") {
    c.total_iterations = 10000;
    c.breakpoint_iteration = 1000;
  } else if (name == "visda-full") {
    c.total_iterations = 25000;
    c.breakpoint_iteration = 1000;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected desk|half|office-full|visda-full)");
  }
  return c;
}

std::vector<long> event_schedule(const TrainConfig& config) {
  std::vector<long> out;
  if (config.strategy == Strategy::Baseline) return out;
  out.push_back(config.breakpoint_iteration);
  if (config.strategy == Strategy::GenerationPP && config.interleave_interval) {
    for (long it = config.breakpoint_iteration + *config.interleave_interval; it < config.total_iterations;
         it += *config.interleave_interval)
      out.push_back(it);
  }
  return out;
}

double lr_multiplier(const TrainConfig& config, long iteration) {
  if (config.lr_schedule == LrSchedule::Constant) return 1.0;
  const double progress =
      std::min(1.0, static_cast<double>(iteration - 1) / static_cast<double>(config.total_iterations));
  return std::pow(1.0 + config.lr_gamma * progress, -config.lr_power);
}

StepLosses accumulate_gradients(OpenSetModel& model, const Matrix& source, std::span<const int> labels,
                                const Matrix& target, const Matrix* negatives, double lambda,
                                const std::function<void(const std::string&)>& on_term) {
  auto note = [&](const char* name) {
    if (on_term) on_term(name);
  };
  StepLosses out;
  out.lambda = lambda;

  const auto src = model.forward(source, nn::Mode::Train);
  const auto ce = losses::closed_set_cross_entropy(src.closed, labels);
  const auto hn = losses::hard_negative_classifier_sampling_loss(src.open, labels);
  model.backward(src, &ce.grad, &hn.grad);
  note("closed_ce");
  note("hncs");
  out.closed_ce = ce.value();
  out.hncs = hn.value();

  const auto tgt = model.forward(target, nn::Mode::Train);
  const auto oem = losses::open_set_entropy_minimization(tgt.open);
  model.backward(tgt, nullptr, &oem.grad);
  note("oem");
  out.oem = oem.value();

  if (negatives) {
    const auto neg = model.forward(*negatives, nn::Mode::Train);
    const auto nc = losses::negative_constraint_loss(neg.open);
    const Matrix g = lambda * nc.grad;
    model.backward(neg, nullptr, &g);
    note("negative_constraint");
    out.negative = nc.value();
  }
  return out;
}

Trainer::Trainer(TrainConfig config, const DomainDataset& source, const DomainDataset& target,
                 LabelSpace label_space)
    : config_(std::move(config)),
      source_(&source),
      target_(target.unlabeled()),
      label_space_(std::move(label_space)),
      source_sampler_(source.size() > 0 ? source.size() : 1, Rng::derive(config_.seed, kSourceStream)),
      target_sampler_(target.size() > 0 ? target.size() : 1, Rng::derive(config_.seed, kTargetStream)),
      negative_rng_(Rng::derive(config_.seed, kNegativeStream)),
      gan_rng_(Rng::derive(config_.seed, kGanStream)) {
  config_.validate();
  if (source.role() != DomainRole::Source) throw ContractError("trainer: the first dataset must be a source domain");
  if (target.role() != DomainRole::Target) throw ContractError("trainer: the second dataset must be a target domain");
  if (source.size() == 0 || target.size() == 0) throw ContractError("trainer: empty source or target domain");
  if (source.sample_width() != target.sample_width())
    throw ContractError("trainer: source and target samples differ in width");
  if (config_.backbone.input_width() != source.sample_width())
    throw ContractError("trainer: backbone expects inputs of width " + std::to_string(config_.backbone.input_width()) +
                        ", data has " + std::to_string(source.sample_width()));
  source_labels_ = source.source_labels(label_space_);
  model_ = std::make_shared<OpenSetModel>(label_space_, config_.backbone, config_.seed);
  optimizer_ = std::make_unique<nn::Sgd>(
      std::vector<nn::ParamGroup>{{model_->backbone_parameters(), config_.lr_backbone},
                                  {model_->head_parameters(), config_.lr_heads}},
      config_.momentum, config_.weight_decay, config_.nesterov);
  schedule_ = event_schedule(config_);
}

void Trainer::log(const std::string& name, double value) {
  state_.loss_history.push_back({state_.iteration + 1, state_.phase, name, value});
}

void Trainer::step() {
  if (done()) throw ContractError("trainer: training already finished");
  const long it = state_.iteration + 1;
  const double mult = lr_multiplier(config_, it);
  optimizer_->set_lr(0, config_.lr_backbone * mult);
  optimizer_->set_lr(1, config_.lr_heads * mult);

  const auto src_rows = source_sampler_.next(config_.batch_size);
  const auto tgt_rows = target_sampler_.next(config_.batch_size);
  const Matrix xs = gather_rows(source_->samples(), src_rows);
  std::vector<int> ys(src_rows.size());
  for (std::size_t i = 0; i < src_rows.size(); ++i) ys[i] = source_labels_[static_cast<std::size_t>(src_rows[i])];
  const Matrix xt = gather_rows(target_.samples(), tgt_rows);

  std::optional<Matrix> xneg;
  if (state_.phase == Phase::Strategy && state_.negatives) {
    gan::Generator* gen = state_.gan.generator.get();
    const bool generative = config_.strategy == Strategy::Generation || config_.strategy == Strategy::GenerationPP;
    if (generative ? gen != nullptr : !state_.negatives->empty())
      xneg = negative_batch(config_.strategy, *state_.negatives, gen, config_.batch_size, negative_rng_,
                            config_.augment);
  }

  model_->zero_grad();
  StepLosses l;
  try {
    l = accumulate_gradients(*model_, xs, ys, xt, xneg ? &*xneg : nullptr, config_.lambda_neg,
                             [&](const std::string& term) {
                               if (gradient_hook_) gradient_hook_(it, term);
                             });
  } catch (const NumericError& e) {
    throw TrainingError(std::string("training diverged at iteration ") + std::to_string(it) + ": " + e.what());
  }
  if (!std::isfinite(l.total())) throw TrainingError("training diverged at iteration " + std::to_string(it));
  optimizer_->step();

  log("closed_ce", l.closed_ce);
  log("hncs", l.hncs);
  log("oem", l.oem);
  if (l.negative) {
    log("negative_constraint", *l.negative);
    log("negative_term", l.negative_term());
  }
  log("total", l.total());
  state_.iteration = it;

  if (it == config_.breakpoint_iteration) {
    state_.phase = Phase::Strategy;
    if (config_.freeze_batchnorm_after_breakpoint) model_->backbone()->set_batchnorm_frozen(true);
  }
  if (std::binary_search(schedule_.begin(), schedule_.end(), it)) {
    try {
      run_events();
    } catch (const TrainingError&) {
      if (!abort_path_.empty()) {
        state_.warnings.push_back("aborted during the event at iteration " + std::to_string(it));
        save(abort_path_);
      }
      throw;
    }
  }
}

void Trainer::run_events() {
  const long it = state_.iteration;
  state_.negatives = extract_negatives(*model_, target_, config_.extraction_threshold, it);
  TrainEvent ev{it, EventKind::Extraction, state_.negatives->size()};
  state_.events.push_back(ev);
  if (event_hook_) event_hook_(ev);

  const bool generative = config_.strategy == Strategy::Generation || config_.strategy == Strategy::GenerationPP;
  if (state_.negatives->empty()) {
    const std::string msg = "iteration " + std::to_string(it) + ": no target sample exceeds the extraction threshold " +
                            std::to_string(config_.extraction_threshold) +
                            (generative && state_.gan.generator ? "; keeping the previous generator"
                                                                : "; continuing with the base objective only");
    state_.warnings.push_back(msg);
    std::cerr << "warning: " << msg << '\n';
    return;
  }
  if (!generative) return;

  gan::GanModels warm;
  if (config_.strategy == Strategy::GenerationPP) warm = std::move(state_.gan);
  auto result = gan::train_gan(*state_.negatives, *model_, config_.gan, gan_rng_, std::move(warm));
  state_.gan = std::move(result.models);
  state_.last_gan_epoch_losses = std::move(result.generator_epoch_loss);
  TrainEvent gev{it, EventKind::GanTraining, state_.negatives->size()};
  state_.events.push_back(gev);
  if (event_hook_) event_hook_(gev);
}

void Trainer::run_until(long iteration) {
  const long stop = std::min(iteration, config_.total_iterations);
  while (state_.iteration < stop) step();
}

void Trainer::write_loss_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iteration,phase,loss_name,value\n";
  char buf[32];
  for (const auto& r : state_.loss_history) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    out << r.iteration << ',' << to_string(r.phase) << ',' << r.name << ',' << buf << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

Json sampler_json(BatchSampler& s) {
  return {{"permutation", s.permutation()}, {"cursor", s.cursor()}, {"rng", s.rng().state()}};
}

void restore_sampler(BatchSampler& s, const Json& j) {
  s.restore(j.at("permutation").get<std::vector<long>>(), j.at("cursor").get<long>(), j.at("rng").get<std::string>());
}

Json shape_json(const std::optional<nn::ImageShape>& s) {
  if (!s) return nullptr;
  return Json::array({s->channels, s->height, s->width});
}

std::optional<nn::ImageShape> shape_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return nn::ImageShape{j[0].get<long>(), j[1].get<long>(), j[2].get<long>()};
}

}  // namespace

void Trainer::save(const std::filesystem::path& path) {
  Checkpoint ck;
  Json& h = ck.header;
  h["format"] = "osda-trainer";
  h["config"] = to_json(config_);
  h["label_space"] = to_json(label_space_);
  h["iteration"] = state_.iteration;
  h["phase"] = to_string(state_.phase);
  h["samplers"] = {{"source", sampler_json(source_sampler_)}, {"target", sampler_json(target_sampler_)}};
  h["rng"] = {{"negatives", negative_rng_.state()}, {"gan", gan_rng_.state()}};
  Json hist = Json::array();
  for (const auto& r : state_.loss_history) hist.push_back({r.iteration, to_string(r.phase), r.name, r.value});
  h["loss_history"] = std::move(hist);
  Json events = Json::array();
  for (const auto& e : state_.events)
    events.push_back({e.iteration, e.kind == EventKind::Extraction ? "extraction" : "gan", e.negatives});
  h["events"] = std::move(events);
  h["warnings"] = state_.warnings;
  h["last_gan_epoch_losses"] = state_.last_gan_epoch_losses;

  store_model(ck, *model_);
  const auto velocity = optimizer_->state();
  for (std::size_t i = 0; i < velocity.size(); ++i) ck.tensors["optim." + std::to_string(i)] = *velocity[i];

  if (state_.negatives) {
    const NegativeSet& n = *state_.negatives;
    Json items = Json::array();
    for (const auto& it : n.items()) items.push_back({it.sample_index, it.sample_id, it.unknown_confidence});
    h["negatives"] = {{"items", std::move(items)},
                      {"source_iteration", n.source_iteration()},
                      {"threshold", n.threshold()},
                      {"image_shape", shape_json(n.image_shape())}};
    ck.tensors["negatives.samples"] = n.samples();
    ck.tensors["negatives.std"] = n.feature_std();
    ck.tensors["negatives.min"] = n.value_min();
    ck.tensors["negatives.max"] = n.value_max();
  } else {
    h["negatives"] = nullptr;
  }

  if (state_.gan.generator) {
    const auto& spec = state_.gan.generator->spec();
    h["gan"] = {{"mode", to_string(spec.mode)},
                {"latent_dim", spec.latent_dim},
                {"hidden", spec.hidden},
                {"base_channels", spec.base_channels},
                {"native_resolution", spec.native_resolution},
                {"image_shape", shape_json(spec.image_shape)},
                {"disc_width", state_.gan.discriminator->input_width()}};
    ck.tensors["gan.value_min"] = spec.value_min;
    ck.tensors["gan.value_max"] = spec.value_max;
    store_sequential(ck, state_.gan.generator->net(), "gan.generator.");
    store_sequential(ck, state_.gan.discriminator->head(), "gan.discriminator.");
  } else {
    h["gan"] = nullptr;
  }
  write_checkpoint(path, ck);
}

Trainer Trainer::resume(const std::filesystem::path& path, const DomainDataset& source, const DomainDataset& target,
                        const LabelSpace& label_space) {
  const Checkpoint ck = read_checkpoint(path);
  const Json& h = ck.header;
  try {
    if (h.value("format", "") != "osda-trainer") throw ContractError(path.string() + ": not a trainer checkpoint");
    const LabelSpace saved = label_space_from_json(h.at("label_space"));
    if (!(saved == label_space))
      throw ContractError(path.string() + ": checkpoint was trained on a different label space");
    Trainer t(train_config_from_json(h.at("config")), source, target, label_space);

    restore_model(ck, *t.model_);
    const auto velocity = t.optimizer_->state();
    for (std::size_t i = 0; i < velocity.size(); ++i) {
      const Matrix& v = ck.tensor("optim." + std::to_string(i));
      if (v.rows() != velocity[i]->rows() || v.cols() != velocity[i]->cols())
        throw ContractError("checkpoint: optimizer state does not match the model");
      *velocity[i] = v;
    }
    restore_sampler(t.source_sampler_, h.at("samplers").at("source"));
    restore_sampler(t.target_sampler_, h.at("samplers").at("target"));
    t.negative_rng_.set_state(h.at("rng").at("negatives").get<std::string>());
    t.gan_rng_.set_state(h.at("rng").at("gan").get<std::string>());

    TrainState& s = t.state_;
    s.iteration = h.at("iteration").get<long>();
    s.phase = h.at("phase").get<std::string>() == "base" ? Phase::Base : Phase::Strategy;
    for (const auto& r : h.at("loss_history"))
      s.loss_history.push_back({r[0].get<long>(), r[1].get<std::string>() == "base" ? Phase::Base : Phase::Strategy,
                                r[2].get<std::string>(), r[3].get<double>()});
    for (const auto& e : h.at("events"))
      s.events.push_back({e[0].get<long>(),
                          e[1].get<std::string>() == "extraction" ? EventKind::Extraction : EventKind::GanTraining,
                          e[2].get<long>()});
    s.warnings = h.at("warnings").get<std::vector<std::string>>();
    s.last_gan_epoch_losses = h.at("last_gan_epoch_losses").get<std::vector<double>>();
    if (s.phase == Phase::Strategy && t.config_.freeze_batchnorm_after_breakpoint)
      t.model_->backbone()->set_batchnorm_frozen(true);

    const Json& nj = h.at("negatives");
    if (!nj.is_null()) {
      std::vector<NegativeItem> items;
      for (const auto& it : nj.at("items"))
        items.push_back({it[0].get<long>(), it[1].get<std::string>(), it[2].get<double>()});
      s.negatives = NegativeSet(std::move(items), ck.tensor("negatives.samples"), nj.at("source_iteration").get<long>(),
                                nj.at("threshold").get<double>(), ck.tensor("negatives.std"),
                                ck.tensor("negatives.min"), ck.tensor("negatives.max"),
                                shape_from(nj.at("image_shape")));
    }

    const Json& gj = h.at("gan");
    if (!gj.is_null()) {
      gan::GeneratorSpec spec;
      spec.mode = gj.at("mode").get<std::string>() == "image" ? DataMode::Image : DataMode::Vector;
      spec.latent_dim = gj.at("latent_dim").get<long>();
      spec.hidden = gj.at("hidden").get<long>();
      spec.base_channels = gj.at("base_channels").get<long>();
      spec.native_resolution = gj.at("native_resolution").get<long>();
      spec.image_shape = shape_from(gj.at("image_shape"));
      spec.value_min = ck.tensor("gan.value_min");
      spec.value_max = ck.tensor("gan.value_max");
      const DataMode mode = spec.mode;
      const auto image_shape = spec.image_shape;
      // Weights are overwritten below; the init stream is a throwaway.
      Rng scratch(0);
      s.gan.generator = std::make_unique<gan::Generator>(std::move(spec), scratch);
      if (t.config_.gan.disc_variant == gan::DiscriminatorVariant::SharedBackbone) {
        s.gan.discriminator = std::make_unique<gan::Discriminator>(t.model_->backbone(), t.config_.gan, scratch);
      } else {
        s.gan.discriminator = std::make_unique<gan::Discriminator>(mode, gj.at("disc_width").get<long>(), image_shape,
                                                                   t.config_.gan, scratch);
      }
      restore_sequential(ck, s.gan.generator->net(), "gan.generator.");
      restore_sequential(ck, s.gan.discriminator->head(), "gan.discriminator.");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(path.string() + ": corrupt checkpoint: " + e.what());
  }
}

TrainResult train(const TrainConfig& config, const DomainDataset& source, const DomainDataset& target,
                  const LabelSpace& label_space) {
  Trainer t(config, source, target, label_space);
  t.run();
  TrainResult r;
  r.model = t.shared_model();
  r.state = t.take_state();
  return r;
}

}  // namespace osda
