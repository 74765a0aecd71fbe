#include "osda/gan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace osda::gan {

using nn::ActivationKind;
using nn::Mode;

std::string to_string(DiscriminatorVariant v) {
  return v == DiscriminatorVariant::Standalone ? "standalone" : "shared_backbone";
}

DiscriminatorVariant discriminator_variant_from_string(const std::string& s) {
  if (s == "standalone") return DiscriminatorVariant::Standalone;
  if (s == "shared_backbone" || s == "sharedbackbone") return DiscriminatorVariant::SharedBackbone;
  throw ConfigError("unknown discriminator variant '" + s + "'");
}

void GanConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("gan: latent_dim must be at least 1");
  if (gan_epochs < 1) throw ConfigError("gan: gan_epochs must be at least 1");
  if (!(generator_lr > 0) || !(discriminator_lr > 0)) throw ConfigError("gan: learning rates must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("gan: betas must lie in [0, 1)");
  for (double w : {w_adv, w_ent, w_agree})
    if (!std::isfinite(w) || w < 0) throw ConfigError("gan: loss weights must be finite and non-negative");
  if (batch_size < 1) throw ConfigError("gan: batch_size must be at least 1");
  if (mlp_hidden < 1 || base_channels < 1 || head_width < 1) throw ConfigError("gan: widths must be positive");
  if (native_resolution < 8 || (native_resolution & (native_resolution - 1)) != 0)
    throw ConfigError("gan: native_resolution must be a power of two ≥ 8");
}

// ---------------------------------------------------------------------------
// Generator

Generator::Generator(GeneratorSpec spec, Rng& init) : spec_(std::move(spec)) {
  const long out = spec_.output_width();
  if (out < 1 || spec_.value_max.size() != out) throw ContractError("generator: output range must cover every column");
  if (spec_.latent_dim < 1) throw ContractError("generator: latent_dim must be positive");

  // tanh output in [-1, 1] mapped onto [value_min, value_max] per column.
  RowVector scale = 0.5 * (spec_.value_max - spec_.value_min);
  RowVector shift = 0.5 * (spec_.value_max + spec_.value_min);

  if (spec_.mode == DataMode::Vector) {
    net_.add<nn::Linear>(spec_.latent_dim, spec_.hidden, init);
    net_.add<nn::Activation>(ActivationKind::ReLU, spec_.hidden);
    net_.add<nn::Linear>(spec_.hidden, spec_.hidden, init);
    net_.add<nn::Activation>(ActivationKind::ReLU, spec_.hidden);
    net_.add<nn::Linear>(spec_.hidden, out, init);
    net_.add<nn::Activation>(ActivationKind::Tanh, out);
    net_.add<nn::FixedAffine>(scale, shift);
    return;
  }

  if (!spec_.image_shape) throw ContractError("generator: image mode needs an image shape");
  const nn::ImageShape target = *spec_.image_shape;
  // DCGAN stack: 1x1 → 4x4, then doubling up to the native resolution.
  long stages = 0;
  for (long r = 4; r < spec_.native_resolution; r *= 2) ++stages;
  long channels = spec_.base_channels << std::max<long>(stages - 1, 0);
  nn::ImageShape shape{spec_.latent_dim, 1, 1};
  auto& first = net_.add<nn::ConvTranspose2d>(shape, channels, 4, 1, 0, init);
  shape = first.output_shape();
  for (long s = 0; s < stages; ++s) {
    net_.add<nn::BatchNorm>(shape.channels, shape.height * shape.width);
    net_.add<nn::Activation>(ActivationKind::ReLU, shape.size());
    const long next = s + 1 == stages ? target.channels : std::max<long>(channels / 2, 1);
    auto& up = net_.add<nn::ConvTranspose2d>(shape, next, 4, 2, 1, init);
    shape = up.output_shape();
    channels = next;
  }
  if (stages == 0) {
    auto& proj = net_.add<nn::ConvTranspose2d>(shape, target.channels, 1, 1, 0, init);
    shape = proj.output_shape();
  }
  net_.add<nn::Activation>(ActivationKind::Tanh, shape.size());
  if (shape.height != target.height || shape.width != target.width) {
    net_.add<nn::Resample>(shape, target.height, target.width);
  }
  net_.add<nn::FixedAffine>(scale, shift);
}

Matrix Generator::sample_latent(long n, Rng& rng) const { return rng.normal_matrix(n, spec_.latent_dim); }

Matrix Generator::generate(long n, Rng& rng) {
  if (n < 0) throw ContractError("generate: negative sample count");
  if (n == 0) return Matrix(0, spec_.output_width());
  return generate_from(sample_latent(n, rng));
}

Matrix Generator::generate_from(const Matrix& latent) {
  if (latent.rows() == 0) return Matrix(0, spec_.output_width());
  return net_.infer(latent);
}

// ---------------------------------------------------------------------------
// Discriminator

Discriminator::Discriminator(DataMode mode, long sample_width, std::optional<nn::ImageShape> shape,
                             const GanConfig& cfg, Rng& init)
    : variant_(DiscriminatorVariant::Standalone) {
  if (mode == DataMode::Vector) {
    head_.add<nn::Linear>(sample_width, cfg.mlp_hidden, init);
    head_.add<nn::Activation>(ActivationKind::LeakyReLU, cfg.mlp_hidden);
    head_.add<nn::Linear>(cfg.mlp_hidden, cfg.mlp_hidden, init);
    head_.add<nn::Activation>(ActivationKind::LeakyReLU, cfg.mlp_hidden);
    head_.add<nn::Linear>(cfg.mlp_hidden, 1, init);
  } else {
    if (!shape || shape->size() != sample_width) throw ContractError("discriminator: image mode needs an image shape");
    nn::ImageShape s = *shape;
    long channels = cfg.base_channels;
    do {
      auto& conv = head_.add<nn::Conv2d>(s, channels, 4, 2, 1, init);
      s = conv.output_shape();
      head_.add<nn::Activation>(ActivationKind::LeakyReLU, s.size());
      channels *= 2;
    } while (s.height > 4 && s.width > 4);
    head_.add<nn::Linear>(s.size(), 1, init);
  }
  head_.add<nn::Activation>(ActivationKind::Sigmoid, 1);
}

Discriminator::Discriminator(std::shared_ptr<nn::Sequential> backbone, const GanConfig& cfg, Rng& init)
    : variant_(DiscriminatorVariant::SharedBackbone),
      backbone_(std::move(backbone)),
      frozen_backbone_(cfg.freeze_shared_backbone) {
  if (!backbone_) throw ContractError("discriminator: shared variant needs a backbone");
  const long d = backbone_->output_width();
  head_.add<nn::Linear>(d, cfg.head_width, init);
  head_.add<nn::Activation>(ActivationKind::Sigmoid, cfg.head_width);
  head_.add<nn::Linear>(cfg.head_width, 1, init);
  head_.add<nn::Activation>(ActivationKind::Sigmoid, 1);
}

long Discriminator::input_width() const { return backbone_ ? backbone_->input_width() : head_.input_width(); }

Matrix Discriminator::forward(const Matrix& x, Mode mode, Pass* pass) {
  if (x.cols() != input_width())
    throw ContractError("discriminator: sample width " + std::to_string(x.cols()) + " does not match input width " +
                        std::to_string(input_width()));
  Matrix h = x;
  if (backbone_) {
    // A frozen backbone keeps its statistics untouched.
    const Mode bm = frozen_backbone_ ? Mode::Eval : mode;
    h = backbone_->forward(x, bm, pass ? &pass->backbone : nullptr);
  }
  return head_.forward(h, mode, pass ? &pass->head : nullptr);
}

Matrix Discriminator::backward(const Matrix& grad, const Pass& pass) {
  Matrix g = head_.backward(grad, pass.head);
  if (backbone_) g = backbone_->backward(g, pass.backbone);
  return g;
}

std::vector<nn::Parameter*> Discriminator::trainable_parameters() {
  std::vector<nn::Parameter*> out = head_.parameters();
  if (backbone_ && !frozen_backbone_)
    for (auto* p : backbone_->parameters()) out.push_back(p);
  return out;
}

void Discriminator::zero_grad() {
  head_.zero_grad();
  if (backbone_) backbone_->zero_grad();
}

std::vector<double> discriminator_score(Discriminator& disc, const Matrix& batch) {
  const Matrix s = disc.forward(batch, Mode::Eval, nullptr);
  std::vector<double> out(static_cast<std::size_t>(s.rows()));
  for (long i = 0; i < s.rows(); ++i) {
    // Keep the open-interval contract even where the sigmoid saturates in
    // double precision.
    out[i] = std::clamp(s(i, 0), std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

GanModels make_gan(const NegativeSet& negatives, OpenSetModel& model, const GanConfig& config, Rng& init) {
  config.validate();
  if (negatives.empty()) throw ConfigError("train_gan: the negative set is empty");
  GeneratorSpec spec;
  spec.mode = negatives.image_shape() ? DataMode::Image : DataMode::Vector;
  spec.latent_dim = config.latent_dim;
  spec.hidden = config.mlp_hidden;
  spec.base_channels = config.base_channels;
  spec.native_resolution = config.native_resolution;
  spec.image_shape = negatives.image_shape();
  spec.value_min = negatives.value_min();
  spec.value_max = negatives.value_max();
  // Degenerate columns still get a usable range.
  for (long k = 0; k < spec.value_min.size(); ++k) {
    if (spec.value_max(k) - spec.value_min(k) < 1e-6) {
      spec.value_min(k) -= 0.5;
      spec.value_max(k) += 0.5;
    }
  }

  const DataMode mode = spec.mode;
  GanModels m;
  m.generator = std::make_unique<Generator>(std::move(spec), init);
  if (config.disc_variant == DiscriminatorVariant::SharedBackbone) {
    m.discriminator = std::make_unique<Discriminator>(model.backbone(), config, init);
  } else {
    m.discriminator = std::make_unique<Discriminator>(mode, negatives.sample_width(), negatives.image_shape(),
                                                      config, init);
  }
  if (m.discriminator->input_width() != model.backbone()->input_width())
    throw ContractError("train_gan: discriminator input does not match the model input");
  return m;
}

namespace {

// Binary cross-entropy on probabilities with the loss clamp; returns the mean
// loss and writes d loss / d prob.
double bce(const Matrix& probs, double target, Matrix& grad) {
  const long n = probs.rows();
  grad.resize(n, 1);
  double sum = 0.0;
  for (long i = 0; i < n; ++i) {
    const double p = probs(i, 0);
    if (target == 1.0) {
      if (p > losses::kEpsilon) {
        sum -= std::log(p);
        grad(i, 0) = -1.0 / p;
      } else {
        sum -= std::log(losses::kEpsilon);
        grad(i, 0) = 0.0;
      }
    } else {
      const double q = 1.0 - p;
      if (q > losses::kEpsilon) {
        sum -= std::log(q);
        grad(i, 0) = 1.0 / q;
      } else {
        sum -= std::log(losses::kEpsilon);
        grad(i, 0) = 0.0;
      }
    }
  }
  grad /= static_cast<double>(n);
  return sum / static_cast<double>(n);
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw TrainingError(std::string("GAN training diverged: non-finite ") + what);
}

}  // namespace

GanStepper::GanStepper(GanModels& models, OpenSetModel& model, const GanConfig& config)
    : models_(models),
      model_(model),
      config_(config),
      gen_opt_(models.generator->net().parameters(), config.generator_lr, config.beta1, config.beta2),
      disc_opt_(models.discriminator->trainable_parameters(), config.discriminator_lr, config.beta1, config.beta2) {}

double GanStepper::discriminator_step(const Matrix& real, const Matrix& latent) {
  Discriminator& disc = *models_.discriminator;
  const Matrix fakes = models_.generator->forward(latent, Mode::Train, nullptr);
  disc.zero_grad();
  Matrix g;
  Discriminator::Pass real_pass, fake_pass;
  const double real_loss = bce(disc.forward(real, Mode::Train, &real_pass), 1.0, g);
  disc.backward(g, real_pass);
  const double fake_loss = bce(disc.forward(fakes, Mode::Train, &fake_pass), 0.0, g);
  disc.backward(g, fake_pass);
  const double loss = real_loss + fake_loss;
  require_finite(loss, "discriminator loss");
  disc_opt_.step();
  return loss;
}

GeneratorTerms GanStepper::generator_gradient(const Matrix& latent) {
  Generator& gen = *models_.generator;
  Discriminator& disc = *models_.discriminator;
  gen.net().zero_grad();
  disc.zero_grad();
  model_.zero_grad();

  GeneratorTerms terms;
  nn::Trace gen_trace;
  terms.fakes = gen.forward(latent, Mode::Train, &gen_trace);
  Matrix grad_fakes = Matrix::Zero(terms.fakes.rows(), terms.fakes.cols());

  Discriminator::Pass dpass;
  Matrix g;
  terms.adversarial = bce(disc.forward(terms.fakes, Mode::Train, &dpass), 1.0, g);
  if (config_.w_adv != 0.0) grad_fakes += config_.w_adv * disc.backward(g, dpass);

  // The open-set model is evaluated without touching its statistics.
  const OpenSetModel::Pass mpass = model_.forward(terms.fakes, Mode::Eval);
  const losses::LossResult ent = losses::generator_entropy_loss(mpass.closed);
  const losses::LossResult agree = losses::generator_agreement_loss(mpass.open);
  terms.entropy = ent.value();
  terms.agreement = agree.value();
  if (config_.w_ent != 0.0 || config_.w_agree != 0.0) {
    const Matrix gc = config_.w_ent * ent.grad;
    const Matrix go = config_.w_agree * agree.grad;
    grad_fakes += model_.backward(mpass, &gc, &go);
  }
  terms.total = config_.w_adv * terms.adversarial + config_.w_ent * terms.entropy + config_.w_agree * terms.agreement;
  require_finite(terms.total, "generator loss");
  gen.backward(grad_fakes, gen_trace);
  return terms;
}

GeneratorTerms GanStepper::generator_step(const Matrix& latent) {
  GeneratorTerms terms = generator_gradient(latent);
  gen_opt_.step();
  return terms;
}

GanTrainResult train_gan(const NegativeSet& negatives, OpenSetModel& model, const GanConfig& config, Rng& rng,
                         GanModels warm_start) {
  config.validate();
  if (negatives.empty()) throw ConfigError("train_gan: the negative set is empty");
  GanTrainResult result;
  result.models = warm_start.generator && warm_start.discriminator ? std::move(warm_start)
                                                                   : make_gan(negatives, model, config, rng);
  GanStepper stepper(result.models, model, config);

  const long n = negatives.size();
  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  for (long epoch = 0; epoch < config.gan_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double g_sum = 0.0, d_sum = 0.0;
    long steps = 0;
    for (long start = 0; start < n; start += config.batch_size) {
      const long end = std::min(n, start + config.batch_size);
      const std::vector<long> rows(order.begin() + start, order.begin() + end);
      const Matrix real = gather_rows(negatives.samples(), rows);
      const Matrix latent = result.models.generator->sample_latent(end - start, rng);
      d_sum += stepper.discriminator_step(real, latent);
      ++result.discriminator_steps;
      result.last_terms = stepper.generator_step(latent);
      g_sum += result.last_terms.total;
      ++result.generator_steps;
      ++steps;
    }
    result.generator_epoch_loss.push_back(g_sum / static_cast<double>(steps));
    result.discriminator_epoch_loss.push_back(d_sum / static_cast<double>(steps));
  }
  model.zero_grad();
  return result;
}

}  // namespace osda::gan
