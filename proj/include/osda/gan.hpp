#pragma once

// Generator/discriminator pair trained on the negative set. The generator is
// pushed to fool the discriminator and, through the frozen open-set model, to
// produce samples the closed-set head assigns confidently and every
// one-vs-all classifier calls "known".

#include "osda/data.hpp"
#include "osda/losses.hpp"
#include "osda/model.hpp"
#include "osda/negatives.hpp"
#include "osda/optim.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace osda::gan {

enum class DiscriminatorVariant { Standalone, SharedBackbone };

std::string to_string(DiscriminatorVariant v);
DiscriminatorVariant discriminator_variant_from_string(const std::string& s);

struct GanConfig {
  long latent_dim = 100;
  long gan_epochs = 200;
  DiscriminatorVariant disc_variant = DiscriminatorVariant::Standalone;
  double generator_lr = 2e-4;
  double discriminator_lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double w_adv = 1.0;
  double w_ent = 1.0;
  double w_agree = 1.0;
  long batch_size = 36;
  long mlp_hidden = 128;          // vector-mode generator / discriminator width
  long base_channels = 16;        // image-mode DCGAN width multiplier
  long native_resolution = 64;    // image-mode generator output side
  long head_width = 1024;         // shared-backbone discriminator projection
  bool freeze_shared_backbone = true;

  void validate() const;
  bool operator==(const GanConfig&) const = default;
};

struct GeneratorSpec {
  DataMode mode = DataMode::Vector;
  long latent_dim = 100;
  long hidden = 128;
  long base_channels = 16;
  long native_resolution = 64;
  std::optional<nn::ImageShape> image_shape;  // backbone input shape in image mode
  RowVector value_min;                        // output range, one entry per column
  RowVector value_max;

  long output_width() const { return value_min.size(); }
};

class Generator {
 public:
  Generator(GeneratorSpec spec, Rng& init);

  const GeneratorSpec& spec() const { return spec_; }
  long latent_dim() const { return spec_.latent_dim; }
  nn::Sequential& net() { return net_; }

  Matrix sample_latent(long n, Rng& rng) const;
  // Eval-mode synthesis.
  Matrix generate(long n, Rng& rng);
  Matrix generate_from(const Matrix& latent);

  Matrix forward(const Matrix& latent, nn::Mode mode, nn::Trace* trace) { return net_.forward(latent, mode, trace); }
  Matrix backward(const Matrix& grad, const nn::Trace& trace) { return net_.backward(grad, trace); }

 private:
  GeneratorSpec spec_;
  nn::Sequential net_;
};

class Discriminator {
 public:
  // Standalone discriminator for samples of the given width / image shape.
  Discriminator(DataMode mode, long sample_width, std::optional<nn::ImageShape> shape, const GanConfig& cfg, Rng& init);
  // Head stacked on an existing feature extractor (weights shared, not copied).
  Discriminator(std::shared_ptr<nn::Sequential> backbone, const GanConfig& cfg, Rng& init);

  DiscriminatorVariant variant() const { return variant_; }
  std::shared_ptr<nn::Sequential> shared_backbone() const { return backbone_; }
  nn::Sequential& head() { return head_; }
  long input_width() const;
  bool backbone_frozen() const { return frozen_backbone_; }

  struct Pass {
    nn::Trace backbone;
    nn::Trace head;
  };
  // Real-ness scores in (0, 1), one row per sample.
  Matrix forward(const Matrix& x, nn::Mode mode, Pass* pass);
  Matrix backward(const Matrix& grad, const Pass& pass);
  std::vector<nn::Parameter*> trainable_parameters();
  void zero_grad();

 private:
  DiscriminatorVariant variant_;
  std::shared_ptr<nn::Sequential> backbone_;  // SharedBackbone only
  nn::Sequential head_;                       // the whole network when standalone
  bool frozen_backbone_ = true;
};

// Per-sample real-ness scores, strictly inside (0, 1).
std::vector<double> discriminator_score(Discriminator& disc, const Matrix& batch);

// Generator objective terms for one fake batch.
struct GeneratorTerms {
  Matrix fakes;
  double adversarial = 0.0;
  double entropy = 0.0;    // generator_entropy_loss on the fakes
  double agreement = 0.0;  // generator_agreement_loss on the fakes
  double total = 0.0;
};

struct GanModels {
  std::unique_ptr<Generator> generator;
  std::unique_ptr<Discriminator> discriminator;
};

struct GanTrainResult {
  GanModels models;
  std::vector<double> generator_epoch_loss;
  std::vector<double> discriminator_epoch_loss;
  long generator_steps = 0;
  long discriminator_steps = 0;
  GeneratorTerms last_terms;
};

// Builds fresh generator/discriminator models for the negative set.
GanModels make_gan(const NegativeSet& negatives, OpenSetModel& model, const GanConfig& config, Rng& init);

// Alternating updates. The generator objective is backpropagated through the
// discriminator and through the open-set model (whose own parameters are not
// stepped); generator_step returns the terms computed before its update.
class GanStepper {
 public:
  GanStepper(GanModels& models, OpenSetModel& model, const GanConfig& config);

  double discriminator_step(const Matrix& real, const Matrix& latent);
  GeneratorTerms generator_step(const Matrix& latent);
  // Generator gradient without a parameter update (for inspection).
  GeneratorTerms generator_gradient(const Matrix& latent);

 private:
  GanModels& models_;
  OpenSetModel& model_;
  GanConfig config_;
  nn::Adam gen_opt_;
  nn::Adam disc_opt_;
};

// Trains the pair on `negatives`. When `warm_start` holds models they are
// trained further instead of being re-created. The shared-backbone variant
// attaches `model`'s feature extractor.
GanTrainResult train_gan(const NegativeSet& negatives, OpenSetModel& model, const GanConfig& config, Rng& rng,
                         GanModels warm_start = {});

}  // namespace osda::gan
