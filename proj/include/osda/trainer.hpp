#pragma once

#include "osda/data.hpp"
#include "osda/gan.hpp"
#include "osda/model.hpp"
#include "osda/negatives.hpp"
#include "osda/optim.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace osda {

enum class LrSchedule { InverseDecay, Constant };

std::string to_string(LrSchedule s);
LrSchedule lr_schedule_from_string(const std::string& s);

struct TrainConfig {
  long total_iterations = 2000;
  long breakpoint_iteration = 1000;
  long batch_size = 36;
  double lr_heads = 0.01;
  double lr_backbone = 0.001;
  double lambda_neg = 0.2;
  Strategy strategy = Strategy::Original;
  double extraction_threshold = kDefaultExtractionThreshold;
  std::optional<long> interleave_interval;  // GenerationPP re-extraction period
  gan::GanConfig gan;
  std::uint64_t seed = 0;

  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool nesterov = true;
  LrSchedule lr_schedule = LrSchedule::InverseDecay;
  double lr_gamma = 10.0;
  double lr_power = 0.75;
  // Batch-norm statistics stop updating once the strategy phase begins.
  bool freeze_batchnorm_after_breakpoint = false;
  AugmentConfig augment;
  BackboneSpec backbone;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Named schedules: "desk" (2000/1000), "half" (breakpoint at half of
// total_iterations), "office-full" (10000/1000), "visda-full" (25000/1000).
TrainConfig preset(const std::string& name);

enum class Phase { Base, Strategy };
std::string to_string(Phase p);

struct LossRecord {
  long iteration;
  Phase phase;
  std::string name;
  double value;
};

enum class EventKind { Extraction, GanTraining };

struct TrainEvent {
  long iteration;
  EventKind kind;
  long negatives = 0;  // size of the extracted set
};

struct TrainState {
  long iteration = 0;  // completed iterations
  Phase phase = Phase::Base;
  std::optional<NegativeSet> negatives;
  gan::GanModels gan;
  std::vector<LossRecord> loss_history;
  std::vector<TrainEvent> events;
  std::vector<std::string> warnings;
  std::vector<double> last_gan_epoch_losses;
};

// Iterations after which extraction (and GAN training for the generation
// strategies) runs: {breakpoint + i·T : breakpoint + i·T < total} for
// GenerationPP with an interval T, {breakpoint} otherwise (none for the
// baseline).
std::vector<long> event_schedule(const TrainConfig& config);

// Learning-rate multiplier at a 1-based iteration.
double lr_multiplier(const TrainConfig& config, long iteration);

struct StepLosses {
  double closed_ce = 0.0;
  double hncs = 0.0;
  double oem = 0.0;
  std::optional<double> negative;  // unweighted negative constraint
  double lambda = 0.0;

  double base() const { return closed_ce + hncs + oem; }
  double negative_term() const { return negative ? lambda * *negative : 0.0; }
  double total() const { return base() + negative_term(); }
};

// One training step's objective on the given batches: forward, loss and
// backward, accumulating into the parameter gradients (which are not zeroed
// here). `on_term` is told about every term whose gradient is propagated.
StepLosses accumulate_gradients(OpenSetModel& model, const Matrix& source, std::span<const int> labels,
                                const Matrix& target, const Matrix* negatives, double lambda,
                                const std::function<void(const std::string&)>& on_term = {});

// Runs the two-phase schedule. Iterations 1..breakpoint minimize the base
// objective; after iteration `breakpoint` the negatives are extracted and each
// later iteration adds lambda_neg times the negative constraint.
class Trainer {
 public:
  Trainer(TrainConfig config, const DomainDataset& source, const DomainDataset& target, LabelSpace label_space);

  const TrainConfig& config() const { return config_; }
  const TrainState& state() const { return state_; }
  TrainState take_state() { return std::move(state_); }
  OpenSetModel& model() { return *model_; }
  std::shared_ptr<OpenSetModel> shared_model() { return model_; }
  bool done() const { return state_.iteration >= config_.total_iterations; }

  void step();
  void run_until(long iteration);
  void run() { run_until(config_.total_iterations); }

  // Called for each event once it has completed.
  void on_event(std::function<void(const TrainEvent&)> hook) { event_hook_ = std::move(hook); }
  // Called whenever a loss term is backpropagated, with its name and the
  // current iteration.
  void on_gradient(std::function<void(long, const std::string&)> hook) { gradient_hook_ = std::move(hook); }

  // Where to leave a checkpoint when an event aborts training.
  void set_abort_checkpoint(std::filesystem::path path) { abort_path_ = std::move(path); }

  void save(const std::filesystem::path& path);
  static Trainer resume(const std::filesystem::path& path, const DomainDataset& source, const DomainDataset& target,
                        const LabelSpace& label_space);

  void write_loss_csv(const std::filesystem::path& path) const;

 private:
  void run_events();
  void log(const std::string& name, double value);

  TrainConfig config_;
  const DomainDataset* source_;
  UnlabeledView target_;
  LabelSpace label_space_;
  std::vector<int> source_labels_;
  std::shared_ptr<OpenSetModel> model_;
  std::unique_ptr<nn::Sgd> optimizer_;
  BatchSampler source_sampler_;
  BatchSampler target_sampler_;
  Rng negative_rng_;
  Rng gan_rng_;
  std::vector<long> schedule_;
  TrainState state_;
  std::function<void(const TrainEvent&)> event_hook_;
  std::function<void(long, const std::string&)> gradient_hook_;
  std::filesystem::path abort_path_;
};

struct TrainResult {
  std::shared_ptr<OpenSetModel> model;
  TrainState state;
};

TrainResult train(const TrainConfig& config, const DomainDataset& source, const DomainDataset& target,
                  const LabelSpace& label_space);

}  // namespace osda
