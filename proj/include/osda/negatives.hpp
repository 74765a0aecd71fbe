#pragma once

#include "osda/data.hpp"
#include "osda/model.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace osda {

namespace gan {
class Generator;
}

enum class Strategy { Baseline, Original, Augmentation, Generation, GenerationPP };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

inline constexpr double kDefaultExtractionThreshold = 0.9;

struct NegativeItem {
  long sample_index;           // row in the target domain
  std::string sample_id;
  double unknown_confidence;   // 1 − p_o(ŷ | x)
};

// High-confidence unknown subset of the target domain. Immutable.
class NegativeSet {
 public:
  NegativeSet() = default;
  NegativeSet(std::vector<NegativeItem> items, Matrix samples, long source_iteration, double threshold,
              RowVector feature_std, RowVector value_min, RowVector value_max,
              std::optional<nn::ImageShape> image_shape);

  const std::vector<NegativeItem>& items() const { return items_; }
  // Copies of the selected target samples, row i ↔ items()[i].
  const Matrix& samples() const { return samples_; }
  long size() const { return static_cast<long>(items_.size()); }
  bool empty() const { return items_.empty(); }
  long source_iteration() const { return source_iteration_; }
  double threshold() const { return threshold_; }
  // Per-column statistics of the whole target domain at extraction time.
  const RowVector& feature_std() const { return feature_std_; }
  const RowVector& value_min() const { return value_min_; }
  const RowVector& value_max() const { return value_max_; }
  const std::optional<nn::ImageShape>& image_shape() const { return image_shape_; }
  long sample_width() const { return feature_std_.size(); }

  // sample_id, unknown_confidence, source_iteration
  void write_manifest(const std::filesystem::path& path) const;

 private:
  std::vector<NegativeItem> items_;
  Matrix samples_;
  long source_iteration_ = 0;
  double threshold_ = kDefaultExtractionThreshold;
  RowVector feature_std_, value_min_, value_max_;
  std::optional<nn::ImageShape> image_shape_;
};

// { x ∈ target : 1 − p_o(ŷ | x) > threshold }, evaluated in eval mode.
// An empty result is returned as an empty set.
NegativeSet extract_negatives(OpenSetModel& model, const UnlabeledView& target,
                              double threshold = kDefaultExtractionThreshold, long iteration = 0);

struct AugmentConfig {
  double max_rotation_deg = 15.0;
  double max_translation_frac = 0.10;
  double min_scale = 0.9;
  double max_scale = 1.1;
  int blur_kernel = 5;
  double min_blur_sigma = 0.1;
  double max_blur_sigma = 2.0;
  // Vector mode: additive noise with std = noise_fraction · feature std.
  double noise_fraction = 0.1;

  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

struct AffineBlurParams {
  double rotation_deg = 0.0;
  double translate_x = 0.0;  // pixels
  double translate_y = 0.0;
  double scale = 1.0;
  double blur_sigma = 0.0;   // 0 disables the blur
};

// Rotation/scale about the image center, then translation, then Gaussian blur.
// Each channel is processed independently; the input is not modified.
RowVector affine_blur(const RowVector& sample, nn::ImageShape shape, const AffineBlurParams& params,
                      int blur_kernel);

AffineBlurParams sample_affine_blur(const AugmentConfig& cfg, nn::ImageShape shape, Rng& rng);

// Image samples: random affine + Gaussian blur. Vector samples: additive
// Gaussian noise scaled by `feature_std`.
RowVector augment_negative(const RowVector& sample, DataMode mode, const std::optional<nn::ImageShape>& shape,
                           const RowVector& feature_std, const AugmentConfig& cfg, Rng& rng);

// One batch of negatives for the strategy phase. Original/Augmentation draw
// uniformly with replacement from the set; Generation variants ask the
// generator for fakes.
Matrix negative_batch(Strategy strategy, const NegativeSet& negatives, gan::Generator* generator,
                      long batch_size, Rng& rng, const AugmentConfig& augment = {});

}  // namespace osda
