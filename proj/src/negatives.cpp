#include "osda/negatives.hpp"

#include "osda/gan.hpp"

#include <opencv2/imgproc.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace osda {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Baseline: return "baseline";
    case Strategy::Original: return "original";
    case Strategy::Augmentation: return "augmentation";
    case Strategy::Generation: return "generation";
    case Strategy::GenerationPP: return "generationpp";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "baseline" || s == "none") return Strategy::Baseline;
  if (s == "original") return Strategy::Original;
  if (s == "augmentation") return Strategy::Augmentation;
  if (s == "generation") return Strategy::Generation;
  if (s == "generationpp" || s == "generation++") return Strategy::GenerationPP;
  throw ConfigError("unknown strategy '" + s + "' (expected baseline|original|augmentation|generation|generationpp)");
}

// ---------------------------------------------------------------------------
// NegativeSet

NegativeSet::NegativeSet(std::vector<NegativeItem> items, Matrix samples, long source_iteration,
                         double threshold, RowVector feature_std, RowVector value_min, RowVector value_max,
                         std::optional<nn::ImageShape> image_shape)
    : items_(std::move(items)),
      samples_(std::move(samples)),
      source_iteration_(source_iteration),
      threshold_(threshold),
      feature_std_(std::move(feature_std)),
      value_min_(std::move(value_min)),
      value_max_(std::move(value_max)),
      image_shape_(image_shape) {
  if (samples_.rows() != static_cast<long>(items_.size()))
    throw ContractError("negative set: one sample row per item required");
  for (const auto& it : items_) {
    if (!(it.unknown_confidence > threshold_))
      throw ContractError("negative set: item " + it.sample_id + " does not exceed the threshold");
  }
}

void NegativeSet::write_manifest(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample_id,unknown_confidence,source_iteration\n";
  char buf[32];
  for (const auto& it : items_) {
    std::snprintf(buf, sizeof buf, "%.17g", it.unknown_confidence);
    out << it.sample_id << ',' << buf << ',' << source_iteration_ << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

NegativeSet extract_negatives(OpenSetModel& model, const UnlabeledView& target, double threshold, long iteration) {
  if (!(threshold >= 0.0 && threshold < 1.0)) throw ContractError("extract_negatives: threshold must lie in [0, 1)");
  const Matrix& x = target.samples();
  std::vector<NegativeItem> items;
  std::vector<long> rows;
  RowVector std_dev = RowVector::Zero(x.cols());
  RowVector lo = RowVector::Zero(x.cols());
  RowVector hi = RowVector::Zero(x.cols());
  if (target.size() > 0) {
    const auto predictions = model.infer(x);
    for (long i = 0; i < target.size(); ++i) {
      const double unknown = 1.0 - predictions[i].known_prob;
      if (unknown > threshold) {
        items.push_back({i, target.ids()[i], unknown});
        rows.push_back(i);
      }
    }
    const RowVector mean = x.colwise().mean();
    std_dev = ((x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt().matrix();
    lo = x.colwise().minCoeff();
    hi = x.colwise().maxCoeff();
  }
  return NegativeSet(std::move(items), gather_rows(x, rows), iteration, threshold, std::move(std_dev), std::move(lo),
                     std::move(hi), target.image_shape());
}

// ---------------------------------------------------------------------------
// Augmentation

void AugmentConfig::validate() const {
  if (max_rotation_deg < 0 || max_translation_frac < 0 || max_translation_frac > 1)
    throw ConfigError("augment: rotation/translation ranges must be non-negative (translation ≤ 1)");
  if (!(min_scale > 0) || min_scale > max_scale) throw ConfigError("augment: invalid scale range");
  if (blur_kernel < 1 || blur_kernel % 2 == 0) throw ConfigError("augment: blur kernel must be odd and positive");
  if (min_blur_sigma < 0 || min_blur_sigma > max_blur_sigma) throw ConfigError("augment: invalid blur sigma range");
  if (noise_fraction < 0) throw ConfigError("augment: noise fraction must be non-negative");
}

RowVector affine_blur(const RowVector& sample, nn::ImageShape shape, const AffineBlurParams& params, int blur_kernel) {
  if (sample.size() != shape.size()) throw ContractError("affine_blur: sample does not match image shape");
  const int h = static_cast<int>(shape.height), w = static_cast<int>(shape.width);
  cv::Mat m = cv::getRotationMatrix2D(cv::Point2f((w - 1) * 0.5f, (h - 1) * 0.5f), params.rotation_deg, params.scale);
  m.at<double>(0, 2) += params.translate_x;
  m.at<double>(1, 2) += params.translate_y;

  RowVector out(sample.size());
  for (long c = 0; c < shape.channels; ++c) {
    cv::Mat plane(h, w, CV_64F);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) plane.at<double>(y, x) = sample(c * h * w + y * w + x);
    cv::Mat warped;
    cv::warpAffine(plane, warped, m, plane.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
    if (params.blur_sigma > 0.0) {
      cv::GaussianBlur(warped, warped, cv::Size(blur_kernel, blur_kernel), params.blur_sigma, params.blur_sigma,
                       cv::BORDER_REFLECT_101);
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(c * h * w + y * w + x) = warped.at<double>(y, x);
  }
  return out;
}

AffineBlurParams sample_affine_blur(const AugmentConfig& cfg, nn::ImageShape shape, Rng& rng) {
  AffineBlurParams p;
  p.rotation_deg = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
  p.translate_x = rng.uniform(-cfg.max_translation_frac, cfg.max_translation_frac) * static_cast<double>(shape.width);
  p.translate_y = rng.uniform(-cfg.max_translation_frac, cfg.max_translation_frac) * static_cast<double>(shape.height);
  p.scale = rng.uniform(cfg.min_scale, cfg.max_scale);
  p.blur_sigma = rng.uniform(cfg.min_blur_sigma, cfg.max_blur_sigma);
  return p;
}

RowVector augment_negative(const RowVector& sample, DataMode mode, const std::optional<nn::ImageShape>& shape,
                           const RowVector& feature_std, const AugmentConfig& cfg, Rng& rng) {
  if (mode == DataMode::Image) {
    if (!shape || shape->size() != sample.size())
      throw ContractError("augment_negative: image transforms need an image-shaped sample");
    return affine_blur(sample, *shape, sample_affine_blur(cfg, *shape, rng), cfg.blur_kernel);
  }
  if (feature_std.size() != sample.size()) throw ContractError("augment_negative: feature std width mismatch");
  RowVector out = sample;
  for (long k = 0; k < out.size(); ++k) out(k) += rng.normal(0.0, 1.0) * cfg.noise_fraction * feature_std(k);
  return out;
}

Matrix negative_batch(Strategy strategy, const NegativeSet& negatives, gan::Generator* generator, long batch_size,
                      Rng& rng, const AugmentConfig& augment) {
  if (batch_size < 0) throw ContractError("negative_batch: negative batch size");
  switch (strategy) {
    case Strategy::Baseline:
      throw ConfigError("negative_batch: the baseline strategy uses no negatives");
    case Strategy::Original:
    case Strategy::Augmentation: {
      if (negatives.empty()) throw ConfigError("negative_batch: " + to_string(strategy) + " needs a non-empty negative set");
      Matrix out(batch_size, negatives.samples().cols());
      const DataMode mode = negatives.image_shape() ? DataMode::Image : DataMode::Vector;
      for (long i = 0; i < batch_size; ++i) {
        const long pick = static_cast<long>(rng.index(static_cast<std::size_t>(negatives.size())));
        if (strategy == Strategy::Original) {
          out.row(i) = negatives.samples().row(pick);
        } else {
          out.row(i) = augment_negative(negatives.samples().row(pick), mode, negatives.image_shape(),
                                        negatives.feature_std(), augment, rng);
        }
      }
      return out;
    }
    case Strategy::Generation:
    case Strategy::GenerationPP:
      if (!generator) throw ConfigError("negative_batch: " + to_string(strategy) + " needs a trained generator");
      return generator->generate(batch_size, rng);
  }
  throw ConfigError("negative_batch: unhandled strategy");
}

}  // namespace osda
