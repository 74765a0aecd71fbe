#pragma once

#include "osda/common.hpp"
#include "osda/nn.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace osda {

// Known/unknown category partition. Both lists are kept sorted
// lexicographically unless the caller asks to keep its own order.
class LabelSpace {
 public:
  LabelSpace() = default;
  LabelSpace(std::vector<std::string> known, std::vector<std::string> unknown,
             bool keep_order = false);

  const std::vector<std::string>& known() const { return known_; }
  const std::vector<std::string>& unknown() const { return unknown_; }
  // Known classes followed by unknown classes.
  std::vector<std::string> all() const;

  std::size_t num_known() const { return known_.size(); }
  std::optional<int> known_index(const std::string& name) const;
  bool is_known(const std::string& name) const { return known_index(name).has_value(); }
  bool is_unknown(const std::string& name) const;
  bool contains(const std::string& name) const { return is_known(name) || is_unknown(name); }

  bool operator==(const LabelSpace&) const = default;

 private:
  std::vector<std::string> known_;
  std::vector<std::string> unknown_;
};

// Closed-set head output for a batch: one row per sample, one column per
// known class.
struct ClosedSetOutput {
  Matrix logits;
  Matrix probs;

  static ClosedSetOutput from_logits(Matrix logits);
  // For callers that only hold probabilities; logits stay empty.
  static ClosedSetOutput from_probs(Matrix probs);
  long batch() const { return probs.rows(); }
  long classes() const { return probs.cols(); }
};

// One-vs-all head output for a batch. Logit columns come in pairs per known
// class: column 2k is the "known" logit of classifier k and 2k+1 its
// "unknown" logit. known_probs(i, k) is the two-way softmax of that pair.
struct OpenSetOutput {
  Matrix logits;
  Matrix known_probs;

  static OpenSetOutput from_logits(Matrix logits);
  static OpenSetOutput from_probs(Matrix known_probs);
  long batch() const { return known_probs.rows(); }
  long classes() const { return known_probs.cols(); }
};

struct Prediction {
  int pseudo_label = 0;
  double known_prob = 0.0;
  bool is_known = false;
};

inline constexpr double kKnownThreshold = 0.5;

// Row-wise softmax; throws NumericError naming the first non-finite row.
Matrix softmax_rows(const Matrix& logits);

// Lowest index wins ties.
int argmax_row(const Matrix& m, long row);

ClosedSetOutput closed_probs(const Matrix& features, nn::Sequential& head);
OpenSetOutput open_probs(const Matrix& features, nn::Sequential& head);

// ŷ = argmax p_c, known iff p_o(ŷ) >= 0.5.
std::vector<Prediction> decide(const ClosedSetOutput& closed, const OpenSetOutput& open);

enum class BackboneKind { Mlp, Conv, ResNet50 };

struct BackboneSpec {
  BackboneKind kind = BackboneKind::Mlp;
  long input_dim = 2;                 // vector mode
  nn::ImageShape image{3, 32, 32};    // image mode
  std::vector<long> hidden;           // MLP hidden widths before the feature layer
  std::vector<long> conv_channels{16, 32};
  long feature_dim = 64;
  bool batch_norm = false;

  long input_width() const { return kind == BackboneKind::Mlp ? input_dim : image.size(); }
  bool operator==(const BackboneSpec&) const = default;
};

std::string to_string(BackboneKind kind);
BackboneKind backbone_kind_from_string(const std::string& s);

nn::Sequential build_backbone(const BackboneSpec& spec, Rng& rng);

// Feature extractor G with closed-set head C and one-vs-all head O.
class OpenSetModel {
 public:
  OpenSetModel(LabelSpace labels, BackboneSpec spec, std::uint64_t init_seed);

  const LabelSpace& label_space() const { return labels_; }
  const BackboneSpec& backbone_spec() const { return spec_; }
  long feature_dim() const { return backbone_->output_width(); }
  long num_classes() const { return static_cast<long>(labels_.num_known()); }

  // Shared so that a discriminator can reuse the same weights.
  std::shared_ptr<nn::Sequential> backbone() { return backbone_; }
  nn::Sequential& closed_head() { return closed_head_; }
  nn::Sequential& open_head() { return open_head_; }

  // Eval-mode passes.
  Matrix forward_features(const Matrix& batch);
  ClosedSetOutput closed_probs(const Matrix& features) { return osda::closed_probs(features, closed_head_); }
  OpenSetOutput open_probs(const Matrix& features) { return osda::open_probs(features, open_head_); }
  std::vector<Prediction> infer(const Matrix& batch);
  Prediction infer_one(const RowVector& sample);

  // Training pass over one batch, keeping caches for backward.
  struct Pass {
    nn::Trace backbone;
    nn::Trace closed_head;
    nn::Trace open_head;
    Matrix features;
    ClosedSetOutput closed;
    OpenSetOutput open;
  };
  Pass forward(const Matrix& batch, nn::Mode mode);
  // Accumulates parameter gradients; either logit gradient may be null.
  // Returns the gradient with respect to the input batch.
  Matrix backward(const Pass& pass, const Matrix* grad_closed_logits, const Matrix* grad_open_logits);

  void zero_grad();
  std::vector<nn::Parameter*> backbone_parameters() { return backbone_->parameters(); }
  std::vector<nn::Parameter*> head_parameters();
  // "backbone.*", "closed.*", "open.*".
  std::vector<std::pair<std::string, nn::Parameter*>> named_parameters();
  std::vector<nn::Buffer> buffers();

 private:
  LabelSpace labels_;
  BackboneSpec spec_;
  std::shared_ptr<nn::Sequential> backbone_;
  nn::Sequential closed_head_;
  nn::Sequential open_head_;
};

}  // namespace osda
