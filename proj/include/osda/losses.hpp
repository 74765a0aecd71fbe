#pragma once

// Training objectives of the open-set model.
//
// Every loss works on probabilities and returns, besides the batch-mean value,
// the gradient of that value with respect to the logits that produced the
// probabilities (closed-set logits, or the (known, unknown) logit pairs of the
// one-vs-all head). The gradients only need the probabilities, so outputs
// built with from_probs() work as well.

#include "osda/model.hpp"

#include <map>
#include <span>
#include <string>

namespace osda::losses {

// Clamp applied before every logarithm.
inline constexpr double kEpsilon = 1e-7;

struct LossValue {
  double value = 0.0;
  std::map<std::string, double> components;
};

struct LossResult {
  LossValue loss;
  Matrix grad;  // d value / d logits, same shape as the logits

  double value() const { return loss.value; }
};

// mean_i −log p_c(y_i | x_i)
LossResult closed_set_cross_entropy(const ClosedSetOutput& closed, std::span<const int> labels);

// mean_i [ −log p_o(y_i) − min_{k≠y_i} log(1 − p_o(k)) ]
LossResult hard_negative_classifier_sampling_loss(const OpenSetOutput& open, std::span<const int> labels);

// Mean over samples and classes of the binary entropy of p_o, with 0·log 0 = 0.
LossResult open_set_entropy_minimization(const OpenSetOutput& open);

// Negative constraint: mean_i −(1/K) Σ_k log(1 − p_o(k | x̄_i)).
// p_o above 1−ε is clamped; the count of clamped entries is reported under
// components["clamped"].
LossResult negative_constraint_loss(const OpenSetOutput& open);

// Generator entropy factor: mean_i −(1/K) Σ_k p_c log p_c, p_c clamped to [ε, 1].
LossResult generator_entropy_loss(const ClosedSetOutput& closed);

// Generator agreement factor: mean_i −(1/K) Σ_k log p_o(k | x̄_i), p_o clamped to [ε, 1].
LossResult generator_agreement_loss(const OpenSetOutput& open);

// Gradient of a loss with respect to the known probabilities, mapped onto the
// (known, unknown) logit pairs through the two-way softmax.
Matrix open_prob_grad_to_logits(const Matrix& known_probs, const Matrix& grad_probs);

}  // namespace osda::losses
