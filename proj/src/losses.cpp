#include "osda/losses.hpp"

#include <cmath>

namespace osda::losses {

namespace {

void require_batch(long n, const char* what) {
  if (n < 1) throw ContractError(std::string(what) + ": empty batch");
}

void require_labels(std::span<const int> labels, long batch, long classes, const char* what) {
  if (static_cast<long>(labels.size()) != batch)
    throw ContractError(std::string(what) + ": label count does not match batch size");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes)
      throw ContractError(std::string(what) + ": label " + std::to_string(labels[i]) + " at index " +
                          std::to_string(i) + " is outside [0, " + std::to_string(classes) + ")");
  }
}

LossResult finish(double sum, long count, Matrix grad, std::map<std::string, double> components = {}) {
  LossResult r;
  r.loss.value = sum / static_cast<double>(count);
  r.loss.components = std::move(components);
  r.grad = std::move(grad);
  return r;
}

}  // namespace

Matrix open_prob_grad_to_logits(const Matrix& known_probs, const Matrix& grad_probs) {
  Matrix g(known_probs.rows(), 2 * known_probs.cols());
  for (long i = 0; i < known_probs.rows(); ++i) {
    for (long k = 0; k < known_probs.cols(); ++k) {
      const double p = known_probs(i, k);
      const double d = grad_probs(i, k) * p * (1.0 - p);
      g(i, 2 * k) = d;
      g(i, 2 * k + 1) = -d;
    }
  }
  return g;
}

LossResult closed_set_cross_entropy(const ClosedSetOutput& closed, std::span<const int> labels) {
  const long n = closed.batch();
  require_batch(n, "closed_set_cross_entropy");
  require_labels(labels, n, closed.classes(), "closed_set_cross_entropy");
  double sum = 0.0;
  long clamped = 0;
  Matrix grad = Matrix::Zero(n, closed.classes());
  for (long i = 0; i < n; ++i) {
    const double p = closed.probs(i, labels[i]);
    if (p < kEpsilon) {
      sum -= std::log(kEpsilon);
      ++clamped;
      continue;
    }
    sum -= std::log(p);
    grad.row(i) = closed.probs.row(i);
    grad(i, labels[i]) -= 1.0;
  }
  grad /= static_cast<double>(n);
  return finish(sum, n, std::move(grad), {{"clamped", static_cast<double>(clamped)}});
}

LossResult hard_negative_classifier_sampling_loss(const OpenSetOutput& open, std::span<const int> labels) {
  const long n = open.batch();
  const long k = open.classes();
  require_batch(n, "hard_negative_classifier_sampling_loss");
  if (k < 2) throw ContractError("hard_negative_classifier_sampling_loss: needs at least two known classes");
  require_labels(labels, n, k, "hard_negative_classifier_sampling_loss");

  const Matrix& p = open.known_probs;
  Matrix dp = Matrix::Zero(n, k);
  double pos = 0.0, neg = 0.0;
  for (long i = 0; i < n; ++i) {
    const int y = labels[i];
    if (p(i, y) > kEpsilon) {
      pos -= std::log(p(i, y));
      dp(i, y) = -1.0 / p(i, y);
    } else {
      pos -= std::log(kEpsilon);
    }
    // The hardest negative classifier has the largest known-probability.
    long hard = -1;
    for (long c = 0; c < k; ++c)
      if (c != y && (hard < 0 || p(i, c) > p(i, hard))) hard = c;
    const double q = 1.0 - p(i, hard);
    if (q > kEpsilon) {
      neg -= std::log(q);
      dp(i, hard) = 1.0 / q;
    } else {
      neg -= std::log(kEpsilon);
    }
  }
  // dp * p(1-p) is finite even where 1/p or 1/(1-p) is large.
  Matrix grad = open_prob_grad_to_logits(p, dp) / static_cast<double>(n);
  return finish(pos + neg, n, std::move(grad),
                {{"positive", pos / static_cast<double>(n)}, {"negative", neg / static_cast<double>(n)}});
}

LossResult open_set_entropy_minimization(const OpenSetOutput& open) {
  const long n = open.batch();
  const long k = open.classes();
  require_batch(n, "open_set_entropy_minimization");
  const Matrix& p = open.known_probs;
  double sum = 0.0;
  Matrix grad(n, 2 * k);
  for (long i = 0; i < n; ++i) {
    for (long c = 0; c < k; ++c) {
      const double pk = p(i, c);
      const double qk = 1.0 - pk;
      double d = 0.0;
      if (pk > 0.0) sum -= pk * std::log(pk);
      if (qk > 0.0) sum -= qk * std::log(qk);
      if (pk > 0.0 && qk > 0.0) d = pk * qk * (std::log(qk) - std::log(pk));
      grad(i, 2 * c) = d;
      grad(i, 2 * c + 1) = -d;
    }
  }
  const double count = static_cast<double>(n * k);
  grad /= count;
  LossResult r;
  r.loss.value = sum / count;
  r.grad = std::move(grad);
  return r;
}

LossResult negative_constraint_loss(const OpenSetOutput& open) {
  const long n = open.batch();
  const long k = open.classes();
  require_batch(n, "negative_constraint_loss");
  const Matrix& p = open.known_probs;
  const double inv_k = 1.0 / static_cast<double>(k);
  double sum = 0.0;
  long clamped = 0;
  Matrix grad(n, 2 * k);
  for (long i = 0; i < n; ++i) {
    for (long c = 0; c < k; ++c) {
      const double q = 1.0 - p(i, c);
      double d = 0.0;
      if (q < kEpsilon) {
        sum -= inv_k * std::log(kEpsilon);
        ++clamped;
      } else {
        sum -= inv_k * std::log(q);
        d = inv_k * p(i, c);  // (1/(K q)) · p q
      }
      grad(i, 2 * c) = d;
      grad(i, 2 * c + 1) = -d;
    }
  }
  grad /= static_cast<double>(n);
  return finish(sum, n, std::move(grad), {{"clamped", static_cast<double>(clamped)}});
}

LossResult generator_entropy_loss(const ClosedSetOutput& closed) {
  const long n = closed.batch();
  const long k = closed.classes();
  require_batch(n, "generator_entropy_loss");
  const Matrix& p = closed.probs;
  const double inv_k = 1.0 / static_cast<double>(k);
  double sum = 0.0;
  Matrix grad(n, k);
  RowVector g(k);
  for (long i = 0; i < n; ++i) {
    for (long c = 0; c < k; ++c) {
      const double pc = p(i, c);
      if (pc < kEpsilon) {
        sum -= inv_k * kEpsilon * std::log(kEpsilon);
        g(c) = 0.0;
      } else {
        sum -= inv_k * pc * std::log(pc);
        g(c) = -inv_k * (std::log(pc) + 1.0);
      }
    }
    // Softmax Jacobian: dz_c = p_c (g_c − Σ_j g_j p_j).
    const double mix = g.dot(p.row(i));
    for (long c = 0; c < k; ++c) grad(i, c) = p(i, c) * (g(c) - mix);
  }
  grad /= static_cast<double>(n);
  return finish(sum, n, std::move(grad));
}

LossResult generator_agreement_loss(const OpenSetOutput& open) {
  const long n = open.batch();
  const long k = open.classes();
  require_batch(n, "generator_agreement_loss");
  const Matrix& p = open.known_probs;
  const double inv_k = 1.0 / static_cast<double>(k);
  double sum = 0.0;
  long clamped = 0;
  Matrix grad(n, 2 * k);
  for (long i = 0; i < n; ++i) {
    for (long c = 0; c < k; ++c) {
      const double pc = p(i, c);
      double d = 0.0;
      if (pc < kEpsilon) {
        sum -= inv_k * std::log(kEpsilon);
        ++clamped;
      } else {
        sum -= inv_k * std::log(pc);
        d = -inv_k * (1.0 - pc);  // (−1/(K p)) · p (1 − p)
      }
      grad(i, 2 * c) = d;
      grad(i, 2 * c + 1) = -d;
    }
  }
  grad /= static_cast<double>(n);
  return finish(sum, n, std::move(grad), {{"clamped", static_cast<double>(clamped)}});
}

}  // namespace osda::losses
