#include "doctest.h"

#include "osda/losses.hpp"
#include "support.hpp"

#include <cmath>
#include <vector>

using namespace osda;
using namespace osda::losses;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<long>(v.size()));
  long i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

OpenSetOutput open_row(std::initializer_list<double> p) { return OpenSetOutput::from_probs(row(p)); }
ClosedSetOutput closed_row(std::initializer_list<double> p) { return ClosedSetOutput::from_probs(row(p)); }

// Logit pairs (log p, log(1 − p)) reproduce p under the two-way softmax.
Matrix pair_logits(const Matrix& p) {
  Matrix l(p.rows(), 2 * p.cols());
  for (long i = 0; i < p.rows(); ++i)
    for (long k = 0; k < p.cols(); ++k) {
      l(i, 2 * k) = std::log(p(i, k));
      l(i, 2 * k + 1) = std::log1p(-p(i, k));
    }
  return l;
}

}  // namespace

TEST_CASE("closed-set cross entropy") {
  const std::vector<int> l0{0};
  CHECK(closed_set_cross_entropy(closed_row({1.0, 0.0, 0.0}), l0).value() == doctest::Approx(0.0));
  CHECK(closed_set_cross_entropy(closed_row({0.25, 0.25, 0.25, 0.25}), std::vector<int>{3}).value() ==
        doctest::Approx(std::log(4.0)));
  CHECK(closed_set_cross_entropy(closed_row({0.25, 0.5, 0.25}), l0).value() == doctest::Approx(1.3863).epsilon(1e-4));
  CHECK_THROWS_AS(closed_set_cross_entropy(closed_row({0.5, 0.5}), std::vector<int>{2}), ContractError);
  CHECK_THROWS_AS(closed_set_cross_entropy(closed_row({0.5, 0.5}), std::vector<int>{-1}), ContractError);
}

TEST_CASE("hard negative classifier sampling") {
  const std::vector<int> l0{0};
  CHECK(hard_negative_classifier_sampling_loss(open_row({1.0, 0.0, 0.0}), l0).value() ==
        doctest::Approx(0.0).epsilon(1e-6));
  CHECK(hard_negative_classifier_sampling_loss(open_row({0.5, 0.5}), l0).value() ==
        doctest::Approx(2.0 * std::log(2.0)));
  CHECK(hard_negative_classifier_sampling_loss(open_row({0.8, 0.3, 0.6}), l0).value() ==
        doctest::Approx(1.1394).epsilon(1e-4));
  CHECK_THROWS_AS(hard_negative_classifier_sampling_loss(open_row({0.7}), l0), ContractError);
}

TEST_CASE("open-set entropy minimization") {
  CHECK(open_set_entropy_minimization(open_row({0.0, 1.0, 1.0})).value() == 0.0);
  CHECK(open_set_entropy_minimization(open_row({0.5, 0.5})).value() == doctest::Approx(std::log(2.0)));
  CHECK(open_set_entropy_minimization(open_row({0.9})).value() == doctest::Approx(0.3251).epsilon(1e-4));
}

TEST_CASE("negative constraint") {
  CHECK(negative_constraint_loss(open_row({0.0, 0.0})).value() == 0.0);
  CHECK(negative_constraint_loss(open_row({0.5, 0.5})).value() == doctest::Approx(std::log(2.0)));
  CHECK(negative_constraint_loss(open_row({0.9, 0.1, 0.5})).value() == doctest::Approx(1.0337).epsilon(1e-4));
  auto saturated = negative_constraint_loss(open_row({1.0, 0.2}));
  CHECK(std::isfinite(saturated.value()));
  CHECK(saturated.value() == doctest::Approx(0.5 * (-std::log(kEpsilon) - std::log(0.8))));
  CHECK(saturated.loss.components.at("clamped") == 1.0);
}

TEST_CASE("generator entropy and agreement") {
  // The ε clamp leaves −(2/3)·ε·ln ε ≈ 1.1e-6 for a one-hot row.
  CHECK(generator_entropy_loss(closed_row({0.0, 1.0, 0.0})).value() == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(generator_entropy_loss(closed_row({0.25, 0.25, 0.25, 0.25})).value() == doctest::Approx(0.3466).epsilon(1e-4));
  CHECK(generator_entropy_loss(closed_row({0.7, 0.3})).value() == doctest::Approx(0.3054).epsilon(1e-4));
  CHECK(generator_agreement_loss(open_row({1.0, 1.0})).value() == 0.0);
  CHECK(generator_agreement_loss(open_row({0.5, 0.5})).value() == doctest::Approx(std::log(2.0)));
  CHECK(generator_agreement_loss(open_row({0.9, 0.8})).value() == doctest::Approx(0.1643).epsilon(1e-4));
  CHECK(std::isfinite(generator_agreement_loss(open_row({0.0, 1.0})).value()));
}

TEST_CASE("all losses are finite and non-negative on random inputs") {
  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    const long n = 1 + static_cast<long>(rng.index(8)), k = 2 + static_cast<long>(rng.index(4));
    auto c = ClosedSetOutput::from_logits(rng.normal_matrix(n, k, 6.0));
    auto o = OpenSetOutput::from_logits(rng.normal_matrix(n, 2 * k, 6.0));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = static_cast<int>(rng.index(static_cast<std::size_t>(k)));
    for (double v : {closed_set_cross_entropy(c, y).value(), hard_negative_classifier_sampling_loss(o, y).value(),
                     open_set_entropy_minimization(o).value(), negative_constraint_loss(o).value(),
                     generator_entropy_loss(c).value(), generator_agreement_loss(o).value()}) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("negative constraint increases strictly in every p_o") {
  Rng rng(22);
  for (int t = 0; t < 100; ++t) {
    Matrix p(1, 3);
    for (long k = 0; k < 3; ++k) p(0, k) = rng.uniform(0.01, 0.9);
    const double base = negative_constraint_loss(OpenSetOutput::from_probs(p)).value();
    const long k = static_cast<long>(rng.index(3));
    p(0, k) += rng.uniform(1e-3, 0.09);
    CHECK(negative_constraint_loss(OpenSetOutput::from_probs(p)).value() > base);
  }
}

TEST_CASE("zero iff saturated") {
  CHECK(generator_agreement_loss(open_row({0.999, 1.0})).value() > 0.0);
  CHECK(negative_constraint_loss(open_row({0.001, 0.0})).value() > 0.0);
}

TEST_CASE("batch mean is size-weighted over concatenated batches") {
  Rng rng(23);
  const Matrix a = rng.normal_matrix(3, 6), b = rng.normal_matrix(5, 6);
  Matrix ab(8, 6);
  ab << a, b;
  auto f = [](const Matrix& l) { return negative_constraint_loss(OpenSetOutput::from_logits(l)).value(); };
  CHECK(f(ab) == doctest::Approx((3 * f(a) + 5 * f(b)) / 8).epsilon(1e-12));
  auto g = [](const Matrix& l) { return open_set_entropy_minimization(OpenSetOutput::from_logits(l)).value(); };
  CHECK(g(ab) == doctest::Approx((3 * g(a) + 5 * g(b)) / 8).epsilon(1e-12));
}

TEST_CASE("gradients agree with finite differences") {
  Rng rng(24);
  for (int t = 0; t < 20; ++t) {
    const long n = 1 + static_cast<long>(rng.index(8)), k = 2 + static_cast<long>(rng.index(4));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = static_cast<int>(rng.index(static_cast<std::size_t>(k)));
    const Matrix cl = rng.normal_matrix(n, k, 2.0);
    const Matrix ol = rng.normal_matrix(n, 2 * k, 2.0);

    auto ce = [&](const Matrix& l) { return closed_set_cross_entropy(ClosedSetOutput::from_logits(l), y).value(); };
    auto ent = [&](const Matrix& l) { return generator_entropy_loss(ClosedSetOutput::from_logits(l)).value(); };
    CHECK(testing::relative_error(closed_set_cross_entropy(ClosedSetOutput::from_logits(cl), y).grad,
                                  testing::numeric_gradient(ce, cl)) < 1e-6);
    CHECK(testing::relative_error(generator_entropy_loss(ClosedSetOutput::from_logits(cl)).grad,
                                  testing::numeric_gradient(ent, cl)) < 1e-6);

    auto o = OpenSetOutput::from_logits(ol);
    auto hn = [&](const Matrix& l) {
      return hard_negative_classifier_sampling_loss(OpenSetOutput::from_logits(l), y).value();
    };
    auto oem = [&](const Matrix& l) { return open_set_entropy_minimization(OpenSetOutput::from_logits(l)).value(); };
    auto neg = [&](const Matrix& l) { return negative_constraint_loss(OpenSetOutput::from_logits(l)).value(); };
    auto agr = [&](const Matrix& l) { return generator_agreement_loss(OpenSetOutput::from_logits(l)).value(); };
    CHECK(testing::relative_error(hard_negative_classifier_sampling_loss(o, y).grad, testing::numeric_gradient(hn, ol)) <
          1e-5);
    CHECK(testing::relative_error(open_set_entropy_minimization(o).grad, testing::numeric_gradient(oem, ol)) < 1e-6);
    CHECK(testing::relative_error(negative_constraint_loss(o).grad, testing::numeric_gradient(neg, ol)) < 1e-6);
    CHECK(testing::relative_error(generator_agreement_loss(o).grad, testing::numeric_gradient(agr, ol)) < 1e-6);
  }
}

TEST_CASE("probability-only outputs give the same gradients as logit outputs") {
  Rng rng(25);
  Matrix p(4, 3);
  for (long i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform(0.05, 0.95);
  const auto from_p = negative_constraint_loss(OpenSetOutput::from_probs(p));
  const auto from_l = negative_constraint_loss(OpenSetOutput::from_logits(pair_logits(p)));
  CHECK(from_p.value() == doctest::Approx(from_l.value()).epsilon(1e-12));
  CHECK(testing::relative_error(from_p.grad, from_l.grad) < 1e-10);
}
