#include "osda/optim.hpp"

#include <cmath>

namespace osda::nn {

Sgd::Sgd(std::vector<ParamGroup> groups, double momentum, double weight_decay, bool nesterov)
    : groups_(std::move(groups)), momentum_(momentum), weight_decay_(weight_decay), nesterov_(nesterov) {
  for (const auto& g : groups_) {
    auto& vs = velocity_.emplace_back();
    for (const Parameter* p : g.params) vs.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Sgd::step() {
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    const double lr = groups_[gi].lr;
    for (std::size_t pi = 0; pi < groups_[gi].params.size(); ++pi) {
      Parameter& p = *groups_[gi].params[pi];
      Matrix d = p.grad;
      if (weight_decay_ != 0.0) d += weight_decay_ * p.value;
      if (momentum_ != 0.0) {
        Matrix& v = velocity_[gi][pi];
        v = momentum_ * v + d;
        if (nesterov_) {
          d += momentum_ * v;
        } else {
          d = v;
        }
      }
      p.value -= lr * d;
    }
  }
}

std::vector<Matrix*> Sgd::state() {
  std::vector<Matrix*> out;
  for (auto& vs : velocity_)
    for (auto& v : vs) out.push_back(&v);
  return out;
}

Adam::Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

std::vector<Matrix*> Adam::state() {
  std::vector<Matrix*> out;
  for (auto& m : m_) out.push_back(&m);
  for (auto& v : v_) out.push_back(&v);
  return out;
}

}  // namespace osda::nn
