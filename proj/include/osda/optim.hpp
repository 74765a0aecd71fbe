#pragma once

#include "osda/nn.hpp"

#include <vector>

namespace osda::nn {

struct ParamGroup {
  std::vector<Parameter*> params;
  double lr = 0.0;
};

// Stochastic gradient descent with (Nesterov) momentum and L2 weight decay.
class Sgd {
 public:
  Sgd(std::vector<ParamGroup> groups, double momentum, double weight_decay, bool nesterov);

  void step();
  void set_lr(std::size_t group, double lr) { groups_.at(group).lr = lr; }
  double lr(std::size_t group) const { return groups_.at(group).lr; }
  std::size_t group_count() const { return groups_.size(); }

  // Momentum buffers, in group/parameter order.
  std::vector<Matrix*> state();

 private:
  std::vector<ParamGroup> groups_;
  std::vector<std::vector<Matrix>> velocity_;
  double momentum_;
  double weight_decay_;
  bool nesterov_;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps = 1e-8);

  void step();
  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }
  std::vector<Matrix*> state();

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace osda::nn
