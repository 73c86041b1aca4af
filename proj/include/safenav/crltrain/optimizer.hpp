#pragma once

#include "safenav/netcore/mlp.hpp"

namespace safenav::train {

// Adam with bias correction; moments are shaped like the network.
class Adam {
 public:
  Adam() = default;
  Adam(const net::Mlp& net, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);

  void step(net::Mlp& net, const net::GradientTape& grad);
  double learning_rate() const { return lr_; }
  long steps() const { return t_; }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  net::GradientTape m_, v_;
};

// Rescales `grad` so its global L2 norm is at most `max_norm`; returns the
// norm before clipping.
double clip_gradient_norm(net::GradientTape& grad, double max_norm);

}  // namespace safenav::train
