#include "safenav/crltrain/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace safenav::train {

Adam::Adam(const net::Mlp& net, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon), m_(net), v_(net) {}

void Adam::step(net::Mlp& net, const net::GradientTape& grad) {
  if (!grad.congruent_with(net) || !m_.congruent_with(net))
    throw std::logic_error("Adam::step: gradient shape does not match network");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& layers = net.mutable_layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    m_.d_weight[k] = beta1_ * m_.d_weight[k] + (1.0 - beta1_) * grad.d_weight[k];
    v_.d_weight[k] = beta2_ * v_.d_weight[k] + (1.0 - beta2_) * grad.d_weight[k].cwiseAbs2();
    layers[k].weight.array() -=
        lr_ * (m_.d_weight[k].array() / c1) / ((v_.d_weight[k].array() / c2).sqrt() + eps_);
    m_.d_bias[k] = beta1_ * m_.d_bias[k] + (1.0 - beta1_) * grad.d_bias[k];
    v_.d_bias[k] = beta2_ * v_.d_bias[k] + (1.0 - beta2_) * grad.d_bias[k].cwiseAbs2();
    layers[k].bias.array() -=
        lr_ * (m_.d_bias[k].array() / c1) / ((v_.d_bias[k].array() / c2).sqrt() + eps_);
  }
}

double clip_gradient_norm(net::GradientTape& grad, double max_norm) {
  const double norm = std::sqrt(grad.squared_norm());
  if (norm > max_norm && norm > 0.0) grad.scale(max_norm / norm);
  return norm;
}

}  // namespace safenav::train
