#include "safenav/reluverify/bounds.hpp"

#include <limits>

namespace safenav::verify {

namespace {

enum class Sense { kLower, kUpper };

// Minimum (or maximum) of coeff * x + constant over the box, row-wise.
Eigen::VectorXd concretize(const Eigen::MatrixXd& coeff, const Eigen::VectorXd& constant,
                           const Box& box, Sense sense) {
  const Eigen::VectorXd mid = box.midpoint();
  const Eigen::VectorXd radius = 0.5 * (box.upper - box.lower);
  const Eigen::VectorXd spread = coeff.cwiseAbs() * radius;
  const Eigen::VectorXd center = coeff * mid + constant;
  return sense == Sense::kLower ? Eigen::VectorXd(center - spread) : Eigen::VectorXd(center + spread);
}

// Back-substitutes rows * z_k + offset through layers k, k-1, ..., 0 using the
// relaxations already stored in `layers`, giving an affine bound in the input.
void back_substitute(const net::Mlp& net, const std::vector<LayerBounds>& layers, int k,
                     Eigen::MatrixXd a, Eigen::VectorXd c, Sense sense,
                     Eigen::MatrixXd& coeff_out, Eigen::VectorXd& const_out) {
  const auto& net_layers = net.layers();
  for (int i = k;; --i) {
    c += a * net_layers[i].bias;
    a = a * net_layers[i].weight;
    if (i == 0) break;
    const LayerBounds& prev = layers[i - 1];
    for (Eigen::Index col = 0; col < a.cols(); ++col) {
      const double lo_s = prev.lo_slope[col], up_s = prev.up_slope[col], up_t = prev.up_offset[col];
      for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const double w = a(r, col);
        if (w == 0.0) continue;
        const bool use_lower = (w > 0.0) == (sense == Sense::kLower);
        if (use_lower) {
          a(r, col) = w * lo_s;
        } else {
          a(r, col) = w * up_s;
          c[r] += w * up_t;
        }
      }
    }
  }
  coeff_out = std::move(a);
  const_out = std::move(c);
}

void relax(const net::Layer& layer, LayerBounds& b) {
  const Eigen::Index n = b.lb.size();
  b.lo_slope.resize(n);
  b.up_slope.resize(n);
  b.up_offset.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double lo = b.lb[j], hi = b.ub[j];
    if (layer.activation == net::Activation::kIdentity || lo >= 0.0) {
      b.lo_slope[j] = 1.0;
      b.up_slope[j] = 1.0;
      b.up_offset[j] = 0.0;
    } else if (hi <= 0.0) {
      b.lo_slope[j] = 0.0;
      b.up_slope[j] = 0.0;
      b.up_offset[j] = 0.0;
    } else {
      const double s = hi / (hi - lo);
      b.up_slope[j] = s;
      b.up_offset[j] = -s * lo;
      b.lo_slope[j] = hi > -lo ? 1.0 : 0.0;
    }
  }
}

}  // namespace

int LayerBounds::unstable_count() const {
  int n = 0;
  for (Eigen::Index j = 0; j < lb.size(); ++j)
    if (lb[j] < 0.0 && ub[j] > 0.0) ++n;
  return n;
}

int BoundsState::unstable_count() const {
  int n = 0;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) n += layers[i].unstable_count();
  return n;
}

BoundsState propagate_bounds(const net::Mlp& net, const Box& box) {
  BoundsState state;
  state.box = box;
  const auto& net_layers = net.layers();
  state.layers.resize(net_layers.size());
  for (std::size_t k = 0; k < net_layers.size(); ++k) {
    LayerBounds& b = state.layers[k];
    const Eigen::Index n = net_layers[k].weight.rows();
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
    back_substitute(net, state.layers, static_cast<int>(k), eye, zero, Sense::kLower, b.lower_coeff,
                    b.lower_const);
    back_substitute(net, state.layers, static_cast<int>(k), eye, zero, Sense::kUpper, b.upper_coeff,
                    b.upper_const);
    b.lb = concretize(b.lower_coeff, b.lower_const, box, Sense::kLower);
    b.ub = concretize(b.upper_coeff, b.upper_const, box, Sense::kUpper);
    // Rounding can leave lb a hair above ub on a degenerate box.
    b.ub = b.ub.cwiseMax(b.lb);
    relax(net_layers[k], b);
  }
  return state;
}

AffineForm lower_bound_of(const net::Mlp& net, const BoundsState& state,
                          const Eigen::Ref<const Eigen::MatrixXd>& rows,
                          const Eigen::Ref<const Eigen::VectorXd>& offset) {
  AffineForm form;
  const int last = static_cast<int>(net.layers().size()) - 1;
  back_substitute(net, state.layers, last, rows, offset, Sense::kLower, form.coeff, form.constant);
  form.value = concretize(form.coeff, form.constant, state.box, Sense::kLower);
  return form;
}

AffineForm margin_lower_bounds(const net::Mlp& net, const BoundsState& state, int forbidden) {
  const int outputs = net.output_width();
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(outputs, outputs);
  for (int j = 0; j < outputs; ++j) {
    if (j == forbidden) continue;
    rows(j, j) = 1.0;
    rows(j, forbidden) = -1.0;
  }
  AffineForm form = lower_bound_of(net, state, rows, Eigen::VectorXd::Zero(outputs));
  form.value[forbidden] = -std::numeric_limits<double>::infinity();
  return form;
}

}  // namespace safenav::verify
