#pragma once

#include <Eigen/Dense>

#include <vector>

#include "safenav/netcore/mlp.hpp"
#include "safenav/reluverify/property.hpp"

namespace safenav::verify {

// Bounds on the pre-activations of one layer. The symbolic bounds are affine
// functions of the network input valid everywhere in the box:
//   lower_coeff * x + lower_const <= z(x) <= upper_coeff * x + upper_const.
struct LayerBounds {
  Eigen::VectorXd lb, ub;
  Eigen::MatrixXd lower_coeff, upper_coeff;
  Eigen::VectorXd lower_const, upper_const;

  // Linear relaxation of the layer's activation, a >= lo_slope * z and
  // a <= up_slope * z + up_offset, valid on [lb, ub].
  Eigen::VectorXd lo_slope, up_slope, up_offset;

  int unstable_count() const;
};

struct BoundsState {
  Box box;
  std::vector<LayerBounds> layers;

  const Eigen::VectorXd& output_lower() const { return layers.back().lb; }
  const Eigen::VectorXd& output_upper() const { return layers.back().ub; }
  int unstable_count() const;
};

BoundsState propagate_bounds(const net::Mlp& net, const Box& box);

// Affine lower bound over the input of rows * z_out + offset.
struct AffineForm {
  Eigen::MatrixXd coeff;
  Eigen::VectorXd constant;
  Eigen::VectorXd value;  // minimum over the box
};

AffineForm lower_bound_of(const net::Mlp& net, const BoundsState& state,
                          const Eigen::Ref<const Eigen::MatrixXd>& rows,
                          const Eigen::Ref<const Eigen::VectorXd>& offset);

// Row j bounds z_j - z_forbidden from below. The forbidden row itself is
// -infinity so that it never proves anything.
AffineForm margin_lower_bounds(const net::Mlp& net, const BoundsState& state, int forbidden);

}  // namespace safenav::verify
