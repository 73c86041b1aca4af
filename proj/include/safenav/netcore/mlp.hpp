#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace safenav::net {

inline constexpr int kObservationSize = 16;
inline constexpr int kActionCount = 5;

enum class Activation { kReLU, kIdentity };

struct LayerSpec {
  int input_width = 0;
  int output_width = 0;
  Activation activation = Activation::kReLU;

  bool operator==(const LayerSpec&) const = default;
};

struct Layer {
  Eigen::MatrixXd weight;  // output_width x input_width
  Eigen::VectorXd bias;
  Activation activation = Activation::kReLU;

  LayerSpec spec() const {
    return {static_cast<int>(weight.cols()), static_cast<int>(weight.rows()), activation};
  }
};

struct NetworkMetadata {
  std::uint64_t seed = 0;
  std::string method;
  std::int64_t episodes = 0;

  bool operator==(const NetworkMetadata&) const = default;
};

// Per-layer activations recorded by a cached forward pass. Columns are batch
// entries.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> preactivations;

  bool empty() const { return inputs.empty(); }
  void clear() {
    inputs.clear();
    preactivations.clear();
  }
};

class Mlp;

// Gradient accumulators, one per weight matrix and bias vector.
class GradientTape {
 public:
  GradientTape() = default;
  explicit GradientTape(const Mlp& net);

  void zero();
  double squared_norm() const;
  void scale(double factor);
  bool congruent_with(const Mlp& net) const;

  std::vector<Eigen::MatrixXd> d_weight;
  std::vector<Eigen::VectorXd> d_bias;
};

// Feedforward ReLU network in float64. Immutable during evaluation; safe to
// read from several threads at once.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers, NetworkMetadata metadata = {});

  // Zero weights and biases.
  static Mlp zeros(const std::vector<LayerSpec>& specs);
  // Weights uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static Mlp glorot(const std::vector<LayerSpec>& specs, std::uint64_t seed);
  // Hidden layers use ReLU, the output layer is Identity.
  static std::vector<LayerSpec> chain(int inputs, const std::vector<int>& hidden, int outputs);

  int input_width() const;
  int output_width() const;
  std::size_t parameter_count() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }
  std::vector<LayerSpec> specs() const;

  Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& input) const;
  Eigen::MatrixXd forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& inputs) const;
  Eigen::MatrixXd forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                ForwardCache& cache) const;

  // Accumulates d(loss)/d(parameters) into `tape` given d(loss)/d(outputs)
  // for the batch recorded in `cache`, and returns d(loss)/d(inputs).
  // Throws std::logic_error if `cache` holds no activations.
  Eigen::MatrixXd backward(const ForwardCache& cache,
                           const Eigen::Ref<const Eigen::MatrixXd>& d_output,
                           GradientTape& tape) const;

  // d(w . output)/d(input) at a single point.
  Eigen::VectorXd input_gradient(const Eigen::Ref<const Eigen::VectorXd>& input,
                                 const Eigen::Ref<const Eigen::VectorXd>& output_weights) const;

  bool all_finite() const;

  // Flattened parameter access in layer order (weights row-major, then bias).
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(const std::vector<double>& params);

  NetworkMetadata metadata;

 private:
  std::vector<Layer> layers_;
};

// Fixed 16-in / 5-out Identity-headed network deployed as the navigation
// policy.
class PolicyNetwork : public Mlp {
 public:
  PolicyNetwork() = default;
  // Throws std::invalid_argument if the shape is not 16 -> ... -> 5 with an
  // Identity output layer.
  explicit PolicyNetwork(Mlp net);

  static PolicyNetwork initialize(const std::vector<int>& hidden, std::uint64_t seed);
};

// Reward and cost critics. Training-only; never written into deployment
// artifacts.
struct ValueHeads {
  Mlp reward;
  Mlp cost;

  static ValueHeads initialize(const std::vector<int>& hidden, std::uint64_t seed);
};

std::string to_string(Activation activation);
Activation activation_from_string(const std::string& name);

}  // namespace safenav::net
