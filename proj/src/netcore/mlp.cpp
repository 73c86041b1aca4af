#include "safenav/netcore/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "safenav/common/rng.hpp"

namespace safenav::net {

namespace {

void apply_activation(Activation activation, Eigen::MatrixXd& values) {
  if (activation == Activation::kReLU) values = values.cwiseMax(0.0);
}

}  // namespace

GradientTape::GradientTape(const Mlp& net) {
  for (const auto& layer : net.layers()) {
    d_weight.push_back(Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
    d_bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
}

void GradientTape::zero() {
  for (auto& w : d_weight) w.setZero();
  for (auto& b : d_bias) b.setZero();
}

double GradientTape::squared_norm() const {
  double total = 0.0;
  for (const auto& w : d_weight) total += w.squaredNorm();
  for (const auto& b : d_bias) total += b.squaredNorm();
  return total;
}

void GradientTape::scale(double factor) {
  for (auto& w : d_weight) w *= factor;
  for (auto& b : d_bias) b *= factor;
}

bool GradientTape::congruent_with(const Mlp& net) const {
  if (d_weight.size() != net.layers().size()) return false;
  for (std::size_t k = 0; k < d_weight.size(); ++k) {
    const auto& layer = net.layers()[k];
    if (d_weight[k].rows() != layer.weight.rows() || d_weight[k].cols() != layer.weight.cols() ||
        d_bias[k].size() != layer.bias.size())
      return false;
  }
  return true;
}

Mlp::Mlp(std::vector<Layer> layers, NetworkMetadata meta)
    : metadata(std::move(meta)), layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("network needs at least one layer");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& layer = layers_[k];
    if (layer.weight.rows() == 0 || layer.weight.cols() == 0)
      throw std::invalid_argument("layer " + std::to_string(k) + " has zero width");
    if (layer.bias.size() != layer.weight.rows())
      throw std::invalid_argument("layer " + std::to_string(k) + " bias length mismatch");
    if (k > 0 && layers_[k - 1].weight.rows() != layer.weight.cols())
      throw std::invalid_argument("layer " + std::to_string(k) + " input width " +
                                  std::to_string(layer.weight.cols()) +
                                  " does not match previous output width " +
                                  std::to_string(layers_[k - 1].weight.rows()));
  }
  if (layers_.back().activation != Activation::kIdentity)
    throw std::invalid_argument("final layer must use Identity activation");
}

std::vector<LayerSpec> Mlp::chain(int inputs, const std::vector<int>& hidden, int outputs) {
  std::vector<LayerSpec> specs;
  int width = inputs;
  for (int h : hidden) {
    specs.push_back({width, h, Activation::kReLU});
    width = h;
  }
  specs.push_back({width, outputs, Activation::kIdentity});
  return specs;
}

Mlp Mlp::zeros(const std::vector<LayerSpec>& specs) {
  std::vector<Layer> layers;
  for (const auto& s : specs) {
    if (s.input_width <= 0 || s.output_width <= 0)
      throw std::invalid_argument("layer widths must be positive");
    layers.push_back({Eigen::MatrixXd::Zero(s.output_width, s.input_width),
                      Eigen::VectorXd::Zero(s.output_width), s.activation});
  }
  return Mlp(std::move(layers));
}

Mlp Mlp::glorot(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  Mlp net = zeros(specs);
  Rng rng(seed);
  for (auto& layer : net.layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        layer.weight(r, c) = rng.uniform(-limit, limit);
  }
  net.metadata.seed = seed;
  return net;
}

int Mlp::input_width() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols());
}

int Mlp::output_width() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

std::vector<LayerSpec> Mlp::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& layer : layers_) out.push_back(layer.spec());
  return out;
}

Eigen::VectorXd Mlp::forward(const Eigen::Ref<const Eigen::VectorXd>& input) const {
  if (input.size() != input_width())
    throw std::invalid_argument("forward: input has " + std::to_string(input.size()) +
                                " entries, network expects " + std::to_string(input_width()));
  Eigen::VectorXd x = input;
  for (const auto& layer : layers_) {
    Eigen::VectorXd z = layer.weight * x + layer.bias;
    if (layer.activation == Activation::kReLU) z = z.cwiseMax(0.0);
    x = std::move(z);
  }
  return x;
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& inputs) const {
  if (inputs.rows() != input_width())
    throw std::invalid_argument("forward_batch: input has " + std::to_string(inputs.rows()) +
                                " rows, network expects " + std::to_string(input_width()));
  Eigen::MatrixXd x = inputs;
  for (const auto& layer : layers_) {
    Eigen::MatrixXd z = layer.weight * x;
    z.colwise() += layer.bias;
    apply_activation(layer.activation, z);
    x = std::move(z);
  }
  return x;
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                   ForwardCache& cache) const {
  if (inputs.rows() != input_width())
    throw std::invalid_argument("forward_batch: input has " + std::to_string(inputs.rows()) +
                                " rows, network expects " + std::to_string(input_width()));
  cache.clear();
  Eigen::MatrixXd x = inputs;
  for (const auto& layer : layers_) {
    Eigen::MatrixXd z = layer.weight * x;
    z.colwise() += layer.bias;
    cache.inputs.push_back(std::move(x));
    cache.preactivations.push_back(z);
    apply_activation(layer.activation, z);
    x = std::move(z);
  }
  return x;
}

Eigen::MatrixXd Mlp::backward(const ForwardCache& cache,
                              const Eigen::Ref<const Eigen::MatrixXd>& d_output,
                              GradientTape& tape) const {
  if (cache.empty() || cache.inputs.size() != layers_.size())
    throw std::logic_error("backward called without cached activations");
  if (!tape.congruent_with(*this)) throw std::logic_error("gradient tape shape mismatch");
  const Eigen::Index batch = cache.inputs.front().cols();
  if (d_output.rows() != output_width() || d_output.cols() != batch)
    throw std::invalid_argument("backward: output gradient shape mismatch");

  Eigen::MatrixXd delta = d_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const auto& layer = layers_[i];
    if (layer.activation == Activation::kReLU)
      delta = delta.cwiseProduct((cache.preactivations[i].array() > 0.0).cast<double>().matrix());
    tape.d_weight[i].noalias() += delta * cache.inputs[i].transpose();
    tape.d_bias[i] += delta.rowwise().sum();
    delta = layer.weight.transpose() * delta;
  }
  return delta;
}

Eigen::VectorXd Mlp::input_gradient(const Eigen::Ref<const Eigen::VectorXd>& input,
                                    const Eigen::Ref<const Eigen::VectorXd>& output_weights) const {
  if (output_weights.size() != output_width())
    throw std::invalid_argument("input_gradient: output weight length mismatch");
  std::vector<Eigen::VectorXd> pre;
  Eigen::VectorXd x = input;
  for (const auto& layer : layers_) {
    Eigen::VectorXd z = layer.weight * x + layer.bias;
    pre.push_back(z);
    if (layer.activation == Activation::kReLU) z = z.cwiseMax(0.0);
    x = std::move(z);
  }
  Eigen::VectorXd delta = output_weights;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (layers_[i].activation == Activation::kReLU)
      delta = delta.cwiseProduct((pre[i].array() > 0.0).cast<double>().matrix());
    delta = layers_[i].weight.transpose() * delta;
  }
  return delta;
}

bool Mlp::all_finite() const {
  for (const auto& layer : layers_)
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  return true;
}

std::vector<double> Mlp::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) out.push_back(layer.weight(r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out.push_back(layer.bias(r));
  }
  return out;
}

void Mlp::set_flat_parameters(const std::vector<double>& params) {
  if (params.size() != parameter_count())
    throw std::invalid_argument("set_flat_parameters: wrong parameter count");
  std::size_t i = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = params[i++];
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = params[i++];
  }
}

PolicyNetwork::PolicyNetwork(Mlp net) : Mlp(std::move(net)) {
  if (input_width() != kObservationSize)
    throw std::invalid_argument("policy network must take " + std::to_string(kObservationSize) +
                                " inputs, got " + std::to_string(input_width()));
  if (output_width() != kActionCount)
    throw std::invalid_argument("policy network must emit " + std::to_string(kActionCount) +
                                " logits, got " + std::to_string(output_width()));
}

PolicyNetwork PolicyNetwork::initialize(const std::vector<int>& hidden, std::uint64_t seed) {
  return PolicyNetwork(Mlp::glorot(Mlp::chain(kObservationSize, hidden, kActionCount), seed));
}

ValueHeads ValueHeads::initialize(const std::vector<int>& hidden, std::uint64_t seed) {
  const auto specs = Mlp::chain(kObservationSize, hidden, 1);
  return {Mlp::glorot(specs, derive_seed(seed, 1)), Mlp::glorot(specs, derive_seed(seed, 2))};
}

std::string to_string(Activation activation) {
  return activation == Activation::kReLU ? "relu" : "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kReLU;
  if (name == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

}  // namespace safenav::net
