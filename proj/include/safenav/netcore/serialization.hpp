#pragma once

#include <filesystem>
#include <string>

#include "safenav/netcore/mlp.hpp"

namespace safenav::net {

inline constexpr int kNetworkFormatVersion = 1;

// JSON network document:
//   {"version": 1,
//    "layers":  [{"in": 16, "out": 32, "activation": "relu"}, ...],
//    "weights": [[row-major values of layer 0], ...],
//    "biases":  [[...], ...],
//    "metadata": {"seed": 7, "method": "lppo", "episodes": 600}}
// Doubles are written in shortest round-trip form, so save/load is bit-exact.
std::string network_to_json(const Mlp& net);
Mlp network_from_json(const std::string& text, const std::string& source = "<memory>");

void save_network(const Mlp& net, const std::filesystem::path& path);
Mlp load_network(const std::filesystem::path& path);
PolicyNetwork load_policy(const std::filesystem::path& path);

}  // namespace safenav::net
