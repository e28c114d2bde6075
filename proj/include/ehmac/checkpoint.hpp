#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ehmac/mlp.hpp"

namespace ehmac {

// Self-describing JSON checkpoints. Doubles serialize via shortest
// round-trip, so save/load reproduces every parameter bit for bit.

namespace detail {

inline nlohmann::json arch_to_json(const MLPArchitecture& a) {
  nlohmann::json j;
  j["layer_sizes"] = a.layer_sizes;
  std::vector<std::string> acts;
  for (Activation act : a.activations)
    acts.push_back(act == Activation::kLinear ? "linear"
                   : act == Activation::kRelu ? "relu"
                                              : "leaky_relu");
  j["activations"] = acts;
  j["leaky_slope"] = a.leaky_slope;
  return j;
}

inline MLPArchitecture arch_from_json(const nlohmann::json& j) {
  MLPArchitecture a;
  a.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  for (const auto& s : j.at("activations")) {
    const std::string name = s.get<std::string>();
    if (name == "linear") a.activations.push_back(Activation::kLinear);
    else if (name == "relu") a.activations.push_back(Activation::kRelu);
    else if (name == "leaky_relu") a.activations.push_back(Activation::kLeakyRelu);
    else throw std::runtime_error("checkpoint: unknown activation " + name);
  }
  a.leaky_slope = j.at("leaky_slope").get<double>();
  a.validate();
  return a;
}

}  // namespace detail

inline nlohmann::json mlp_to_json(const MLPParameters& p) {
  nlohmann::json j;
  j["architecture"] = detail::arch_to_json(p.arch);
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    nlohmann::json layer;
    layer["rows"] = p.weights[l].rows;
    layer["cols"] = p.weights[l].cols;
    layer["weights"] = p.weights[l].data;
    layer["biases"] = p.biases[l];
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  return j;
}

inline MLPParameters mlp_from_json(const nlohmann::json& j) {
  MLPParameters p;
  p.arch = detail::arch_from_json(j.at("architecture"));
  for (const auto& layer : j.at("layers")) {
    Matrix w(layer.at("rows").get<std::size_t>(), layer.at("cols").get<std::size_t>());
    w.data = layer.at("weights").get<std::vector<double>>();
    if (w.data.size() != w.rows * w.cols)
      throw std::runtime_error("checkpoint: weight payload size mismatch");
    p.weights.push_back(std::move(w));
    p.biases.push_back(layer.at("biases").get<std::vector<double>>());
  }
  p.validate();
  return p;
}

inline nlohmann::json normalizer_to_json(const Normalizer& n) {
  return nlohmann::json{{"mean", n.mean}, {"stddev", n.stddev}};
}

inline Normalizer normalizer_from_json(const nlohmann::json& j) {
  Normalizer n;
  n.mean = j.at("mean").get<std::vector<double>>();
  n.stddev = j.at("stddev").get<std::vector<double>>();
  return n;
}

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out << j.dump(1) << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

}  // namespace ehmac
