#pragma once

// Self-describing JSON checkpoints: a manifest plus named parameter tensors
// stored as nested numeric arrays. Values are serialized as doubles, which
// round-trips both the f32 train profile and the f64 test profile exactly.

#include <string>

#include <json.hpp>

#include "dps/gas.hpp"
#include "dps/graph.hpp"
#include "dps/tds.hpp"
#include "dps/trainer.hpp"

namespace dps {

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json read_checkpoint_file(const std::string& path, const std::string& expected_kind);
void write_checkpoint_file(const nlohmann::json& j, const std::string& path);
std::string fingerprint_hex(const TemporalGraph& g);

template <typename T>
nlohmann::json tensor_to_json(const ad::Tensor<T>& t) {
  const auto& s = t.shape();
  const auto& v = t.data();
  if (s.rank == 0) return v[0];
  nlohmann::json out = nlohmann::json::array();
  if (s.rank == 1) {
    for (T x : v) out.push_back(static_cast<double>(x));
  } else if (s.rank == 2) {
    for (int64_t i = 0; i < s[0]; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int64_t j = 0; j < s[1]; ++j) row.push_back(static_cast<double>(t.at(i, j)));
      out.push_back(std::move(row));
    }
  } else {
    for (int64_t i = 0; i < s[0]; ++i) {
      nlohmann::json plane = nlohmann::json::array();
      for (int64_t j = 0; j < s[1]; ++j) {
        nlohmann::json row = nlohmann::json::array();
        for (int64_t k = 0; k < s[2]; ++k) row.push_back(static_cast<double>(t.at(i, j, k)));
        plane.push_back(std::move(row));
      }
      out.push_back(std::move(plane));
    }
  }
  return out;
}

template <typename T>
ad::Tensor<T> tensor_from_json(const nlohmann::json& j, bool requires_grad = true) {
  if (!j.is_array()) return ad::Tensor<T>::scalar(static_cast<T>(j.get<double>()), requires_grad);
  std::vector<T> flat;
  ad::Shape shape;
  if (!j.empty() && j[0].is_array()) {
    if (!j[0].empty() && j[0][0].is_array()) {
      shape = ad::Shape{static_cast<int64_t>(j.size()), static_cast<int64_t>(j[0].size()),
                        static_cast<int64_t>(j[0][0].size())};
      for (const auto& plane : j)
        for (const auto& row : plane)
          for (const auto& x : row) flat.push_back(static_cast<T>(x.get<double>()));
    } else {
      shape = ad::Shape{static_cast<int64_t>(j.size()), static_cast<int64_t>(j[0].size())};
      for (const auto& row : j)
        for (const auto& x : row) flat.push_back(static_cast<T>(x.get<double>()));
    }
  } else {
    shape = ad::Shape{static_cast<int64_t>(j.size())};
    for (const auto& x : j) flat.push_back(static_cast<T>(x.get<double>()));
  }
  return ad::Tensor<T>::from_data(shape, std::move(flat), requires_grad);
}

template <typename T>
nlohmann::json manifest_base(const char* kind, const TemporalGraph* g) {
  nlohmann::json m;
  m["format_version"] = kCheckpointFormatVersion;
  m["kind"] = kind;
  m["precision"] = sizeof(T) == 4 ? "f32" : "f64";
  if (g) {
    m["dataset"] = {{"fingerprint", fingerprint_hex(*g)},
                    {"num_nodes", g->num_nodes()},
                    {"num_edges", g->num_edges()},
                    {"feature_dim", g->feature_dim()}};
  }
  return m;
}

// --- Decay rates ------------------------------------------------------------

nlohmann::json decay_rates_to_json(const DecayRates& rates);
DecayRates decay_rates_from_json(const nlohmann::json& j);
void save_decay_rates(const DecayRates& rates, const TemporalGraph& g, const std::string& path);
DecayRates load_decay_rates(const std::string& path);

// --- GAS sampler ------------------------------------------------------------

template <typename T>
nlohmann::json gas_to_json(const GasModel<T>& m) {
  nlohmann::json j;
  j["dims"] = {{"num_nodes", m.num_nodes},
               {"d_node", m.d_node},
               {"d_time", m.d_time},
               {"d_att", m.d_att},
               {"feature_dim", m.feature_dim}};
  j["temperature"] = m.temperature;
  j["trained"] = m.trained;
  nlohmann::json params;
  for (const auto& [name, t] : m.named_params()) params[name] = tensor_to_json(t);
  j["params"] = std::move(params);
  return j;
}

template <typename T>
GasModel<T> gas_from_json(const nlohmann::json& j) {
  GasModel<T> m;
  const auto& dims = j.at("dims");
  m.num_nodes = dims.at("num_nodes").get<int32_t>();
  m.d_node = dims.at("d_node").get<int64_t>();
  m.d_time = dims.at("d_time").get<int64_t>();
  m.d_att = dims.at("d_att").get<int64_t>();
  m.feature_dim = dims.at("feature_dim").get<int32_t>();
  m.temperature = j.at("temperature").get<double>();
  m.trained = j.at("trained").get<bool>();
  const auto& p = j.at("params");
  m.node_table = tensor_from_json<T>(p.at("gas.node_table"));
  m.kernel.omegas = tensor_from_json<T>(p.at("gas.omegas"));
  m.w_q = tensor_from_json<T>(p.at("gas.w_q"));
  m.w_k = tensor_from_json<T>(p.at("gas.w_k"));
  m.w_v = tensor_from_json<T>(p.at("gas.w_v"));
  return m;
}

template <typename T>
void save_gas(const GasModel<T>& m, const TemporalGraph& g, const std::string& path) {
  nlohmann::json j = manifest_base<T>("gas", &g);
  j["gas"] = gas_to_json(m);
  write_checkpoint_file(j, path);
}

template <typename T>
GasModel<T> load_gas(const std::string& path) {
  return gas_from_json<T>(read_checkpoint_file(path, "gas").at("gas"));
}

// --- Full bundle ------------------------------------------------------------

template <typename T>
nlohmann::json dps_model_to_json(const DpsModel<T>& m) {
  nlohmann::json j;
  j["hyper"] = {{"num_nodes", m.num_nodes}, {"feature_dim", m.feature_dim},
                {"d_model", m.d_model},     {"d_time", m.d_time},
                {"layers", m.layers_n},     {"heads", m.heads_n},
                {"neighbors", m.neighbors}, {"dropout", m.dropout},
                {"mode", to_string(m.mode)}};
  nlohmann::json params;
  for (const auto& [name, t] : m.named_params()) params[name] = tensor_to_json(t);
  j["params"] = std::move(params);
  return j;
}

template <typename T>
DpsModel<T> dps_model_from_json(const nlohmann::json& j) {
  const auto& h = j.at("hyper");
  TrainConfig cfg;
  cfg.d_model = h.at("d_model").get<int>();
  cfg.d_time = h.at("d_time").get<int>();
  cfg.layers = h.at("layers").get<int>();
  cfg.heads = h.at("heads").get<int>();
  cfg.neighbors = h.at("neighbors").get<int>();
  cfg.dropout = h.at("dropout").get<double>();
  cfg.sampler_mode = sampler_mode_from(h.at("mode").get<std::string>());
  Rng rng(0);
  DpsModel<T> m = DpsModel<T>::create(h.at("num_nodes").get<int32_t>(),
                                      h.at("feature_dim").get<int32_t>(), cfg, rng);
  const auto& p = j.at("params");
  for (auto& [name, t] : m.named_params()) {
    ad::Tensor<T> loaded = tensor_from_json<T>(p.at(name));
    if (loaded.shape() != t.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    t.data() = loaded.data();
  }
  return m;
}

template <typename T>
void save_bundle(const DpsBundle<T>& b, const TemporalGraph& g, const std::string& path) {
  nlohmann::json j = manifest_base<T>("dps", &g);
  j["model"] = dps_model_to_json(b.model);
  if (b.uses_tds()) j["tds"] = decay_rates_to_json(b.rates);
  if (b.uses_gas()) j["gas"] = gas_to_json(b.gas);
  write_checkpoint_file(j, path);
}

template <typename T>
DpsBundle<T> load_bundle(const std::string& path) {
  nlohmann::json j = read_checkpoint_file(path, "dps");
  DpsBundle<T> b;
  b.model = dps_model_from_json<T>(j.at("model"));
  if (b.uses_tds()) b.rates = decay_rates_from_json(j.at("tds"));
  if (b.uses_gas()) b.gas = gas_from_json<T>(j.at("gas"));
  return b;
}

}  // namespace dps
