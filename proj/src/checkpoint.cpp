#include "dps/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace dps {

nlohmann::json read_checkpoint_file(const std::string& path, const std::string& expected_kind) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format version in " + path);
  const std::string kind = j.at("kind").get<std::string>();
  if (kind != expected_kind)
    throw std::runtime_error("checkpoint: expected kind `" + expected_kind + "`, found `" + kind +
                             "` in " + path);
  return j;
}

void write_checkpoint_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out << j.dump(1);
  out << '\n';
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::string fingerprint_hex(const TemporalGraph& g) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(g.fingerprint()));
  return buf;
}

nlohmann::json decay_rates_to_json(const DecayRates& rates) {
  nlohmann::json j;
  j["lambda"] = rates.lambda;
  j["fallback_lambda"] = rates.fallback_lambda;
  std::vector<int> fitted(rates.fitted.begin(), rates.fitted.end());
  j["fitted"] = fitted;
  return j;
}

DecayRates decay_rates_from_json(const nlohmann::json& j) {
  DecayRates rates;
  rates.lambda = j.at("lambda").get<std::vector<double>>();
  rates.fallback_lambda = j.at("fallback_lambda").get<double>();
  for (int f : j.at("fitted").get<std::vector<int>>())
    rates.fitted.push_back(static_cast<uint8_t>(f));
  if (rates.fitted.size() != rates.lambda.size())
    throw std::runtime_error("checkpoint: decay rate arrays disagree");
  return rates;
}

void save_decay_rates(const DecayRates& rates, const TemporalGraph& g, const std::string& path) {
  nlohmann::json j = manifest_base<double>("tds", &g);
  j["tds"] = decay_rates_to_json(rates);
  write_checkpoint_file(j, path);
}

DecayRates load_decay_rates(const std::string& path) {
  return decay_rates_from_json(read_checkpoint_file(path, "tds").at("tds"));
}

}  // namespace dps
