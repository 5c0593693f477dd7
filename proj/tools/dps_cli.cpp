// dps: command line driver for temporal-network preference-structure
// embeddings. Subcommands cover dataset ingestion, synthetic generation,
// sampler fitting, training, evaluation, ablations, sweeps, embedding dumps
// and the gradient verification suite.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "dps/checkpoint.hpp"
#include "dps/gradcheck.hpp"
#include "dps/graph.hpp"
#include "dps/metrics.hpp"
#include "dps/tds.hpp"
#include "dps/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Real = float;  // train profile; gradcheck runs the 64-bit test profile

struct DataOpts {
  std::string path;
  double divisor = 86400.0;
  bool has_features = false;
  std::string format = "auto";
};

dps::TemporalGraph load_data(const DataOpts& opts) {
  dps::LoadOptions lo;
  lo.time_unit_divisor = opts.divisor;
  lo.has_features = opts.has_features;
  lo.format = opts.format;
  return dps::load_edge_list(opts.path, lo);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir);
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

void append_metrics(const std::string& out_dir, const std::string& row) {
  const std::string path = out_dir + "/metrics.csv";
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (fresh) out << dps::kMetricsCsvHeader << '\n';
  out << row << '\n';
}

// TrainConfig <-> json; unknown keys in config files are rejected.
json train_config_to_json(const dps::TrainConfig& cfg) {
  return json{{"batch_size", cfg.batch_size},
              {"dropout", cfg.dropout},
              {"layers", cfg.layers},
              {"heads", cfg.heads},
              {"neighbors", cfg.neighbors},
              {"lr", cfg.lr},
              {"weight_decay", cfg.weight_decay},
              {"patience", cfg.patience},
              {"max_epochs", cfg.max_epochs},
              {"seed", cfg.seed},
              {"sampler_mode", dps::to_string(cfg.sampler_mode)},
              {"d_model", cfg.d_model},
              {"d_time", cfg.d_time},
              {"deterministic", cfg.deterministic},
              {"tau_start", cfg.tau_start},
              {"tau_decay", cfg.tau_decay},
              {"tau_floor", cfg.tau_floor}};
}

void train_config_from_json(const json& j, dps::TrainConfig& cfg) {
  const json known = train_config_to_json(cfg);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key()))
      throw std::runtime_error("config: unknown key `" + it.key() + "`");
  }
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("batch_size", cfg.batch_size);
  get("dropout", cfg.dropout);
  get("layers", cfg.layers);
  get("heads", cfg.heads);
  get("neighbors", cfg.neighbors);
  get("lr", cfg.lr);
  get("weight_decay", cfg.weight_decay);
  get("patience", cfg.patience);
  get("max_epochs", cfg.max_epochs);
  get("seed", cfg.seed);
  get("d_model", cfg.d_model);
  get("d_time", cfg.d_time);
  get("deterministic", cfg.deterministic);
  get("tau_start", cfg.tau_start);
  get("tau_decay", cfg.tau_decay);
  get("tau_floor", cfg.tau_floor);
  if (j.contains("sampler_mode"))
    cfg.sampler_mode = dps::sampler_mode_from(j.at("sampler_mode").get<std::string>());
}

// The resolved config is itself a valid --config input: training
// hyperparameters under "train_config", command inputs alongside.
void write_resolved_config(const std::string& out_dir, const std::string& command,
                           const dps::TrainConfig& cfg, const json& extra) {
  json j;
  j["command"] = command;
  j["train_config"] = train_config_to_json(cfg);
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  write_text(out_dir + "/" + command + "_config.json", j.dump(1) + "\n");
}

void print_search_warnings(const dps::TrainConfig& cfg) {
  for (const auto& w : cfg.search_space_warnings())
    std::cerr << "warning: " << w << " (explicit override)\n";
}

json summary_json(const dps::TemporalGraph& g) {
  char ts[32], dens[32], rep[32];
  std::snprintf(ts, sizeof(ts), "%.4f", g.timespan());
  std::snprintf(dens, sizeof(dens), "%.6f", g.density());
  std::snprintf(rep, sizeof(rep), "%.4f", g.repetition_fraction());
  return json{{"nodes", g.num_nodes()},
              {"edges", g.num_edges()},
              {"density", std::stod(dens)},
              {"repetition", std::stod(rep)},
              {"timespan_days", std::stod(ts)},
              {"feature_dim", g.feature_dim()},
              {"fingerprint", dps::fingerprint_hex(g)}};
}

dps::EvalReport evaluate_bundle(dps::DpsBundle<Real>& bundle, const dps::TemporalGraph& g,
                                const std::vector<int32_t>& ids, uint64_t seed) {
  dps::Rng neg_rng(dps::Rng::mix(seed, 0xe7a1));
  dps::Rng sampler_rng(dps::Rng::mix(seed, 0xe7a2));
  dps::DpsForward<Real> fwd(g, bundle);
  return dps::evaluate_links<Real>(fwd, g, ids, neg_rng, sampler_rng);
}

std::string basename_of(const std::string& path) {
  return fs::path(path).filename().string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic preference-structure embeddings for temporal networks"};
  app.require_subcommand(1);

  // Config file values become defaults; explicit flags override them.
  dps::TrainConfig cfg;
  std::string config_path;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
  }
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "error: cannot open config " << config_path << "\n";
      return 1;
    }
    try {
      json parsed = json::parse(in);
      // Accept both a bare hyperparameter object and a resolved-config file.
      train_config_from_json(parsed.contains("train_config") ? parsed.at("train_config") : parsed,
                             cfg);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }

  std::string out_dir = ".";
  std::string mode_str = dps::to_string(cfg.sampler_mode);
  DataOpts data;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "JSON config file (training hyperparameters; applied before flags)");
    cmd->add_option("--out", out_dir, "output directory")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "run seed")->capture_default_str();
    cmd->add_flag("--deterministic", cfg.deterministic,
                  "force single-threaded deterministic execution");
  };
  auto add_data = [&](CLI::App* cmd) {
    cmd->add_option("--data", data.path, "edge list file")->required();
    cmd->add_option("--divisor", data.divisor, "timestamp divisor (raw seconds -> days: 86400)")
        ->capture_default_str();
    cmd->add_flag("--features", data.has_features, "trailing columns are edge features");
    cmd->add_option("--format", data.format, "column layout: auto|sdt|sdwt")
        ->capture_default_str();
  };
  auto add_train_flags = [&](CLI::App* cmd) {
    cmd->add_option("--batch-size", cfg.batch_size)->capture_default_str();
    cmd->add_option("--dropout", cfg.dropout)->capture_default_str();
    cmd->add_option("--layers", cfg.layers)->capture_default_str();
    cmd->add_option("--heads", cfg.heads)->capture_default_str();
    cmd->add_option("--neighbors", cfg.neighbors)->capture_default_str();
    cmd->add_option("--lr", cfg.lr)->capture_default_str();
    cmd->add_option("--weight-decay", cfg.weight_decay)->capture_default_str();
    cmd->add_option("--patience", cfg.patience)->capture_default_str();
    cmd->add_option("--max-epochs", cfg.max_epochs)->capture_default_str();
    cmd->add_option("--d-model", cfg.d_model)->capture_default_str();
    cmd->add_option("--d-time", cfg.d_time)->capture_default_str();
  };

  // --- ingest ---------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "normalize an edge list and report statistics");
  add_common(ingest);
  add_data(ingest);
  std::string dataset_name;
  ingest->add_option("--name", dataset_name, "dataset name for outputs (default: input basename)");

  // --- synth ----------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a planted-preference temporal graph");
  add_common(synth);
  dps::SynthParams synth_params;
  synth->add_option("--nodes", synth_params.num_nodes)->capture_default_str();
  synth->add_option("--edges", synth_params.num_edges)->capture_default_str();
  synth->add_option("--communities", synth_params.num_communities)->capture_default_str();
  synth->add_option("--decay", synth_params.decay_rate)->capture_default_str();

  // --- fit-tds ----------------------------------------------------------------
  auto* fit_tds_cmd = app.add_subcommand("fit-tds", "fit per-node decay rates by convex MLE");
  add_common(fit_tds_cmd);
  add_data(fit_tds_cmd);
  int tds_budget = dps::kTdsEventBudget;
  fit_tds_cmd->add_option("--budget", tds_budget, "max likelihood terms per node")
      ->capture_default_str();

  // --- pretrain-gas ----------------------------------------------------------
  auto* pregas = app.add_subcommand("pretrain-gas", "pretrain the attention sampler");
  add_common(pregas);
  add_data(pregas);
  add_train_flags(pregas);

  // --- train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train the fusion model on link prediction");
  add_common(train);
  add_data(train);
  add_train_flags(train);
  std::string tds_ckpt, gas_ckpt, model_ckpt;
  train->add_option("--tds", tds_ckpt, "decay-rate checkpoint (fit-tds output)");
  train->add_option("--gas", gas_ckpt, "attention-sampler checkpoint (pretrain-gas output)");
  train->add_option("--mode", mode_str, "DPS|TDS_only|GAS_only|no_fusion|uniform")
      ->capture_default_str();

  // --- evaluate ---------------------------------------------------------------
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a trained checkpoint");
  add_common(evaluate);
  add_data(evaluate);
  evaluate->add_option("--model", model_ckpt, "trained checkpoint")->required();
  std::string eval_split = "test";
  evaluate->add_option("--split", eval_split, "test|val")->capture_default_str();
  std::string labels_path;
  evaluate->add_option("--labels", labels_path,
                       "node-label events (`node_id timestamp label`): also run the "
                       "temporal node classifier");

  // --- ablate -----------------------------------------------------------------
  auto* ablate = app.add_subcommand("ablate", "run the five sampler-mode variants");
  add_common(ablate);
  add_data(ablate);
  add_train_flags(ablate);
  ablate->add_option("--tds", tds_ckpt, "decay-rate checkpoint")->required();
  ablate->add_option("--gas", gas_ckpt, "attention-sampler checkpoint")->required();

  // --- sweep ------------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "metric vs one hyperparameter axis");
  add_common(sweep);
  add_data(sweep);
  add_train_flags(sweep);
  sweep->add_option("--tds", tds_ckpt, "decay-rate checkpoint")->required();
  sweep->add_option("--gas", gas_ckpt, "attention-sampler checkpoint")->required();
  std::string axis = "neighbors";
  sweep->add_option("--axis", axis, "neighbors|batch|dropout|heads|layers")
      ->capture_default_str();
  int jobs = 1;
  sweep->add_option("--jobs", jobs, "parallel worker threads")->capture_default_str();

  // --- embed ------------------------------------------------------------------
  auto* embed = app.add_subcommand("embed", "dump temporal embeddings at (node, time) pairs");
  add_common(embed);
  add_data(embed);
  embed->add_option("--model", model_ckpt, "trained checkpoint")->required();
  std::string pairs_path;
  std::vector<std::string> pair_args;
  embed->add_option("--pairs", pairs_path, "file with `node_id time` per line");
  embed->add_option("--at", pair_args, "inline node_id:time pairs (repeatable)");

  // --- gradcheck ----------------------------------------------------------------
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference verification suite");
  add_common(gradcheck);

  CLI11_PARSE(app, argc, argv);

  try {
    ensure_dir(out_dir);

    if (*ingest) {
      dps::TemporalGraph g = load_data(data);
      const std::string name = dataset_name.empty() ? basename_of(data.path) : dataset_name;
      dps::save_edge_list(g, out_dir + "/dataset.txt");
      json summary = summary_json(g);
      summary["dataset"] = name;
      write_text(out_dir + "/ingest_summary.json", summary.dump(1) + "\n");
      std::cout << summary.dump(1) << "\n";
      write_resolved_config(out_dir, "ingest",
                            cfg, json{{"data", data.path},
                                      {"divisor", data.divisor},
                                      {"features", data.has_features},
                                      {"format", data.format}});
    } else if (*synth) {
      synth_params.seed = cfg.seed;
      dps::TemporalGraph g = dps::synth_generate(synth_params);
      dps::save_edge_list(g, out_dir + "/synth.txt");
      json summary = summary_json(g);
      summary["dataset"] = "synth";
      write_text(out_dir + "/synth_summary.json", summary.dump(1) + "\n");
      std::cout << summary.dump(1) << "\n";
      write_resolved_config(out_dir, "synth",
                            cfg, json{{"nodes", synth_params.num_nodes},
                                      {"edges", synth_params.num_edges},
                                      {"communities", synth_params.num_communities},
                                      {"decay", synth_params.decay_rate}});
    } else if (*fit_tds_cmd) {
      dps::TemporalGraph g = load_data(data);
      dps::ChronoSplit split = dps::chrono_split(g);
      dps::DecayRates rates = dps::fit_all(g, split, cfg.seed, tds_budget);
      dps::save_decay_rates(rates, g, out_dir + "/tds.ckpt.json");
      dps::save_decay_rates_text(rates, g, out_dir + "/tds_rates.txt");
      int64_t fitted = 0;
      for (uint8_t f : rates.fitted) fitted += f;
      std::cout << "fitted " << fitted << "/" << rates.lambda.size()
                << " nodes, fallback lambda = " << rates.fallback_lambda << "\n";
      write_resolved_config(out_dir, "fit-tds",
                            cfg, json{{"data", data.path}, {"budget", tds_budget}});
    } else if (*pregas) {
      print_search_warnings(cfg);
      dps::TemporalGraph g = load_data(data);
      dps::ChronoSplit split = dps::chrono_split(g);
      dps::EvalReport report;
      dps::GasModel<Real> model = dps::pretrain_gas<Real>(g, split, cfg, &report);
      dps::save_gas(model, g, out_dir + "/gas.ckpt.json");
      write_text(out_dir + "/pretrain-gas_report.json", report.to_json() + "\n");
      append_metrics(out_dir, report.csv_row("pretrain-gas", basename_of(data.path), "GAS",
                                             cfg.seed));
      std::cout << "val auc " << report.val_auc << " after " << report.epochs << " epochs\n";
      write_resolved_config(out_dir, "pretrain-gas", cfg, json{{"data", data.path}});
    } else if (*train) {
      print_search_warnings(cfg);
      cfg.sampler_mode = dps::sampler_mode_from(mode_str);
      dps::TemporalGraph g = load_data(data);
      dps::ChronoSplit split = dps::chrono_split(g);

      dps::DecayRates rates;
      dps::GasModel<Real> gas;
      const dps::DecayRates* rates_ptr = nullptr;
      const dps::GasModel<Real>* gas_ptr = nullptr;
      const bool needs_tds = cfg.sampler_mode == dps::SamplerMode::kDps ||
                             cfg.sampler_mode == dps::SamplerMode::kTdsOnly ||
                             cfg.sampler_mode == dps::SamplerMode::kNoFusion;
      const bool needs_gas = cfg.sampler_mode == dps::SamplerMode::kDps ||
                             cfg.sampler_mode == dps::SamplerMode::kGasOnly ||
                             cfg.sampler_mode == dps::SamplerMode::kNoFusion;
      if (needs_tds) {
        if (tds_ckpt.empty()) throw std::runtime_error("train: --tds required for this mode");
        rates = dps::load_decay_rates(tds_ckpt);
        rates_ptr = &rates;
      }
      if (needs_gas) {
        if (gas_ckpt.empty()) throw std::runtime_error("train: --gas required for this mode");
        gas = dps::load_gas<Real>(gas_ckpt);
        gas_ptr = &gas;
      }

      dps::TrainResult<Real> result = dps::train_dps<Real>(g, split, rates_ptr, gas_ptr, cfg);
      dps::save_bundle(result.bundle, g, out_dir + "/dps.ckpt.json");

      dps::EvalReport test = evaluate_bundle(result.bundle, g, split.test, cfg.seed);
      test.loss_history = result.report.loss_history;
      test.epochs = result.report.epochs;
      test.best_epoch = result.report.best_epoch;
      test.val_auc = result.report.val_auc;
      write_text(out_dir + "/train_report.json", test.to_json() + "\n");
      append_metrics(out_dir,
                     test.csv_row("train", basename_of(data.path), mode_str, cfg.seed));
      std::cout << "test accuracy " << test.accuracy << ", auc " << test.auc << " (val auc "
                << test.val_auc << ", " << test.epochs << " epochs)\n";
      write_resolved_config(out_dir, "train",
                            cfg, json{{"data", data.path},
                                      {"tds", tds_ckpt},
                                      {"gas", gas_ckpt},
                                      {"mode", mode_str}});
    } else if (*evaluate) {
      dps::TemporalGraph g = load_data(data);
      dps::ChronoSplit split = dps::chrono_split(g);
      dps::DpsBundle<Real> bundle = dps::load_bundle<Real>(model_ckpt);
      if (bundle.model.num_nodes != g.num_nodes())
        throw std::runtime_error("evaluate: checkpoint node count does not match the dataset");
      const auto& ids = eval_split == "val" ? split.val : split.test;
      dps::EvalReport report = evaluate_bundle(bundle, g, ids, cfg.seed);
      write_text(out_dir + "/evaluate_report.json", report.to_json() + "\n");
      append_metrics(out_dir, report.csv_row("evaluate", basename_of(data.path),
                                             dps::to_string(bundle.model.mode), cfg.seed));
      std::cout << "accuracy " << report.accuracy << ", auc " << report.auc << " on "
                << eval_split << "\n";

      if (!labels_path.empty()) {
        auto events = dps::load_label_events(labels_path, g);
        dps::DpsForward<Real> fwd(g, bundle);
        dps::NodeClassifierConfig ncfg;
        ncfg.seed = cfg.seed;
        auto [head, nreport] = dps::train_node_classifier<Real>(fwd, g, events, ncfg);
        write_text(out_dir + "/nodeclf_report.json", nreport.to_json() + "\n");
        append_metrics(out_dir, nreport.csv_row("evaluate-nodeclf", basename_of(labels_path),
                                                dps::to_string(bundle.model.mode), cfg.seed));
        std::cout << "node classification auc " << nreport.auc << "\n";
      }
      write_resolved_config(out_dir, "evaluate",
                            cfg, json{{"data", data.path},
                                      {"model", model_ckpt},
                                      {"split", eval_split},
                                      {"labels", labels_path}});
    } else if (*ablate) {
      print_search_warnings(cfg);
      dps::TemporalGraph g = load_data(data);
      dps::ChronoSplit split = dps::chrono_split(g);
      dps::DecayRates rates = dps::load_decay_rates(tds_ckpt);
      dps::GasModel<Real> gas = dps::load_gas<Real>(gas_ckpt);
      auto table = dps::ablation_run<Real>(g, split, rates, gas, cfg);

      std::ostringstream csv;
      csv << "mode,accuracy,auc,epochs,tds_calls,gas_calls,uniform_calls\n";
      for (auto& row : table) {
        char acc[32], auc[32];
        std::snprintf(acc, sizeof(acc), "%.6f", row.report.accuracy);
        std::snprintf(auc, sizeof(auc), "%.6f", row.report.auc);
        csv << dps::to_string(row.mode) << ',' << acc << ',' << auc << ',' << row.report.epochs
            << ',' << row.usage.tds_calls << ',' << row.usage.gas_calls << ','
            << row.usage.uniform_calls << '\n';
        append_metrics(out_dir, row.report.csv_row("ablate", basename_of(data.path),
                                                   dps::to_string(row.mode), cfg.seed));
        dps::save_bundle(row.bundle, g,
                         out_dir + "/dps_" + dps::to_string(row.mode) + ".ckpt.json");
      }
      write_text(out_dir + "/ablation.csv", csv.str());
      std::cout << csv.str();
      write_resolved_config(out_dir, "ablate",
                            cfg, json{{"data", data.path}, {"tds", tds_ckpt}, {"gas", gas_ckpt}});
    } else if (*sweep) {
      dps::TemporalGraph g = load_data(data);
      dps::ChronoSplit split = dps::chrono_split(g);
      dps::DecayRates rates = dps::load_decay_rates(tds_ckpt);
      dps::GasModel<Real> gas = dps::load_gas<Real>(gas_ckpt);

      std::vector<double> values;
      if (axis == "neighbors") values = {10, 20, 30, 40};
      else if (axis == "batch") values = {100, 150, 200, 250};
      else if (axis == "dropout") values = {0.0, 0.1, 0.2, 0.3};
      else if (axis == "heads") values = {1, 2, 4};
      else if (axis == "layers") values = {1, 2};
      else throw std::runtime_error("sweep: unknown axis `" + axis + "`");

      if (cfg.deterministic) jobs = 1;
      std::vector<dps::EvalReport> reports(values.size());
      std::atomic<size_t> next{0};
      auto worker = [&]() {
        for (;;) {
          const size_t i = next.fetch_add(1);
          if (i >= values.size()) return;
          dps::TrainConfig c = cfg;
          if (axis == "neighbors") c.neighbors = int(values[i]);
          else if (axis == "batch") c.batch_size = int(values[i]);
          else if (axis == "dropout") c.dropout = values[i];
          else if (axis == "heads") c.heads = int(values[i]);
          else if (axis == "layers") c.layers = int(values[i]);
          dps::TrainResult<Real> res = dps::train_dps<Real>(g, split, &rates, &gas, c);
          dps::EvalReport rep = evaluate_bundle(res.bundle, g, split.test, c.seed);
          rep.epochs = res.report.epochs;
          rep.val_auc = res.report.val_auc;
          reports[i] = rep;
        }
      };
      std::vector<std::thread> pool;
      const int n_workers = std::max(1, std::min<int>(jobs, int(values.size())));
      for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
      for (auto& th : pool) th.join();

      std::ostringstream csv;
      csv << "axis,value,accuracy,auc,epochs,seed\n";
      for (size_t i = 0; i < values.size(); ++i) {
        char acc[32], auc[32], val[32];
        std::snprintf(acc, sizeof(acc), "%.6f", reports[i].accuracy);
        std::snprintf(auc, sizeof(auc), "%.6f", reports[i].auc);
        std::snprintf(val, sizeof(val), "%g", values[i]);
        csv << axis << ',' << val << ',' << acc << ',' << auc << ',' << reports[i].epochs << ','
            << cfg.seed << '\n';
      }
      write_text(out_dir + "/sweep_" + axis + ".csv", csv.str());
      std::cout << csv.str();
      write_resolved_config(out_dir, "sweep",
                            cfg, json{{"data", data.path},
                                      {"axis", axis},
                                      {"jobs", jobs},
                                      {"tds", tds_ckpt},
                                      {"gas", gas_ckpt}});
    } else if (*embed) {
      dps::TemporalGraph g = load_data(data);
      dps::DpsBundle<Real> bundle = dps::load_bundle<Real>(model_ckpt);
      if (bundle.model.num_nodes != g.num_nodes())
        throw std::runtime_error("embed: checkpoint node count does not match the dataset");

      std::unordered_map<std::string, int32_t> index;
      for (size_t i = 0; i < g.node_labels().size(); ++i)
        index.emplace(g.node_labels()[i], int32_t(i));
      auto resolve = [&index](const std::string& label) {
        auto it = index.find(label);
        if (it == index.end()) throw std::runtime_error("embed: unknown node " + label);
        return it->second;
      };
      std::vector<int32_t> nodes;
      std::vector<double> times;
      if (!pairs_path.empty()) {
        std::ifstream in(pairs_path);
        if (!in) throw std::runtime_error("embed: cannot open " + pairs_path);
        std::string node_label;
        double t;
        while (in >> node_label >> t) {
          nodes.push_back(resolve(node_label));
          times.push_back(t);
        }
      }
      for (const auto& arg : pair_args) {
        const auto colon = arg.find(':');
        if (colon == std::string::npos)
          throw std::runtime_error("embed: --at expects node_id:time");
        nodes.push_back(resolve(arg.substr(0, colon)));
        times.push_back(std::stod(arg.substr(colon + 1)));
      }
      if (nodes.empty()) throw std::runtime_error("embed: no (node, time) pairs given");

      dps::DpsForward<Real> fwd(g, bundle);
      dps::Rng srng(dps::Rng::mix(cfg.seed, 0xe3bd));
      dps::ad::Tensor<Real> h = fwd.embed(nodes, times, false, srng);
      std::ostringstream csv;
      csv << "node_id,t";
      for (int64_t c = 0; c < h.shape()[1]; ++c) csv << ",h_" << (c + 1);
      csv << '\n';
      char buf[64];
      for (size_t i = 0; i < nodes.size(); ++i) {
        csv << g.node_labels()[size_t(nodes[i])];
        std::snprintf(buf, sizeof(buf), "%.9g", times[i]);
        csv << ',' << buf;
        for (int64_t c = 0; c < h.shape()[1]; ++c) {
          std::snprintf(buf, sizeof(buf), "%.9g", double(h.at(int64_t(i), c)));
          csv << ',' << buf;
        }
        csv << '\n';
      }
      write_text(out_dir + "/embeddings.csv", csv.str());
      std::cout << csv.str();
      write_resolved_config(out_dir, "embed",
                            cfg, json{{"data", data.path},
                                      {"model", model_ckpt},
                                      {"pairs", pairs_path}});
    } else if (*gradcheck) {
      const auto t0 = std::chrono::steady_clock::now();
      auto cases = dps::run_gradient_suite(cfg.seed);
      bool all_ok = true;
      for (const auto& c : cases) {
        const bool ok = c.ok();
        all_ok = all_ok && ok;
        std::printf("[%s] %-18s max rel err %.3g\n", ok ? "PASS" : "FAIL", c.name.c_str(),
                    c.max_rel_err);
      }
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("%zu checks in %.1fs\n", cases.size(), secs);
      if (!all_ok) return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
