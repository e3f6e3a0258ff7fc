// Copyright 2026 The slimnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line harness: train, profile-table, experiment, extract, report.
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "slimnet/experiments.hpp"

namespace fs = std::filesystem;
using namespace slimnet;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::string table_path;
  std::string surrogate;  // l1 | l1l2
  std::string cost;       // flops | latency
  std::uint64_t seed = 0;
  bool seed_set = false;
  double lambda = 0.0;
  bool lambda_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config path");
  cmd->add_option("--out-dir", o.out_dir, "output directory");
  cmd->add_option("--table", o.table_path, "latency table CSV");
  cmd->add_option("--surrogate", o.surrogate, "surrogate kind")
      ->check(CLI::IsMember({"l1", "l1l2"}));
  cmd->add_option("--cost", o.cost, "cost model")
      ->check(CLI::IsMember({"flops", "latency"}));
  cmd->add_option("--seed", o.seed, "RNG seed override")
      ->each([&o](const std::string&) { o.seed_set = true; });
  cmd->add_option("--lambda", o.lambda, "regularization coefficient override")
      ->each([&o](const std::string&) { o.lambda_set = true; });
}

nlohmann::json require_config(const CommonOpts& o) {
  if (o.config_path.empty()) throw ConfigError("--config is required");
  if (!fs::exists(o.config_path))
    throw ConfigError("config file not found: " + o.config_path);
  return cfg::load_json(o.config_path);
}

void apply_overrides(const CommonOpts& o, TrainConfig& train,
                     RegularizerSpec& reg) {
  if (o.seed_set) train.seed = o.seed;
  if (o.lambda_set) {
    train.lambda_max = o.lambda;
    reg.lambda_max = o.lambda;
  }
  if (!o.surrogate.empty()) reg.surrogate = cfg::parse_surrogate(o.surrogate);
  if (!o.cost.empty()) reg.cost = cfg::parse_cost(o.cost);
}

int cmd_train(const CommonOpts& o) {
  nlohmann::json j = require_config(o);
  Dataset data = cfg::parse_dataset(j.contains("dataset") ? j.at("dataset")
                                                          : nlohmann::json::object());
  if (!j.contains("model"))
    throw ConfigError("config: train needs a 'model' section");
  auto layers = cfg::parse_layers(j.at("model").at("layers"));
  MaskInit mask_init = MaskInit::all_ones;
  std::string mi = cfg::get_or<std::string>(j.at("model"), "mask_init", "all-ones");
  if (mi == "uniform-half")
    mask_init = MaskInit::uniform_half;
  else if (mi != "all-ones")
    throw ConfigError("config: unknown mask_init '" + mi + "'");

  TrainConfig train_cfg = cfg::parse_train(
      j.contains("train") ? j.at("train") : nlohmann::json::object());
  RegularizerSpec reg = cfg::parse_regularizer(
      j.contains("regularizer") ? j.at("regularizer") : nlohmann::json::object());
  apply_overrides(o, train_cfg, reg);
  reg.lambda_max = train_cfg.lambda_max;

  LatencyTable table;
  const LatencyTable* table_ptr = nullptr;
  std::string table_path =
      !o.table_path.empty() ? o.table_path : cfg::get_or<std::string>(j, "table", "");
  if (reg.cost == CostModel::latency_table) {
    if (table_path.empty())
      throw ConfigError("latency cost model needs --table or a 'table' entry");
    if (!fs::exists(table_path))
      throw ConfigError("latency table not found: " + table_path);
    table = load_table(table_path);
    table_ptr = &table;
  }

  fs::create_directories(o.out_dir);
  Model model = cfg::build_model(layers, train_cfg.seed, mask_init);
  TrainResult res = train(model, data, train_cfg, reg, table_ptr);
  write_history_csv(res.history, (fs::path(o.out_dir) / "history.csv").string());
  write_json_file(checkpoint_to_json(model),
                  (fs::path(o.out_dir) / "checkpoint.json").string());

  nlohmann::json summary;
  summary["aborted"] = res.aborted;
  if (res.aborted) summary["abort_reason"] = res.abort_reason;
  summary["steps_recorded"] = res.history.size();
  summary["exact_flops"] = exact_flops(model);
  if (train_cfg.task == TaskKind::classification)
    summary["accuracy"] = accuracy(model, data);
  write_json_file(summary, (fs::path(o.out_dir) / "summary.json").string());
  if (res.aborted) {
    std::cerr << "training aborted: " << res.abort_reason
              << " (partial history saved)\n";
    return 3;
  }
  std::cout << "wrote " << (fs::path(o.out_dir) / "history.csv").string() << " and "
            << (fs::path(o.out_dir) / "checkpoint.json").string() << "\n";
  return 0;
}

int cmd_profile_table(const CommonOpts& o) {
  ProfileConfig pc;
  if (!o.config_path.empty()) {
    nlohmann::json j = require_config(o);
    pc.theta = cfg::get_or<std::size_t>(j, "theta", pc.theta);
    pc.midpoint_iters = cfg::get_or<std::size_t>(j, "midpoint_iters", pc.midpoint_iters);
    pc.repetitions = cfg::get_or<std::size_t>(j, "repetitions", pc.repetitions);
    pc.warmup = cfg::get_or<std::size_t>(j, "warmup", pc.warmup);
    pc.max_rows = cfg::get_or<std::size_t>(j, "max_rows", pc.max_rows);
    pc.max_cols = cfg::get_or<std::size_t>(j, "max_cols", pc.max_cols);
    pc.min_measure_seconds =
        cfg::get_or<double>(j, "min_measure_seconds", pc.min_measure_seconds);
  }
  if (pc.repetitions < 3) throw ConfigError("repetitions must be >= 3");
  if (pc.theta >= pc.max_rows || pc.theta >= pc.max_cols)
    throw ConfigError("theta must be smaller than the dimension caps");
  fs::create_directories(o.out_dir);
  LatencyTable t = build_latency_table(pc);
  std::string path = (fs::path(o.out_dir) / "table.csv").string();
  save_table(t, path);
  std::cout << "wrote " << path << " (" << t.rows << "x" << t.cols << ")\n";
  return 0;
}

int cmd_experiment(const CommonOpts& o) {
  nlohmann::json j = require_config(o);
  ExperimentSpec spec = parse_experiment(j);
  spec.out_dir = o.out_dir;
  apply_overrides(o, spec.train, spec.reg);
  spec.train.lambda_max = std::max(spec.train.lambda_max, spec.reg.lambda_max);
  if (!o.table_path.empty()) spec.table_path = o.table_path;
  nlohmann::json report = run_experiment(spec);
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_extract(const CommonOpts& o) {
  nlohmann::json j = require_config(o);
  // --config may point at a checkpoint directly or at {"checkpoint": path}
  if (j.contains("checkpoint")) {
    std::string path = j.at("checkpoint").get<std::string>();
    if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path);
    j = cfg::load_json(path);
  }
  Model model = checkpoint_from_json(j);
  ExtractedModel em = extract_compressed(model);
  fs::create_directories(o.out_dir);
  std::string path = (fs::path(o.out_dir) / "extracted.json").string();
  write_json_file(to_json(em), path);
  if (em.degenerate) {
    std::cerr << "model is degenerate (fully dead masks):";
    for (const auto& n : em.degenerate_layers) std::cerr << " " << n;
    std::cerr << "\n";
    return 3;
  }
  std::cout << "wrote " << path << " (exact MACs " << format_double(em.total_flops)
            << ", param bits " << format_double(em.total_param_bits) << ")\n";
  return 0;
}

int cmd_report(const CommonOpts& o) {
  bool found = false;
  auto maybe = [&](const std::string& name) -> nlohmann::json {
    fs::path p = fs::path(o.out_dir) / name;
    if (!fs::exists(p)) return nullptr;
    found = true;
    return cfg::load_json(p.string());
  };
  nlohmann::json out;
  if (auto r = maybe("report.json"); !r.is_null()) out["experiment_report"] = r;
  if (auto s = maybe("summary.json"); !s.is_null()) out["train_summary"] = s;
  if (auto e = maybe("extracted.json"); !e.is_null()) {
    out["extracted"] = {{"total_flops", e.at("total_flops")},
                        {"total_param_bits", e.at("total_param_bits")},
                        {"degenerate", e.at("degenerate")},
                        {"layers", e.at("layers").size()}};
  }
  fs::path hist = fs::path(o.out_dir) / "history.csv";
  if (fs::exists(hist)) {
    found = true;
    std::ifstream in(hist);
    std::string line, last, header;
    std::getline(in, header);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      last = line;
      ++rows;
    }
    out["history"] = {{"rows", rows}, {"columns", header}, {"last_row", last}};
  }
  if (!found)
    throw ConfigError("no report.json, summary.json, extracted.json, or "
                      "history.csv under " + o.out_dir);
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compression-aware training harness"};
  app.require_subcommand(1);

  CommonOpts train_o, profile_o, exp_o, extract_o, report_o;
  auto* train_cmd =
      app.add_subcommand("train", "run one regularized training session");
  add_common(train_cmd, train_o);
  auto* profile_cmd =
      app.add_subcommand("profile-table", "profile the host into a latency table");
  add_common(profile_cmd, profile_o);
  auto* exp_cmd = app.add_subcommand("experiment", "run a named experiment recipe");
  add_common(exp_cmd, exp_o);
  auto* extract_cmd =
      app.add_subcommand("extract", "extract the exact compressed model");
  add_common(extract_cmd, extract_o);
  auto* report_cmd =
      app.add_subcommand("report", "summarize artifacts in an output directory");
  add_common(report_cmd, report_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_o);
    if (profile_cmd->parsed()) return cmd_profile_table(profile_o);
    if (exp_cmd->parsed()) return cmd_experiment(exp_o);
    if (extract_cmd->parsed()) return cmd_extract(extract_o);
    if (report_cmd->parsed()) return cmd_report(report_o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
