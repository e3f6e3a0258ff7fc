// Copyright 2026 The slimnet Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SLIMNET_EXPERIMENTS_HPP
#define SLIMNET_EXPERIMENTS_HPP

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "slimnet/train.hpp"

namespace slimnet {

/// Bad user-supplied configuration; the CLI maps this to exit code 2,
/// everything else that escapes to exit code 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- JSON config parsing (shared between the CLI and the test suite) ---

namespace cfg {

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " +
                      e.what());
  }
}

inline SurrogateKind parse_surrogate(const std::string& s) {
  if (s == "l1") return SurrogateKind::l1;
  if (s == "l1l2") return SurrogateKind::l1_over_l2;
  throw ConfigError("config: unknown surrogate '" + s + "' (want l1 or l1l2)");
}

inline CostModel parse_cost(const std::string& s) {
  if (s == "flops") return CostModel::flops;
  if (s == "latency") return CostModel::latency_table;
  throw ConfigError("config: unknown cost model '" + s +
                    "' (want flops or latency)");
}

inline QuantSurrogateVariant parse_quant_variant(const std::string& s) {
  if (s == "verbatim") return QuantSurrogateVariant::verbatim_ratio;
  if (s == "numerator-only") return QuantSurrogateVariant::numerator_only;
  throw ConfigError("config: unknown quant_variant '" + s +
                    "' (want verbatim or numerator-only)");
}

inline RegularizerSpec parse_regularizer(const nlohmann::json& j) {
  RegularizerSpec reg;
  reg.surrogate = parse_surrogate(get_or<std::string>(j, "surrogate", "l1l2"));
  reg.cost = parse_cost(get_or<std::string>(j, "cost", "flops"));
  reg.lambda_max = get_or<double>(j, "lambda", 0.0);
  reg.quant_variant =
      parse_quant_variant(get_or<std::string>(j, "quant_variant", "verbatim"));
  if (reg.lambda_max < 0.0) throw ConfigError("config: lambda must be >= 0");
  return reg;
}

inline TrainConfig parse_train(const nlohmann::json& j) {
  TrainConfig t;
  std::string opt = get_or<std::string>(j, "optimizer", "adam");
  if (opt == "sgd")
    t.optimizer = OptimizerKind::sgd;
  else if (opt == "adam")
    t.optimizer = OptimizerKind::adam;
  else
    throw ConfigError("config: unknown optimizer '" + opt + "'");
  t.learning_rate = get_or<double>(j, "learning_rate", 0.01);
  t.mask_lr_scale = get_or<double>(j, "mask_lr_scale", 1.0);
  if (t.mask_lr_scale <= 0.0)
    throw ConfigError("config: mask_lr_scale must be > 0");
  std::string sched = get_or<std::string>(j, "lr_schedule", "constant");
  if (sched == "constant")
    t.lr_schedule = LrSchedule::constant;
  else if (sched == "cosine")
    t.lr_schedule = LrSchedule::cosine;
  else
    throw ConfigError("config: unknown lr_schedule '" + sched + "'");
  t.lambda_max = get_or<double>(j, "lambda_max", 0.0);
  t.anneal_steps = get_or<std::size_t>(j, "anneal_steps", 1);
  t.total_steps = get_or<std::size_t>(j, "total_steps", 1);
  t.finetune_steps = get_or<std::size_t>(j, "finetune_steps", 0);
  t.batch_size = get_or<std::size_t>(j, "batch_size", 32);
  t.seed = get_or<std::uint64_t>(j, "seed", 0);
  t.metrics_every = get_or<std::size_t>(j, "metrics_every", 1);
  std::string task = get_or<std::string>(j, "task", "classification");
  if (task == "classification")
    t.task = TaskKind::classification;
  else if (task == "regression")
    t.task = TaskKind::regression;
  else
    throw ConfigError("config: unknown task '" + task + "'");
  if (j.contains("distill")) {
    const auto& d = j.at("distill");
    t.distill.enabled = get_or<bool>(d, "enabled", false);
    t.distill.coefficient = get_or<double>(d, "coefficient", 0.0);
    t.distill.temperature = get_or<double>(d, "temperature", 1.0);
    t.distill.during_anneal = get_or<bool>(d, "during_anneal", true);
    if (t.distill.temperature <= 0.0)
      throw ConfigError("config: distill temperature must be > 0");
  }
  if (t.total_steps < 1) throw ConfigError("config: total_steps must be >= 1");
  if (t.lambda_max < 0.0) throw ConfigError("config: lambda_max must be >= 0");
  if (t.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (t.metrics_every < 1) throw ConfigError("config: metrics_every must be >= 1");
  return t;
}

inline std::vector<LayerSpec> parse_layers(const nlohmann::json& j) {
  if (!j.is_array() || j.empty())
    throw ConfigError("config: model.layers must be a non-empty array");
  std::vector<LayerSpec> out;
  for (const auto& l : j) {
    LayerSpec s;
    try {
      s.kind = kind_from_name(get_or<std::string>(l, "kind", "pruned"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    s.in_dim = get_or<std::size_t>(l, "in", 0);
    s.out_dim = get_or<std::size_t>(l, "out", 0);
    if (s.in_dim < 1 || s.out_dim < 1)
      throw ConfigError("config: layer widths must be positive");
    s.batchnorm = get_or<bool>(l, "batchnorm", false);
    s.relu_after = get_or<bool>(l, "relu", false);
    s.bias = get_or<bool>(l, "bias", true);
    s.optimize_mask = get_or<bool>(l, "optimize_mask", true);
    s.bit_ladder = get_or<std::vector<int>>(l, "bit_ladder", {2, 4, 8, 16});
    out.push_back(s);
  }
  for (std::size_t i = 0; i + 1 < out.size(); ++i)
    if (out[i].out_dim != out[i + 1].in_dim)
      throw ConfigError("config: layer " + std::to_string(i) + " out width " +
                        std::to_string(out[i].out_dim) + " != layer " +
                        std::to_string(i + 1) + " in width " +
                        std::to_string(out[i + 1].in_dim));
  return out;
}

inline Dataset parse_dataset(const nlohmann::json& j) {
  std::string kind = get_or<std::string>(j, "kind", "synthetic-classification");
  if (kind == "idx-images") {
    std::string images = get_or<std::string>(j, "images", "");
    std::string labels = get_or<std::string>(j, "labels", "");
    if (images.empty() || labels.empty())
      throw ConfigError("config: idx-images dataset needs images and labels paths");
    if (!std::filesystem::exists(images))
      throw ConfigError("config: missing dataset file " + images);
    if (!std::filesystem::exists(labels))
      throw ConfigError("config: missing dataset file " + labels);
    return load_idx(images, labels);
  }
  std::size_t n = get_or<std::size_t>(j, "n", 512);
  std::size_t d = get_or<std::size_t>(j, "d", 32);
  std::size_t k = get_or<std::size_t>(j, "k", 8);
  double sigma = get_or<double>(j, "sigma", 0.5);
  std::uint64_t seed = get_or<std::uint64_t>(j, "seed", 1);
  try {
    if (kind == "synthetic-regression") return gen_sparse_regression(n, d, k, sigma, seed);
    if (kind == "synthetic-classification")
      return gen_two_cluster(n, d, k, get_or<double>(j, "mu", 1.0), sigma, seed);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  throw ConfigError("config: unknown dataset kind '" + kind + "'");
}

inline Model build_model(const std::vector<LayerSpec>& specs, std::uint64_t seed,
                         MaskInit init = MaskInit::all_ones) {
  Rng rng(seed);
  Model m;
  for (const LayerSpec& s : specs) m.layers.push_back(make_layer(s, rng));
  if (init == MaskInit::uniform_half) {
    Rng mrng(seed ^ 0x9e3779b97f4a7c15ull);
    for (auto& l : m.layers) {
      if (l.input_mask) l.input_mask->value = mrng.uniform_tensor({l.in_dim}, 0.0, 0.5);
      if (l.elem_mask)
        l.elem_mask->value = mrng.uniform_tensor({l.out_dim, l.in_dim}, 0.0, 0.5);
    }
  }
  return m;
}

}  // namespace cfg

// --- Model checkpoints: full layer state plus raw mask vectors ---

inline nlohmann::json checkpoint_to_json(const Model& model) {
  nlohmann::json j;
  j["format"] = "slimnet-checkpoint v1";
  j["layers"] = nlohmann::json::array();
  for (const CompressibleLayer& l : model.layers) {
    nlohmann::json e;
    e["kind"] = kind_name(l.kind);
    e["in_dim"] = l.in_dim;
    e["out_dim"] = l.out_dim;
    e["relu_after"] = l.relu_after;
    auto put = [&e](const char* key, const NodePtr& n) {
      if (n) e[key] = tensor_to_json(n->value);
    };
    put("weight", l.weight);
    put("bias", l.bias);
    put("alpha", l.input_mask);
    put("elem_mask", l.elem_mask);
    put("factor_u", l.factor_u);
    put("factor_s", l.factor_s);
    put("factor_v", l.factor_v);
    if (!l.bit_ladder.empty()) {
      e["bit_ladder"] = l.bit_ladder;
      e["range_lo"] = l.range_lo;
      e["range_hi"] = l.range_hi;
      std::vector<double> masks;
      for (const NodePtr& m : l.bit_masks) masks.push_back(m->value.data[0]);
      e["bit_masks"] = masks;
    }
    if (l.batchnorm) {
      e["bn_eps"] = l.bn_eps;
      put("bn_scale", l.bn_scale);
      put("bn_shift", l.bn_shift);
    }
    j["layers"].push_back(std::move(e));
  }
  return j;
}

inline Model checkpoint_from_json(const nlohmann::json& j) {
  if (cfg::get_or<std::string>(j, "format", "") != "slimnet-checkpoint v1")
    throw ConfigError("checkpoint: unrecognized format field");
  Model m;
  for (const auto& e : j.at("layers")) {
    CompressibleLayer l;
    l.kind = kind_from_name(e.at("kind").get<std::string>());
    l.in_dim = e.at("in_dim").get<std::size_t>();
    l.out_dim = e.at("out_dim").get<std::size_t>();
    l.relu_after = cfg::get_or<bool>(e, "relu_after", false);
    auto take = [&e](const char* key) -> NodePtr {
      if (!e.contains(key)) return nullptr;
      return leaf(tensor_from_json(e.at(key)), key);
    };
    l.weight = take("weight");
    l.bias = take("bias");
    l.input_mask = take("alpha");
    l.elem_mask = take("elem_mask");
    l.factor_u = take("factor_u");
    l.factor_s = take("factor_s");
    l.factor_v = take("factor_v");
    if (e.contains("bit_ladder")) {
      l.bit_ladder = e.at("bit_ladder").get<std::vector<int>>();
      l.range_lo = e.at("range_lo").get<double>();
      l.range_hi = e.at("range_hi").get<double>();
      for (double v : e.at("bit_masks").get<std::vector<double>>())
        l.bit_masks.push_back(leaf(Tensor::scalar(v)));
    }
    if (e.contains("bn_scale")) {
      l.batchnorm = true;
      l.bn_eps = e.at("bn_eps").get<double>();
      l.bn_scale = take("bn_scale");
      l.bn_shift = take("bn_shift");
    }
    m.layers.push_back(std::move(l));
  }
  if (m.layers.empty()) throw ConfigError("checkpoint: no layers");
  return m;
}

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

/// FNV-1a over the raw bytes of every weight tensor, for the reproducibility
/// line in experiment reports.
inline std::uint64_t weight_checksum(const Model& model) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const NodePtr& n) {
    if (!n) return;
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(n->value.data.data());
    for (std::size_t i = 0; i < n->value.data.size() * sizeof(double); ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const CompressibleLayer& l : model.layers) {
    mix(l.weight);
    mix(l.factor_u);
    mix(l.factor_s);
    mix(l.factor_v);
  }
  return h;
}

// --- Experiment recipes ---

struct ExperimentSpec {
  std::string id;  // ablation-l1-vs-l1l2 | quant-bitwidth | latency-vs-flops | lambda-sweep
  Dataset data;
  std::string data_desc;  // which data the report declares
  std::vector<LayerSpec> layers;
  TrainConfig train;
  RegularizerSpec reg;
  std::vector<double> lambdas;  // sweep experiments
  std::string table_path;      // latency experiments; empty means profile now
  std::string out_dir;
};

inline ExperimentSpec parse_experiment(const nlohmann::json& j) {
  ExperimentSpec spec;
  spec.id = cfg::get_or<std::string>(j, "id", "");
  static const std::vector<std::string> known = {
      "ablation-l1-vs-l1l2", "quant-bitwidth", "latency-vs-flops", "lambda-sweep"};
  if (std::find(known.begin(), known.end(), spec.id) == known.end())
    throw ConfigError("config: unknown experiment id '" + spec.id + "'");
  spec.data = cfg::parse_dataset(j.contains("dataset") ? j.at("dataset")
                                                       : nlohmann::json::object());
  spec.data_desc = cfg::get_or<std::string>(
      j.contains("dataset") ? j.at("dataset") : nlohmann::json::object(), "kind",
      "synthetic-classification");
  if (j.contains("model"))
    spec.layers = cfg::parse_layers(j.at("model").at("layers"));
  spec.train = cfg::parse_train(j.contains("train") ? j.at("train")
                                                    : nlohmann::json::object());
  spec.reg = cfg::parse_regularizer(j.contains("regularizer")
                                        ? j.at("regularizer")
                                        : nlohmann::json::object());
  spec.lambdas = cfg::get_or<std::vector<double>>(j, "lambdas", {});
  spec.table_path = cfg::get_or<std::string>(j, "table", "");
  return spec;
}

namespace detail {

inline void write_csv(const std::string& path, const std::string& header,
                      const std::vector<std::vector<double>>& rows,
                      const std::vector<std::size_t>* steps = nullptr) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << header << "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (steps) out << (*steps)[i];
    for (std::size_t k = 0; k < rows[i].size(); ++k)
      out << ((steps || k) ? "," : "") << format_double(rows[i][k]);
    out << "\n";
  }
}

inline std::vector<LayerSpec> default_ablation_layers(std::size_t in,
                                                      std::size_t classes) {
  LayerSpec hidden;
  hidden.kind = LayerKind::pruned;
  hidden.in_dim = in;
  hidden.out_dim = 256;
  hidden.batchnorm = true;
  hidden.relu_after = true;
  LayerSpec out;
  out.kind = LayerKind::pruned;
  out.in_dim = 256;
  out.out_dim = classes;
  out.optimize_mask = false;  // only the input mask is under study
  return {hidden, out};
}

inline std::size_t num_classes(const Dataset& data) {
  std::size_t c = 0;
  for (std::size_t y : data.labels) c = std::max(c, y + 1);
  return std::max<std::size_t>(c, 2);
}

}  // namespace detail

/// Fig. 2 reproduction: two runs from identical initial weights, one per
/// surrogate kind, tracking the input mask's mean/variance, the surrogate
/// against exact FLOPs, and the weight Frobenius norm.
inline nlohmann::json run_ablation_l1_vs_l1l2(const ExperimentSpec& spec) {
  namespace fs = std::filesystem;
  std::vector<LayerSpec> layers =
      spec.layers.empty() ? detail::default_ablation_layers(
                                spec.data.dim(), detail::num_classes(spec.data))
                          : spec.layers;
  Model init = cfg::build_model(layers, spec.train.seed);
  std::uint64_t checksum = weight_checksum(init);

  std::vector<std::vector<MetricsRow>> histories;
  for (SurrogateKind kind : {SurrogateKind::l1, SurrogateKind::l1_over_l2}) {
    Model m = clone_model(init);
    RegularizerSpec reg = spec.reg;
    reg.surrogate = kind;
    TrainResult res = train(m, spec.data, spec.train, reg);
    if (res.aborted) {
      write_history_csv(res.history,
                        (fs::path(spec.out_dir) / "aborted_history.csv").string());
      throw std::runtime_error("ablation run aborted: " + res.abort_reason);
    }
    histories.push_back(std::move(res.history));
  }
  const auto& h1 = histories[0];   // l1
  const auto& hr = histories[1];   // l1/l2
  if (h1.size() != hr.size())
    throw std::runtime_error("ablation: history lengths diverged");

  std::vector<std::size_t> steps;
  std::vector<std::vector<double>> mean_rows, var_rows, sur_rows, frob_rows;
  for (std::size_t i = 0; i < h1.size(); ++i) {
    steps.push_back(h1[i].step);
    mean_rows.push_back({h1[i].mask_mean[0], hr[i].mask_mean[0]});
    var_rows.push_back({h1[i].mask_var[0], hr[i].mask_var[0]});
    sur_rows.push_back({h1[i].surrogate, h1[i].exact_flops, hr[i].surrogate,
                        hr[i].exact_flops});
    frob_rows.push_back({h1[i].weight_frob[0], hr[i].weight_frob[0]});
  }
  namespace d = detail;
  d::write_csv((fs::path(spec.out_dir) / "mask_mean.csv").string(),
               "step,l1,l1l2", mean_rows, &steps);
  d::write_csv((fs::path(spec.out_dir) / "mask_var.csv").string(),
               "step,l1,l1l2", var_rows, &steps);
  d::write_csv((fs::path(spec.out_dir) / "surrogate_vs_exact.csv").string(),
               "step,l1_surrogate,l1_exact_flops,l1l2_surrogate,l1l2_exact_flops",
               sur_rows, &steps);
  d::write_csv((fs::path(spec.out_dir) / "weight_frob.csv").string(),
               "step,l1,l1l2", frob_rows, &steps);

  nlohmann::json report;
  report["experiment"] = spec.id;
  report["dataset"] = spec.data_desc;
  report["init_weight_checksum"] = checksum;
  report["rows"] = h1.size();
  report["final"] = {
      {"l1", {{"mask_mean", h1.back().mask_mean[0]},
              {"mask_var", h1.back().mask_var[0]},
              {"weight_frob", h1.back().weight_frob[0]},
              {"exact_flops", h1.back().exact_flops}}},
      {"l1l2", {{"mask_mean", hr.back().mask_mean[0]},
                {"mask_var", hr.back().mask_var[0]},
                {"weight_frob", hr.back().weight_frob[0]},
                {"exact_flops", hr.back().exact_flops}}}};
  return report;
}

/// Quantization study: train the bit-mask ladder under the FLOPs surrogate
/// and compare total parameter bits against fixed-width baselines.
inline nlohmann::json run_quant_bitwidth(const ExperimentSpec& spec) {
  namespace fs = std::filesystem;
  std::vector<LayerSpec> layers = spec.layers;
  if (layers.empty()) {
    for (auto [in, out, last] :
         {std::tuple<std::size_t, std::size_t, bool>{spec.data.dim(), 32, false},
          {32, 16, false},
          {16, detail::num_classes(spec.data), true}}) {
      LayerSpec s;
      s.kind = LayerKind::quantized;
      s.in_dim = in;
      s.out_dim = out;
      s.relu_after = !last;
      layers.push_back(s);
    }
  }
  Model m = cfg::build_model(layers, spec.train.seed);
  TrainResult res = train(m, spec.data, spec.train, spec.reg);
  if (res.aborted) {
    write_history_csv(res.history,
                      (fs::path(spec.out_dir) / "aborted_history.csv").string());
    throw std::runtime_error("quant run aborted: " + res.abort_reason);
  }
  write_history_csv(res.history, (fs::path(spec.out_dir) / "history.csv").string());

  project_bit_masks(m);
  std::ofstream bits_csv(fs::path(spec.out_dir) / "bitwidths.csv");
  bits_csv << "layer,bits,dense_macs\n";
  double learned_bits = 0.0;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    double macs = double(l.in_dim) * double(l.out_dim);
    bits_csv << i << "," << selected_bits(l) << "," << format_double(macs) << "\n";
    learned_bits += double(selected_bits(l)) * macs;
  }
  std::ofstream base_csv(fs::path(spec.out_dir) / "bits_vs_baselines.csv");
  base_csv << "config,total_bits\n";
  base_csv << "learned," << format_double(learned_bits) << "\n";
  double dense_macs = 0.0;
  for (const auto& l : m.layers) dense_macs += double(l.in_dim) * double(l.out_dim);
  for (int b : {2, 4, 8, 16})
    base_csv << "fixed-" << b << "," << format_double(double(b) * dense_macs) << "\n";

  nlohmann::json report;
  report["experiment"] = spec.id;
  report["dataset"] = spec.data_desc;
  report["learned_total_bits"] = learned_bits;
  report["fixed16_total_bits"] = 16.0 * dense_macs;
  report["beats_fixed16"] = learned_bits < 16.0 * dense_macs;
  nlohmann::json per_layer = nlohmann::json::array();
  for (const auto& l : m.layers) per_layer.push_back(selected_bits(l));
  report["per_layer_bits"] = per_layer;
  return report;
}

namespace detail {

inline double table_latency_of(const Model& model, const LatencyTable& t) {
  double total = 0.0;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    std::size_t d1 = nnz_or_dim(l.input_mask, l.in_dim);
    std::size_t d2 = i + 1 < model.layers.size()
                         ? nnz_or_dim(model.layers[i + 1].input_mask, l.out_dim)
                         : l.out_dim;
    total += t.at(std::min(d1, t.rows - 1), std::min(d2, t.cols - 1));
  }
  return total;
}

}  // namespace detail

/// One (lambda, exact FLOPs, accuracy) frontier; optionally scores each point
/// against a latency table too.
inline nlohmann::json run_lambda_sweep(const ExperimentSpec& spec,
                                       const LatencyTable* table,
                                       const std::string& csv_name,
                                       CostModel cost) {
  namespace fs = std::filesystem;
  if (spec.lambdas.empty())
    throw ConfigError("config: sweep experiments need a non-empty 'lambdas' list");
  std::vector<LayerSpec> layers =
      spec.layers.empty() ? detail::default_ablation_layers(
                                spec.data.dim(), detail::num_classes(spec.data))
                          : spec.layers;

  std::ofstream out(fs::path(spec.out_dir) / csv_name);
  out << "lambda,exact_flops,accuracy";
  if (table) out << ",table_latency_ms";
  out << "\n";
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t i = 0; i < spec.lambdas.size(); ++i) {
    TrainConfig t = spec.train;
    t.lambda_max = spec.lambdas[i];
    t.seed = spec.train.seed + i;  // independent session per point
    RegularizerSpec reg = spec.reg;
    reg.cost = cost;
    reg.lambda_max = spec.lambdas[i];
    Model m = cfg::build_model(layers, t.seed);
    TrainResult res = train(m, spec.data, t, reg, table);
    if (res.aborted) {
      write_history_csv(res.history,
                        (fs::path(spec.out_dir) / "aborted_history.csv").string());
      throw std::runtime_error("sweep point aborted: " + res.abort_reason);
    }
    double acc = accuracy(m, spec.data);
    double flops = exact_flops(m);
    out << format_double(spec.lambdas[i]) << "," << format_double(flops) << ","
        << format_double(acc);
    nlohmann::json p = {{"lambda", spec.lambdas[i]},
                        {"exact_flops", flops},
                        {"accuracy", acc}};
    if (table) {
      double lat = detail::table_latency_of(m, *table);
      out << "," << format_double(lat);
      p["table_latency_ms"] = lat;
    }
    out << "\n";
    points.push_back(std::move(p));
  }
  nlohmann::json report;
  report["experiment"] = spec.id;
  report["dataset"] = spec.data_desc;
  report["points"] = points;
  return report;
}

/// FLOPs-regularized vs latency-regularized sweeps scored against one table.
inline nlohmann::json run_latency_vs_flops(const ExperimentSpec& spec) {
  if (spec.table_path.empty())
    throw ConfigError("config: latency-vs-flops needs a 'table' path");
  LatencyTable table = load_table(spec.table_path);
  nlohmann::json f = run_lambda_sweep(spec, &table, "frontier_flops.csv",
                                      CostModel::flops);
  nlohmann::json l = run_lambda_sweep(spec, &table, "frontier_latency.csv",
                                      CostModel::latency_table);
  nlohmann::json report;
  report["experiment"] = spec.id;
  report["dataset"] = spec.data_desc;
  report["flops_regularized"] = f["points"];
  report["latency_regularized"] = l["points"];
  return report;
}

inline nlohmann::json run_experiment(const ExperimentSpec& spec) {
  std::filesystem::create_directories(spec.out_dir);
  nlohmann::json report;
  if (spec.id == "ablation-l1-vs-l1l2")
    report = run_ablation_l1_vs_l1l2(spec);
  else if (spec.id == "quant-bitwidth")
    report = run_quant_bitwidth(spec);
  else if (spec.id == "latency-vs-flops")
    report = run_latency_vs_flops(spec);
  else if (spec.id == "lambda-sweep")
    report = run_lambda_sweep(spec, nullptr, "frontier.csv", spec.reg.cost);
  else
    throw ConfigError("unknown experiment id '" + spec.id + "'");
  write_json_file(report,
                  (std::filesystem::path(spec.out_dir) / "report.json").string());
  return report;
}

}  // namespace slimnet

#endif  // SLIMNET_EXPERIMENTS_HPP
