// Copyright 2026 The slimnet Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SLIMNET_LATENCY_HPP
#define SLIMNET_LATENCY_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "slimnet/surrogate.hpp"

namespace slimnet {

/// 2D grid of matrix-vector latencies in milliseconds. Entry (d1, d2) is the
/// time to multiply a d1-by-d2 matrix by a length-d2 vector; indices run
/// 0..rows-1 / 0..cols-1. Once loaded a table is immutable and safely
/// shareable across threads.
struct LatencyTable {
  std::size_t rows = 0, cols = 0;
  std::vector<double> entries;          // row-major, rows*cols
  std::vector<char> provenance;         // 'm' measured, 'i' interpolated

  double at(std::size_t d1, std::size_t d2) const { return entries[d1 * cols + d2]; }
  double& at(std::size_t d1, std::size_t d2) { return entries[d1 * cols + d2]; }
  char prov(std::size_t d1, std::size_t d2) const { return provenance[d1 * cols + d2]; }

  static LatencyTable empty(std::size_t rows, std::size_t cols) {
    LatencyTable t;
    t.rows = rows;
    t.cols = cols;
    t.entries.assign(rows * cols, 0.0);
    t.provenance.assign(rows * cols, 'i');
    return t;
  }
};

struct ProfileConfig {
  std::size_t theta = 8;        // dense-sampling window width near the caps
  std::size_t midpoint_iters = 6;
  std::size_t repetitions = 5;  // must be >= 3
  std::size_t warmup = 2;
  std::size_t max_rows = 64;    // dimension cap for d1 (beta)
  std::size_t max_cols = 64;    // dimension cap for d2 (gamma)
  double min_measure_seconds = 1e-4;  // batch inner loops until this elapses
};

/// Median wall-clock latency (ms) of a d1 x d2 matvec on the host machine.
/// Inner loops are batched until the timer resolution stops mattering.
inline double profile_matvec(std::size_t d1, std::size_t d2,
                             const ProfileConfig& cfg) {
  if (d1 < 1 || d2 < 1)
    throw std::invalid_argument("profile_matvec: dims must be >= 1");
  if (cfg.repetitions < 3)
    throw std::invalid_argument("profile_matvec: repetitions must be >= 3");

  std::vector<double> mat(d1 * d2), vec(d2), out(d1);
  for (std::size_t i = 0; i < mat.size(); ++i) mat[i] = 1.0 + double(i % 7) * 0.125;
  for (std::size_t i = 0; i < vec.size(); ++i) vec[i] = 1.0 - double(i % 5) * 0.0625;

  volatile double sink = 0.0;
  auto run_once = [&]() {
    for (std::size_t i = 0; i < d1; ++i) {
      double s = 0.0;
      const double* row = mat.data() + i * d2;
      for (std::size_t j = 0; j < d2; ++j) s += row[j] * vec[j];
      out[i] = s;
    }
    sink = sink + out[0];
  };

  using clock = std::chrono::steady_clock;
  auto timed = [&](std::size_t iters) {
    auto t0 = clock::now();
    for (std::size_t it = 0; it < iters; ++it) run_once();
    return std::chrono::duration<double>(clock::now() - t0).count();
  };

  for (std::size_t w = 0; w < cfg.warmup; ++w) run_once();

  // Grow the batch until one measurement comfortably exceeds the floor.
  std::size_t iters = 1;
  while (timed(iters) < cfg.min_measure_seconds && iters < (1u << 24)) iters *= 2;

  std::vector<double> samples;
  samples.reserve(cfg.repetitions);
  for (std::size_t r = 0; r < cfg.repetitions; ++r)
    samples.push_back(timed(iters) / double(iters) * 1e3);
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

/// Integer points worth measuring along one axis: the dense window
/// (cap - theta, cap] plus midpoints of (0, cap - theta] iterated
/// `midpoint_iters` times with floor rounding.
inline std::set<std::size_t> sample_axis(std::size_t cap, std::size_t theta,
                                         std::size_t midpoint_iters) {
  if (theta >= cap)
    throw std::invalid_argument("sample_axis: theta must be < cap");
  std::set<std::size_t> pts;
  for (std::size_t v = cap - theta + 1; v <= cap; ++v) pts.insert(v);
  std::size_t lo = 0, hi = cap - theta;
  for (std::size_t it = 0; it < midpoint_iters; ++it) {
    std::size_t mid = (lo + hi) / 2;
    if (mid == lo) break;
    if (mid >= 1) pts.insert(mid);
    lo = mid;
  }
  return pts;
}

/// Cartesian product of the per-axis sample sets for a (beta, gamma) grid.
inline std::vector<std::pair<std::size_t, std::size_t>> sample_points(
    std::size_t beta, std::size_t gamma, std::size_t theta,
    std::size_t midpoint_iters) {
  auto pin = sample_axis(beta, theta, midpoint_iters);
  auto pout = sample_axis(gamma, theta, midpoint_iters);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(pin.size() * pout.size());
  for (std::size_t a : pin)
    for (std::size_t b : pout) out.emplace_back(a, b);
  return out;
}

namespace detail {
// Separable linear interpolation over the measured rows/cols so the grid is
// dense before training. Row 0 / col 0 are seeded as measured zeros.
inline void fill_axis(std::vector<double>& line, std::vector<char>& prov) {
  std::vector<std::size_t> knots;
  for (std::size_t i = 0; i < line.size(); ++i)
    if (prov[i] == 'm') knots.push_back(i);
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (prov[i] == 'm') continue;
    auto hi = std::lower_bound(knots.begin(), knots.end(), i);
    if (hi == knots.begin())
      line[i] = line[knots.front()];
    else if (hi == knots.end())
      line[i] = line[knots.back()];
    else {
      std::size_t a = *(hi - 1), b = *hi;
      double t = double(i - a) / double(b - a);
      line[i] = line[a] + (line[b] - line[a]) * t;
    }
  }
}
}  // namespace detail

/// Profile the host at the sampled points and densify the rest of the grid by
/// interpolation, recording provenance per entry.
inline LatencyTable build_latency_table(const ProfileConfig& cfg) {
  std::size_t beta = cfg.max_rows, gamma = cfg.max_cols;
  LatencyTable t = LatencyTable::empty(beta + 1, gamma + 1);
  for (std::size_t j = 0; j <= gamma; ++j) t.provenance[j] = 'm';  // row 0: no work
  for (std::size_t i = 0; i <= beta; ++i) t.provenance[i * t.cols] = 'm';

  for (auto [d1, d2] : sample_points(beta, gamma, cfg.theta, cfg.midpoint_iters)) {
    t.at(d1, d2) = profile_matvec(d1, d2, cfg);
    t.provenance[d1 * t.cols + d2] = 'm';
  }

  // Densify measured rows along columns, then every column along rows.
  std::vector<std::size_t> measured_rows;
  for (std::size_t i = 0; i < t.rows; ++i) {
    bool any = false;
    for (std::size_t j = 1; j < t.cols; ++j) any = any || t.prov(i, j) == 'm';
    if (any || i == 0) measured_rows.push_back(i);
  }
  for (std::size_t i : measured_rows) {
    std::vector<double> line(t.cols);
    std::vector<char> prov(t.cols);
    for (std::size_t j = 0; j < t.cols; ++j) {
      line[j] = t.at(i, j);
      prov[j] = t.prov(i, j);
    }
    detail::fill_axis(line, prov);
    for (std::size_t j = 0; j < t.cols; ++j) t.at(i, j) = line[j];
  }
  for (std::size_t j = 0; j < t.cols; ++j) {
    std::vector<double> line(t.rows);
    std::vector<char> prov(t.rows, 'i');
    for (std::size_t i : measured_rows) prov[i] = 'm';
    for (std::size_t i = 0; i < t.rows; ++i) line[i] = t.at(i, j);
    detail::fill_axis(line, prov);
    for (std::size_t i = 0; i < t.rows; ++i) t.at(i, j) = line[i];
  }
  return t;
}

/// Bilinear table lookup as a graph node over two scalar index nodes.
/// Queries clamp to the grid; the subgradient at cell boundaries is taken
/// from the cell to the lower-left.
inline NodePtr interpolate(const LatencyTable& table, const NodePtr& x,
                           const NodePtr& y) {
  if (!x->value.is_scalar() || !y->value.is_scalar())
    throw std::invalid_argument("interpolate: indices must be scalar nodes");
  double xv = x->value.data[0], yv = y->value.data[0];
  if (std::isnan(xv) || std::isnan(yv))
    throw std::invalid_argument("interpolate: NaN query");
  if (table.rows < 1 || table.cols < 1)
    throw std::invalid_argument("interpolate: empty table");

  auto pick_cell = [](double v, std::size_t extent, bool& clamped) {
    double hi = double(extent - 1);
    clamped = v < 0.0 || v > hi;
    double c = std::min(std::max(v, 0.0), hi);
    double f = std::floor(c);
    if (f == c && f > 0.0) f -= 1.0;           // lower cell at exact knots
    if (extent >= 2) f = std::min(f, hi - 1.0);
    return f;
  };
  bool cx = false, cy = false;
  double i0 = pick_cell(xv, table.rows, cx);
  double j0 = pick_cell(yv, table.cols, cy);
  double fx = std::min(std::max(xv, 0.0), double(table.rows - 1)) - i0;
  double fy = std::min(std::max(yv, 0.0), double(table.cols - 1)) - j0;

  std::size_t i = std::size_t(i0), j = std::size_t(j0);
  auto cell = [&](std::size_t di, std::size_t dj) {
    std::size_t ii = std::min(i + di, table.rows - 1);
    std::size_t jj = std::min(j + dj, table.cols - 1);
    return table.at(ii, jj);
  };
  double t00 = cell(0, 0), t10 = cell(1, 0), t01 = cell(0, 1), t11 = cell(1, 1);
  // evaluate endpoints exactly so knot queries return the table entry bit for bit
  auto lerp = [](double a, double b, double f) {
    if (f == 0.0) return a;
    if (f == 1.0) return b;
    return a + (b - a) * f;
  };
  double t1 = lerp(t00, t10, fx);
  double t2 = lerp(t01, t11, fx);
  double value = lerp(t1, t2, fy);
  double dx = cx ? 0.0 : (1.0 - fy) * (t10 - t00) + fy * (t11 - t01);
  double dy = cy ? 0.0 : t2 - t1;

  return make_node(Tensor::scalar(value), {x, y},
                   [x = x.get(), y = y.get(), dx, dy](Node& self) {
    accumulate(*x, Tensor::scalar(self.grad.data[0] * dx));
    accumulate(*y, Tensor::scalar(self.grad.data[0] * dy));
  });
}

/// Latency regularizer over a pruning (or prune+low-rank) layer stack: each
/// layer queries the table at its scale-invariant nonzero-count surrogates.
inline NodePtr latency_reg(const std::vector<CompressibleLayer>& layers,
                           const LatencyTable& table) {
  NodePtr total;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const CompressibleLayer& layer = layers[i];
    if (layer.kind != LayerKind::pruned && layer.kind != LayerKind::prune_low_rank &&
        layer.kind != LayerKind::dense)
      throw std::invalid_argument(
          std::string("latency_reg: unsupported parameterization ") +
          kind_name(layer.kind));
    if (layer.in_dim > table.rows - 1 || layer.out_dim > table.cols - 1)
      throw std::invalid_argument(
          "latency_reg: table (" + std::to_string(table.rows - 1) + "x" +
          std::to_string(table.cols - 1) + ") smaller than layer dims (" +
          std::to_string(layer.in_dim) + "x" + std::to_string(layer.out_dim) + ")");
    NodePtr next_mask = (i + 1 < layers.size()) ? layers[i + 1].input_mask : nullptr;
    std::size_t next_dim = layer.out_dim;
    NodePtr term = interpolate(table,
                               count_or_const(layer.input_mask, layer.in_dim, nullptr),
                               count_or_const(next_mask, next_dim, nullptr));
    total = total ? add(total, term) : term;
  }
  if (!total) throw std::invalid_argument("latency_reg: no layers");
  return total;
}

/// CSV v1 table format: header `latency-table v1 D1 D2`, D1 rows of D2
/// comma-separated millisecond values, then an optional provenance matrix of
/// m/i flags. Round-trips losslessly.
inline void save_table(const LatencyTable& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_table: cannot open " + path);
  out << "latency-table v1 " << t.rows << " " << t.cols << "\n";
  char buf[64];
  for (std::size_t i = 0; i < t.rows; ++i) {
    for (std::size_t j = 0; j < t.cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", t.at(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
  for (std::size_t i = 0; i < t.rows; ++i) {
    for (std::size_t j = 0; j < t.cols; ++j)
      out << (j ? "," : "") << t.prov(i, j);
    out << "\n";
  }
}

inline LatencyTable load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_table: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_table: empty file " + path);
  std::istringstream hs(line);
  std::string magic, version;
  std::size_t rows = 0, cols = 0;
  hs >> magic >> version >> rows >> cols;
  if (magic != "latency-table" || version != "v1" || rows == 0 || cols == 0)
    throw std::runtime_error("load_table: malformed header '" + line + "'");

  LatencyTable t = LatencyTable::empty(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!std::getline(in, line))
      throw std::runtime_error("load_table: missing row " + std::to_string(i + 1) +
                               " of " + std::to_string(rows));
    std::istringstream ls(line);
    std::string cellv;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!std::getline(ls, cellv, ','))
        throw std::runtime_error("load_table: row " + std::to_string(i + 1) +
                                 " has fewer than " + std::to_string(cols) +
                                 " columns");
      std::size_t consumed = 0;
      double v;
      try {
        v = std::stod(cellv, &consumed);
      } catch (const std::exception&) {
        consumed = 0;
      }
      if (consumed == 0 || consumed != cellv.size())
        throw std::runtime_error("load_table: non-numeric cell at row " +
                                 std::to_string(i + 1) + ", column " +
                                 std::to_string(j + 1) + ": '" + cellv + "'");
      if (v < 0.0)
        throw std::runtime_error("load_table: negative latency at row " +
                                 std::to_string(i + 1) + ", column " +
                                 std::to_string(j + 1));
      t.at(i, j) = v;
    }
  }
  // Optional provenance block.
  std::size_t pi = 0;
  while (pi < rows && std::getline(in, line) && !line.empty()) {
    std::istringstream ls(line);
    std::string cellv;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!std::getline(ls, cellv, ','))
        throw std::runtime_error("load_table: provenance row " +
                                 std::to_string(pi + 1) + " too short");
      if (cellv != "m" && cellv != "i")
        throw std::runtime_error("load_table: bad provenance flag '" + cellv +
                                 "' at row " + std::to_string(pi + 1) +
                                 ", column " + std::to_string(j + 1));
      t.provenance[pi * cols + j] = cellv[0];
    }
    ++pi;
  }
  return t;
}

}  // namespace slimnet

#endif  // SLIMNET_LATENCY_HPP
