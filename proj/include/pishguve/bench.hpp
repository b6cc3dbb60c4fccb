#ifndef PISHGUVE_BENCH_HPP
#define PISHGUVE_BENCH_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pishguve/dataio.hpp"
#include "pishguve/errors.hpp"
#include "pishguve/metrics.hpp"
#include "pishguve/model.hpp"
#include "pishguve/tensor.hpp"

namespace pv {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 16;  // scenes per optimizer step
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  double grad_clip = 0.0;  // global-norm threshold; 0 disables

  void validate() const {
    if (!(lr >= 0)) throw ConfigError("train: lr must be >= 0");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
      throw ConfigError("train: betas must be in [0,1)");
    if (!(adam_eps > 0)) throw ConfigError("train: adam_eps must be positive");
    if (grad_clip < 0) throw ConfigError("train: grad_clip must be >= 0");
  }
};

inline nlohmann::json train_config_json(const TrainConfig& c) {
  return {{"lr", c.lr},          {"beta1", c.beta1},
          {"beta2", c.beta2},    {"adam_eps", c.adam_eps},
          {"batch_size", c.batch_size}, {"epochs", c.epochs},
          {"seed", c.seed},      {"grad_clip", c.grad_clip}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  static const std::vector<std::string> known = {"lr", "beta1", "beta2", "adam_eps",
                                                 "batch_size", "epochs", "seed", "grad_clip"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("train config: unknown key '" + it.key() + "'");
  if (j.contains("lr")) c.lr = j["lr"].get<double>();
  if (j.contains("beta1")) c.beta1 = j["beta1"].get<double>();
  if (j.contains("beta2")) c.beta2 = j["beta2"].get<double>();
  if (j.contains("adam_eps")) c.adam_eps = j["adam_eps"].get<double>();
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
  if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("grad_clip")) c.grad_clip = j["grad_clip"].get<double>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Evaluation.

/// Predictor maps a window to n*h*2 row-major coordinates.
using Predictor = std::function<std::vector<double>(const SceneWindow&)>;

/// Pool predictions over all windows into one report. Windows must agree on
/// horizon, unit, and fps.
inline MetricsReport evaluate_predictions(const std::vector<SceneWindow>& windows,
                                          const Predictor& predict,
                                          const std::vector<double>& marks = {1, 2, 3, 4, 5}) {
  if (windows.empty()) throw DataError("evaluate: empty dataset");
  PredictionPair pair;
  pair.h = windows.front().h;
  pair.unit = windows.front().unit;
  pair.fps = windows.front().fps;
  for (const SceneWindow& w : windows) {
    if (w.h != pair.h || w.unit != pair.unit || w.fps != pair.fps)
      throw DataError("evaluate: windows disagree on horizon/unit/fps");
    std::vector<double> pred = predict(w);
    if (pred.size() != w.future.size())
      throw ShapeError("evaluate: predictor returned " + std::to_string(pred.size()) +
                       " values, expected " + std::to_string(w.future.size()));
    pair.n += w.n();
    pair.pred.insert(pair.pred.end(), pred.begin(), pred.end());
    pair.truth.insert(pair.truth.end(), w.future.begin(), w.future.end());
  }
  return metrics_report(pair, marks);
}

/// Model predictor in eval mode; parameters are read-only.
inline Predictor model_predictor(const ModelConfig& cfg, ModelParams& params) {
  return [&cfg, &params](const SceneWindow& w) {
    if (w.t_in != cfg.t_in || w.h != cfg.horizon)
      throw DataError("evaluate: window t_in/h does not match model config");
    RngStream rng(0, 0);  // unused in eval mode
    Tensor y = forward(make_relative(w), params, cfg, Mode::eval, rng);
    return y.data();
  };
}

inline MetricsReport evaluate(const ModelConfig& cfg, ModelParams& params,
                              const std::vector<SceneWindow>& windows,
                              const std::vector<double>& marks = {1, 2, 3, 4, 5}) {
  return evaluate_predictions(windows, model_predictor(cfg, params), marks);
}

// ---------------------------------------------------------------------------
// Constant-velocity baseline.

/// Extrapolate each vehicle linearly with its last observed step difference.
inline std::vector<double> cv_baseline(const SceneWindow& w) {
  if (w.t_in < 2) throw DataError("cv_baseline: needs t_in >= 2");
  std::vector<double> pred(w.n() * w.h * 2);
  for (std::size_t i = 0; i < w.n(); ++i) {
    std::size_t last = (i * w.t_in + w.t_in - 1) * 2;
    std::size_t prev = (i * w.t_in + w.t_in - 2) * 2;
    double vx = w.observed[last] - w.observed[prev];
    double vy = w.observed[last + 1] - w.observed[prev + 1];
    for (std::size_t k = 0; k < w.h; ++k) {
      pred[(i * w.h + k) * 2] = w.observed[last] + vx * static_cast<double>(k + 1);
      pred[(i * w.h + k) * 2 + 1] = w.observed[last + 1] + vy * static_cast<double>(k + 1);
    }
  }
  return pred;
}

inline MetricsReport cv_evaluate(const std::vector<SceneWindow>& windows,
                                 const std::vector<double>& marks = {1, 2, 3, 4, 5}) {
  return evaluate_predictions(windows, cv_baseline, marks);
}

// ---------------------------------------------------------------------------
// Training.

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0;  // mean per-scene MSE over the epoch
  double ade = 0, fde = 0;  // on the training set, eval mode

  nlohmann::json json() const {
    return {{"epoch", epoch}, {"loss", loss}, {"ade", ade}, {"fde", fde}};
  }
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t steps = 0;
  bool aborted = false;
  std::string failure;  // set when aborted; names the failing epoch/batch
};

inline void write_epoch_log(const std::vector<EpochLog>& log, std::ostream& os) {
  for (const EpochLog& e : log) os << e.json().dump() << "\n";
}

namespace detail {

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t t = 0;
};

inline void adam_step(std::vector<Tensor>& params, AdamState& st, const TrainConfig& cfg) {
  if (st.m.empty()) {
    for (Tensor& p : params) {
      st.m.emplace_back(p.size(), 0.0);
      st.v.emplace_back(p.size(), 0.0);
    }
  }
  if (cfg.grad_clip > 0) {
    double sq = 0;
    for (Tensor& p : params)
      for (double g : p.grad()) sq += g * g;
    double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) {
      double scale = cfg.grad_clip / norm;
      for (Tensor& p : params) {
        auto& g = const_cast<std::vector<double>&>(p.grad());
        for (double& x : g) x *= scale;
      }
    }
  }
  ++st.t;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& g = params[pi].grad();
    auto& data = params[pi].mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      st.m[pi][i] = cfg.beta1 * st.m[pi][i] + (1 - cfg.beta1) * g[i];
      st.v[pi][i] = cfg.beta2 * st.v[pi][i] + (1 - cfg.beta2) * g[i] * g[i];
      double mh = st.m[pi][i] / bc1;
      double vh = st.v[pi][i] / bc2;
      data[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.adam_eps);
    }
  }
}

inline Tensor truth_tensor(const SceneWindow& w) {
  return Tensor::from_data({w.n(), w.h, 2}, w.future);
}

}  // namespace detail

/// Minimize MSE over predicted coordinates with Adam. Scenes are batched in
/// the given order; gradients are averaged over the scenes of a batch in that
/// order, so the run is fully determined by (params, dataset, cfg). Dropout is
/// active (train mode) and draws from one stream derived from cfg.seed.
///
/// On a numeric failure the run aborts: params are rolled back to the state
/// before the failing step, and TrainResult.failure names the epoch/batch.
inline TrainResult train(const ModelConfig& mcfg, ModelParams& params,
                         const std::vector<SceneWindow>& dataset, const TrainConfig& cfg) {
  cfg.validate();
  mcfg.validate();
  if (dataset.empty()) throw DataError("train: empty training set");
  for (const SceneWindow& w : dataset)
    if (w.t_in != mcfg.t_in || w.h != mcfg.horizon)
      throw DataError("train: window t_in/h does not match model config");

  std::vector<Tensor> flat;
  for (auto& [name, t] : params.named()) flat.push_back(*t);
  detail::AdamState adam;
  RngStream rng(cfg.seed, 0xBE5Cu);
  TrainResult res;
  const std::size_t n_batches = (dataset.size() + cfg.batch_size - 1) / cfg.batch_size;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0;
    std::size_t loss_count = 0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      std::size_t lo = b * cfg.batch_size;
      std::size_t hi = std::min(dataset.size(), lo + cfg.batch_size);
      ModelParams last_good = params.deep_copy();
      try {
        for (Tensor& p : flat) p.zero_grad();
        double inv = 1.0 / static_cast<double>(hi - lo);
        for (std::size_t s = lo; s < hi; ++s) {
          const SceneWindow& w = dataset[s];
          Tensor pred = forward(make_relative(w), params, mcfg, Mode::train, rng);
          Tensor loss = mse(pred, detail::truth_tensor(w));
          loss_sum += loss[0];
          ++loss_count;
          backward(mul(loss, Tensor::scalar(inv)));
        }
        detail::adam_step(flat, adam, cfg);
        check_finite(flat.front().data(), "train");
        ++res.steps;
      } catch (const NumericError& e) {
        params = last_good;
        res.aborted = true;
        res.failure = "epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " +
                      e.what();
        return res;
      }
    }
    EpochLog el;
    el.epoch = epoch;
    el.loss = loss_sum / static_cast<double>(loss_count);
    MetricsReport r = evaluate(mcfg, params, dataset, {});
    el.ade = r.ade;
    el.fde = r.fde;
    res.log.push_back(el);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Dropout ablation.

struct AblationCell {
  double p_attn = 0, p_lin = 0;
};

struct AblationRow {
  double p_attn = 0, p_lin = 0;
  double ade = 0, fde = 0;
};

/// The nine-cell reference grid, in report order.
inline std::vector<AblationCell> default_ablation_grid() {
  return {{0.03, 0.020}, {0.10, 0.020}, {0.20, 0.020}, {0.25, 0.020}, {0.40, 0.020},
          {0.25, 0.025}, {0.25, 0.15},  {0.40, 0.15},  {0.40, 0.30}};
}

/// Train one model per cell with identical seed and data, evaluate on the
/// given set, and emit rows in grid order.
inline std::vector<AblationRow> ablate(const ModelConfig& base, const TrainConfig& tcfg,
                                       const std::vector<SceneWindow>& train_set,
                                       const std::vector<SceneWindow>& eval_set,
                                       const std::vector<AblationCell>& grid) {
  if (grid.empty()) throw ConfigError("ablate: empty grid");
  std::vector<AblationRow> rows;
  for (const AblationCell& cell : grid) {
    if (!(cell.p_attn >= 0 && cell.p_attn < 1 && cell.p_lin >= 0 && cell.p_lin < 1))
      throw ConfigError("ablate: probabilities must be in [0,1)");
    ModelConfig cfg = base;
    cfg.p_attn = cell.p_attn;
    cfg.p_lin = cell.p_lin;
    ModelParams params = init_params(cfg, RngStream(tcfg.seed, 0x1217u));
    TrainResult tr = train(cfg, params, train_set, tcfg);
    if (tr.aborted) throw NumericError("ablate: " + tr.failure);
    MetricsReport r = evaluate(cfg, params, eval_set, {});
    rows.push_back({cell.p_attn, cell.p_lin, r.ade, r.fde});
  }
  return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "p_attn,p_lin,ade,fde\n";
  for (const AblationRow& r : rows)
    out += csv::fmt(r.p_attn) + "," + csv::fmt(r.p_lin) + "," + csv::fmt(r.ade) + "," +
           csv::fmt(r.fde) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Result tables.

struct ReportRow {
  std::string name;
  MetricsReport report;
  std::size_t param_count = 0;
};

/// CSV with one row per model: ADE, FDE, RMSE at the report's marks, params.
inline std::string report_table_csv(const std::vector<ReportRow>& rows) {
  std::vector<double> marks;
  if (!rows.empty())
    for (const auto& [mark, value] : rows.front().report.rmse_at) marks.push_back(mark);
  std::string out = "model,ade,fde";
  for (double m : marks) out += ",rmse@" + csv::fmt(m) + "s";
  out += ",params\n";
  for (const ReportRow& r : rows) {
    out += r.name + "," + csv::fmt(r.report.ade) + "," + csv::fmt(r.report.fde);
    for (double m : marks) out += "," + csv::fmt(r.report.rmse_at.at(m));
    out += "," + std::to_string(r.param_count) + "\n";
  }
  return out;
}

/// Plain-text table with aligned columns.
inline std::string report_table_text(const std::vector<ReportRow>& rows) {
  std::vector<double> marks;
  if (!rows.empty())
    for (const auto& [mark, value] : rows.front().report.rmse_at) marks.push_back(mark);
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"model", "ade", "fde"};
  for (double m : marks) {
    std::ostringstream h;
    h << "rmse@" << m << "s";
    header.push_back(h.str());
  }
  header.push_back("params");
  cells.push_back(header);
  for (const ReportRow& r : rows) {
    std::vector<std::string> row = {r.name};
    auto num = [](double v) {
      std::ostringstream os;
      os.precision(6);
      os << v;
      return os.str();
    };
    row.push_back(num(r.report.ade));
    row.push_back(num(r.report.fde));
    for (double m : marks) row.push_back(num(r.report.rmse_at.at(m)));
    row.push_back(std::to_string(r.param_count));
    cells.push_back(row);
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += row[c];
      if (c + 1 < row.size()) out += std::string(width[c] - row[c].size() + 2, ' ');
    }
    out += "\n";
  }
  return out;
}

}  // namespace pv

#endif
