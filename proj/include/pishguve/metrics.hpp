#ifndef PISHGUVE_METRICS_HPP
#define PISHGUVE_METRICS_HPP

#include <cmath>
#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pishguve/errors.hpp"

namespace pv {

enum class Unit { pixel, meter };

inline std::string unit_name(Unit u) { return u == Unit::pixel ? "pixel" : "meter"; }
inline Unit unit_from(const std::string& s) {
  if (s == "pixel") return Unit::pixel;
  if (s == "meter") return Unit::meter;
  throw DataError("unknown unit tag '" + s + "'");
}

/// Predicted vs ground-truth futures for one pooled evaluation set.
/// Coordinates are flat row-major (vehicle, step, xy).
struct PredictionPair {
  std::size_t n = 0;  // vehicles
  std::size_t h = 0;  // horizon steps
  std::vector<double> pred;   // n*h*2
  std::vector<double> truth;  // n*h*2
  Unit unit = Unit::pixel;
  double fps = 5.0;

  void validate() const {
    if (h < 1 || fps <= 0.0) throw DataError("PredictionPair: need h >= 1 and fps > 0");
    if (pred.size() != n * h * 2 || truth.size() != pred.size())
      throw ShapeError("PredictionPair: pred/truth sizes disagree with n*h*2");
  }
};

struct MetricsReport {
  double ade = 0.0;
  double fde = 0.0;
  std::map<double, double> rmse_at;  // seconds mark -> value
  Unit unit = Unit::pixel;
  std::size_t n = 0;
  std::size_t h = 0;

  std::string csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "ade,fde";
    for (const auto& [mark, _] : rmse_at) os << ",rmse@" << mark << "s";
    os << "\n" << ade << "," << fde;
    for (const auto& [_, v] : rmse_at) os << "," << v;
    os << "\n";
    return os.str();
  }

  nlohmann::json json() const {
    nlohmann::json j;
    j["ade"] = ade;
    j["fde"] = fde;
    nlohmann::json r = nlohmann::json::object();
    for (const auto& [mark, v] : rmse_at) {
      std::ostringstream key;
      key << mark << "s";
      r[key.str()] = v;
    }
    j["rmse"] = r;
    j["unit"] = unit_name(unit);
    j["n"] = n;
    j["h"] = h;
    return j;
  }
};

/// Per-vehicle, per-step Euclidean distances, n x h row-major.
inline std::vector<double> displacement(const PredictionPair& p) {
  p.validate();
  std::vector<double> d(p.n * p.h);
  for (std::size_t i = 0; i < p.n * p.h; ++i) {
    double dx = p.truth[2 * i] - p.pred[2 * i];
    double dy = p.truth[2 * i + 1] - p.pred[2 * i + 1];
    d[i] = std::hypot(dx, dy);
  }
  return d;
}

inline double ade(const PredictionPair& p) {
  auto d = displacement(p);
  double acc = 0.0;
  for (double v : d) acc += v;
  return acc / static_cast<double>(d.size());
}

inline double fde(const PredictionPair& p) {
  auto d = displacement(p);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.n; ++i) acc += d[i * p.h + (p.h - 1)];
  return acc / static_cast<double>(p.n);
}

/// RMSE at each second mark: sqrt(mean over vehicles of squared L2 error at
/// step mark*fps). Marks must land on integer steps within the horizon.
inline std::map<double, double> rmse_curve(const PredictionPair& p,
                                           const std::vector<double>& marks) {
  p.validate();
  std::map<double, double> out;
  for (double mark : marks) {
    double step_f = mark * p.fps;
    auto step = static_cast<std::size_t>(std::llround(step_f));
    if (std::abs(step_f - static_cast<double>(step)) > 1e-9 || step < 1 || step > p.h)
      throw DataError("rmse_curve: mark " + std::to_string(mark) +
                      "s does not land on a horizon step (fps " + std::to_string(p.fps) +
                      ", h " + std::to_string(p.h) + ")");
    std::size_t t = step - 1;  // horizon steps are 1-based
    double acc = 0.0;
    for (std::size_t i = 0; i < p.n; ++i) {
      std::size_t base = (i * p.h + t) * 2;
      double dx = p.truth[base] - p.pred[base];
      double dy = p.truth[base + 1] - p.pred[base + 1];
      acc += dx * dx + dy * dy;
    }
    out[mark] = std::sqrt(acc / static_cast<double>(p.n));
  }
  return out;
}

inline MetricsReport metrics_report(const PredictionPair& p, const std::vector<double>& marks) {
  MetricsReport r;
  r.ade = ade(p);
  r.fde = fde(p);
  r.rmse_at = rmse_curve(p, marks);
  r.unit = p.unit;
  r.n = p.n;
  r.h = p.h;
  return r;
}

}  // namespace pv

#endif
