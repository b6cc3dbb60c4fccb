#ifndef PISHGUVE_SYNTH_HPP
#define PISHGUVE_SYNTH_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pishguve/dataio.hpp"
#include "pishguve/errors.hpp"

namespace pv {

/// Affine camera/view transform: (x, y) -> (a x + b y + tx, c x + d y + ty).
struct ViewTransform {
  double a = 1, b = 0, c = 0, d = 1, tx = 0, ty = 0;

  static ViewTransform identity() { return {}; }
  /// High-angle roadside view: lateral shear with mild depth compression.
  static ViewTransform high_angle_shear(double shear, double depth_scale) {
    return {1, shear, 0, depth_scale, 0, 0};
  }
  /// Eye-level view: strong vertical compression of the depth axis.
  static ViewTransform eye_level_scale(double lateral_scale, double depth_scale) {
    return {lateral_scale, 0, 0, depth_scale, 0, 0};
  }
};

struct SynthConfig {
  std::size_t lanes = 3;
  double lane_width = 4.0;
  std::size_t n_vehicles = 6;
  double duration_s = 20.0;
  double fps = 5.0;
  double speed_min = 8.0, speed_max = 14.0;    // longitudinal units/s
  double accel_min = 0.0, accel_max = 0.0;     // units/s^2
  double merge_fraction = 0.0;
  double merge_span = 4.0;                     // lateral distance covered by a merge
  double merge_steepness = 1.0;                // sigmoid steepness, 1/s
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
  ViewTransform view;

  void validate() const {
    if (lanes < 1 || n_vehicles < 1) throw ConfigError("synth: counts must be >= 1");
    if (duration_s <= 0 || fps <= 0) throw ConfigError("synth: duration and fps must be positive");
    if (speed_min > speed_max || accel_min > accel_max)
      throw ConfigError("synth: ranges must be ordered");
    if (noise_sigma < 0) throw ConfigError("synth: noise_sigma must be >= 0");
    if (merge_fraction < 0 || merge_fraction > 1)
      throw ConfigError("synth: merge_fraction must be in [0,1]");
  }

  std::size_t samples() const { return static_cast<std::size_t>(std::llround(duration_s * fps)); }
};

namespace detail {

// Quantize to 1/64 so linear motion is exact in doubles: with zero noise and
// zero acceleration, y0 + c*t stays within the significand for all desk-scale
// t, making constant-velocity extrapolation bit-exact.
inline double q64(double v) { return std::round(v * 64.0) / 64.0; }

}  // namespace detail

/// Deterministic straight-highway generator: piecewise-constant acceleration
/// (resampled every 2 s), optional lateral sigmoid merges, isotropic Gaussian
/// noise, and an affine view transform. Fully determined by cfg.seed.
inline TrackSet generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t steps = cfg.samples();
  const double dt = 1.0 / cfg.fps;
  const bool linear = cfg.accel_min == 0.0 && cfg.accel_max == 0.0 && cfg.noise_sigma == 0.0 &&
                      cfg.merge_fraction == 0.0;
  const auto n_merge =
      static_cast<std::size_t>(std::llround(cfg.merge_fraction * static_cast<double>(cfg.n_vehicles)));
  const auto accel_steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(2.0 * cfg.fps)));

  TrackSet ts;
  ts.fps = cfg.fps;
  ts.unit = Unit::meter;
  RngStream root(cfg.seed, 0);
  for (std::size_t i = 0; i < cfg.n_vehicles; ++i) {
    RngStream rng = root.substream(i + 1);
    std::size_t lane = i % cfg.lanes;
    double lane_x = detail::q64((static_cast<double>(lane) + 0.5) * cfg.lane_width);
    double y0 = detail::q64(-rng.uniform(0.0, 40.0) - 10.0 * static_cast<double>(i / cfg.lanes));
    double v0 = rng.uniform(cfg.speed_min, cfg.speed_max);
    bool merging = i < n_merge;
    double t_mid = cfg.duration_s * rng.uniform(0.35, 0.65);

    Track t;
    t.id = static_cast<std::int64_t>(i + 1);
    t.cls = rng.uniform() < 0.9 ? VehicleClass::car
                                : static_cast<VehicleClass>(1 + rng.next_u64() % 4);
    if (linear) {
      double c = detail::q64(v0 * dt);
      for (std::size_t k = 0; k < steps; ++k)
        t.samples.push_back({static_cast<std::int64_t>(k), lane_x,
                             y0 + c * static_cast<double>(k)});
    } else {
      double y = y0, v = v0, a = 0.0;
      for (std::size_t k = 0; k < steps; ++k) {
        if (k % accel_steps == 0) a = rng.uniform(cfg.accel_min, cfg.accel_max);
        double tsec = static_cast<double>(k) * dt;
        double x = lane_x;
        if (merging) {
          // ramp in from merge_span below the target lane center
          double s = 1.0 / (1.0 + std::exp(-cfg.merge_steepness * (tsec - t_mid)));
          x = lane_x - cfg.merge_span * (1.0 - s);
        }
        double nx = cfg.noise_sigma > 0 ? rng.normal() * cfg.noise_sigma : 0.0;
        double ny = cfg.noise_sigma > 0 ? rng.normal() * cfg.noise_sigma : 0.0;
        t.samples.push_back({static_cast<std::int64_t>(k), x + nx, y + ny});
        v += a * dt;
        y += v * dt;
      }
    }
    for (Sample& s : t.samples) {
      double x = cfg.view.a * s.x + cfg.view.b * s.y + cfg.view.tx;
      double y = cfg.view.c * s.x + cfg.view.d * s.y + cfg.view.ty;
      s.x = x;
      s.y = y;
    }
    ts.tracks.push_back(std::move(t));
  }
  return ts;
}

/// Named desk-scale presets with frozen seeds:
///  - linear-clean: exactly collinear tracks; constant-velocity extrapolation
///    has zero error by construction.
///  - merge-noisy: accelerating, merging, noisy traffic; the training bench.
///  - tiny-overfit: 8 scenes under default windowing; the overfit probe.
inline std::map<std::string, SynthConfig> standard_suites() {
  std::map<std::string, SynthConfig> m;
  {
    SynthConfig c;
    c.lanes = 3;
    c.n_vehicles = 6;
    c.duration_s = 20.0;
    c.seed = 1001;
    m["linear-clean"] = c;
  }
  {
    SynthConfig c;
    c.lanes = 4;
    c.n_vehicles = 12;
    c.duration_s = 40.0;
    c.accel_min = -1.0;
    c.accel_max = 1.0;
    c.merge_fraction = 0.25;
    c.noise_sigma = 0.5;
    c.seed = 2002;
    m["merge-noisy"] = c;
  }
  {
    SynthConfig c;
    c.lanes = 3;
    c.n_vehicles = 4;
    c.duration_s = 9.4;  // 47 samples at 5 fps -> 8 default windows
    c.accel_min = -0.5;
    c.accel_max = 0.5;
    c.merge_fraction = 0.25;
    c.noise_sigma = 0.25;
    c.seed = 3003;
    m["tiny-overfit"] = c;
  }
  return m;
}

}  // namespace pv

#endif
