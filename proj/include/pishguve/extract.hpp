#ifndef PISHGUVE_EXTRACT_HPP
#define PISHGUVE_EXTRACT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pishguve/dataio.hpp"
#include "pishguve/errors.hpp"

namespace pv {

/// One tracker observation (MOT-style CSV row). The detector/tracker that
/// produced it is upstream; only its output format is consumed here.
struct TrackObservation {
  std::int64_t frame = 0;
  std::int64_t track_id = 0;
  VehicleClass cls = VehicleClass::car;
  double left = 0, top = 0, width = 0, height = 0;
  double confidence = 1.0;
};

struct FilterConfig {
  double source_fps = 60.0;
  double target_fps = 5.0;
  double min_duration_s = 4.0;
  double stationary_max_disp = 20.0;  // in input units
  double approach_x = 0.0;            // unit vector toward the camera
  double approach_y = 1.0;
  double min_confidence = 0.0;

  void validate() const {
    if (min_duration_s <= 0) throw ConfigError("extract: min_duration_s must be positive");
    if (source_fps <= 0 || target_fps <= 0) throw ConfigError("extract: fps must be positive");
    double norm = std::hypot(approach_x, approach_y);
    if (std::abs(norm - 1.0) > 1e-6)
      throw ConfigError("extract: approach vector must have unit norm");
  }

  std::size_t decimation() const {
    double q = source_fps / target_fps;
    auto k = static_cast<std::size_t>(std::llround(q));
    if (k < 1 || std::abs(q - static_cast<double>(k)) > 1e-9)
      throw ConfigError("extract: source_fps must be divisible by target_fps");
    return k;
  }
};

struct StageCounts {
  std::size_t kept = 0;
  std::size_t dropped = 0;
};

struct StatsReport {
  StageCounts confidence, duration, stationary, receding;
  std::size_t assembled = 0;
  std::map<std::string, double> class_pct;  // over surviving tracks

  nlohmann::json json() const {
    nlohmann::json j;
    j["assembled"] = assembled;
    auto stage = [](const StageCounts& c) {
      return nlohmann::json{{"kept", c.kept}, {"dropped", c.dropped}};
    };
    j["confidence"] = stage(confidence);
    j["duration"] = stage(duration);
    j["stationary"] = stage(stationary);
    j["receding"] = stage(receding);
    j["class_pct"] = class_pct;
    return j;
  }
};

/// Per-track mean observation confidence, computed before assembly discards
/// the per-frame values.
struct RawTrack {
  Track track;
  double mean_confidence = 1.0;
};

struct RawTrackSet {
  double fps = 60.0;
  Unit unit = Unit::pixel;
  std::vector<RawTrack> tracks;
};

inline std::vector<TrackObservation> parse_mot(std::istream& in) {
  std::vector<TrackObservation> out;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) return out;
  ++line_no;
  auto header = csv::split(line);
  auto col = [&](const char* name) { return detail::column_index(header, name, true); };
  std::size_t ci_f = col("frame"), ci_id = col("id"), ci_l = col("left"), ci_t = col("top"),
              ci_w = col("width"), ci_h = col("height"), ci_c = col("confidence"),
              ci_cls = col("class");
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = csv::split(line);
    if (cells.size() < header.size())
      throw DataError("line " + std::to_string(line_no) + ": truncated tracker row");
    TrackObservation o;
    o.frame = csv::to_int(cells[ci_f], line_no, "frame");
    o.track_id = csv::to_int(cells[ci_id], line_no, "id");
    o.left = csv::to_double(cells[ci_l], line_no, "left");
    o.top = csv::to_double(cells[ci_t], line_no, "top");
    o.width = csv::to_double(cells[ci_w], line_no, "width");
    o.height = csv::to_double(cells[ci_h], line_no, "height");
    o.confidence = csv::to_double(cells[ci_c], line_no, "confidence");
    o.cls = class_from(cells[ci_cls]);
    if (o.width <= 0 || o.height <= 0)
      throw DataError("line " + std::to_string(line_no) + ": non-positive bbox extent");
    if (o.confidence < 0 || o.confidence > 1)
      throw DataError("line " + std::to_string(line_no) + ": confidence outside [0,1]");
    out.push_back(o);
  }
  return out;
}

inline std::vector<TrackObservation> parse_mot_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tracker file: " + path);
  return parse_mot(in);
}

/// Group observations by id: position = bbox center, frame-sorted samples,
/// class by majority vote over per-frame labels (first-seen wins ties).
inline RawTrackSet assemble(const std::vector<TrackObservation>& obs, double source_fps = 60.0) {
  struct Acc {
    std::vector<Sample> samples;
    std::array<std::size_t, 5> class_votes{};
    std::vector<VehicleClass> vote_order;
    double conf_sum = 0;
  };
  std::map<std::int64_t, Acc> by_id;
  std::map<std::pair<std::int64_t, std::int64_t>, bool> seen;
  for (const TrackObservation& o : obs) {
    if (!seen.emplace(std::pair{o.track_id, o.frame}, true).second)
      throw DataError("assemble: duplicate (id " + std::to_string(o.track_id) + ", frame " +
                      std::to_string(o.frame) + ")");
    Acc& a = by_id[o.track_id];
    a.samples.push_back({o.frame, o.left + o.width / 2.0, o.top + o.height / 2.0});
    a.class_votes[static_cast<std::size_t>(o.cls)]++;
    a.vote_order.push_back(o.cls);
    a.conf_sum += o.confidence;
  }
  RawTrackSet rs;
  rs.fps = source_fps;
  for (auto& [id, a] : by_id) {
    std::sort(a.samples.begin(), a.samples.end(),
              [](const Sample& l, const Sample& r) { return l.frame < r.frame; });
    VehicleClass best = a.vote_order.front();
    for (VehicleClass c : a.vote_order)
      if (a.class_votes[static_cast<std::size_t>(c)] > a.class_votes[static_cast<std::size_t>(best)])
        best = c;
    RawTrack rt;
    rt.track.id = id;
    rt.track.cls = best;
    rt.track.samples = std::move(a.samples);
    rt.mean_confidence = a.conf_sum / static_cast<double>(rt.track.samples.size());
    rs.tracks.push_back(std::move(rt));
  }
  return rs;
}

inline RawTrackSet filter_confidence(const RawTrackSet& in, const FilterConfig& cfg,
                                     StageCounts* counts = nullptr) {
  RawTrackSet out;
  out.fps = in.fps;
  out.unit = in.unit;
  for (const RawTrack& t : in.tracks) {
    bool keep = t.mean_confidence >= cfg.min_confidence;
    if (counts) (keep ? counts->kept : counts->dropped)++;
    if (keep) out.tracks.push_back(t);
  }
  return out;
}

/// Keep tracks spanning at least min_duration_s; the boundary is inclusive.
inline RawTrackSet filter_duration(const RawTrackSet& in, const FilterConfig& cfg,
                                   StageCounts* counts = nullptr) {
  RawTrackSet out;
  out.fps = in.fps;
  out.unit = in.unit;
  for (const RawTrack& t : in.tracks) {
    const auto& s = t.track.samples;
    double dur = s.empty() ? 0.0
                           : static_cast<double>(s.back().frame - s.front().frame) / cfg.source_fps;
    bool keep = dur >= cfg.min_duration_s;
    if (counts) (keep ? counts->kept : counts->dropped)++;
    if (keep) out.tracks.push_back(t);
  }
  return out;
}

/// Drop tracks whose max displacement from the first position stays under
/// the threshold (strict <; exactly at the threshold is kept).
inline RawTrackSet filter_stationary(const RawTrackSet& in, const FilterConfig& cfg,
                                     StageCounts* counts = nullptr) {
  RawTrackSet out;
  out.fps = in.fps;
  out.unit = in.unit;
  for (const RawTrack& t : in.tracks) {
    const auto& s = t.track.samples;
    double max_disp = 0;
    for (const Sample& p : s)
      max_disp = std::max(max_disp, std::hypot(p.x - s.front().x, p.y - s.front().y));
    bool keep = max_disp >= cfg.stationary_max_disp;
    if (counts) (keep ? counts->kept : counts->dropped)++;
    if (keep) out.tracks.push_back(t);
  }
  return out;
}

/// Drop tracks whose net displacement opposes the approach direction.
/// Zero net displacement is kept; the stationary filter owns that case.
inline RawTrackSet filter_receding(const RawTrackSet& in, const FilterConfig& cfg,
                                   StageCounts* counts = nullptr) {
  RawTrackSet out;
  out.fps = in.fps;
  out.unit = in.unit;
  for (const RawTrack& t : in.tracks) {
    const auto& s = t.track.samples;
    double dot = 0;
    if (!s.empty())
      dot = (s.back().x - s.front().x) * cfg.approach_x +
            (s.back().y - s.front().y) * cfg.approach_y;
    bool keep = dot >= 0;
    if (counts) (keep ? counts->kept : counts->dropped)++;
    if (keep) out.tracks.push_back(t);
  }
  return out;
}

/// Keep every k-th sample per track starting at its first frame; downsampled
/// frame numbers are original frames divided by k (integer division).
inline RawTrackSet downsample(const RawTrackSet& in, const FilterConfig& cfg) {
  std::size_t k = cfg.decimation();
  RawTrackSet out;
  out.fps = cfg.target_fps;
  out.unit = in.unit;
  for (const RawTrack& t : in.tracks) {
    RawTrack rt = t;
    rt.track.samples.clear();
    const auto& s = t.track.samples;
    if (!s.empty()) {
      std::int64_t first = s.front().frame;
      for (const Sample& p : s)
        if ((p.frame - first) % static_cast<std::int64_t>(k) == 0)
          rt.track.samples.push_back({p.frame / static_cast<std::int64_t>(k), p.x, p.y});
    }
    out.tracks.push_back(std::move(rt));
  }
  return out;
}

struct PipelineResult {
  TrackSet tracks;
  StatsReport stats;
};

/// Full construction pipeline: assemble -> confidence -> duration ->
/// stationary -> receding -> downsample, with per-stage counts.
inline PipelineResult run_pipeline(const std::vector<TrackObservation>& obs,
                                   const FilterConfig& cfg) {
  cfg.validate();
  cfg.decimation();
  StatsReport stats;
  RawTrackSet rs = assemble(obs, cfg.source_fps);
  stats.assembled = rs.tracks.size();
  rs = filter_confidence(rs, cfg, &stats.confidence);
  rs = filter_duration(rs, cfg, &stats.duration);
  rs = filter_stationary(rs, cfg, &stats.stationary);
  rs = filter_receding(rs, cfg, &stats.receding);
  rs = downsample(rs, cfg);
  PipelineResult res;
  res.tracks.fps = cfg.target_fps;
  res.tracks.unit = rs.unit;
  std::array<std::size_t, 5> counts{};
  for (RawTrack& t : rs.tracks) {
    counts[static_cast<std::size_t>(t.track.cls)]++;
    res.tracks.tracks.push_back(std::move(t.track));
  }
  if (!res.tracks.tracks.empty()) {
    double total = static_cast<double>(res.tracks.tracks.size());
    for (std::size_t c = 0; c < 5; ++c)
      if (counts[c])
        res.stats.class_pct[class_name(static_cast<VehicleClass>(c))] =
            100.0 * static_cast<double>(counts[c]) / total;
  }
  res.stats.assembled = stats.assembled;
  res.stats.confidence = stats.confidence;
  res.stats.duration = stats.duration;
  res.stats.stationary = stats.stationary;
  res.stats.receding = stats.receding;
  return res;
}

}  // namespace pv

#endif
