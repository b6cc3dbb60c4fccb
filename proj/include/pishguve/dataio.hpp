#ifndef PISHGUVE_DATAIO_HPP
#define PISHGUVE_DATAIO_HPP

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pishguve/errors.hpp"
#include "pishguve/metrics.hpp"  // Unit
#include "pishguve/rng.hpp"

namespace pv {

enum class VehicleClass { car, bus, truck, bike, motor };

inline std::string class_name(VehicleClass c) {
  switch (c) {
    case VehicleClass::car: return "car";
    case VehicleClass::bus: return "bus";
    case VehicleClass::truck: return "truck";
    case VehicleClass::bike: return "bike";
    case VehicleClass::motor: return "motor";
  }
  return "car";
}

inline VehicleClass class_from(const std::string& s) {
  if (s == "car") return VehicleClass::car;
  if (s == "bus") return VehicleClass::bus;
  if (s == "truck") return VehicleClass::truck;
  if (s == "bike") return VehicleClass::bike;
  if (s == "motor") return VehicleClass::motor;
  throw DataError("unknown vehicle class '" + s + "'");
}

struct Sample {
  std::int64_t frame = 0;
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Sample&) const = default;
};

struct Track {
  std::int64_t id = 0;
  VehicleClass cls = VehicleClass::car;
  std::vector<Sample> samples;  // strictly increasing frames
  bool operator==(const Track&) const = default;
};

struct TrackSet {
  double fps = 5.0;
  Unit unit = Unit::pixel;
  std::vector<Track> tracks;
  bool operator==(const TrackSet&) const = default;
};

struct AnnotationRecord {
  std::int64_t frame = 0;
  std::int64_t vehicle_id = 0;
  VehicleClass cls = VehicleClass::car;
  double left = 0, top = 0, width = 0, height = 0;
};

/// Column-name mapping for trajectory CSVs; defaults match the native
/// `frame,id,class,x,y` layout. `cls` may be empty (class defaults to car).
struct FormatMap {
  std::string frame = "frame";
  std::string id = "id";
  std::string x = "x";
  std::string y = "y";
  std::string cls = "class";
};

namespace csv {

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') { out.push_back(cur); cur.clear(); }
    else if (c != '\r') cur += c;
  }
  out.push_back(cur);
  return out;
}

inline double to_double(const std::string& s, std::size_t line_no, const std::string& col) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw DataError("line " + std::to_string(line_no) + ": bad numeric value '" + s + "' in " + col);
  return v;
}

inline std::int64_t to_int(const std::string& s, std::size_t line_no, const std::string& col) {
  char* end = nullptr;
  long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw DataError("line " + std::to_string(line_no) + ": bad integer '" + s + "' in " + col);
  return v;
}

/// Shortest-exact double formatting: 17 significant digits round-trip.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace csv

namespace detail {

/// Optional `# key=value ...` metadata line (unit, fps).
inline bool parse_meta(const std::string& line, double& fps, Unit& unit) {
  if (line.empty() || line[0] != '#') return false;
  std::istringstream is(line.substr(1));
  std::string tok;
  while (is >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "unit") unit = unit_from(val);
    if (key == "fps") fps = std::stod(val);
  }
  return true;
}

inline std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                                bool required) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    if (required) throw DataError("missing mandatory column '" + name + "' in header");
    return static_cast<std::size_t>(-1);
  }
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace detail

inline TrackSet parse_trajectories(std::istream& in, const FormatMap& fmt = {}) {
  TrackSet ts;
  std::string line;
  std::size_t line_no = 0;
  // optional metadata, then header
  if (!std::getline(in, line)) return ts;
  ++line_no;
  if (detail::parse_meta(line, ts.fps, ts.unit)) {
    if (!std::getline(in, line)) return ts;
    ++line_no;
  }
  auto header = csv::split(line);
  std::size_t ci_frame = detail::column_index(header, fmt.frame, true);
  std::size_t ci_id = detail::column_index(header, fmt.id, true);
  std::size_t ci_x = detail::column_index(header, fmt.x, true);
  std::size_t ci_y = detail::column_index(header, fmt.y, true);
  std::size_t ci_cls = detail::column_index(header, fmt.cls, false);

  std::map<std::int64_t, Track> by_id;
  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> seen;  // (id,frame) -> line
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = csv::split(line);
    if (cells.size() < header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " cells, got " +
                      std::to_string(cells.size()));
    std::int64_t frame = csv::to_int(cells[ci_frame], line_no, fmt.frame);
    std::int64_t id = csv::to_int(cells[ci_id], line_no, fmt.id);
    auto [it, fresh] = seen.emplace(std::pair{id, frame}, line_no);
    if (!fresh)
      throw DataError("line " + std::to_string(line_no) + ": duplicate (id " + std::to_string(id) +
                      ", frame " + std::to_string(frame) + "), first seen at line " +
                      std::to_string(it->second));
    Track& t = by_id[id];
    t.id = id;
    if (ci_cls != static_cast<std::size_t>(-1)) t.cls = class_from(cells[ci_cls]);
    t.samples.push_back({frame, csv::to_double(cells[ci_x], line_no, fmt.x),
                         csv::to_double(cells[ci_y], line_no, fmt.y)});
  }
  for (auto& [_, t] : by_id) {
    std::sort(t.samples.begin(), t.samples.end(),
              [](const Sample& a, const Sample& b) { return a.frame < b.frame; });
    ts.tracks.push_back(std::move(t));
  }
  return ts;
}

inline TrackSet parse_trajectories_file(const std::string& path, const FormatMap& fmt = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trajectory file: " + path);
  return parse_trajectories(in, fmt);
}

inline void write_tracks(const TrackSet& ts, std::ostream& os) {
  os << "# unit=" << unit_name(ts.unit) << " fps=" << csv::fmt(ts.fps) << "\n";
  os << "frame,id,class,x,y\n";
  for (const Track& t : ts.tracks)
    for (const Sample& s : t.samples)
      os << s.frame << "," << t.id << "," << class_name(t.cls) << "," << csv::fmt(s.x) << ","
         << csv::fmt(s.y) << "\n";
}

inline void write_tracks_file(const TrackSet& ts, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write trajectory file: " + path);
  write_tracks(ts, os);
}

inline std::vector<AnnotationRecord> parse_annotations(std::istream& in) {
  std::vector<AnnotationRecord> out;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) return out;
  ++line_no;
  auto header = csv::split(line);
  std::size_t ci_frame = detail::column_index(header, "frame", true);
  std::size_t ci_id = detail::column_index(header, "id", true);
  std::size_t ci_cls = detail::column_index(header, "class", true);
  std::size_t ci_l = detail::column_index(header, "left", true);
  std::size_t ci_t = detail::column_index(header, "top", true);
  std::size_t ci_w = detail::column_index(header, "width", true);
  std::size_t ci_h = detail::column_index(header, "height", true);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = csv::split(line);
    if (cells.size() < header.size())
      throw DataError("line " + std::to_string(line_no) + ": truncated annotation row");
    AnnotationRecord r;
    r.frame = csv::to_int(cells[ci_frame], line_no, "frame");
    r.vehicle_id = csv::to_int(cells[ci_id], line_no, "id");
    r.cls = class_from(cells[ci_cls]);
    r.left = csv::to_double(cells[ci_l], line_no, "left");
    r.top = csv::to_double(cells[ci_t], line_no, "top");
    r.width = csv::to_double(cells[ci_w], line_no, "width");
    r.height = csv::to_double(cells[ci_h], line_no, "height");
    if (r.frame < 0) throw DataError("line " + std::to_string(line_no) + ": negative frame");
    if (r.width <= 0 || r.height <= 0)
      throw DataError("line " + std::to_string(line_no) + ": non-positive bbox extent");
    out.push_back(r);
  }
  return out;
}

inline std::vector<AnnotationRecord> parse_annotations_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotation file: " + path);
  return parse_annotations(in);
}

// ---------------------------------------------------------------------------

/// Co-present vehicles over one observation+horizon window.
struct SceneWindow {
  std::int64_t anchor = 0;  // last observed frame
  std::vector<std::int64_t> ids;
  std::size_t t_in = 0;
  std::size_t h = 0;
  std::vector<double> observed;  // n * t_in * 2
  std::vector<double> future;    // n * h * 2
  Unit unit = Unit::pixel;
  double fps = 5.0;

  std::size_t n() const { return ids.size(); }
  bool operator==(const SceneWindow&) const = default;
};

/// Model input: absolute coordinates and first-step-anchored deltas.
struct SceneBatchInput {
  std::size_t n = 0;
  std::size_t t_in = 0;
  std::vector<double> V;   // n * t_in * 2
  std::vector<double> dV;  // n * t_in * 2, dV[i][0] == (0,0)
};

/// Sliding windows at the given stride. A vehicle is a subject of the window
/// anchored at frame f iff it is present on every frame of
/// [f - t_in + 1, f + H]; tracks with gaps are treated as their maximal
/// contiguous segments. Output ordering: ascending anchor, ids ascending.
inline std::vector<SceneWindow> build_windows(const TrackSet& ts, std::size_t t_in, std::size_t h,
                                              std::size_t stride = 1) {
  if (t_in + h < 2) throw ConfigError("build_windows: t_in + h must be >= 2");
  if (stride < 1) throw ConfigError("build_windows: stride must be >= 1");
  struct Seg {
    const Track* track;
    std::int64_t first;  // frame of segment start
    std::size_t begin;   // sample index of segment start
    std::int64_t last;
  };
  std::vector<Seg> segs;
  std::int64_t lo = 0, hi = -1;
  bool any = false;
  std::vector<const Track*> sorted;
  for (const Track& t : ts.tracks) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(),
            [](const Track* a, const Track* b) { return a->id < b->id; });
  for (const Track* t : sorted) {
    std::size_t start = 0;
    for (std::size_t i = 1; i <= t->samples.size(); ++i) {
      if (i == t->samples.size() || t->samples[i].frame != t->samples[i - 1].frame + 1) {
        segs.push_back({t, t->samples[start].frame, start, t->samples[i - 1].frame});
        start = i;
      }
    }
    if (!t->samples.empty()) {
      if (!any) { lo = t->samples.front().frame; hi = t->samples.back().frame; any = true; }
      lo = std::min(lo, t->samples.front().frame);
      hi = std::max(hi, t->samples.back().frame);
    }
  }
  std::vector<SceneWindow> out;
  if (!any) return out;
  const auto span = static_cast<std::int64_t>(t_in + h);
  for (std::int64_t f = lo + static_cast<std::int64_t>(t_in) - 1; f + static_cast<std::int64_t>(h) <= hi;
       f += static_cast<std::int64_t>(stride)) {
    std::int64_t w_first = f - static_cast<std::int64_t>(t_in) + 1;
    std::int64_t w_last = f + static_cast<std::int64_t>(h);
    SceneWindow w;
    w.anchor = f;
    w.t_in = t_in;
    w.h = h;
    w.unit = ts.unit;
    w.fps = ts.fps;
    for (const Seg& s : segs) {
      if (s.first > w_first || s.last < w_last) continue;
      w.ids.push_back(s.track->id);
      std::size_t base = s.begin + static_cast<std::size_t>(w_first - s.first);
      for (std::size_t k = 0; k < t_in + h; ++k) {
        const Sample& smp = s.track->samples[base + k];
        auto& dst = k < t_in ? w.observed : w.future;
        dst.push_back(smp.x);
        dst.push_back(smp.y);
      }
    }
    (void)span;
    if (!w.ids.empty()) out.push_back(std::move(w));
  }
  return out;
}

/// Relative coordinates anchored at each vehicle's first observed step.
inline SceneBatchInput make_relative(const SceneWindow& w) {
  SceneBatchInput b;
  b.n = w.n();
  b.t_in = w.t_in;
  b.V = w.observed;
  b.dV.resize(b.V.size());
  for (std::size_t i = 0; i < b.n; ++i) {
    double x0 = b.V[i * w.t_in * 2], y0 = b.V[i * w.t_in * 2 + 1];
    for (std::size_t t = 0; t < w.t_in; ++t) {
      b.dV[(i * w.t_in + t) * 2] = b.V[(i * w.t_in + t) * 2] - x0;
      b.dV[(i * w.t_in + t) * 2 + 1] = b.V[(i * w.t_in + t) * 2 + 1] - y0;
    }
  }
  return b;
}

struct SplitSpec {
  double train = 0.7, val = 0.2, test = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(train > 0 && val > 0 && test > 0))
      throw ConfigError("split: ratios must be positive");
    if (std::abs(train + val + test - 1.0) > 1e-9)
      throw ConfigError("split: ratios must sum to 1");
  }
};

struct SplitResult {
  std::vector<SceneWindow> train, val, test;
};

/// Deterministic Fisher-Yates shuffle by seed, then contiguous partition at
/// floor boundaries; the remainder goes to train.
inline SplitResult split(std::vector<SceneWindow> windows, const SplitSpec& spec) {
  spec.validate();
  RngStream rng(spec.seed, 0x5917u);  // dedicated split stream id
  for (std::size_t i = windows.size(); i > 1; --i)
    std::swap(windows[i - 1], windows[rng.next_u64() % i]);
  std::size_t n = windows.size();
  auto n_val = static_cast<std::size_t>(static_cast<double>(n) * spec.val);
  auto n_test = static_cast<std::size_t>(static_cast<double>(n) * spec.test);
  std::size_t n_train = n - n_val - n_test;
  SplitResult r;
  r.train.assign(windows.begin(), windows.begin() + n_train);
  r.val.assign(windows.begin() + n_train, windows.begin() + n_train + n_val);
  r.test.assign(windows.begin() + n_train + n_val, windows.end());
  return r;
}

// ---------------------------------------------------------------------------
// Windows file: JSON-lines, one scene per line.

inline void write_windows(const std::vector<SceneWindow>& windows, std::ostream& os) {
  for (const SceneWindow& w : windows) {
    nlohmann::json j;
    j["anchor"] = w.anchor;
    j["ids"] = w.ids;
    j["t_in"] = w.t_in;
    j["h"] = w.h;
    j["unit"] = unit_name(w.unit);
    j["fps"] = w.fps;
    j["observed"] = w.observed;
    j["future"] = w.future;
    os << j.dump() << "\n";
  }
}

inline void write_windows_file(const std::vector<SceneWindow>& windows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write windows file: " + path);
  write_windows(windows, os);
}

inline std::vector<SceneWindow> read_windows(std::istream& in) {
  std::vector<SceneWindow> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw DataError("windows line " + std::to_string(line_no) + ": invalid JSON");
    SceneWindow w;
    w.anchor = j.at("anchor").get<std::int64_t>();
    w.ids = j.at("ids").get<std::vector<std::int64_t>>();
    w.t_in = j.at("t_in").get<std::size_t>();
    w.h = j.at("h").get<std::size_t>();
    w.unit = unit_from(j.at("unit").get<std::string>());
    w.fps = j.at("fps").get<double>();
    w.observed = j.at("observed").get<std::vector<double>>();
    w.future = j.at("future").get<std::vector<double>>();
    if (w.observed.size() != w.n() * w.t_in * 2 || w.future.size() != w.n() * w.h * 2)
      throw DataError("windows line " + std::to_string(line_no) + ": inconsistent array sizes");
    out.push_back(std::move(w));
  }
  return out;
}

inline std::vector<SceneWindow> read_windows_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open windows file: " + path);
  return read_windows(in);
}

}  // namespace pv

#endif
