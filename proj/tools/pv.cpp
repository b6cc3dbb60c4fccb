// pv: trajectory-prediction workbench command line.
//
// Subcommands cover the whole pipeline: tracker-output extraction, window
// building, synthetic data, training, evaluation, the dropout ablation sweep,
// the constant-velocity baseline, gradient checking, and parameter counting.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pishguve/bench.hpp"
#include "pishguve/extract.hpp"
#include "pishguve/metrics.hpp"
#include "pishguve/model.hpp"
#include "pishguve/runconfig.hpp"
#include "pishguve/synth.hpp"

namespace {

constexpr const char* kVersion = "pv 1.0.0";

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;  // section.key=value
};

pv::RunConfig resolve_config(const Common& c) {
  nlohmann::json j = nlohmann::json::object();
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw pv::DataError("cannot open config: " + c.config_path);
    j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw pv::ConfigError("config is not valid JSON: " + c.config_path);
  }
  for (const std::string& o : c.overrides) pv::apply_override(j, o);
  try {
    return pv::run_config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw pv::ConfigError(std::string("config: ") + e.what());
  }
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "run-config JSON file");
  cmd->add_option("--set", c.overrides,
                  "override a config value, e.g. --set model.latent_dim=32");
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw pv::DataError("cannot create output directory: " + dir);
}

std::istream& open_input(const std::string& path, std::ifstream& file) {
  if (path == "-") return std::cin;
  file.open(path);
  if (!file) throw pv::DataError("cannot open input: " + path);
  return file;
}

pv::TrackSet read_tracks_arg(const std::string& path) {
  std::ifstream file;
  return pv::parse_trajectories(open_input(path, file));
}

int run(int argc, char** argv) {
  CLI::App app{"trajectory prediction workbench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // extract
  auto* extract = app.add_subcommand("extract", "tracker CSV -> trajectories + stats");
  Common ex_common;
  std::string ex_in, ex_out;
  add_common(extract, ex_common);
  extract->add_option("--in", ex_in, "tracker CSV (frame,id,left,top,width,height,confidence,class)")
      ->required();
  extract->add_option("--out", ex_out, "output directory")->required();

  // windows
  auto* windows = app.add_subcommand("windows", "trajectories -> scene windows (JSON lines)");
  Common wi_common;
  std::string wi_in, wi_out;
  bool wi_split = false;
  add_common(windows, wi_common);
  windows->add_option("--in", wi_in, "trajectory CSV, - for stdin")->required();
  windows->add_option("--out", wi_out, "output directory")->required();
  windows->add_flag("--split", wi_split, "also write train/val/test window files");

  // synth
  auto* synth = app.add_subcommand("synth", "generate synthetic trajectories");
  Common sy_common;
  std::string sy_preset, sy_out = "-";
  add_common(synth, sy_common);
  synth->add_option("--preset", sy_preset, "linear-clean | merge-noisy | tiny-overfit");
  synth->add_option("--out", sy_out, "output directory, or - for CSV on stdout (default)");

  // train
  auto* train = app.add_subcommand("train", "train a model on a window file");
  Common tr_common;
  std::string tr_windows, tr_out;
  add_common(train, tr_common);
  train->add_option("--windows", tr_windows, "training windows (JSON lines)")->required();
  train->add_option("--out", tr_out, "output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a window file");
  Common ev_common;
  std::string ev_ck, ev_windows, ev_out;
  add_common(eval, ev_common);
  eval->add_option("--checkpoint", ev_ck, "checkpoint JSON")->required();
  eval->add_option("--windows", ev_windows, "evaluation windows")->required();
  eval->add_option("--out", ev_out, "optional output directory");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "dropout ablation sweep (9-cell default grid)");
  Common ab_common;
  std::string ab_train, ab_eval, ab_out;
  add_common(ablate, ab_common);
  ablate->add_option("--windows", ab_train, "training windows")->required();
  ablate->add_option("--eval-windows", ab_eval, "evaluation windows (default: same as training)");
  ablate->add_option("--out", ab_out, "output directory")->required();

  // baseline
  auto* baseline = app.add_subcommand("baseline", "constant-velocity baseline on trajectories");
  Common ba_common;
  std::string ba_in = "-", ba_out;
  add_common(baseline, ba_common);
  baseline->add_option("--in", ba_in, "trajectory CSV, - for stdin (default)");
  baseline->add_option("--out", ba_out, "optional output directory");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full model");
  Common gc_common;
  add_common(gradcheck, gc_common);

  // params
  auto* params = app.add_subcommand("params", "print the model's parameter count");
  Common pa_common;
  add_common(params, pa_common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems are exit 1; --help/--version are 0
  }

  if (extract->parsed()) {
    pv::RunConfig cfg = resolve_config(ex_common);
    auto obs = pv::parse_mot_file(ex_in);
    pv::PipelineResult res = pv::run_pipeline(obs, cfg.extract);
    ensure_out_dir(ex_out);
    pv::write_tracks_file(res.tracks, ex_out + "/trajectories.csv");
    std::ofstream stats(ex_out + "/stats.json");
    stats << res.stats.json().dump(2) << "\n";
    pv::write_effective_config(cfg, ex_out);
    std::cout << "tracks kept: " << res.tracks.tracks.size() << " of " << res.stats.assembled
              << "\n";
    return 0;
  }

  if (windows->parsed()) {
    pv::RunConfig cfg = resolve_config(wi_common);
    pv::TrackSet ts = read_tracks_arg(wi_in);
    auto ws = pv::build_windows(ts, cfg.model.t_in, cfg.model.horizon, cfg.data.stride);
    ensure_out_dir(wi_out);
    pv::write_windows_file(ws, wi_out + "/windows.jsonl");
    if (wi_split) {
      pv::SplitResult s = pv::split(ws, cfg.data.split);
      pv::write_windows_file(s.train, wi_out + "/train.jsonl");
      pv::write_windows_file(s.val, wi_out + "/val.jsonl");
      pv::write_windows_file(s.test, wi_out + "/test.jsonl");
    }
    pv::write_effective_config(cfg, wi_out);
    std::cout << "windows: " << ws.size() << "\n";
    return 0;
  }

  if (synth->parsed()) {
    pv::RunConfig cfg = resolve_config(sy_common);
    pv::SynthConfig sc = cfg.synth;
    if (!sy_preset.empty()) {
      auto suites = pv::standard_suites();
      auto it = suites.find(sy_preset);
      if (it == suites.end()) throw pv::ConfigError("unknown preset: " + sy_preset);
      sc = it->second;
    }
    pv::TrackSet ts = pv::generate(sc);
    if (sy_out == "-") {
      pv::write_tracks(ts, std::cout);
    } else {
      ensure_out_dir(sy_out);
      pv::write_tracks_file(ts, sy_out + "/tracks.csv");
      cfg.synth = sc;
      pv::write_effective_config(cfg, sy_out);
      std::cout << "tracks: " << ts.tracks.size() << "\n";
    }
    return 0;
  }

  if (train->parsed()) {
    pv::RunConfig cfg = resolve_config(tr_common);
    auto ws = pv::read_windows_file(tr_windows);
    pv::ModelParams mp = pv::init_params(cfg.model, pv::RngStream(cfg.train.seed, 0x1217u));
    pv::TrainResult res = pv::train(cfg.model, mp, ws, cfg.train);
    ensure_out_dir(tr_out);
    pv::save_checkpoint_file(mp, cfg.model, tr_out + "/checkpoint.json");
    std::ofstream log(tr_out + "/epochs.jsonl");
    pv::write_epoch_log(res.log, log);
    pv::write_effective_config(cfg, tr_out);
    if (res.aborted) {
      std::cerr << "training aborted: " << res.failure << "\n";
      return 3;
    }
    std::cout << "steps: " << res.steps << " final loss: "
              << (res.log.empty() ? 0.0 : res.log.back().loss) << "\n";
    return 0;
  }

  if (eval->parsed()) {
    auto [mp, mcfg] = pv::load_checkpoint_file(ev_ck);
    auto ws = pv::read_windows_file(ev_windows);
    pv::MetricsReport r = pv::evaluate(mcfg, mp, ws);
    std::cout << r.csv();
    if (!ev_out.empty()) {
      ensure_out_dir(ev_out);
      std::ofstream os(ev_out + "/metrics.csv");
      os << r.csv();
      std::ofstream js(ev_out + "/metrics.json");
      js << r.json().dump(2) << "\n";
    }
    return 0;
  }

  if (ablate->parsed()) {
    pv::RunConfig cfg = resolve_config(ab_common);
    auto train_ws = pv::read_windows_file(ab_train);
    auto eval_ws = ab_eval.empty() ? train_ws : pv::read_windows_file(ab_eval);
    auto rows = pv::ablate(cfg.model, cfg.train, train_ws, eval_ws, pv::default_ablation_grid());
    ensure_out_dir(ab_out);
    std::ofstream os(ab_out + "/ablation.csv");
    os << pv::ablation_csv(rows);
    pv::write_effective_config(cfg, ab_out);
    std::cout << pv::ablation_csv(rows);
    return 0;
  }

  if (baseline->parsed()) {
    pv::RunConfig cfg = resolve_config(ba_common);
    pv::TrackSet ts = read_tracks_arg(ba_in);
    auto ws = pv::build_windows(ts, cfg.model.t_in, cfg.model.horizon, cfg.data.stride);
    pv::MetricsReport r = pv::cv_evaluate(ws);
    std::cout << r.csv();
    if (!ba_out.empty()) {
      ensure_out_dir(ba_out);
      std::ofstream os(ba_out + "/metrics.csv");
      os << r.csv();
      pv::write_effective_config(cfg, ba_out);
    }
    return 0;
  }

  if (gradcheck->parsed()) {
    pv::ModelConfig mcfg = pv::ModelConfig::tiny();
    pv::ModelParams mp = pv::init_params(mcfg, pv::RngStream(22, 0));
    // move off the zero-bias init point: exact max-pool ties there make the
    // loss non-differentiable (see tests)
    pv::RngStream nudge(23, 0);
    for (auto& [name, t] : mp.named())
      for (double& v : t->mutable_data()) v += nudge.uniform(-0.05, 0.05);
    pv::RngStream brng(9, 77);
    pv::SceneBatchInput b;
    b.n = 2;
    b.t_in = mcfg.t_in;
    b.V.resize(b.n * b.t_in * 2);
    for (double& v : b.V) v = brng.uniform(-5.0, 5.0);
    b.dV.resize(b.V.size());
    for (std::size_t i = 0; i < b.n; ++i)
      for (std::size_t t = 0; t < b.t_in; ++t)
        for (std::size_t c2 = 0; c2 < 2; ++c2)
          b.dV[(i * b.t_in + t) * 2 + c2] =
              b.V[(i * b.t_in + t) * 2 + c2] - b.V[i * b.t_in * 2 + c2];
    std::vector<double> td(b.n * mcfg.horizon * 2);
    for (double& v : td) v = brng.uniform(-3.0, 3.0);
    pv::Tensor truth = pv::Tensor::from_data({b.n, mcfg.horizon, 2}, td);
    std::vector<pv::Tensor> flat;
    for (auto& [name, t] : mp.named()) flat.push_back(*t);
    auto loss = [&] {
      pv::RngStream rng(1, 1);
      return pv::mse(pv::forward(b, mp, mcfg, pv::Mode::eval, rng), truth);
    };
    double err = pv::grad_check(loss, flat, 1e-3);
    std::cout << "max relative error: " << err << "\n";
    return err < 1e-4 ? 0 : 3;
  }

  if (params->parsed()) {
    pv::RunConfig cfg = resolve_config(pa_common);
    std::cout << pv::count_params(cfg.model) << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const pv::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const pv::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const pv::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const pv::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const pv::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
