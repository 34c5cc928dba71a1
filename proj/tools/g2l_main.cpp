#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "g2l/config.hpp"
#include "g2l/data.hpp"
#include "g2l/errors.hpp"
#include "g2l/global_search.hpp"
#include "g2l/local_search.hpp"
#include "g2l/metrics.hpp"
#include "g2l/structure.hpp"
#include "g2l/tcn.hpp"

namespace fs = std::filesystem;
using namespace g2l;

namespace {

// Raised by iteration callbacks when --stop-after is hit; the checkpoint on
// disk is already consistent at that point.
struct StopRequested {
  int after_iteration;
};

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string resume;
  std::vector<std::string> overrides;
  int stop_after = -1;
  std::string init_text;
  std::string init_file;
  int fold = -1;
};

FlatConfig merged_config(const CommonOpts& opts) {
  FlatConfig cfg = opts.config_path.empty() ? FlatConfig{} : FlatConfig::from_file(opts.config_path);
  for (const auto& ov : opts.overrides) cfg.apply_override(ov);
  if (opts.seed) cfg.set("seed", std::to_string(*opts.seed));
  if (opts.workers) cfg.set("workers", std::to_string(*opts.workers));
  return cfg;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

SynthTaskConfig parse_synth(FlatConfig& cfg, std::uint64_t root_seed) {
  SynthTaskConfig s;
  s.num_classes = static_cast<int>(cfg.get_int("data.classes", 6));
  s.num_videos = static_cast<int>(cfg.get_int("data.videos", 40));
  s.t_min = static_cast<std::size_t>(cfg.get_int("data.t_min", 400));
  s.t_max = static_cast<std::size_t>(cfg.get_int("data.t_max", 600));
  s.feature_dim = static_cast<std::size_t>(cfg.get_int("data.features", 12));
  s.segment_mean_len = cfg.get_double("data.seg_mean", 60.0);
  const std::string mode = cfg.get_string("data.seg_mode", "geometric");
  if (mode == "geometric") {
    s.length_mode = SegmentLengthMode::Geometric;
  } else if (mode == "uniform") {
    s.length_mode = SegmentLengthMode::Uniform;
  } else {
    throw ConfigError("data.seg_mode must be geometric|uniform, got '" + mode + "'");
  }
  s.min_segment_len = static_cast<std::size_t>(cfg.get_int("data.min_seg", 10));
  s.noise_sigma = cfg.get_double("data.sigma", 0.4);
  s.drift_prob = cfg.get_double("data.drift_prob", 0.5);
  s.drift_amp = cfg.get_double("data.drift_amp", 2.0);
  s.seed = derive_seed(root_seed, "data");
  s.validate();
  return s;
}

TcnConfig parse_tcn(FlatConfig& cfg) {
  TcnConfig t;
  t.hidden = static_cast<std::size_t>(cfg.get_int("tcn.hidden", 16));
  t.kernel = static_cast<std::size_t>(cfg.get_int("tcn.kernel", 3));
  return t;  // in_features/num_classes/structure filled per run
}

TrainingConfig parse_train(FlatConfig& cfg) {
  TrainingConfig t;
  t.epochs = static_cast<int>(cfg.get_int("train.epochs", 30));
  t.lr = cfg.get_double("train.lr", 0.05);
  t.momentum = cfg.get_double("train.momentum", 0.9);
  t.batch_size = static_cast<int>(cfg.get_int("train.batch", 4));
  t.smoothing_lambda = cfg.get_double("train.lambda", 0.15);
  t.smoothing_clip = cfg.get_double("train.clip", 16.0);
  t.validate();
  return t;
}

struct GlobalParams {
  GlobalSearchConfig gcfg;
  MetricSelector metric;
};

GlobalParams parse_global(FlatConfig& cfg, std::uint64_t root_seed) {
  GlobalParams p;
  p.gcfg.iterations = static_cast<int>(cfg.get_int("global.iterations", 100));
  p.gcfg.population_size = static_cast<int>(cfg.get_int("global.population", 50));
  p.gcfg.mutation_prob = cfg.get_double("global.mutation_prob", 0.2);
  p.gcfg.eval_epochs = static_cast<int>(cfg.get_int("global.eval_epochs", 5));
  p.gcfg.space = build_global_space(cfg.get_int("global.k", 2),
                                    static_cast<int>(cfg.get_int("global.max_exp", 10)));
  const auto stages = static_cast<std::size_t>(cfg.get_int("global.stages", 4));
  const auto layers = static_cast<std::size_t>(cfg.get_int("global.layers", 10));
  p.gcfg.shape.assign(stages, layers);
  p.gcfg.seed = derive_seed(root_seed, "global");
  p.metric = MetricSelector::parse(cfg.get_string("global.metric", "f1@0.1"));
  return p;
}

LocalSearchConfig parse_local(FlatConfig& cfg, std::uint64_t root_seed) {
  LocalSearchConfig l;
  l.iterations = static_cast<int>(cfg.get_int("local.iterations", 10));
  l.window_fraction = cfg.get_double("local.fraction", 0.1);
  l.sample_count = static_cast<int>(cfg.get_int("local.samples", 3));
  l.epochs_per_update = static_cast<int>(cfg.get_int("local.epochs_per_update", 3));
  l.pmf = pmf_kind_from_string(cfg.get_string("local.pmf", "abs"));
  l.seed = derive_seed(root_seed, "local");
  l.validate();
  return l;
}

int effective_workers(FlatConfig& cfg) {
  const auto w = static_cast<int>(cfg.get_int("workers", 0));
  if (w > 0) return w;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

struct Workspace {
  std::vector<FrameSequence> dataset;
  std::vector<FrameSequence> train_set;
  std::vector<FrameSequence> val_set;
  std::vector<FoldSplit> folds;
  std::size_t in_features = 0;
  std::size_t num_classes = 0;
};

Workspace load_workspace(const std::string& data_path, int fold) {
  Workspace ws;
  ws.dataset = load_dataset(data_path);
  const fs::path folds_path = fs::path(data_path) / "folds.json";
  if (!fs::exists(folds_path)) {
    throw ConfigError("no folds.json under '" + data_path + "'; generate the dataset with `synth`");
  }
  ws.folds = load_folds(folds_path.string());
  if (fold < 0 || fold >= static_cast<int>(ws.folds.size())) {
    throw ConfigError("fold index " + std::to_string(fold) + " out of range [0, " +
                      std::to_string(ws.folds.size()) + ")");
  }
  ws.train_set = select_by_ids(ws.dataset, ws.folds[static_cast<std::size_t>(fold)].train_ids);
  ws.val_set = select_by_ids(ws.dataset, ws.folds[static_cast<std::size_t>(fold)].val_ids);
  ws.in_features = ws.dataset.front().features.rows();
  int max_label = 0;
  for (const auto& seq : ws.dataset)
    for (int l : seq.labels) max_label = std::max(max_label, l);
  ws.num_classes = static_cast<std::size_t>(max_label) + 1;
  return ws;
}

std::string format_history_csv(const std::vector<HistoryRow>& rows) {
  std::string out = "iteration,best_fitness,mean_fitness,best_structure\n";
  char buf[64];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,", row.iteration, row.best_fitness,
                  row.mean_fitness);
    out += buf;
    out += encode_structure(row.best_structure);
    out += '\n';
  }
  return out;
}

std::string format_trajectory_csv(const std::vector<DilationStructure>& trajectory) {
  std::string out = "iteration,layer_index,dilation\n";
  for (std::size_t it = 0; it < trajectory.size(); ++it) {
    const auto flat = trajectory[it].flatten();
    for (std::size_t l = 0; l < flat.size(); ++l) {
      out += std::to_string(it) + "," + std::to_string(l) + "," + std::to_string(flat[l]) + "\n";
    }
  }
  return out;
}

DilationStructure initial_structure_from(const CommonOpts& opts) {
  if (!opts.init_text.empty()) return decode_structure(opts.init_text);
  if (!opts.init_file.empty()) {
    std::string text = slurp(opts.init_file);
    const auto nl = text.find_first_of("\r\n");
    if (nl != std::string::npos) text = text.substr(0, nl);
    return decode_structure(text);
  }
  throw ConfigError("an initial structure is required (--init or --init-file)");
}

// ---------------------------------------------------------------------------

int cmd_synth(const CommonOpts& opts) {
  FlatConfig cfg = merged_config(opts);
  const std::uint64_t root = cfg.get_u64("seed", 1);
  const SynthTaskConfig synth = parse_synth(cfg, root);
  const auto num_folds = static_cast<int>(cfg.get_int("folds.count", 4));
  cfg.ensure_all_consumed();

  fs::create_directories(opts.out_dir);
  write_text_file(fs::path(opts.out_dir) / "effective-config.txt", cfg.effective_echo());

  const auto dataset = generate_synthetic(synth);
  save_dataset(dataset, opts.out_dir);
  const auto folds = make_folds(sequence_ids(dataset), num_folds, derive_seed(root, "folds"));
  save_folds(folds, (fs::path(opts.out_dir) / "folds.json").string());

  std::size_t frames = 0;
  for (const auto& seq : dataset) frames += seq.labels.size();
  std::cout << "wrote " << dataset.size() << " sequences (" << frames << " frames, "
            << synth.num_classes << " classes, F=" << synth.feature_dim << ") to " << opts.out_dir
            << " with " << folds.size() << " folds\n";
  return 0;
}

GlobalSearchResult run_global_phase(const CommonOpts& opts, const Workspace& ws,
                                    GlobalSearchConfig gcfg, const MetricSelector& metric,
                                    const TcnConfig& tcn_base, const TrainingConfig& train_base,
                                    std::uint64_t root) {
  gcfg.validate();
  const std::uint64_t eval_root = derive_seed(root, "eval");

  std::mutex warn_mutex;
  std::vector<std::string> eval_warnings;
  FitnessFn fitness = [&](const DilationStructure& s, int epochs) {
    std::vector<std::string> local_warnings;
    const double f = evaluate_structure(s, ws.train_set, ws.val_set, epochs, metric, tcn_base,
                                        train_base, derive_seed(eval_root, structure_hash(s)),
                                        &local_warnings);
    if (!local_warnings.empty()) {
      std::lock_guard<std::mutex> lock(warn_mutex);
      eval_warnings.insert(eval_warnings.end(), local_warnings.begin(), local_warnings.end());
    }
    return f;
  };

  const fs::path ckpt_path = fs::path(opts.out_dir) / "population.ckpt";
  const fs::path history_path = fs::path(opts.out_dir) / "history.csv";
  IterationCallback on_iteration = [&](const GlobalSearchState& state) {
    write_text_file(ckpt_path, serialize_state(state, gcfg));
    write_text_file(history_path, format_history_csv(state.history));
    if (opts.stop_after >= 0 && state.next_iteration > opts.stop_after) {
      throw StopRequested{state.next_iteration - 1};
    }
  };

  GlobalSearchState resume_state;
  const GlobalSearchState* resume = nullptr;
  if (!opts.resume.empty()) {
    resume_state = deserialize_state(slurp(opts.resume), gcfg);
    resume = &resume_state;
  }

  GlobalSearchResult result = run_global_search(gcfg, fitness, on_iteration, resume);
  write_text_file(history_path, format_history_csv(result.history));
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& w : eval_warnings) std::cerr << "warning: " << w << '\n';
  return result;
}

int cmd_global(const CommonOpts& opts) {
  FlatConfig cfg = merged_config(opts);
  const std::uint64_t root = cfg.get_u64("seed", 1);
  const std::string data_path = cfg.require_string("data.path");
  const auto fold = static_cast<int>(cfg.get_int("folds.fold", 0));
  TcnConfig tcn_base = parse_tcn(cfg);
  const TrainingConfig train_base = parse_train(cfg);
  GlobalParams gp = parse_global(cfg, root);
  gp.gcfg.workers = effective_workers(cfg);
  cfg.ensure_all_consumed();

  fs::create_directories(opts.out_dir);
  write_text_file(fs::path(opts.out_dir) / "effective-config.txt", cfg.effective_echo());

  const Workspace ws = load_workspace(data_path, fold);
  tcn_base.in_features = ws.in_features;
  tcn_base.num_classes = ws.num_classes;

  try {
    const GlobalSearchResult result =
        run_global_phase(opts, ws, gp.gcfg, gp.metric, tcn_base, train_base, root);
    const auto& best = result.population.candidates.front();
    std::cout << "best structure: " << encode_structure(best.structure) << "\n";
    std::cout << "best fitness: " << best.fitness.value() << "\n";
    std::cout << "evaluator calls (nominal): " << result.nominal_evals << "\n";
  } catch (const StopRequested& stop) {
    std::cout << "stopped after iteration " << stop.after_iteration << "; resume with --resume "
              << (fs::path(opts.out_dir) / "population.ckpt").string() << "\n";
  }
  return 0;
}

struct LocalCheckpointWriter {
  fs::path out_dir;

  void operator()(const LocalSearchState& state) const {
    save_model(state.model, &state.velocity, (out_dir / "local_model.bin").string());
    nlohmann::json j;
    j["format"] = "G2LLOCAL1";
    j["next_iteration"] = state.next_iteration;
    j["structure"] = encode_structure(state.structure);
    j["rng_state"] = state.rng_state;
    nlohmann::json traj = nlohmann::json::array();
    for (const auto& s : state.trajectory) traj.push_back(encode_structure(s));
    j["trajectory"] = traj;
    j["loss_curve"] = state.loss_curve;
    j["model_file"] = "local_model.bin";
    write_text_file(out_dir / "local.ckpt", j.dump(2));
    write_text_file(out_dir / "trajectory.csv", format_trajectory_csv(state.trajectory));
  }
};

LocalSearchState load_local_checkpoint(const fs::path& ckpt_path) {
  LocalSearchState state;
  try {
    const nlohmann::json j = nlohmann::json::parse(slurp(ckpt_path));
    if (j.at("format").get<std::string>() != "G2LLOCAL1") {
      throw DataError("local checkpoint: unknown format tag");
    }
    state.next_iteration = j.at("next_iteration").get<int>();
    state.structure = decode_structure(j.at("structure").get<std::string>());
    state.rng_state = j.at("rng_state").get<std::string>();
    for (const auto& s : j.at("trajectory")) {
      state.trajectory.push_back(decode_structure(s.get<std::string>()));
    }
    state.loss_curve = j.at("loss_curve").get<std::vector<double>>();
    const fs::path model_file = ckpt_path.parent_path() / j.at("model_file").get<std::string>();
    state.model = load_model(model_file.string(), &state.velocity);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("local checkpoint: ") + e.what());
  }
  return state;
}

LocalSearchResult run_local_phase(const CommonOpts& opts, const Workspace& ws,
                                  const LocalSearchConfig& lcfg, const TcnConfig& tcn_base,
                                  const TrainingConfig& train_base,
                                  const DilationStructure& initial,
                                  const LocalSearchState* resume) {
  LocalSearchContext ctx;
  ctx.train_set = &ws.train_set;
  ctx.tcn = tcn_base;
  ctx.train = train_base;
  ctx.train.seed = 0;  // superseded by the search's own rng stream

  LocalCheckpointWriter writer{fs::path(opts.out_dir)};
  const LocalSearchResult result = run_local_search(initial, lcfg, ctx, writer, resume);

  write_text_file(fs::path(opts.out_dir) / "trajectory.csv",
                  format_trajectory_csv(result.trajectory));
  write_text_file(fs::path(opts.out_dir) / "structure.txt",
                  encode_structure(result.structure) + "\n");
  return result;
}

int cmd_local(const CommonOpts& opts) {
  FlatConfig cfg = merged_config(opts);
  const std::uint64_t root = cfg.get_u64("seed", 1);
  const std::string data_path = cfg.require_string("data.path");
  const auto fold = static_cast<int>(cfg.get_int("folds.fold", 0));
  TcnConfig tcn_base = parse_tcn(cfg);
  const TrainingConfig train_base = parse_train(cfg);
  const LocalSearchConfig lcfg = parse_local(cfg, root);
  cfg.ensure_all_consumed();

  LocalSearchState resume_state;
  const LocalSearchState* resume = nullptr;
  DilationStructure initial;
  if (!opts.resume.empty()) {
    resume_state = load_local_checkpoint(opts.resume);
    resume = &resume_state;
    initial = resume_state.trajectory.front();
  } else {
    initial = initial_structure_from(opts);
  }

  fs::create_directories(opts.out_dir);
  write_text_file(fs::path(opts.out_dir) / "effective-config.txt", cfg.effective_echo());

  const Workspace ws = load_workspace(data_path, fold);
  TcnConfig tcn = tcn_base;
  tcn.in_features = ws.in_features;
  tcn.num_classes = ws.num_classes;

  const LocalSearchResult result =
      run_local_phase(opts, ws, lcfg, tcn, train_base, initial, resume);
  std::cout << "final structure: " << encode_structure(result.structure) << "\n";
  return 0;
}

int cmd_g2l(const CommonOpts& opts) {
  FlatConfig cfg = merged_config(opts);
  const std::uint64_t root = cfg.get_u64("seed", 1);
  const std::string data_path = cfg.require_string("data.path");
  const auto fold = static_cast<int>(cfg.get_int("folds.fold", 0));
  TcnConfig tcn_base = parse_tcn(cfg);
  const TrainingConfig train_base = parse_train(cfg);
  GlobalParams gp = parse_global(cfg, root);
  gp.gcfg.workers = effective_workers(cfg);
  const LocalSearchConfig lcfg = parse_local(cfg, root);
  cfg.ensure_all_consumed();

  fs::create_directories(opts.out_dir);
  write_text_file(fs::path(opts.out_dir) / "effective-config.txt", cfg.effective_echo());

  const Workspace ws = load_workspace(data_path, fold);
  tcn_base.in_features = ws.in_features;
  tcn_base.num_classes = ws.num_classes;

  DilationStructure best;
  try {
    const GlobalSearchResult result =
        run_global_phase(opts, ws, gp.gcfg, gp.metric, tcn_base, train_base, root);
    best = result.population.candidates.front().structure;
  } catch (const StopRequested& stop) {
    std::cout << "stopped after iteration " << stop.after_iteration << "; resume with --resume "
              << (fs::path(opts.out_dir) / "population.ckpt").string() << "\n";
    return 0;
  }
  std::cout << "global best: " << encode_structure(best) << "\n";

  // Resume the local phase only when it belongs to this run's global result.
  LocalSearchState local_state;
  const LocalSearchState* local_resume = nullptr;
  const fs::path local_ckpt = fs::path(opts.out_dir) / "local.ckpt";
  if (!opts.resume.empty() && fs::exists(local_ckpt)) {
    local_state = load_local_checkpoint(local_ckpt);
    if (local_state.trajectory.front() == best) local_resume = &local_state;
  }

  const LocalSearchResult result =
      run_local_phase(opts, ws, lcfg, tcn_base, train_base, best, local_resume);
  std::cout << "final structure: " << encode_structure(result.structure) << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& opts) {
  FlatConfig cfg = merged_config(opts);
  const std::uint64_t root = cfg.get_u64("seed", 1);
  const std::string data_path = cfg.require_string("data.path");
  TcnConfig tcn_base = parse_tcn(cfg);
  const TrainingConfig tcfg_base = parse_train(cfg);
  const DilationStructure structure = initial_structure_from(opts);
  cfg.ensure_all_consumed();

  const auto dataset = load_dataset(data_path);
  const fs::path folds_path = fs::path(data_path) / "folds.json";
  if (!fs::exists(folds_path)) throw ConfigError("no folds.json under '" + data_path + "'");
  const auto folds = load_folds(folds_path.string());

  tcn_base.in_features = dataset.front().features.rows();
  int max_label = 0;
  for (const auto& seq : dataset)
    for (int l : seq.labels) max_label = std::max(max_label, l);
  tcn_base.num_classes = static_cast<std::size_t>(max_label) + 1;

  std::vector<int> fold_indices;
  if (opts.fold >= 0) {
    if (opts.fold >= static_cast<int>(folds.size())) {
      throw ConfigError("fold index " + std::to_string(opts.fold) + " out of range [0, " +
                        std::to_string(folds.size()) + ")");
    }
    fold_indices.push_back(opts.fold);
  } else {
    for (std::size_t i = 0; i < folds.size(); ++i) fold_indices.push_back(static_cast<int>(i));
  }

  fs::create_directories(opts.out_dir);
  write_text_file(fs::path(opts.out_dir) / "effective-config.txt", cfg.effective_echo());

  const std::vector<double> thresholds = {0.1, 0.25, 0.5};
  nlohmann::json out;
  out["structure"] = encode_structure(structure);
  nlohmann::json fold_reports = nlohmann::json::array();
  double mean_acc = 0.0, mean_edit = 0.0;
  std::vector<double> mean_f1(thresholds.size(), 0.0);

  for (int fold : fold_indices) {
    const auto& split = folds[static_cast<std::size_t>(fold)];
    const auto train_set = select_by_ids(dataset, split.train_ids);
    const auto val_set = select_by_ids(dataset, split.val_ids);

    TcnConfig mcfg = tcn_base;
    mcfg.structure = structure;
    mcfg.validate();
    TrainingConfig ft = tcfg_base;
    ft.seed = derive_seed(root, "eval-fold-" + std::to_string(fold));
    Rng init_rng(derive_seed(ft.seed, "init"));
    TcnModel model = build_model(mcfg, init_rng);
    const TrainResult tr = train(model, train_set, ft);

    std::string loss_csv = "epoch,loss\n";
    char buf[64];
    for (std::size_t e = 0; e < tr.loss_curve.size(); ++e) {
      std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", e + 1, tr.loss_curve[e]);
      loss_csv += buf;
    }
    write_text_file(fs::path(opts.out_dir) / ("loss_fold" + std::to_string(fold) + ".csv"),
                    loss_csv);

    std::vector<LabelSequence> preds, gts;
    for (const auto& seq : val_set) {
      preds.push_back(predict_labels(model, seq.features));
      gts.push_back(seq.labels);
    }
    const MetricsReport rep = report(preds, gts, thresholds);
    nlohmann::json jr = nlohmann::json::parse(report_to_json(rep));
    jr["fold"] = fold;
    fold_reports.push_back(jr);
    mean_acc += rep.acc;
    mean_edit += rep.edit;
    for (std::size_t k = 0; k < thresholds.size(); ++k) mean_f1[k] += rep.f1[k].second;
    std::cout << "fold " << fold << ": " << report_to_json(rep) << "\n";
  }

  const auto n = static_cast<double>(fold_indices.size());
  nlohmann::json mean;
  mean["acc"] = mean_acc / n;
  mean["edit"] = mean_edit / n;
  nlohmann::json mf1 = nlohmann::json::object();
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    char key[16];
    std::snprintf(key, sizeof(key), "%.2f", thresholds[k]);
    mf1[key] = mean_f1[k] / n;
  }
  mean["f1"] = mf1;
  out["folds"] = fold_reports;
  out["mean"] = mean;
  write_text_file(fs::path(opts.out_dir) / "report.json", out.dump(2) + "\n");
  std::cout << "mean: " << mean.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dilation-structure search for temporal convolutional networks"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto add_common = [&](CLI::App* sub, bool with_resume = true) {
    sub->add_option("--config", opts.config_path, "flat key=value config file");
    sub->add_option("--out", opts.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", opts.seed, "root seed (overrides config key 'seed')");
    sub->add_option("--workers", opts.workers, "evaluation worker threads (default: all cores)");
    sub->add_option("--set", opts.overrides, "config override key=value (repeatable)");
    if (with_resume) sub->add_option("--resume", opts.resume, "checkpoint file to resume from");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with folds");
  add_common(synth, false);

  auto* global = app.add_subcommand("global", "genetic coarse search over dilation structures");
  add_common(global);
  global->add_option("--stop-after", opts.stop_after,
                     "stop (checkpointed) after this many iterations");

  auto* local = app.add_subcommand("local", "expectation-guided iterative refinement");
  add_common(local);
  local->add_option("--init", opts.init_text, "initial structure text, e.g. 1,2,4|1,2,4");
  local->add_option("--init-file", opts.init_file, "file whose first line is the structure");

  auto* g2l = app.add_subcommand("g2l", "global search chained into local refinement");
  add_common(g2l);
  g2l->add_option("--stop-after", opts.stop_after,
                  "stop (checkpointed) after this many global iterations");

  auto* eval = app.add_subcommand("eval", "full-budget cross-validation of one structure");
  add_common(eval, false);
  eval->add_option("--init", opts.init_text, "structure text to evaluate");
  eval->add_option("--init-file", opts.init_file, "file whose first line is the structure");
  eval->add_option("--fold", opts.fold, "evaluate a single fold index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "G2L-ERROR: " << e.what() << '\n';
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(opts);
    if (global->parsed()) return cmd_global(opts);
    if (local->parsed()) return cmd_local(opts);
    if (g2l->parsed()) return cmd_g2l(opts);
    if (eval->parsed()) return cmd_eval(opts);
    std::cerr << "G2L-ERROR: no command\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "G2L-ERROR: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "G2L-ERROR: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "G2L-ERROR: " << e.what() << '\n';
    return 3;
  }
}
