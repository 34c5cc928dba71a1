#include "g2l/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "g2l/errors.hpp"
#include "g2l/rng.hpp"

namespace fs = std::filesystem;

namespace g2l {

void FrameSequence::validate() const {
  if (labels.empty()) throw DataError("sequence '" + id + "': empty");
  if (features.cols() != labels.size()) {
    throw DataError("sequence '" + id + "': feature frames (" + std::to_string(features.cols()) +
                    ") != label frames (" + std::to_string(labels.size()) + ")");
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!std::isfinite(features.data()[i])) {
      throw DataError("sequence '" + id + "': non-finite feature value");
    }
  }
  for (int l : labels) {
    if (l < 0) throw DataError("sequence '" + id + "': negative label");
  }
}

void SynthTaskConfig::validate() const {
  if (num_classes < 2) throw ConfigError("synth: num_classes must be >= 2");
  if (num_videos < 1) throw ConfigError("synth: num_videos must be >= 1");
  if (t_min < 10) throw ConfigError("synth: t_min must be >= 10");
  if (t_max < t_min) throw ConfigError("synth: t_max must be >= t_min");
  if (feature_dim < 1) throw ConfigError("synth: feature_dim must be >= 1");
  if (segment_mean_len < 1.0) throw ConfigError("synth: segment_mean_len must be >= 1");
  if (min_segment_len < 1) throw ConfigError("synth: min_segment_len must be >= 1");
  if (noise_sigma < 0.0) throw ConfigError("synth: noise_sigma must be >= 0");
  if (drift_prob < 0.0 || drift_prob > 1.0) throw ConfigError("synth: drift_prob must lie in [0,1]");
}

namespace {

// Quantize to float32 so that a save/load round trip reproduces the generated
// dataset exactly (the on-disk feature format is float32).
inline double as_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::size_t draw_segment_length(const SynthTaskConfig& cfg, Rng& rng) {
  std::size_t len = 0;
  if (cfg.length_mode == SegmentLengthMode::Geometric) {
    const double p = 1.0 / cfg.segment_mean_len;
    double u = rng.uniform();
    while (u >= 1.0) u = rng.uniform();
    len = 1 + static_cast<std::size_t>(std::floor(std::log1p(-u) / std::log1p(-p)));
  } else {
    const auto lo = static_cast<std::int64_t>(std::max(1.0, cfg.segment_mean_len * 0.5));
    const auto hi = static_cast<std::int64_t>(std::max(1.0, cfg.segment_mean_len * 1.5));
    len = static_cast<std::size_t>(rng.uniform_int(lo, hi));
  }
  return std::max(len, cfg.min_segment_len);
}

}  // namespace

std::vector<FrameSequence> generate_synthetic(const SynthTaskConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  const auto K = static_cast<std::size_t>(cfg.num_classes);
  const std::size_t F = cfg.feature_dim;
  const std::size_t num_pairs = (K + 1) / 2;

  // Class prototypes and per-pair drift bases/directions.
  std::vector<std::vector<double>> proto(K, std::vector<double>(F));
  for (auto& v : proto)
    for (auto& x : v) x = rng.normal();
  std::vector<std::vector<double>> pair_base(num_pairs, std::vector<double>(F));
  std::vector<std::vector<double>> pair_dir(num_pairs, std::vector<double>(F));
  for (std::size_t p = 0; p < num_pairs; ++p) {
    for (auto& x : pair_base[p]) x = rng.normal();
    double norm2 = 0.0;
    for (auto& x : pair_dir[p]) {
      x = rng.normal();
      norm2 += x * x;
    }
    const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-12));
    for (auto& x : pair_dir[p]) x *= inv;
  }

  std::vector<FrameSequence> out;
  out.reserve(static_cast<std::size_t>(cfg.num_videos));
  for (int v = 0; v < cfg.num_videos; ++v) {
    const auto T = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(cfg.t_min), static_cast<std::int64_t>(cfg.t_max)));
    FrameSequence seq;
    char name[32];
    std::snprintf(name, sizeof(name), "seq%04d", v);
    seq.id = name;
    seq.features = Matrix(F, T, 0.0);
    seq.labels.assign(T, 0);

    std::size_t t = 0;
    int prev_class = -1;
    while (t < T) {
      int cls = static_cast<int>(rng.uniform_int(0, cfg.num_classes - 1));
      if (cls == prev_class) cls = (cls + 1) % cfg.num_classes;
      prev_class = cls;
      const std::size_t len = std::min(draw_segment_length(cfg, rng), T - t);
      const bool drift = rng.uniform() < cfg.drift_prob;
      const std::size_t pair = static_cast<std::size_t>(cls) / 2;
      const double sign = cls % 2 == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double ramp =
            len > 1 ? static_cast<double>(i) / static_cast<double>(len - 1) - 0.5 : 0.0;
        for (std::size_t f = 0; f < F; ++f) {
          double value;
          if (drift) {
            value = pair_base[pair][f] + sign * ramp * cfg.drift_amp * pair_dir[pair][f];
          } else {
            value = proto[static_cast<std::size_t>(cls)][f];
          }
          value += cfg.noise_sigma * rng.normal();
          seq.features.at(f, t + i) = as_f32(value);
        }
        seq.labels[t + i] = cls;
      }
      t += len;
    }
    seq.validate();
    out.push_back(std::move(seq));
  }
  return out;
}

namespace {

constexpr char kFeatureMagic[6] = {'G', '2', 'L', 'F', 'T', '1'};

void write_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated feature file: " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ofstream& f, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(f, bits);
}

std::string label_token(int id) { return "a" + std::to_string(id); }

}  // namespace

void save_dataset(const std::vector<FrameSequence>& sequences, const std::string& dir) {
  if (sequences.empty()) throw ConfigError("save_dataset: empty dataset");
  fs::create_directories(dir);

  int max_label = 0;
  for (const auto& seq : sequences) {
    seq.validate();
    for (int l : seq.labels) max_label = std::max(max_label, l);
  }
  {
    std::ofstream map(fs::path(dir) / "mapping.txt");
    if (!map) throw DataError("save_dataset: cannot write mapping.txt under " + dir);
    for (int l = 0; l <= max_label; ++l) map << l << ' ' << label_token(l) << '\n';
  }

  for (const auto& seq : sequences) {
    const fs::path feat_path = fs::path(dir) / (seq.id + ".feat");
    std::ofstream feat(feat_path, std::ios::binary);
    if (!feat) throw DataError("save_dataset: cannot write " + feat_path.string());
    feat.write(kFeatureMagic, sizeof(kFeatureMagic));
    write_u32(feat, static_cast<std::uint32_t>(seq.features.rows()));
    write_u32(feat, static_cast<std::uint32_t>(seq.features.cols()));
    for (std::size_t t = 0; t < seq.features.cols(); ++t) {
      for (std::size_t f = 0; f < seq.features.rows(); ++f) {
        write_f32(feat, static_cast<float>(seq.features.at(f, t)));
      }
    }
    std::ofstream lab(fs::path(dir) / (seq.id + ".txt"));
    if (!lab) throw DataError("save_dataset: cannot write labels for " + seq.id);
    for (int l : seq.labels) lab << label_token(l) << '\n';
  }
}

std::vector<FrameSequence> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("load_dataset: no such directory: " + dir);

  std::unordered_map<std::string, int> token_to_id;
  {
    const fs::path map_path = fs::path(dir) / "mapping.txt";
    std::ifstream map(map_path);
    if (!map) throw DataError("load_dataset: missing " + map_path.string());
    std::string line;
    while (std::getline(map, line)) {
      if (line.empty()) continue;
      const auto space = line.find(' ');
      if (space == std::string::npos) {
        throw DataError("load_dataset: malformed mapping line '" + line + "' in " +
                        map_path.string());
      }
      try {
        token_to_id[line.substr(space + 1)] = std::stoi(line.substr(0, space));
      } catch (const std::exception&) {
        throw DataError("load_dataset: malformed mapping line '" + line + "' in " +
                        map_path.string());
      }
    }
  }

  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".feat") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw DataError("load_dataset: no .feat files under " + dir);

  std::vector<FrameSequence> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const fs::path feat_path = fs::path(dir) / (id + ".feat");
    std::ifstream feat(feat_path, std::ios::binary);
    if (!feat) throw DataError("load_dataset: cannot open " + feat_path.string());
    char magic[sizeof(kFeatureMagic)];
    if (!feat.read(magic, sizeof(magic)) || std::memcmp(magic, kFeatureMagic, sizeof(magic)) != 0) {
      throw DataError("load_dataset: bad magic in " + feat_path.string());
    }
    const std::uint32_t F = read_u32(feat, feat_path.string());
    const std::uint32_t T = read_u32(feat, feat_path.string());
    FrameSequence seq;
    seq.id = id;
    seq.features = Matrix(F, T, 0.0);
    for (std::uint32_t t = 0; t < T; ++t) {
      for (std::uint32_t f = 0; f < F; ++f) {
        const std::uint32_t bits = read_u32(feat, feat_path.string());
        float v;
        std::memcpy(&v, &bits, 4);
        seq.features.at(f, t) = static_cast<double>(v);
      }
    }

    const fs::path lab_path = fs::path(dir) / (id + ".txt");
    std::ifstream lab(lab_path);
    if (!lab) throw DataError("load_dataset: missing label file " + lab_path.string());
    std::string token;
    while (std::getline(lab, token)) {
      if (token.empty()) continue;
      const auto it = token_to_id.find(token);
      if (it == token_to_id.end()) {
        throw DataError("load_dataset: unknown label token '" + token + "' in " +
                        lab_path.string());
      }
      seq.labels.push_back(it->second);
    }
    if (seq.labels.size() != T) {
      throw DataError("load_dataset: " + lab_path.string() + " has " +
                      std::to_string(seq.labels.size()) + " labels but " + feat_path.string() +
                      " has " + std::to_string(T) + " frames");
    }
    seq.validate();
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<FoldSplit> make_folds(const std::vector<std::string>& ids, int num_folds,
                                  std::uint64_t seed) {
  if (num_folds < 2) throw ConfigError("make_folds: num_folds must be >= 2");
  if (ids.size() < static_cast<std::size_t>(num_folds)) {
    throw ConfigError("make_folds: need at least " + std::to_string(num_folds) + " ids, got " +
                      std::to_string(ids.size()));
  }
  std::vector<std::string> shuffled = ids;
  Rng rng(seed);
  rng.shuffle(shuffled);

  const std::size_t n = shuffled.size();
  const auto k = static_cast<std::size_t>(num_folds);
  std::vector<FoldSplit> folds;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t size = n / k + (i < n % k ? 1 : 0);
    FoldSplit split;
    split.fold = static_cast<int>(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j >= begin && j < begin + size) {
        split.val_ids.push_back(shuffled[j]);
      } else {
        split.train_ids.push_back(shuffled[j]);
      }
    }
    begin += size;
    folds.push_back(std::move(split));
  }
  return folds;
}

void save_folds(const std::vector<FoldSplit>& folds, const std::string& path) {
  nlohmann::json j;
  j["num_folds"] = folds.size();
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : folds) {
    arr.push_back({{"fold", f.fold}, {"train", f.train_ids}, {"val", f.val_ids}});
  }
  j["folds"] = arr;
  std::ofstream out(path);
  if (!out) throw DataError("save_folds: cannot write " + path);
  out << j.dump(2) << '\n';
}

std::vector<FoldSplit> load_folds(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_folds: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_folds: malformed JSON in " + path + ": " + e.what());
  }
  std::vector<FoldSplit> folds;
  try {
    for (const auto& f : j.at("folds")) {
      FoldSplit split;
      split.fold = f.at("fold").get<int>();
      split.train_ids = f.at("train").get<std::vector<std::string>>();
      split.val_ids = f.at("val").get<std::vector<std::string>>();
      folds.push_back(std::move(split));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_folds: missing field in " + path + ": " + e.what());
  }
  return folds;
}

std::vector<FrameSequence> select_by_ids(const std::vector<FrameSequence>& all,
                                         const std::vector<std::string>& ids) {
  std::map<std::string, const FrameSequence*> index;
  for (const auto& seq : all) index[seq.id] = &seq;
  std::vector<FrameSequence> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw DataError("select_by_ids: unknown sequence id '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

std::vector<std::string> sequence_ids(const std::vector<FrameSequence>& all) {
  std::vector<std::string> out;
  out.reserve(all.size());
  for (const auto& seq : all) out.push_back(seq.id);
  return out;
}

}  // namespace g2l
