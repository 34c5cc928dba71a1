#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "g2l/data.hpp"
#include "g2l/errors.hpp"
#include "g2l/metrics.hpp"
#include "g2l/tcn.hpp"

using namespace g2l;
namespace fs = std::filesystem;

namespace {

SynthTaskConfig tiny_config() {
  SynthTaskConfig cfg;
  cfg.num_classes = 3;
  cfg.num_videos = 4;
  cfg.t_min = 40;
  cfg.t_max = 60;
  cfg.feature_dim = 5;
  cfg.segment_mean_len = 12.0;
  cfg.min_segment_len = 4;
  cfg.noise_sigma = 0.2;
  cfg.drift_prob = 0.3;
  cfg.seed = 77;
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "g2l_data_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("synthetic generation is deterministic") {
  const auto cfg = tiny_config();
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].labels == b[i].labels);
    CHECK(a[i].features == b[i].features);
  }
}

TEST_CASE("synthetic segment lengths track the configured mean") {
  SynthTaskConfig cfg = tiny_config();
  cfg.num_videos = 300;
  cfg.t_min = 600;
  cfg.t_max = 600;
  cfg.segment_mean_len = 30.0;
  cfg.min_segment_len = 1;
  cfg.drift_prob = 0.0;
  cfg.noise_sigma = 0.0;
  cfg.feature_dim = 1;
  const auto data = generate_synthetic(cfg);

  std::size_t segments = 0, frames = 0;
  for (const auto& seq : data) {
    // Drop each sequence's final segment: it is truncated by the video end
    // and would bias the mean down.
    const auto segs = to_segments(seq.labels);
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
      ++segments;
      frames += segs[i].end - segs[i].begin;
    }
  }
  REQUIRE(segments > 5000);
  const double mean = static_cast<double>(frames) / static_cast<double>(segments);
  CHECK(mean == doctest::Approx(30.0).epsilon(0.10));
}

TEST_CASE("noise-free drift-free task is separable by a one-frame receptive field") {
  SynthTaskConfig cfg = tiny_config();
  cfg.noise_sigma = 0.0;
  cfg.drift_prob = 0.0;
  cfg.num_videos = 6;
  const auto data = generate_synthetic(cfg);

  TcnConfig mcfg;
  mcfg.in_features = cfg.feature_dim;
  mcfg.hidden = 8;
  mcfg.num_classes = static_cast<std::size_t>(cfg.num_classes);
  mcfg.structure = decode_structure("1,1");
  TrainingConfig tcfg;
  tcfg.epochs = 60;
  tcfg.lr = 0.1;
  tcfg.smoothing_lambda = 0.0;
  tcfg.seed = 3;

  Rng rng(9);
  TcnModel model = build_model(mcfg, rng);
  train(model, data, tcfg);

  std::vector<LabelSequence> preds, gts;
  for (const auto& seq : data) {
    preds.push_back(predict_labels(model, seq.features));
    gts.push_back(seq.labels);
  }
  const auto rep = report(preds, gts, {0.1});
  CHECK(rep.acc > 99.0);
}

TEST_CASE("dataset save/load round trip") {
  const auto dir = fresh_dir("roundtrip");
  const auto data = generate_synthetic(tiny_config());
  save_dataset(data, dir.string());
  const auto loaded = load_dataset(dir.string());
  REQUIRE(loaded.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(loaded[i].id == data[i].id);
    CHECK(loaded[i].labels == data[i].labels);
    CHECK(loaded[i].features == data[i].features);
  }
}

TEST_CASE("load errors name the offending file") {
  const auto dir = fresh_dir("badlabels");
  const auto data = generate_synthetic(tiny_config());
  save_dataset(data, dir.string());

  SUBCASE("label/feature length mismatch") {
    const fs::path lab = dir / (data[0].id + ".txt");
    std::ofstream out(lab);  // truncate to a single label line
    out << "a0\n";
    out.close();
    try {
      load_dataset(dir.string());
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(data[0].id) != std::string::npos);
      CHECK(std::string(e.what()).find("labels") != std::string::npos);
    }
  }

  SUBCASE("unknown label token") {
    const fs::path lab = dir / (data[1].id + ".txt");
    std::ofstream out(lab, std::ios::app);
    out << "mystery\n";
    out.close();
    try {
      load_dataset(dir.string());
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("mystery") != std::string::npos);
      CHECK(std::string(e.what()).find(data[1].id) != std::string::npos);
    }
  }

  SUBCASE("missing mapping.txt") {
    fs::remove(dir / "mapping.txt");
    CHECK_THROWS_AS(load_dataset(dir.string()), DataError);
  }
}

TEST_CASE("fold construction") {
  std::vector<std::string> ids;
  for (int i = 0; i < 8; ++i) ids.push_back("s" + std::to_string(i));

  const auto folds = make_folds(ids, 4, 5);
  REQUIRE(folds.size() == 4);
  std::set<std::string> all_val;
  for (const auto& f : folds) {
    CHECK(f.val_ids.size() == 2);
    CHECK(f.train_ids.size() == 6);
    for (const auto& id : f.val_ids) {
      CHECK(all_val.insert(id).second);  // disjoint
      CHECK(std::find(f.train_ids.begin(), f.train_ids.end(), id) == f.train_ids.end());
    }
  }
  CHECK(all_val.size() == ids.size());  // coverage

  const auto again = make_folds(ids, 4, 5);
  for (std::size_t i = 0; i < folds.size(); ++i) {
    CHECK(folds[i].val_ids == again[i].val_ids);
    CHECK(folds[i].train_ids == again[i].train_ids);
  }

  CHECK_THROWS_AS(make_folds({"a", "b"}, 4, 0), ConfigError);
  CHECK_THROWS_AS(make_folds(ids, 1, 0), ConfigError);
}

TEST_CASE("folds partition for uneven sizes") {
  std::vector<std::string> ids;
  for (int i = 0; i < 11; ++i) ids.push_back("v" + std::to_string(i));
  const auto folds = make_folds(ids, 4, 123);
  std::size_t total = 0;
  for (const auto& f : folds) {
    CHECK(f.val_ids.size() >= 2);
    CHECK(f.val_ids.size() <= 3);
    total += f.val_ids.size();
  }
  CHECK(total == ids.size());
}

TEST_CASE("folds json round trip") {
  std::vector<std::string> ids;
  for (int i = 0; i < 9; ++i) ids.push_back("v" + std::to_string(i));
  const auto folds = make_folds(ids, 3, 42);
  const auto dir = fresh_dir("folds");
  const auto path = (dir / "folds.json").string();
  save_folds(folds, path);
  const auto loaded = load_folds(path);
  REQUIRE(loaded.size() == folds.size());
  for (std::size_t i = 0; i < folds.size(); ++i) {
    CHECK(loaded[i].fold == folds[i].fold);
    CHECK(loaded[i].train_ids == folds[i].train_ids);
    CHECK(loaded[i].val_ids == folds[i].val_ids);
  }
}

TEST_CASE("config validation") {
  SynthTaskConfig cfg = tiny_config();
  cfg.num_classes = 1;
  CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
  cfg = tiny_config();
  cfg.t_min = 5;
  CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
  cfg = tiny_config();
  cfg.noise_sigma = -1.0;
  CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
}

TEST_CASE("select_by_ids") {
  const auto data = generate_synthetic(tiny_config());
  const auto subset = select_by_ids(data, {data[2].id, data[0].id});
  REQUIRE(subset.size() == 2);
  CHECK(subset[0].id == data[2].id);
  CHECK(subset[1].id == data[0].id);
  CHECK_THROWS_AS(select_by_ids(data, {"nope"}), DataError);
}
