#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace g2l {

// Per-frame class ids, length T >= 1.
using LabelSequence = std::vector<int>;

// Maximal run of one class; [begin, end) in frames.
struct Segment {
  int label = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const Segment&) const = default;
};

std::vector<Segment> to_segments(const LabelSequence& seq);
LabelSequence expand_segments(const std::vector<Segment>& segments);

// 100 * matching frames / T. Lengths must agree.
double framewise_accuracy(const LabelSequence& pred, const LabelSequence& gt);

// 100 * (1 - lev(pred segment classes, gt segment classes) / max(len_p, len_g)),
// unit insert/delete/substitute costs.
double edit_score(const LabelSequence& pred, const LabelSequence& gt);

struct F1Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

// Greedy in-order matching: each predicted segment in temporal order claims
// the earliest not-yet-matched ground-truth segment of the same class whose
// IoU exceeds tau. Because segment overlap edges between two ordered interval
// families never cross, this greedy realizes the maximum one-to-one matching.
F1Counts f1_counts(const LabelSequence& pred, const LabelSequence& gt, double tau);

// F1 = 100 * 2PR/(P+R); 0/0 counts as 0. tau must lie in (0,1).
double f1_at_iou(const LabelSequence& pred, const LabelSequence& gt, double tau);

double f1_from_counts(const F1Counts& counts);

struct MetricsReport {
  double acc = 0.0;
  double edit = 0.0;
  std::vector<std::pair<double, double>> f1;  // (tau, score), in threshold order

  double f1_at(double tau) const;  // throws ConfigError if absent
};

// Dataset-level aggregation: accuracy pooled over all frames, edit averaged
// per video, F1 from TP/FP/FN pooled over all videos.
MetricsReport report(const std::vector<LabelSequence>& preds,
                     const std::vector<LabelSequence>& gts,
                     const std::vector<double>& thresholds = {0.1, 0.25, 0.5});

// {"acc": .., "edit": .., "f1": {"0.10": .., ...}}
std::string report_to_json(const MetricsReport& rep);

}  // namespace g2l
