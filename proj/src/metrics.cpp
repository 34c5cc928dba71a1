#include "g2l/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "g2l/errors.hpp"

namespace g2l {

std::vector<Segment> to_segments(const LabelSequence& seq) {
  if (seq.empty()) throw ConfigError("to_segments: empty label sequence");
  std::vector<Segment> out;
  std::size_t begin = 0;
  for (std::size_t t = 1; t <= seq.size(); ++t) {
    if (t == seq.size() || seq[t] != seq[begin]) {
      out.push_back({seq[begin], begin, t});
      begin = t;
    }
  }
  return out;
}

LabelSequence expand_segments(const std::vector<Segment>& segments) {
  LabelSequence out;
  for (const auto& s : segments) {
    if (s.end <= s.begin) throw ConfigError("expand_segments: empty segment");
    out.insert(out.end(), s.end - s.begin, s.label);
  }
  return out;
}

double framewise_accuracy(const LabelSequence& pred, const LabelSequence& gt) {
  if (pred.size() != gt.size()) {
    throw ShapeError("framewise_accuracy: length mismatch (" + std::to_string(pred.size()) +
                     " vs " + std::to_string(gt.size()) + ")");
  }
  if (pred.empty()) throw ConfigError("framewise_accuracy: empty sequences");
  std::size_t hits = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) hits += pred[t] == gt[t];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pred.size());
}

namespace {

std::size_t levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<int> segment_classes(const LabelSequence& seq) {
  std::vector<int> out;
  for (const auto& s : to_segments(seq)) out.push_back(s.label);
  return out;
}

double segment_iou(const Segment& a, const Segment& b) {
  const auto inter_begin = std::max(a.begin, b.begin);
  const auto inter_end = std::min(a.end, b.end);
  if (inter_end <= inter_begin) return 0.0;
  const auto union_len = (a.end - a.begin) + (b.end - b.begin) - (inter_end - inter_begin);
  return static_cast<double>(inter_end - inter_begin) / static_cast<double>(union_len);
}

}  // namespace

double edit_score(const LabelSequence& pred, const LabelSequence& gt) {
  const auto p = segment_classes(pred);
  const auto g = segment_classes(gt);
  const std::size_t denom = std::max(p.size(), g.size());
  return 100.0 * (1.0 - static_cast<double>(levenshtein(p, g)) / static_cast<double>(denom));
}

F1Counts f1_counts(const LabelSequence& pred, const LabelSequence& gt, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw ConfigError("f1_at_iou: tau must lie in (0,1), got " + std::to_string(tau));
  }
  const auto pseg = to_segments(pred);
  const auto gseg = to_segments(gt);
  std::vector<char> matched(gseg.size(), 0);
  F1Counts counts;
  for (const auto& p : pseg) {
    bool hit = false;
    for (std::size_t j = 0; j < gseg.size(); ++j) {
      if (matched[j] || gseg[j].label != p.label) continue;
      if (gseg[j].begin >= p.end) break;  // later gt segments cannot overlap
      if (segment_iou(p, gseg[j]) > tau) {
        matched[j] = 1;
        hit = true;
        break;
      }
    }
    if (hit) {
      ++counts.tp;
    } else {
      ++counts.fp;
    }
  }
  for (char m : matched) counts.fn += m == 0;
  return counts;
}

double f1_from_counts(const F1Counts& c) {
  if (c.tp == 0) return 0.0;
  const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

double f1_at_iou(const LabelSequence& pred, const LabelSequence& gt, double tau) {
  if (pred.size() != gt.size()) {
    throw ShapeError("f1_at_iou: length mismatch (" + std::to_string(pred.size()) + " vs " +
                     std::to_string(gt.size()) + ")");
  }
  return f1_from_counts(f1_counts(pred, gt, tau));
}

double MetricsReport::f1_at(double tau) const {
  for (const auto& [t, v] : f1) {
    if (std::fabs(t - tau) < 1e-9) return v;
  }
  throw ConfigError("metrics report: no F1 entry at tau=" + std::to_string(tau));
}

MetricsReport report(const std::vector<LabelSequence>& preds,
                     const std::vector<LabelSequence>& gts,
                     const std::vector<double>& thresholds) {
  if (preds.empty()) throw ConfigError("metrics report: empty dataset");
  if (preds.size() != gts.size()) {
    throw ShapeError("metrics report: prediction/ground-truth count mismatch");
  }
  MetricsReport rep;
  std::size_t frames = 0, hits = 0;
  double edit_total = 0.0;
  std::vector<F1Counts> pooled(thresholds.size());
  for (std::size_t v = 0; v < preds.size(); ++v) {
    const auto& p = preds[v];
    const auto& g = gts[v];
    if (p.size() != g.size()) {
      throw ShapeError("metrics report: length mismatch in video " + std::to_string(v));
    }
    for (std::size_t t = 0; t < p.size(); ++t) hits += p[t] == g[t];
    frames += p.size();
    edit_total += edit_score(p, g);
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      const F1Counts c = f1_counts(p, g, thresholds[k]);
      pooled[k].tp += c.tp;
      pooled[k].fp += c.fp;
      pooled[k].fn += c.fn;
    }
  }
  rep.acc = 100.0 * static_cast<double>(hits) / static_cast<double>(frames);
  rep.edit = edit_total / static_cast<double>(preds.size());
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    rep.f1.emplace_back(thresholds[k], f1_from_counts(pooled[k]));
  }
  return rep;
}

std::string report_to_json(const MetricsReport& rep) {
  nlohmann::json j;
  j["acc"] = rep.acc;
  j["edit"] = rep.edit;
  nlohmann::json f1 = nlohmann::json::object();
  for (const auto& [tau, value] : rep.f1) {
    char key[16];
    std::snprintf(key, sizeof(key), "%.2f", tau);
    f1[key] = value;
  }
  j["f1"] = f1;
  return j.dump();
}

}  // namespace g2l
