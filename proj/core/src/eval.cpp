#include "uws/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "uws/common.hpp"

namespace uws {

double PrfCounts::fscore() const {
  const double p = precision(), r = recall();
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

std::vector<double> project_boundaries(const Segmentation &seg) {
  std::vector<double> times;
  for (int k = 0; k + 1 < seg.n_words(); ++k)
    times.push_back(seg.words[k].end_s());
  return times;
}

static PrfCounts match_utterance(const std::vector<double> &hyp,
                                 const std::vector<double> &gold,
                                 double tol) {
  for (std::size_t i = 1; i < hyp.size(); ++i)
    if (hyp[i] < hyp[i - 1]) throw Error("boundary_score: unsorted hypothesis");
  for (std::size_t i = 1; i < gold.size(); ++i)
    if (gold[i] < gold[i - 1]) throw Error("boundary_score: unsorted gold");
  PrfCounts c;
  c.hyp = static_cast<long long>(hyp.size());
  c.gold = static_cast<long long>(gold.size());
  std::size_t i = 0, j = 0;
  while (i < hyp.size() && j < gold.size()) {
    if (std::abs(hyp[i] - gold[j]) <= tol + 1e-12) {
      ++c.hits;
      ++i;
      ++j;
    } else if (hyp[i] < gold[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return c;
}

BoundaryReport boundary_score(
    const std::map<std::string, std::vector<double>> &hyp,
    const std::map<std::string, std::vector<double>> &gold,
    double tolerance_s) {
  BoundaryReport rep;
  for (const auto &[id, gold_times] : gold) {
    auto it = hyp.find(id);
    static const std::vector<double> kEmpty;
    const std::vector<double> &hyp_times = it == hyp.end() ? kEmpty : it->second;
    PrfCounts c = match_utterance(hyp_times, gold_times, tolerance_s);
    rep.per_utterance[id] = c;
    rep.counts.hits += c.hits;
    rep.counts.hyp += c.hyp;
    rep.counts.gold += c.gold;
  }
  // Hypothesis boundaries for utterances without gold still count against
  // precision.
  for (const auto &[id, hyp_times] : hyp)
    if (!gold.count(id)) {
      PrfCounts c;
      c.hyp = static_cast<long long>(hyp_times.size());
      rep.per_utterance[id] = c;
      rep.counts.hyp += c.hyp;
    }
  return rep;
}

BoundaryReport boundary_score(const std::vector<Segmentation> &hyp,
                              const std::vector<Segmentation> &gold,
                              double tolerance_s) {
  std::map<std::string, std::vector<double>> h, g;
  for (const Segmentation &s : hyp) h[s.utterance_id] = project_boundaries(s);
  for (const Segmentation &s : gold) g[s.utterance_id] = project_boundaries(s);
  return boundary_score(h, g, tolerance_s);
}

static bool same_span(const Word &a, const Word &b) {
  return std::abs(a.start_s() - b.start_s()) <= 1e-9 &&
         std::abs(a.end_s() - b.end_s()) <= 1e-9;
}

TypeReport token_type_score(const std::vector<Segmentation> &hyp,
                            const std::vector<Segmentation> &gold) {
  std::map<std::string, const Segmentation *> gold_by_id;
  for (const Segmentation &s : gold) gold_by_id[s.utterance_id] = &s;

  TypeReport rep;
  std::set<std::string> hyp_types, gold_types;
  long long hyp_tokens = 0;
  for (const Segmentation &h : hyp) {
    auto it = gold_by_id.find(h.utterance_id);
    if (it == gold_by_id.end())
      throw Error("token_type_score: no gold for utterance '" +
                  h.utterance_id + "'");
    const Segmentation &g = *it->second;
    rep.token_counts.hyp += h.n_words();
    rep.token_counts.gold += g.n_words();
    hyp_tokens += h.n_words();
    for (const Word &w : h.words) hyp_types.insert(w.label());
    for (const Word &w : g.words) gold_types.insert(w.label());
    // One-to-one token matching on (label, span).
    std::vector<bool> used(g.words.size(), false);
    for (const Word &hw : h.words)
      for (std::size_t j = 0; j < g.words.size(); ++j)
        if (!used[j] && hw.label() == g.words[j].label() &&
            same_span(hw, g.words[j])) {
          used[j] = true;
          ++rep.token_counts.hits;
          break;
        }
  }
  rep.type_counts.hyp = static_cast<long long>(hyp_types.size());
  rep.type_counts.gold = static_cast<long long>(gold_types.size());
  for (const std::string &t : hyp_types)
    if (gold_types.count(t)) ++rep.type_counts.hits;
  rep.type_token_ratio =
      hyp_tokens ? double(hyp_types.size()) / double(hyp_tokens) : 0.0;
  return rep;
}

}  // namespace uws
