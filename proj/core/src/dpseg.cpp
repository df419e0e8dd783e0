#include "uws/dpseg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "uws/common.hpp"

namespace uws {

std::vector<double> DpsegConfig::schedule() const {
  if (!anneal.empty()) return anneal;
  std::vector<double> temps;
  for (int k = 0; k < 10; ++k) temps.push_back(2.0 - k / 9.0);
  return temps;
}

void DpsegConfig::validate() const {
  if (alpha0 <= 0.0) throw Error("DpsegConfig: alpha0 must be > 0");
  if (p_boundary <= 0.0 || p_boundary >= 1.0)
    throw Error("DpsegConfig: p_boundary must be in (0,1)");
  if (n_sweeps < 1) throw Error("DpsegConfig: n_sweeps < 1");
  for (double t : anneal)
    if (t <= 0.0) throw Error("DpsegConfig: non-positive temperature");
}

void CrpState::add(const std::string &word) {
  ++counts[word];
  ++n;
}

void CrpState::remove(const std::string &word) {
  auto it = counts.find(word);
  if (it == counts.end() || it->second == 0)
    throw Error("CrpState: removing absent word '" + word + "'");
  if (--it->second == 0) counts.erase(it);
  --n;
}

long long CrpState::count(const std::string &word) const {
  auto it = counts.find(word);
  return it == counts.end() ? 0 : it->second;
}

void CrpState::check_consistent() const {
  long long sum = 0;
  for (const auto &[w, c] : counts) {
    if (c < 1) throw Error("CrpState: non-positive count for '" + w + "'");
    sum += c;
  }
  if (sum != n) throw Error("CrpState: token total does not match table");
}

double log_p0(int word_len, const DpsegConfig &cfg) {
  if (word_len < 1) throw Error("p0: empty word");
  if (cfg.alphabet_size < 1) throw Error("p0: alphabet size not set");
  return std::log(cfg.p_boundary) +
         (word_len - 1) * std::log1p(-cfg.p_boundary) -
         word_len * std::log(double(cfg.alphabet_size));
}

double log_p0(const std::vector<std::string> &labels, const DpsegConfig &cfg) {
  return log_p0(static_cast<int>(labels.size()), cfg);
}

double log_crp_predictive(const std::string &word_key, int word_len,
                          const CrpState &state, const DpsegConfig &cfg) {
  const double num = state.count(word_key) +
                     cfg.alpha0 * std::exp(log_p0(word_len, cfg));
  return std::log(num) - std::log(double(state.n) + cfg.alpha0);
}

double boundary_probability(const std::string &left, int left_len,
                            const std::string &right, int right_len,
                            const std::string &merged, const CrpState &state,
                            const DpsegConfig &cfg, double temperature) {
  const double lp_merge =
      log_crp_predictive(merged, left_len + right_len, state, cfg);
  // Second word's predictive accounts for the first being in the state.
  double lp_split = log_crp_predictive(left, left_len, state, cfg);
  const double num = state.count(right) + (left == right ? 1.0 : 0.0) +
                     cfg.alpha0 * std::exp(log_p0(right_len, cfg));
  lp_split += std::log(num) - std::log(double(state.n) + 1.0 + cfg.alpha0);

  const double d = (lp_merge - lp_split) / temperature;
  return 1.0 / (1.0 + std::exp(d));
}

// --------------------------------------------------------------------------
// Gibbs sampler.

namespace {

struct Utt {
  std::string id;
  std::vector<std::string> labels;
  std::vector<UnitToken> tokens;
  std::vector<std::uint8_t> boundary;  // size len-1
};

std::string key_of(const std::vector<std::string> &labels, int lo, int hi) {
  std::string key = labels[lo];
  for (int i = lo + 1; i < hi; ++i) {
    key += '-';
    key += labels[i];
  }
  return key;
}

Segmentation to_segmentation(const Utt &u) {
  Segmentation seg;
  seg.utterance_id = u.id;
  Word cur;
  for (std::size_t i = 0; i < u.tokens.size(); ++i) {
    cur.units.push_back(u.tokens[i]);
    const bool at_boundary = i + 1 < u.tokens.size() && u.boundary[i];
    if (at_boundary || i + 1 == u.tokens.size()) {
      seg.words.push_back(std::move(cur));
      cur = Word{};
    }
  }
  return seg;
}

}  // namespace

double joint_log_prob(const std::vector<Segmentation> &segs,
                      const DpsegConfig &cfg) {
  CrpState state;
  double lp = 0.0;
  for (const Segmentation &seg : segs)
    for (const Word &w : seg.words) {
      std::vector<std::string> labels;
      for (const UnitToken &t : w.units) labels.push_back(t.label);
      const std::string key = w.label();
      lp += log_crp_predictive(key, static_cast<int>(labels.size()), state, cfg);
      state.add(key);
    }
  return lp;
}

DpsegResult gibbs_segment(const std::vector<UnitSequence> &corpus,
                          const DpsegConfig &cfg0) {
  DpsegConfig cfg = cfg0;
  cfg.validate();
  if (cfg.alphabet_size == 0) {
    std::set<std::string> alphabet;
    for (const UnitSequence &u : corpus)
      for (const UnitToken &t : u.tokens) alphabet.insert(t.label);
    cfg.alphabet_size = static_cast<int>(alphabet.size());
  }
  if (cfg.alphabet_size < 1) throw Error("gibbs_segment: empty alphabet");

  std::vector<Utt> utts;
  for (const UnitSequence &u : corpus) {
    if (u.size() > cfg.max_len)
      throw Error("gibbs_segment: utterance '" + u.utterance_id + "' has " +
                  std::to_string(u.size()) + " tokens (limit " +
                  std::to_string(cfg.max_len) + ")");
    Utt x;
    x.id = u.utterance_id;
    for (const UnitToken &t : u.tokens) {
      if (t.label.find('-') != std::string::npos)
        throw Error("gibbs_segment: label '" + t.label + "' contains '-'");
      x.labels.push_back(t.label);
    }
    x.tokens = u.tokens;
    if (!x.labels.empty())
      x.boundary.assign(x.labels.size() - 1, 0);
    utts.push_back(std::move(x));
  }

  Rng rng(cfg.seed);
  CrpState state;
  for (Utt &u : utts) {
    for (auto &b : u.boundary) b = rng.uniform() < 0.5 ? 1 : 0;
    if (u.labels.empty()) continue;
    int lo = 0;
    for (std::size_t i = 0; i <= u.boundary.size(); ++i) {
      if (i == u.boundary.size() || u.boundary[i]) {
        state.add(key_of(u.labels, lo, static_cast<int>(i) + 1));
        lo = static_cast<int>(i) + 1;
      }
    }
  }

  const std::vector<double> temps = cfg.schedule();
  DpsegResult result;
  result.segmentations.resize(utts.size());
  double best_lp = -std::numeric_limits<double>::infinity();

  for (int sweep = 0; sweep < cfg.n_sweeps; ++sweep) {
    const double T =
        temps[std::min<std::size_t>(temps.size() - 1,
                                    std::size_t(sweep) * temps.size() /
                                        std::size_t(cfg.n_sweeps))];
    for (Utt &u : utts) {
      const int len = static_cast<int>(u.labels.size());
      for (int j = 0; j + 1 < len; ++j) {
        // Enclosing word span ignoring the boundary at j.
        int lo = j;
        while (lo > 0 && !u.boundary[lo - 1]) --lo;
        int hi = j + 1;
        while (hi < len - 1 && !u.boundary[hi]) ++hi;
        const std::string merged = key_of(u.labels, lo, hi + 1);
        const std::string left = key_of(u.labels, lo, j + 1);
        const std::string right = key_of(u.labels, j + 1, hi + 1);

        if (u.boundary[j]) {
          state.remove(left);
          state.remove(right);
        } else {
          state.remove(merged);
        }
        const double pb = boundary_probability(
            left, j + 1 - lo, right, hi - j, merged, state, cfg, T);
        u.boundary[j] = rng.uniform() < pb ? 1 : 0;
        if (u.boundary[j]) {
          state.add(left);
          state.add(right);
        } else {
          state.add(merged);
        }
      }
    }

    std::vector<Segmentation> snapshot;
    snapshot.reserve(utts.size());
    for (const Utt &u : utts) snapshot.push_back(to_segmentation(u));
    const double lp = joint_log_prob(snapshot, cfg);
    result.log_prob_trace.push_back(lp);
    if (lp > best_lp) {
      best_lp = lp;
      result.best_sweep = sweep;
      result.segmentations = std::move(snapshot);
    }
  }
  return result;
}

}  // namespace uws
