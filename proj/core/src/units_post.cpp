#include "uws/units_post.hpp"

#include <algorithm>
#include <set>

#include "uws/common.hpp"

namespace uws {

UnitSequence merge_windows(const std::vector<std::string> &frame_labels,
                           double hop_s, const std::string &utterance_id) {
  if (frame_labels.empty()) throw Error("merge_windows: empty label sequence");
  UnitSequence seq;
  seq.utterance_id = utterance_id;
  seq.variant = UnitVariant::kRaw;
  std::size_t run_start = 0;
  for (std::size_t i = 1; i <= frame_labels.size(); ++i) {
    if (i == frame_labels.size() || frame_labels[i] != frame_labels[run_start]) {
      UnitToken t;
      t.label = frame_labels[run_start];
      t.start_s = run_start * hop_s;
      t.end_s = i * hop_s;
      seq.tokens.push_back(std::move(t));
      run_start = i;
    }
  }
  return seq;
}

static bool midpoint_in(const UnitToken &t,
                        const std::vector<TimeInterval> &silences) {
  const double mid = 0.5 * (t.start_s + t.end_s);
  for (const TimeInterval &s : silences)
    if (mid >= s.start_s && mid <= s.end_s) return true;
  return false;
}

UnitSequence remove_silence_units(const UnitSequence &seq,
                                  const std::vector<TimeInterval> &silences) {
  if (seq.variant == UnitVariant::kPlusSil)
    throw Error("remove_silence_units: '" + seq.utterance_id +
                "' is already PLUS_SIL");
  UnitSequence out;
  out.utterance_id = seq.utterance_id;
  out.variant = UnitVariant::kPlusSil;
  for (const UnitToken &t : seq.tokens)
    if (!midpoint_in(t, silences)) out.tokens.push_back(t);
  return out;
}

UnitSequence strip_label(const UnitSequence &seq, const std::string &label) {
  UnitSequence out;
  out.utterance_id = seq.utterance_id;
  out.variant = seq.variant;
  for (const UnitToken &t : seq.tokens)
    if (t.label != label) out.tokens.push_back(t);
  return out;
}

Segmentation reintroduce_silence(const Segmentation &seg,
                                 const std::vector<TimeInterval> &silences) {
  if (silences.empty()) return seg;
  auto gap_has_silence = [&](double g0, double g1) {
    for (const TimeInterval &s : silences) {
      double lo = std::max(g0, s.start_s);
      double hi = std::min(g1, s.end_s);
      if (hi - lo > 1e-9) return true;
    }
    return false;
  };
  Segmentation out;
  out.utterance_id = seg.utterance_id;
  for (const Word &w : seg.words) {
    Word cur;
    for (std::size_t i = 0; i < w.units.size(); ++i) {
      if (!cur.units.empty() &&
          gap_has_silence(cur.units.back().end_s, w.units[i].start_s)) {
        out.words.push_back(std::move(cur));
        cur = Word{};
      }
      cur.units.push_back(w.units[i]);
    }
    if (!cur.units.empty()) out.words.push_back(std::move(cur));
  }
  return out;
}

// --------------------------------------------------------------------------
// BPE.

BpeModel bpe_learn(const std::vector<UnitSequence> &corpus, int target_vocab) {
  if (corpus.empty()) throw Error("bpe_learn: empty corpus");
  std::vector<std::vector<std::string>> seqs;
  std::set<std::string> vocab;
  for (const UnitSequence &u : corpus) {
    std::vector<std::string> labels;
    for (const UnitToken &t : u.tokens) {
      labels.push_back(t.label);
      vocab.insert(t.label);
    }
    seqs.push_back(std::move(labels));
  }

  BpeModel model;
  model.base_alphabet.assign(vocab.begin(), vocab.end());

  while (static_cast<int>(vocab.size()) < target_vocab) {
    std::map<std::pair<std::string, std::string>, long long> counts;
    for (const auto &s : seqs)
      for (std::size_t i = 0; i + 1 < s.size(); ++i)
        ++counts[{s[i], s[i + 1]}];
    // Most frequent pair; ties broken lexicographically for determinism.
    std::pair<std::string, std::string> best;
    long long best_count = 0;
    for (const auto &[pair, c] : counts)
      if (c > best_count) {
        best = pair;
        best_count = c;
      }
    if (best_count < 2) break;

    std::string merged = best.first + best.second;
    while (vocab.count(merged)) merged += '\'';
    vocab.insert(merged);
    model.merges.push_back({best.first, best.second, merged});

    for (auto &s : seqs) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == best.first && s[i + 1] == best.second) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(s[i]);
        }
      }
      s = std::move(next);
    }
  }
  return model;
}

UnitSequence bpe_apply(const UnitSequence &seq, const BpeModel &model) {
  std::set<std::string> base(model.base_alphabet.begin(),
                             model.base_alphabet.end());
  for (const UnitToken &t : seq.tokens)
    if (!base.count(t.label))
      throw Error("bpe_apply: '" + seq.utterance_id + "': label '" + t.label +
                  "' not in the model's base alphabet");
  UnitSequence out = seq;
  for (const BpeModel::Merge &m : model.merges) {
    std::vector<UnitToken> next;
    for (std::size_t i = 0; i < out.tokens.size(); ++i) {
      if (i + 1 < out.tokens.size() && out.tokens[i].label == m.left &&
          out.tokens[i + 1].label == m.right) {
        UnitToken t;
        t.label = m.merged;
        t.start_s = out.tokens[i].start_s;
        t.end_s = out.tokens[i + 1].end_s;
        next.push_back(std::move(t));
        ++i;
      } else {
        next.push_back(out.tokens[i]);
      }
    }
    out.tokens = std::move(next);
  }
  return out;
}

UnitSequence bpe_expand(const UnitSequence &seq, const BpeModel &model) {
  std::map<std::string, const BpeModel::Merge *> by_label;
  for (const BpeModel::Merge &m : model.merges) by_label[m.merged] = &m;
  UnitSequence out;
  out.utterance_id = seq.utterance_id;
  out.variant = seq.variant;
  // Recursively expand each token back to base labels, splitting its span
  // evenly (constituent time-stamps are not preserved by merging).
  std::vector<std::string> labels;
  auto expand = [&](auto &&self, const std::string &label) -> void {
    auto it = by_label.find(label);
    if (it == by_label.end()) {
      labels.push_back(label);
      return;
    }
    self(self, it->second->left);
    self(self, it->second->right);
  };
  for (const UnitToken &t : seq.tokens) {
    labels.clear();
    expand(expand, t.label);
    const int n = static_cast<int>(labels.size());
    for (int k = 0; k < n; ++k) {
      UnitToken u;
      u.label = labels[k];
      u.start_s = t.start_s + (t.end_s - t.start_s) * k / n;
      u.end_s = t.start_s + (t.end_s - t.start_s) * (k + 1) / n;
      out.tokens.push_back(std::move(u));
    }
  }
  return out;
}

UnitStats unit_stats(const std::vector<UnitSequence> &corpus,
                     int length_limit) {
  if (corpus.empty()) throw Error("unit_stats: empty corpus");
  UnitStats st;
  std::set<std::string> labels;
  long long len_sum = 0;
  int counted = 0;
  double total_seconds = 0.0;
  for (const UnitSequence &u : corpus) {
    ++st.n_utterances;
    if (u.empty()) {
      ++st.n_empty_utterances;
      continue;
    }
    const int len = u.size();
    st.total_tokens += len;
    len_sum += len;
    ++counted;
    st.max_seq_len = std::max(st.max_seq_len, len);
    if (len > length_limit) st.over_limit.push_back(u.utterance_id);
    for (const UnitToken &t : u.tokens) labels.insert(t.label);
    total_seconds += u.tokens.back().end_s - u.tokens.front().start_s;
  }
  st.n_distinct_units = static_cast<int>(labels.size());
  st.mean_seq_len = counted ? static_cast<double>(len_sum) / counted : 0.0;
  st.units_per_second =
      total_seconds > 0.0 ? st.total_tokens / total_seconds : 0.0;
  return st;
}

}  // namespace uws
