// uws/units_post.hpp
//
// Transformations between frame labels and unit token sequences: run-length
// merging, silence removal (+SIL) and reintroduction, BPE reduction and
// descriptive statistics.

#ifndef UWS_UNITS_POST_HPP
#define UWS_UNITS_POST_HPP

#include <map>
#include <string>
#include <vector>

#include "uws/types.hpp"

namespace uws {

// Run-length encodes per-frame labels (one label per hop) into time-stamped
// unit tokens.
UnitSequence merge_windows(const std::vector<std::string> &frame_labels,
                           double hop_s, const std::string &utterance_id);

// Drops tokens whose midpoint lies inside any silence interval and marks the
// sequence PLUS_SIL. Intervals must be sorted and non-overlapping.
UnitSequence remove_silence_units(const UnitSequence &seq,
                                  const std::vector<TimeInterval> &silences);

// Splits any hypothesized word that spans a removed-silence gap so that both
// edges of every silence interval are segmentation boundaries.
Segmentation reintroduce_silence(const Segmentation &seg,
                                 const std::vector<TimeInterval> &silences);

// Removes every token with the given label (the Bayesian models' dedicated
// silence token) without changing the variant marker.
UnitSequence strip_label(const UnitSequence &seq, const std::string &label);

struct BpeModel {
  struct Merge {
    std::string left, right, merged;
  };
  std::vector<Merge> merges;  // applied in order
  std::vector<std::string> base_alphabet;
};

// Greedy most-frequent-pair merging until the symbol vocabulary reaches
// target_vocab or no pair occurs twice. Merged labels are the concatenation
// of their parts (made unique with a trailing apostrophe on collision); the
// model's merge table, not label parsing, is authoritative for detokenizing.
BpeModel bpe_learn(const std::vector<UnitSequence> &corpus, int target_vocab);
UnitSequence bpe_apply(const UnitSequence &seq, const BpeModel &model);
// Undoes all merges; restores the original base-label token string.
UnitSequence bpe_expand(const UnitSequence &seq, const BpeModel &model);

struct UnitStats {
  int n_distinct_units = 0;
  long long total_tokens = 0;
  double mean_seq_len = 0.0;
  int max_seq_len = 0;
  double units_per_second = 0.0;
  int n_utterances = 0;
  int n_empty_utterances = 0;            // excluded from mean_seq_len
  std::vector<std::string> over_limit;   // utterance ids beyond length limit
};

UnitStats unit_stats(const std::vector<UnitSequence> &corpus,
                     int length_limit = 350);

}  // namespace uws

#endif  // UWS_UNITS_POST_HPP
