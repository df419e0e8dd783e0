// uws/dpseg.hpp
//
// Monolingual Bayesian word segmentation: unigram Dirichlet-process model
// over unit sequences, sampled with boundary-wise Gibbs moves and simulated
// annealing. The base distribution over words is geometric in length and
// uniform over the unit alphabet.

#ifndef UWS_DPSEG_HPP
#define UWS_DPSEG_HPP

#include <map>
#include <string>
#include <vector>

#include "uws/types.hpp"

namespace uws {

struct DpsegConfig {
  double alpha0 = 20.0;       // DP concentration
  double p_boundary = 0.5;    // geometric stop probability of P0
  int n_sweeps = 200;
  std::vector<double> anneal;  // temperatures; default 10 values 2.0 -> 1.0
  unsigned long long seed = 0;
  int alphabet_size = 0;  // 0: inferred from the corpus
  int max_len = 350;

  std::vector<double> schedule() const;  // anneal or the default
  void validate() const;
};

// Word-count table of the collapsed DP. Words are keyed by their canonical
// dash-joined label string.
struct CrpState {
  std::map<std::string, long long> counts;
  long long n = 0;

  void add(const std::string &word);
  void remove(const std::string &word);  // throws if absent
  long long count(const std::string &word) const;
  // Recount invariant: n equals the sum of all counts.
  void check_consistent() const;
};

// P0(w) = p_b * (1-p_b)^(len-1) * A^(-len), in log domain.
double log_p0(int word_len, const DpsegConfig &cfg);
double log_p0(const std::vector<std::string> &labels, const DpsegConfig &cfg);

// (count(w) + alpha0 * P0(w)) / (n + alpha0), in log domain.
double log_crp_predictive(const std::string &word_key, int word_len,
                          const CrpState &state, const DpsegConfig &cfg);

// Probability of placing a boundary (splitting `merged` into `left`+`right`)
// given a state with the affected words already removed, at temperature T.
double boundary_probability(const std::string &left, int left_len,
                            const std::string &right, int right_len,
                            const std::string &merged, const CrpState &state,
                            const DpsegConfig &cfg, double temperature);

struct DpsegResult {
  std::vector<Segmentation> segmentations;  // MAP-sweep snapshot
  std::vector<double> log_prob_trace;       // joint log prob after each sweep
  int best_sweep = -1;
};

// Joint log probability of a full segmentation state: the product of
// sequential CRP predictives over all words in corpus order.
double joint_log_prob(const std::vector<Segmentation> &segs,
                      const DpsegConfig &cfg);

// Boundary-wise Gibbs sampling over the corpus. Utterance edges are hard
// word boundaries. Sequences longer than cfg.max_len are rejected with an
// error naming the utterance.
DpsegResult gibbs_segment(const std::vector<UnitSequence> &corpus,
                          const DpsegConfig &cfg);

}  // namespace uws

#endif  // UWS_DPSEG_HPP
