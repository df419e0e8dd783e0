// uws/eval.hpp
//
// Segmentation scoring: boundary precision/recall/F within a time tolerance,
// token and type scores, type-token ratio. Corpus scores micro-average the
// per-utterance counts.

#ifndef UWS_EVAL_HPP
#define UWS_EVAL_HPP

#include <map>
#include <string>
#include <vector>

#include "uws/types.hpp"

namespace uws {

struct PrfCounts {
  long long hits = 0;
  long long hyp = 0;
  long long gold = 0;

  double precision() const { return hyp ? double(hits) / hyp : 0.0; }
  double recall() const { return gold ? double(hits) / gold : 0.0; }
  double fscore() const;
};

struct BoundaryReport {
  PrfCounts counts;
  std::map<std::string, PrfCounts> per_utterance;

  double precision() const { return counts.precision(); }
  double recall() const { return counts.recall(); }
  double fscore() const { return counts.fscore(); }
};

struct TypeReport {
  PrfCounts token_counts;
  PrfCounts type_counts;
  double type_token_ratio = 0.0;
};

// Internal word boundaries as times: boundary k is the end time of the last
// unit of word k. Utterance-initial/final edges are excluded.
std::vector<double> project_boundaries(const Segmentation &seg);

// Greedy one-to-one matching of sorted boundary lists within +-tolerance.
BoundaryReport boundary_score(
    const std::map<std::string, std::vector<double>> &hyp,
    const std::map<std::string, std::vector<double>> &gold,
    double tolerance_s);

// Convenience: project both sides and score.
BoundaryReport boundary_score(const std::vector<Segmentation> &hyp,
                              const std::vector<Segmentation> &gold,
                              double tolerance_s);

// Token hit: same label and same span. Types are compared as label-string
// sets; TTR is |hyp types| / |hyp tokens|.
TypeReport token_type_score(const std::vector<Segmentation> &hyp,
                            const std::vector<Segmentation> &gold);

}  // namespace uws

#endif  // UWS_EVAL_HPP
