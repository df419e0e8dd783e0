// uws/types.hpp
//
// Shared domain types for the segmentation pipeline. Everything here is a
// plain value type, immutable by convention after construction, and safe to
// share across threads.

#ifndef UWS_TYPES_HPP
#define UWS_TYPES_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace uws {

// Half-open-ish time interval in seconds; used for silence annotations.
struct TimeInterval {
  double start_s = 0.0;
  double end_s = 0.0;
};

// Per-utterance matrix of acoustic feature vectors at a fixed hop.
// Rows are frames.
struct FrameSequence {
  std::string utterance_id;
  Eigen::MatrixXf frames;  // N x dim
  double hop_s = 0.010;

  int n_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }

  // Throws Error on empty matrix or non-finite values.
  void validate() const;
};

// One discrete unit span.
struct UnitToken {
  std::string label;
  double start_s = 0.0;
  double end_s = 0.0;
};

enum class UnitVariant { kRaw, kPlusSil };

// Per-utterance sequence of discrete unit labels with time-stamps.
struct UnitSequence {
  std::string utterance_id;
  std::vector<UnitToken> tokens;
  UnitVariant variant = UnitVariant::kRaw;

  bool empty() const { return tokens.empty(); }
  int size() const { return static_cast<int>(tokens.size()); }

  // Tokens time-ordered, non-overlapping, end > start.
  void validate() const;
};

// A hypothesized (or gold) word: a run of unit tokens.
struct Word {
  std::vector<UnitToken> units;

  double start_s() const { return units.front().start_s; }
  double end_s() const { return units.back().end_s; }
  // Canonical word label: unit labels joined by '-'.
  std::string label() const;
};

// Ordered word tokens over a unit sequence.
struct Segmentation {
  std::string utterance_id;
  std::vector<Word> words;

  int n_words() const { return static_cast<int>(words.size()); }
  int n_units() const;
};

}  // namespace uws

#endif  // UWS_TYPES_HPP
