// uws/align.hpp
//
// Bilingual word segmentation from soft-alignment probability matrices: each
// unit token is assigned the target word where its alignment row peaks, and
// maximal runs of equal peaks become words. The matrices come from an
// external aligner; an oracle generator stands in for one in tests.

#ifndef UWS_ALIGN_HPP
#define UWS_ALIGN_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "uws/types.hpp"

namespace uws {

struct AlignmentMatrix {
  std::string utterance_id;
  Eigen::MatrixXd probs;  // rows: unit tokens, cols: target words

  int rows() const { return static_cast<int>(probs.rows()); }
  int cols() const { return static_cast<int>(probs.cols()); }
  // Rows must sum to 1 within 1e-6.
  void validate() const;
};

// Peak per row (ties -> lower index); runs of equal peaks form words.
Segmentation segment_from_alignment(const UnitSequence &units,
                                    const AlignmentMatrix &matrix);

// Text format, one block per utterance:
//   <id> <rows> <cols>
//   p11 p12 ... p1c
//   ...
// Rows within 1e-3 of stochastic are renormalized; worse rows are rejected.
std::vector<AlignmentMatrix> load_alignments(const std::filesystem::path &path);
void save_alignments(const std::vector<AlignmentMatrix> &mats,
                     const std::filesystem::path &path);

// Element-wise mean of several per-utterance matrices, rows renormalized.
AlignmentMatrix average_alignments(const std::vector<AlignmentMatrix> &mats);

// Synthetic alignment: units of the k-th gold word peak at target word
// min(k, cols-1) with mass (1-noise) plus a uniform noise floor.
AlignmentMatrix oracle_alignments(const Segmentation &gold_words,
                                  const std::vector<std::string> &translation,
                                  double noise, unsigned long long seed);

}  // namespace uws

#endif  // UWS_ALIGN_HPP
