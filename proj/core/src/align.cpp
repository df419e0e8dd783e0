#include "uws/align.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "uws/common.hpp"

namespace uws {

namespace fs = std::filesystem;

void AlignmentMatrix::validate() const {
  if (rows() < 1 || cols() < 1)
    throw Error("AlignmentMatrix '" + utterance_id + "': empty matrix");
  for (int r = 0; r < rows(); ++r) {
    const double sum = probs.row(r).sum();
    if (std::abs(sum - 1.0) > 1e-6)
      throw Error("AlignmentMatrix '" + utterance_id + "': row " +
                  std::to_string(r) + " sums to " + std::to_string(sum));
  }
}

Segmentation segment_from_alignment(const UnitSequence &units,
                                    const AlignmentMatrix &matrix) {
  if (matrix.rows() != units.size())
    throw Error("segment_from_alignment: '" + units.utterance_id + "': " +
                std::to_string(units.size()) + " units vs " +
                std::to_string(matrix.rows()) + " alignment rows");
  matrix.validate();

  Segmentation seg;
  seg.utterance_id = units.utterance_id;
  int prev_peak = -1;
  Word cur;
  for (int r = 0; r < matrix.rows(); ++r) {
    int peak = 0;
    for (int c = 1; c < matrix.cols(); ++c)
      if (matrix.probs(r, c) > matrix.probs(r, peak)) peak = c;
    if (r > 0 && peak != prev_peak) {
      seg.words.push_back(std::move(cur));
      cur = Word{};
    }
    cur.units.push_back(units.tokens[r]);
    prev_peak = peak;
  }
  if (!cur.units.empty()) seg.words.push_back(std::move(cur));
  return seg;
}

std::vector<AlignmentMatrix> load_alignments(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw Error("load_alignments: cannot open '" + path.string() + "'");
  std::vector<AlignmentMatrix> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto header = split_ws(line);
    if (header.empty()) continue;
    if (header.size() != 3)
      throw Error("load_alignments: " + path.string() + ":" +
                  std::to_string(lineno) + ": expected '<id> <rows> <cols>'");
    AlignmentMatrix m;
    m.utterance_id = header[0];
    const int rows = std::stoi(header[1]);
    const int cols = std::stoi(header[2]);
    if (rows < 1 || cols < 1)
      throw Error("load_alignments: " + path.string() + ":" +
                  std::to_string(lineno) + ": bad dimensions");
    m.probs.resize(rows, cols);
    for (int r = 0; r < rows; ++r) {
      if (!std::getline(in, line))
        throw Error("load_alignments: " + path.string() + ": truncated block '" +
                    m.utterance_id + "'");
      ++lineno;
      auto vals = split_ws(line);
      if (static_cast<int>(vals.size()) != cols)
        throw Error("load_alignments: " + path.string() + ":" +
                    std::to_string(lineno) + ": expected " +
                    std::to_string(cols) + " values");
      double sum = 0.0;
      for (int c = 0; c < cols; ++c) {
        m.probs(r, c) = std::stod(vals[c]);
        sum += m.probs(r, c);
      }
      if (std::abs(sum - 1.0) > 1e-3)
        throw Error("load_alignments: " + path.string() + ":" +
                    std::to_string(lineno) + ": row of '" + m.utterance_id +
                    "' sums to " + std::to_string(sum));
      m.probs.row(r) /= sum;
    }
    out.push_back(std::move(m));
  }
  return out;
}

void save_alignments(const std::vector<AlignmentMatrix> &mats,
                     const fs::path &path) {
  std::ofstream out(path);
  if (!out) throw Error("save_alignments: cannot write '" + path.string() + "'");
  out.precision(12);
  for (const AlignmentMatrix &m : mats) {
    out << m.utterance_id << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) {
        if (c) out << ' ';
        out << m.probs(r, c);
      }
      out << '\n';
    }
  }
}

AlignmentMatrix average_alignments(const std::vector<AlignmentMatrix> &mats) {
  if (mats.empty()) throw Error("average_alignments: no matrices");
  AlignmentMatrix avg = mats[0];
  for (std::size_t i = 1; i < mats.size(); ++i) {
    if (mats[i].rows() != avg.rows() || mats[i].cols() != avg.cols())
      throw Error("average_alignments: dimension mismatch for '" +
                  avg.utterance_id + "'");
    avg.probs += mats[i].probs;
  }
  avg.probs /= double(mats.size());
  for (int r = 0; r < avg.rows(); ++r) avg.probs.row(r) /= avg.probs.row(r).sum();
  return avg;
}

AlignmentMatrix oracle_alignments(const Segmentation &gold_words,
                                  const std::vector<std::string> &translation,
                                  double noise, unsigned long long seed) {
  if (noise < 0.0 || noise >= 1.0)
    throw Error("oracle_alignments: noise must be in [0,1)");
  if (translation.empty())
    throw Error("oracle_alignments: empty translation for '" +
                gold_words.utterance_id + "'");
  (void)seed;  // the noise floor is deterministic; seed kept for interface
  const int cols = static_cast<int>(translation.size());
  const int rows = gold_words.n_units();
  AlignmentMatrix m;
  m.utterance_id = gold_words.utterance_id;
  m.probs.resize(rows, cols);
  int r = 0;
  for (int k = 0; k < gold_words.n_words(); ++k) {
    const int peak = std::min(k, cols - 1);
    for (std::size_t i = 0; i < gold_words.words[k].units.size(); ++i, ++r) {
      for (int c = 0; c < cols; ++c) m.probs(r, c) = noise / cols;
      m.probs(r, peak) += 1.0 - noise;
    }
  }
  m.validate();
  return m;
}

}  // namespace uws
