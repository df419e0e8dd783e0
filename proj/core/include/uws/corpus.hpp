// uws/corpus.hpp
//
// Corpus data model and on-disk formats:
//   - manifest: one JSON document per corpus (schema in load_manifest docs)
//   - features: "UWSF" little-endian binary, u32 rows, u32 cols, f32 payload
//   - unit / word files: text, one utterance per line, optionally
//     time-stamped as <label>:<start_s>:<end_s> with 3-decimal seconds
// plus a synthetic-corpus generator that provides ground truth for every
// downstream stage.

#ifndef UWS_CORPUS_HPP
#define UWS_CORPUS_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uws/types.hpp"

namespace uws {

struct Utterance {
  std::string id;
  std::optional<std::string> audio_path;
  std::optional<std::string> feature_path;
  std::optional<std::vector<std::string>> translation;
  std::optional<std::string> gold_units_path;
  std::optional<std::string> gold_words_path;
  std::vector<TimeInterval> silences;  // non-overlapping, sorted, seconds
};

struct CorpusManifest {
  std::string name;
  double frame_rate_hz = 100.0;  // 10 ms hop
  std::vector<Utterance> utterances;

  double hop_s() const { return 1.0 / frame_rate_hz; }
  // Checks manifest invariants; throws Error naming the offending utterance.
  void validate() const;
  const Utterance *find(const std::string &id) const;
};

CorpusManifest load_manifest(const std::filesystem::path &path);
void save_manifest(const CorpusManifest &m, const std::filesystem::path &path);

// Feature binary round-trips bit-exactly. utterance_id is taken from the
// file stem; hop_s from the caller (the manifest knows the frame rate).
FrameSequence read_features(const std::filesystem::path &path,
                            double hop_s = 0.010);
void write_features(const FrameSequence &seq,
                    const std::filesystem::path &path);

// Unit files: "<id> 7 2 7" or "<id> 7:0.000:0.030 2:0.030:0.050 ...".
// Order of utterances is preserved.
std::vector<UnitSequence> read_units_file(const std::filesystem::path &path);
void write_units_file(const std::vector<UnitSequence> &seqs,
                      const std::filesystem::path &path, bool with_times);

// Word files: "<id> 0-1 2" or "<id> 0-1:0.000:0.120 ...". Words loaded from
// a plain (untimed) file get token-index pseudo-times: token i spans [i, i+1),
// which makes downstream boundary scoring operate on symbolic positions.
std::vector<Segmentation> read_segmentation_file(
    const std::filesystem::path &path);
void write_segmentation_file(const std::vector<Segmentation> &segs,
                             const std::filesystem::path &path,
                             bool with_times);

// ---------------------------------------------------------------------------
// Synthetic corpus generation.
//
// Words are strings over the unit alphabet [0, n_units); each character of a
// lexicon entry is one unit label ('0'-'9' then 'a'-'z' then 'A'-'Z', so up
// to 62 units). Features are emitted by per-unit left-to-right diagonal
// Gaussian HMMs whose state means sit on a lattice with spacing
// mean_separation_sigmas * emission_sigma, so distinct states are always
// separated by at least that distance.

struct SyntheticSpec {
  int n_units = 2;
  int unit_hmm_states = 3;
  int feature_dim = 2;
  std::vector<std::string> lexicon;
  std::vector<double> word_dist;  // probability per lexicon entry
  int min_words = 1;
  int max_words = 4;
  int n_utterances = 10;
  double silence_prob = 0.0;  // chance of a silence gap at each word edge
  unsigned long long seed = 0;

  double frame_rate_hz = 100.0;
  double emission_sigma = 1.0;
  double mean_separation_sigmas = 4.0;
  double state_self_loop_prob = 0.5;
  double silence_min_s = 0.10;
  double silence_max_s = 0.30;

  void validate() const;
  // Lexicon entry -> unit indices; throws on labels outside [0, n_units).
  std::vector<int> parse_word(const std::string &word) const;
};

// Hidden generator parameters, exposed for oracle-style tests.
struct SyntheticParams {
  // means[u][s] is the emission mean of state s of unit u; the last "unit"
  // row is the silence emitter.
  std::vector<std::vector<Eigen::VectorXd>> means;
  double sigma = 1.0;
};

struct SyntheticCorpus {
  CorpusManifest manifest;
  std::vector<FrameSequence> features;     // parallel to manifest.utterances
  std::vector<UnitSequence> gold_units;    // silence excluded
  std::vector<Segmentation> gold_words;    // concatenation == gold_units
  SyntheticParams params;
};

SyntheticCorpus generate_synthetic(const SyntheticSpec &spec);

// Materializes manifest + feature binaries + gold files under dir.
void write_synthetic(const SyntheticCorpus &corpus,
                     const std::filesystem::path &dir);

// Loads the FrameSequence for every utterance (feature_path required).
std::vector<FrameSequence> load_corpus_features(const CorpusManifest &m);

}  // namespace uws

#endif  // UWS_CORPUS_HPP
