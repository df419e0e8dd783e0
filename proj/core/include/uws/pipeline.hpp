// uws/pipeline.hpp
//
// End-to-end orchestration: features -> discretize -> post-process -> word
// segmentation -> scoring, with per-stage checkpointing inside a run
// directory and a JSON report carrying scores, unit statistics and a
// provenance block. Re-running with the same config and seed reproduces all
// artifacts byte-identically.

#ifndef UWS_PIPELINE_HPP
#define UWS_PIPELINE_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uws/aud.hpp"
#include "uws/corpus.hpp"
#include "uws/dpseg.hpp"
#include "uws/features.hpp"
#include "uws/vq.hpp"

namespace uws {

enum class Discretizer { kHmm, kShmm, kHshmm, kVqvae, kGold };
enum class PostMode { kRaw, kPlusSil };
enum class UwsModel { kDpseg, kAlign, kNone };

std::string to_string(Discretizer d);
std::string to_string(PostMode p);
std::string to_string(UwsModel u);

struct PipelineConfig {
  std::string manifest_path;
  Discretizer discretizer = Discretizer::kGold;
  PostMode post = PostMode::kRaw;
  UwsModel uws = UwsModel::kDpseg;
  std::string output_dir;
  unsigned long long seed = 0;

  MfccConfig features;
  AudTrainConfig aud;
  std::string subspace_path;       // required for shmm
  std::string hier_subspace_path;  // required for hshmm
  VqVaeTrainConfig vq;
  DpsegConfig dpseg;
  std::string alignments_path;  // for uws=align; oracle when empty
  double align_noise = 0.0;
  double eval_tolerance_s = 0.020;
  int bpe_vocab = 0;  // 0 disables BPE reduction

  void validate_with(const CorpusManifest &manifest) const;
};

PipelineConfig load_pipeline_config(const std::filesystem::path &path);
std::string pipeline_config_json(const PipelineConfig &cfg);  // canonical

struct RunReport {
  std::string report_json;  // full report document
  double boundary_fscore = 0.0;
  std::filesystem::path run_dir;
};

// Executes (or resumes) a run in cfg.output_dir. Throws StageError with the
// failing stage's name on stage failures.
RunReport run_pipeline(const PipelineConfig &cfg);

class StageError : public Error {
 public:
  StageError(const std::string &stage, const std::string &msg)
      : Error("stage " + stage + ": " + msg), stage_(stage) {}
  const std::string &stage() const { return stage_; }

 private:
  std::string stage_;
};

struct ComparisonTable {
  std::string markdown;
  std::string json;
};

// Rows are discretizer x post condition, columns are UWS models, cells the
// boundary F-score exactly as stored in each run's report.json.
ComparisonTable render_report(
    const std::vector<std::filesystem::path> &run_dirs);

// Subspace file I/O used by the aud CLI ("UWSS" / "UWSH" magics).
void save_subspace(const Subspace &sub, const std::filesystem::path &path);
Subspace load_subspace(const std::filesystem::path &path);
void save_hier_subspace(const HierSubspace &hier,
                        const std::filesystem::path &path);
HierSubspace load_hier_subspace(const std::filesystem::path &path);

}  // namespace uws

#endif  // UWS_PIPELINE_HPP
