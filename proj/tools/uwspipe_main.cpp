// tools/uwspipe_main.cpp
//
// End-to-end pipeline runner and report renderer. Exit codes: 0 success,
// 2 configuration error, 3 stage failure.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "uws/corpus.hpp"
#include "uws/pipeline.hpp"

namespace {

uws::SyntheticSpec spec_from_json(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw uws::Error("cannot open '" + path.string() + "'");
  const nlohmann::json doc = nlohmann::json::parse(in);
  uws::SyntheticSpec spec;
  spec.n_units = doc.value("n_units", spec.n_units);
  spec.unit_hmm_states = doc.value("unit_hmm_states", spec.unit_hmm_states);
  spec.feature_dim = doc.value("feature_dim", spec.feature_dim);
  spec.lexicon = doc.at("lexicon").get<std::vector<std::string>>();
  if (doc.contains("word_dist"))
    spec.word_dist = doc["word_dist"].get<std::vector<double>>();
  else
    spec.word_dist.assign(spec.lexicon.size(), 1.0 / spec.lexicon.size());
  spec.min_words = doc.value("min_words", spec.min_words);
  spec.max_words = doc.value("max_words", spec.max_words);
  spec.n_utterances = doc.value("n_utterances", spec.n_utterances);
  spec.silence_prob = doc.value("silence_prob", spec.silence_prob);
  spec.seed = doc.value("seed", spec.seed);
  return spec;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"cascaded unsupervised word segmentation pipeline"};
  app.require_subcommand(1);

  auto *run = app.add_subcommand("run", "execute a pipeline run");
  std::string config_path, out_dir_override, discretizer_override,
      post_override, uws_override;
  long long seed_override = -1;
  run->add_option("--config", config_path, "pipeline config JSON")->required();
  run->add_option("--output-dir", out_dir_override, "override output_dir");
  run->add_option("--seed", seed_override, "override seed");
  run->add_option("--discretizer", discretizer_override,
                  "override discretizer");
  run->add_option("--post", post_override, "override post mode");
  run->add_option("--uws", uws_override, "override UWS model");

  auto *rep = app.add_subcommand("report", "tabulate finished runs");
  std::vector<std::string> run_dirs;
  std::string out_prefix;
  rep->add_option("--runs", run_dirs, "run directories")->required()->expected(-1);
  rep->add_option("--out", out_prefix, "write <prefix>.md and <prefix>.json");

  auto *synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string spec_path, synth_out;
  synth->add_option("--spec", spec_path, "synthetic spec JSON")->required();
  synth->add_option("--out-dir", synth_out, "corpus output directory")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      uws::PipelineConfig cfg;
      try {
        cfg = uws::load_pipeline_config(config_path);
        if (!out_dir_override.empty()) cfg.output_dir = out_dir_override;
        if (seed_override >= 0)
          cfg.seed = static_cast<unsigned long long>(seed_override);
        if (!discretizer_override.empty() || !post_override.empty() ||
            !uws_override.empty()) {
          // Round-trip through the JSON parser to reuse its enum handling.
          nlohmann::json patch = nlohmann::json::parse(
              uws::pipeline_config_json(cfg));
          if (!discretizer_override.empty())
            patch["discretizer"] = discretizer_override;
          if (!post_override.empty()) patch["post"] = post_override;
          if (!uws_override.empty()) patch["uws"] = uws_override;
          const std::filesystem::path tmp =
              std::filesystem::temp_directory_path() / "uwspipe_patch.json";
          std::ofstream(tmp) << patch.dump();
          cfg = uws::load_pipeline_config(tmp);
          if (!out_dir_override.empty()) cfg.output_dir = out_dir_override;
          if (seed_override >= 0)
            cfg.seed = static_cast<unsigned long long>(seed_override);
        }
      } catch (const uws::Error &e) {
        std::cerr << "uwspipe: config error: " << e.what() << "\n";
        return 2;
      }
      try {
        const uws::RunReport report = uws::run_pipeline(cfg);
        std::cout << "run complete: " << report.run_dir.string()
                  << " (boundary F " << report.boundary_fscore << ")\n";
      } catch (const uws::StageError &e) {
        std::cerr << "uwspipe: " << e.what() << "\n";
        return 3;
      } catch (const uws::Error &e) {
        std::cerr << "uwspipe: config error: " << e.what() << "\n";
        return 2;
      }
    } else if (rep->parsed()) {
      std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
      const uws::ComparisonTable table = uws::render_report(dirs);
      std::cout << table.markdown;
      if (!out_prefix.empty()) {
        std::ofstream(out_prefix + ".md") << table.markdown;
        std::ofstream(out_prefix + ".json") << table.json;
      }
    } else {
      const uws::SyntheticSpec spec = spec_from_json(spec_path);
      const uws::SyntheticCorpus corpus = uws::generate_synthetic(spec);
      uws::write_synthetic(corpus, synth_out);
      std::cout << "synth: wrote " << corpus.manifest.utterances.size()
                << " utterances to " << synth_out << "\n";
    }
  } catch (const std::exception &e) {
    std::cerr << "uwspipe: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
