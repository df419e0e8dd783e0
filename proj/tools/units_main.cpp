// tools/units_main.cpp
//
// Unit-sequence post-processing (silence removal, BPE) and statistics.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "uws/corpus.hpp"
#include "uws/units_post.hpp"

int main(int argc, char **argv) {
  CLI::App app{"discrete unit post-processing"};
  app.require_subcommand(1);

  auto *post = app.add_subcommand("post", "silence removal and BPE");
  std::string in_path, manifest_path, mode = "raw", out_path;
  int bpe_vocab = 0;
  post->add_option("--in", in_path, "input unit file")->required();
  post->add_option("--manifest", manifest_path, "corpus manifest")->required();
  post->add_option("--mode", mode, "raw | plus-sil");
  post->add_option("--bpe-vocab", bpe_vocab, "BPE target vocabulary (0 = off)");
  post->add_option("--out", out_path, "output unit file")->required();

  auto *stats = app.add_subcommand("stats", "descriptive statistics");
  std::string stats_in, report_path;
  int length_limit = 350;
  stats->add_option("--in", stats_in, "input unit file")->required();
  stats->add_option("--report", report_path, "JSON report path")->required();
  stats->add_option("--length-limit", length_limit,
                    "flag sequences above this length");

  CLI11_PARSE(app, argc, argv);

  try {
    if (post->parsed()) {
      if (mode != "raw" && mode != "plus-sil")
        throw uws::Error("mode must be raw or plus-sil");
      const uws::CorpusManifest manifest = uws::load_manifest(manifest_path);
      std::vector<uws::UnitSequence> units = uws::read_units_file(in_path);
      for (uws::UnitSequence &s : units) {
        s = uws::strip_label(s, "sil");
        if (mode == "plus-sil") {
          const uws::Utterance *u = manifest.find(s.utterance_id);
          if (!u) throw uws::Error("unknown utterance '" + s.utterance_id + "'");
          s = uws::remove_silence_units(s, u->silences);
        }
      }
      if (bpe_vocab > 0) {
        const uws::BpeModel model = uws::bpe_learn(units, bpe_vocab);
        for (uws::UnitSequence &s : units) s = uws::bpe_apply(s, model);
      }
      uws::write_units_file(units, out_path, true);
      std::cout << "units post: wrote " << out_path << "\n";
    } else {
      const std::vector<uws::UnitSequence> units =
          uws::read_units_file(stats_in);
      const uws::UnitStats st = uws::unit_stats(units, length_limit);
      nlohmann::json doc{{"n_distinct_units", st.n_distinct_units},
                         {"total_tokens", st.total_tokens},
                         {"mean_seq_len", st.mean_seq_len},
                         {"max_seq_len", st.max_seq_len},
                         {"units_per_second", st.units_per_second},
                         {"n_utterances", st.n_utterances},
                         {"n_empty_utterances", st.n_empty_utterances},
                         {"over_limit", st.over_limit}};
      std::ofstream out(report_path);
      out << doc.dump(2) << "\n";
      for (const std::string &id : st.over_limit)
        std::cerr << "units stats: '" << id << "' exceeds " << length_limit
                  << " tokens\n";
      if (st.n_empty_utterances > 0)
        std::cerr << "units stats: " << st.n_empty_utterances
                  << " empty utterance(s) excluded from mean\n";
      std::cout << doc.dump(2) << "\n";
    }
  } catch (const std::exception &e) {
    std::cerr << "units: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
