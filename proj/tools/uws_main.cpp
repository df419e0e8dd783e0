// tools/uws_main.cpp
//
// Word segmentation of unit sequences: the Dirichlet-process Gibbs sampler
// (dpseg) or alignment-peak clustering (align). Writes the plain word file
// to --out and a time-stamped variant next to it.

#include <iostream>

#include <CLI11.hpp>

#include "uws/align.hpp"
#include "uws/corpus.hpp"
#include "uws/dpseg.hpp"

static std::filesystem::path timed_variant(const std::filesystem::path &out) {
  std::filesystem::path p = out;
  p.replace_filename(out.stem().string() + "_timed" + out.extension().string());
  return p;
}

int main(int argc, char **argv) {
  CLI::App app{"unsupervised word segmentation over unit sequences"};
  app.require_subcommand(1);

  auto *dp = app.add_subcommand("dpseg", "unigram DP Gibbs segmentation");
  std::string in_path, out_path;
  uws::DpsegConfig cfg;
  dp->add_option("--in", in_path, "input unit file")->required();
  dp->add_option("--alpha0", cfg.alpha0, "DP concentration");
  dp->add_option("--pb", cfg.p_boundary, "P0 geometric stop probability");
  dp->add_option("--sweeps", cfg.n_sweeps, "Gibbs sweeps");
  dp->add_option("--seed", cfg.seed, "random seed");
  dp->add_option("--max-len", cfg.max_len, "maximum tokens per utterance");
  dp->add_option("--out", out_path, "output word file")->required();

  auto *al = app.add_subcommand("align", "segmentation from soft alignments");
  std::string al_units, al_matrices, al_out;
  al->add_option("--units", al_units, "input unit file")->required();
  al->add_option("--alignments", al_matrices, "alignment matrix file")
      ->required();
  al->add_option("--out", al_out, "output word file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (dp->parsed()) {
      const std::vector<uws::UnitSequence> units = uws::read_units_file(in_path);
      const uws::DpsegResult result = uws::gibbs_segment(units, cfg);
      uws::write_segmentation_file(result.segmentations, out_path, false);
      uws::write_segmentation_file(result.segmentations,
                                   timed_variant(out_path), true);
      std::cout << "uws dpseg: best sweep " << result.best_sweep
                << ", log prob " << result.log_prob_trace[result.best_sweep]
                << "\n";
    } else {
      const std::vector<uws::UnitSequence> units =
          uws::read_units_file(al_units);
      std::map<std::string, uws::AlignmentMatrix> mats;
      for (uws::AlignmentMatrix &m : uws::load_alignments(al_matrices))
        mats.emplace(m.utterance_id, std::move(m));
      std::vector<uws::Segmentation> segs;
      for (const uws::UnitSequence &s : units) {
        auto it = mats.find(s.utterance_id);
        if (it == mats.end())
          throw uws::Error("no alignment matrix for utterance '" +
                           s.utterance_id + "'");
        segs.push_back(uws::segment_from_alignment(s, it->second));
      }
      uws::write_segmentation_file(segs, al_out, false);
      uws::write_segmentation_file(segs, timed_variant(al_out), true);
      std::cout << "uws align: segmented " << segs.size() << " utterances\n";
    }
  } catch (const std::exception &e) {
    std::cerr << "uws: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
