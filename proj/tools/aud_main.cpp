// tools/aud_main.cpp
//
// Bayesian acoustic unit discovery: phone-loop training (hmm / shmm / hshmm),
// subspace estimation from labeled corpora, and Viterbi decoding to
// time-stamped unit files.

#include <iostream>

#include <CLI11.hpp>

#include "uws/aud.hpp"
#include "uws/corpus.hpp"
#include "uws/pipeline.hpp"

namespace {

uws::LabeledSource load_labeled(const std::string &manifest_path) {
  const uws::CorpusManifest manifest = uws::load_manifest(manifest_path);
  uws::LabeledSource src;
  src.features = uws::load_corpus_features(manifest);
  std::map<std::string, uws::UnitSequence> gold;
  for (const uws::Utterance &u : manifest.utterances) {
    if (!u.gold_units_path)
      throw uws::Error("utterance '" + u.id + "' has no gold_units_path");
    if (gold.empty())
      for (uws::UnitSequence &s : uws::read_units_file(*u.gold_units_path))
        gold.emplace(s.utterance_id, std::move(s));
    auto it = gold.find(u.id);
    if (it == gold.end())
      throw uws::Error("no gold units for utterance '" + u.id + "'");
    src.labels.push_back(it->second);
  }
  return src;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Bayesian acoustic unit discovery"};
  app.require_subcommand(1);

  auto *train = app.add_subcommand("train", "train a phone-loop model");
  std::string model_kind = "hmm", manifest_path, subspace_path, out_path;
  uws::AudTrainConfig cfg;
  train->add_option("--model", model_kind, "hmm | shmm | hshmm");
  train->add_option("--manifest", manifest_path, "corpus manifest")->required();
  train->add_option("--units", cfg.n_units, "truncation (max units)");
  train->add_option("--states", cfg.n_states, "states per unit");
  train->add_option("--components", cfg.n_components, "Gaussians per state");
  train->add_option("--iters", cfg.n_iters, "EM iterations");
  train->add_option("--seed", cfg.seed, "random seed");
  train->add_option("--subspace", subspace_path,
                    "subspace file (shmm: UWSS, hshmm: UWSH)");
  train->add_flag("--silence-unit", cfg.use_silence_unit,
                  "reserve unit 0 for silence");
  train->add_option("--out", out_path, "model output path")->required();

  auto *decode = app.add_subcommand("decode", "Viterbi-decode a corpus");
  std::string dec_model, dec_manifest, dec_out;
  decode->add_option("--model", dec_model, "trained model")->required();
  decode->add_option("--manifest", dec_manifest, "corpus manifest")->required();
  decode->add_option("--out", dec_out, "time-stamped unit file")->required();

  auto *fitsub = app.add_subcommand(
      "fit-subspace", "estimate a (hierarchical) subspace from labeled data");
  std::vector<std::string> source_manifests;
  int embed_dim = 100, hier_k = -1, fs_states = 3, fs_components = 4;
  unsigned long long fs_seed = 0;
  std::string fs_out;
  fitsub->add_option("--sources", source_manifests,
                     "labeled source manifests (one per language)")
      ->required()
      ->expected(-1);
  fitsub->add_option("--embed-dim", embed_dim, "unit embedding dimension");
  fitsub->add_option("--hier", hier_k,
                     "emit a hierarchical subspace with K templates");
  fitsub->add_option("--states", fs_states, "states per unit");
  fitsub->add_option("--components", fs_components, "Gaussians per state");
  fitsub->add_option("--seed", fs_seed, "random seed");
  fitsub->add_option("--out", fs_out, "subspace output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const uws::CorpusManifest manifest = uws::load_manifest(manifest_path);
      const auto feats = uws::load_corpus_features(manifest);
      std::vector<std::vector<uws::TimeInterval>> silences;
      for (const uws::Utterance &u : manifest.utterances)
        silences.push_back(u.silences);

      uws::PhoneLoop model;
      std::vector<double> elbo;
      if (model_kind == "hmm") {
        auto [m, vb] = uws::train_hmm(feats, cfg, silences);
        model = std::move(m);
        elbo = vb.elbo_trace;
      } else if (model_kind == "shmm") {
        if (subspace_path.empty())
          throw uws::Error("shmm training needs --subspace");
        auto [m, vb] =
            uws::train_shmm(feats, uws::load_subspace(subspace_path), cfg);
        model = std::move(m);
        elbo = vb.elbo_trace;
      } else if (model_kind == "hshmm") {
        if (subspace_path.empty())
          throw uws::Error("hshmm training needs --subspace");
        auto res = uws::train_hshmm(
            feats, uws::load_hier_subspace(subspace_path), cfg);
        model = std::move(res.model);
        elbo = res.state.elbo_trace;
      } else {
        throw uws::Error("unknown model '" + model_kind + "'");
      }
      uws::save_phone_loop(model, out_path);
      std::cout << "aud train: " << model_kind << ", final ELBO "
                << (elbo.empty() ? 0.0 : elbo.back()) << "\n";
    } else if (decode->parsed()) {
      const uws::PhoneLoop model = uws::load_phone_loop(dec_model);
      const uws::CorpusManifest manifest = uws::load_manifest(dec_manifest);
      std::vector<uws::UnitSequence> units;
      for (const auto &f : uws::load_corpus_features(manifest))
        units.push_back(uws::viterbi_decode(f, model));
      uws::write_units_file(units, dec_out, true);
      std::cout << "aud decode: wrote " << dec_out << "\n";
    } else {
      std::vector<uws::LabeledSource> sources;
      for (const std::string &m : source_manifests)
        sources.push_back(load_labeled(m));
      if (hier_k >= 0) {
        const uws::HierSubspace hier = uws::fit_hier_subspace(
            sources, hier_k, embed_dim, fs_states, fs_components, fs_seed);
        uws::save_hier_subspace(hier, fs_out);
        std::cout << "aud fit-subspace: hierarchical, K=" << hier_k
                  << ", max relative error " << hier.reconstruction_error
                  << "\n";
      } else {
        const uws::Subspace sub = uws::fit_subspace(
            sources, embed_dim, fs_states, fs_components, fs_seed);
        uws::save_subspace(sub, fs_out);
        std::cout << "aud fit-subspace: max relative error "
                  << sub.reconstruction_error << "\n";
      }
    }
  } catch (const std::exception &e) {
    std::cerr << "aud: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
