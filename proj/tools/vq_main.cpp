// tools/vq_main.cpp
//
// VQ-VAE training and frame-wise decoding. `decode` emits per-frame label
// lines "<id> l_1 l_2 ... l_N", one label per hop.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "uws/corpus.hpp"
#include "uws/vq.hpp"

int main(int argc, char **argv) {
  CLI::App app{"frame-wise VQ-VAE discretization"};
  app.require_subcommand(1);

  auto *train = app.add_subcommand("train", "train a VQ-VAE on a corpus");
  std::string manifest_path, out_path;
  uws::VqVaeTrainConfig cfg;
  train->add_option("--manifest", manifest_path, "corpus manifest")->required();
  train->add_option("--units", cfg.n_units, "codebook size");
  train->add_option("--epochs", cfg.epochs, "training epochs");
  train->add_option("--seed", cfg.seed, "random seed");
  train->add_option("--latent-dim", cfg.latent_dim, "latent dimension");
  train->add_option("--hidden-dim", cfg.hidden_dim, "MLP hidden width");
  train->add_option("--lr", cfg.learning_rate, "initial learning rate");
  train->add_option("--out", out_path, "model output path")->required();

  auto *decode = app.add_subcommand("decode", "emit per-frame unit labels");
  std::string model_path, dec_manifest, out_dir;
  decode->add_option("--model", model_path, "trained model")->required();
  decode->add_option("--manifest", dec_manifest, "corpus manifest")->required();
  decode->add_option("--out-dir", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const uws::CorpusManifest manifest = uws::load_manifest(manifest_path);
      const auto feats = uws::load_corpus_features(manifest);
      const uws::VqVaeTrainResult result = uws::vqvae_train(feats, cfg);
      uws::save_vqvae(result.model, out_path);
      std::cout << "vq train: final loss " << result.loss_trace.back()
                << " after " << result.loss_trace.size() << " epochs\n";
    } else {
      const uws::VqVaeModel model = uws::load_vqvae(model_path);
      const uws::CorpusManifest manifest = uws::load_manifest(dec_manifest);
      std::filesystem::create_directories(out_dir);
      std::ofstream out(std::filesystem::path(out_dir) / "frame_labels.txt");
      for (const auto &f : uws::load_corpus_features(manifest)) {
        out << f.utterance_id;
        for (int l : uws::vqvae_encode_labels(f, model)) out << ' ' << l;
        out << '\n';
      }
      std::cout << "vq decode: wrote " << out_dir << "/frame_labels.txt\n";
    }
  } catch (const std::exception &e) {
    std::cerr << "vq: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
