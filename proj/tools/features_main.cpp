// tools/features_main.cpp
//
// MFCC extraction over a corpus manifest: reads WAV audio, writes feature
// binaries and an updated manifest pointing at them.

#include <iostream>

#include <CLI11.hpp>

#include "uws/corpus.hpp"
#include "uws/features.hpp"

int main(int argc, char **argv) {
  CLI::App app{"MFCC feature extraction with per-utterance CMVN"};
  std::string manifest_path, out_dir;
  bool deltas = false, delta_deltas = false, no_cmvn = false;
  uws::MfccConfig cfg;
  app.add_option("--manifest", manifest_path, "corpus manifest JSON")
      ->required();
  app.add_option("--out-dir", out_dir, "output directory")->required();
  app.add_flag("--deltas", deltas, "append delta features");
  app.add_flag("--delta-deltas", delta_deltas, "append delta-delta features");
  app.add_flag("--no-cmvn", no_cmvn, "skip mean-variance normalization");
  app.add_option("--sample-rate", cfg.sample_rate_hz, "expected WAV rate");
  app.add_option("--n-mels", cfg.n_mels, "mel filter count");
  app.add_option("--n-ceps", cfg.n_ceps, "cepstral coefficient count");
  app.add_option("--n-fft", cfg.n_fft, "FFT size");
  CLI11_PARSE(app, argc, argv);

  cfg.add_deltas = deltas || delta_deltas;
  cfg.add_delta_deltas = delta_deltas;

  try {
    uws::CorpusManifest manifest = uws::load_manifest(manifest_path);
    std::filesystem::create_directories(out_dir);
    int done = 0;
    for (uws::Utterance &u : manifest.utterances) {
      if (!u.audio_path) {
        std::cerr << "features: skipping '" << u.id << "' (no audio_path)\n";
        continue;
      }
      uws::FrameSequence seq = uws::wav_to_frames(*u.audio_path, cfg);
      seq.utterance_id = u.id;
      if (!no_cmvn) seq = uws::cmvn(seq);
      const std::filesystem::path fp =
          std::filesystem::path(out_dir) / (u.id + ".uwsf");
      uws::write_features(seq, fp);
      u.feature_path = fp.string();
      ++done;
    }
    manifest.frame_rate_hz = 1.0 / cfg.hop_s;
    uws::save_manifest(manifest,
                       std::filesystem::path(out_dir) / "manifest.json");
    std::cout << "features: wrote " << done << " feature files to " << out_dir
              << "\n";
  } catch (const std::exception &e) {
    std::cerr << "features: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
