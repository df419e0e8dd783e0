// uws/features.hpp
//
// MFCC front end: 16-bit mono PCM WAV in, mean-variance normalized cepstra
// out at a 10 ms hop. Recipe: pre-emphasis, Hann window, power spectrum,
// HTK-mel filterbank, log with floor 1e-10, orthonormal DCT-II.

#ifndef UWS_FEATURES_HPP
#define UWS_FEATURES_HPP

#include <filesystem>
#include <vector>

#include "uws/types.hpp"

namespace uws {

struct MfccConfig {
  int sample_rate_hz = 16000;
  double window_s = 0.025;
  double hop_s = 0.010;
  int n_fft = 512;
  int n_mels = 23;
  int n_ceps = 13;
  double pre_emphasis = 0.97;
  bool add_deltas = false;
  bool add_delta_deltas = false;  // implies add_deltas

  int window_samples() const;
  int hop_samples() const;
  void validate() const;
};

struct WavData {
  int sample_rate_hz = 0;
  std::vector<double> samples;  // mono, in [-1, 1)
};

WavData read_wav(const std::filesystem::path &path);
void write_wav(const WavData &wav, const std::filesystem::path &path);

// Triangular mel filters; exposed so tests can check which filter holds a
// given frequency.
struct MelFilterbank {
  Eigen::MatrixXd weights;  // n_mels x (n_fft/2 + 1)
  std::vector<double> left_hz, center_hz, right_hz;
};
MelFilterbank make_mel_filterbank(const MfccConfig &cfg);

// Per-frame log-mel filterbank energies (before DCT), N x n_mels.
Eigen::MatrixXd log_mel_energies(const std::vector<double> &samples,
                                 const MfccConfig &cfg);

FrameSequence wav_to_frames(const std::filesystem::path &wav_path,
                            const MfccConfig &cfg);
FrameSequence mfcc_from_samples(const std::vector<double> &samples,
                                const MfccConfig &cfg,
                                const std::string &utterance_id);

// Per-utterance cepstral mean-variance normalization. Constant dimensions
// map to zero. Requires at least two frames.
FrameSequence cmvn(const FrameSequence &seq);

}  // namespace uws

#endif  // UWS_FEATURES_HPP
