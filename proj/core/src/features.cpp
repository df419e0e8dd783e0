#include "uws/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "uws/common.hpp"

namespace uws {

namespace fs = std::filesystem;

int MfccConfig::window_samples() const {
  return static_cast<int>(std::lround(window_s * sample_rate_hz));
}
int MfccConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_s * sample_rate_hz));
}

void MfccConfig::validate() const {
  if (sample_rate_hz <= 0) throw Error("MfccConfig: bad sample rate");
  if (hop_s > window_s) throw Error("MfccConfig: hop_s must be <= window_s");
  if (n_ceps > n_mels) throw Error("MfccConfig: n_ceps must be <= n_mels");
  if (n_fft < window_samples())
    throw Error("MfccConfig: n_fft smaller than the analysis window");
  if (n_mels < 1 || n_ceps < 1) throw Error("MfccConfig: bad filter counts");
}

// --------------------------------------------------------------------------
// WAV I/O (16-bit mono PCM only).

namespace {

std::uint32_t read_u32(std::istream &in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char *>(&v), 4);
  return v;
}
std::uint16_t read_u16(std::istream &in) {
  std::uint16_t v = 0;
  in.read(reinterpret_cast<char *>(&v), 2);
  return v;
}

}  // namespace

WavData read_wav(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_wav: cannot open '" + path.string() + "'");
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw Error("read_wav: '" + path.string() + "': not a RIFF file");
  read_u32(in);  // total size
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    throw Error("read_wav: '" + path.string() + "': not a WAVE file");

  WavData wav;
  std::uint16_t channels = 0, bits = 0, format = 0;
  bool have_fmt = false;
  while (in.read(tag, 4)) {
    std::uint32_t chunk_size = read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      wav.sample_rate_hz = static_cast<int>(read_u32(in));
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      in.ignore(chunk_size > 16 ? chunk_size - 16 : 0);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt)
        throw Error("read_wav: '" + path.string() + "': data before fmt");
      if (format != 1 || channels != 1 || bits != 16)
        throw Error("read_wav: '" + path.string() +
                    "': only 16-bit mono PCM is supported");
      std::size_t n = chunk_size / 2;
      wav.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::int16_t s;
        in.read(reinterpret_cast<char *>(&s), 2);
        if (!in)
          throw Error("read_wav: '" + path.string() + "': truncated data");
        wav.samples[i] = s / 32768.0;
      }
      return wav;
    } else {
      in.ignore(chunk_size + (chunk_size & 1));
    }
  }
  throw Error("read_wav: '" + path.string() + "': no data chunk");
}

void write_wav(const WavData &wav, const fs::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_wav: cannot write '" + path.string() + "'");
  auto put_u32 = [&](std::uint32_t v) {
    out.write(reinterpret_cast<const char *>(&v), 4);
  };
  auto put_u16 = [&](std::uint16_t v) {
    out.write(reinterpret_cast<const char *>(&v), 2);
  };
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(wav.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(wav.sample_rate_hz));
  put_u32(static_cast<std::uint32_t>(wav.sample_rate_hz * 2));
  put_u16(2);
  put_u16(16);
  out.write("data", 4);
  put_u32(data_bytes);
  for (double x : wav.samples) {
    double clipped = std::clamp(x, -1.0, 32767.0 / 32768.0);
    auto s = static_cast<std::int16_t>(std::lround(clipped * 32768.0));
    out.write(reinterpret_cast<const char *>(&s), 2);
  }
}

// --------------------------------------------------------------------------
// MFCC.

static double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
static double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank make_mel_filterbank(const MfccConfig &cfg) {
  cfg.validate();
  const int n_bins = cfg.n_fft / 2 + 1;
  const double nyquist = cfg.sample_rate_hz / 2.0;
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(nyquist);

  MelFilterbank fb;
  fb.weights = Eigen::MatrixXd::Zero(cfg.n_mels, n_bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    double left = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.n_mels + 1));
    double center =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.n_mels + 1));
    double right =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 2) / (cfg.n_mels + 1));
    fb.left_hz.push_back(left);
    fb.center_hz.push_back(center);
    fb.right_hz.push_back(right);
    for (int b = 0; b < n_bins; ++b) {
      double hz = double(b) * cfg.sample_rate_hz / cfg.n_fft;
      if (hz <= left || hz >= right) continue;
      fb.weights(m, b) = hz <= center ? (hz - left) / (center - left)
                                      : (right - hz) / (right - center);
    }
  }
  return fb;
}

Eigen::MatrixXd log_mel_energies(const std::vector<double> &samples,
                                 const MfccConfig &cfg) {
  cfg.validate();
  const int window = cfg.window_samples();
  const int hop = cfg.hop_samples();
  if (static_cast<int>(samples.size()) < window)
    throw Error("mfcc: audio shorter than one analysis window");
  const int n_frames = (static_cast<int>(samples.size()) - window) / hop + 1;

  std::vector<double> emphasized(samples.size());
  emphasized[0] = samples[0] * (1.0 - cfg.pre_emphasis);
  for (std::size_t i = 1; i < samples.size(); ++i)
    emphasized[i] = samples[i] - cfg.pre_emphasis * samples[i - 1];

  std::vector<double> hann(window);
  for (int i = 0; i < window; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / window);

  const MelFilterbank fb = make_mel_filterbank(cfg);
  const int n_bins = cfg.n_fft / 2 + 1;
  Eigen::FFT<double> fft;
  std::vector<double> buf(cfg.n_fft);
  std::vector<std::complex<double>> spec;

  Eigen::MatrixXd logmel(n_frames, cfg.n_mels);
  Eigen::VectorXd power(n_bins);
  for (int f = 0; f < n_frames; ++f) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int i = 0; i < window; ++i)
      buf[i] = emphasized[f * hop + i] * hann[i];
    fft.fwd(spec, buf);
    for (int b = 0; b < n_bins; ++b) power[b] = std::norm(spec[b]);
    Eigen::VectorXd mel = fb.weights * power;
    for (int m = 0; m < cfg.n_mels; ++m)
      logmel(f, m) = std::log(std::max(mel[m], 1e-10));
  }
  return logmel;
}

// Regression-based deltas over a +-2 frame window, edges clamped.
static Eigen::MatrixXd deltas(const Eigen::MatrixXd &x) {
  const int n = static_cast<int>(x.rows());
  Eigen::MatrixXd d(n, x.cols());
  const double denom = 2.0 * (1.0 + 4.0);
  for (int t = 0; t < n; ++t) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(x.cols());
    for (int k = 1; k <= 2; ++k) {
      int lo = std::max(0, t - k);
      int hi = std::min(n - 1, t + k);
      acc += k * (x.row(hi) - x.row(lo));
    }
    d.row(t) = acc / denom;
  }
  return d;
}

FrameSequence mfcc_from_samples(const std::vector<double> &samples,
                                const MfccConfig &cfg,
                                const std::string &utterance_id) {
  Eigen::MatrixXd logmel = log_mel_energies(samples, cfg);
  const int n_frames = static_cast<int>(logmel.rows());
  const int M = cfg.n_mels;

  // Orthonormal DCT-II over the mel axis.
  Eigen::MatrixXd dct(cfg.n_ceps, M);
  for (int k = 0; k < cfg.n_ceps; ++k) {
    double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / M);
    for (int m = 0; m < M; ++m)
      dct(k, m) =
          scale * std::cos(std::numbers::pi * k * (2.0 * m + 1.0) / (2.0 * M));
  }
  Eigen::MatrixXd ceps = logmel * dct.transpose();

  Eigen::MatrixXd out = ceps;
  if (cfg.add_deltas || cfg.add_delta_deltas) {
    Eigen::MatrixXd d1 = deltas(ceps);
    if (cfg.add_delta_deltas) {
      Eigen::MatrixXd d2 = deltas(d1);
      out.resize(n_frames, 3 * cfg.n_ceps);
      out << ceps, d1, d2;
    } else {
      out.resize(n_frames, 2 * cfg.n_ceps);
      out << ceps, d1;
    }
  }

  FrameSequence seq;
  seq.utterance_id = utterance_id;
  seq.hop_s = cfg.hop_s;
  seq.frames = out.cast<float>();
  seq.validate();
  return seq;
}

FrameSequence wav_to_frames(const fs::path &wav_path, const MfccConfig &cfg) {
  WavData wav = read_wav(wav_path);
  if (wav.sample_rate_hz != cfg.sample_rate_hz)
    throw Error("wav_to_frames: '" + wav_path.string() + "': sample rate " +
                std::to_string(wav.sample_rate_hz) + " != configured " +
                std::to_string(cfg.sample_rate_hz));
  return mfcc_from_samples(wav.samples, cfg, wav_path.stem().string());
}

FrameSequence cmvn(const FrameSequence &seq) {
  if (seq.n_frames() < 2) throw Error("cmvn: need at least 2 frames");
  const int n = seq.n_frames();
  const int dim = seq.dim();
  Eigen::MatrixXd x = seq.frames.cast<double>();
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean;
  Eigen::RowVectorXd var = centered.array().square().colwise().sum() / n;

  FrameSequence out = seq;
  Eigen::MatrixXd norm(n, dim);
  for (int d = 0; d < dim; ++d) {
    if (var[d] < 1e-20)
      norm.col(d).setZero();
    else
      norm.col(d) = centered.col(d) / std::sqrt(var[d]);
  }
  out.frames = norm.cast<float>();
  return out;
}

}  // namespace uws
