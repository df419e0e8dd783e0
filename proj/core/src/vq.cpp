#include "uws/vq.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>

namespace uws {

namespace fs = std::filesystem;

void VqVaeModel::validate() const {
  if (n_units() < 2) throw Error("VqVaeModel: need at least 2 units");
  if (!codebook.allFinite() || !encoder.w1.allFinite() ||
      !encoder.w2.allFinite() || !decoder.w1.allFinite() ||
      !decoder.w2.allFinite())
    throw Error("VqVaeModel: non-finite parameters");
  for (int u = 0; u + 1 < n_units(); ++u)
    for (int v = u + 1; v < n_units(); ++v)
      if ((codebook.row(u) - codebook.row(v)).norm() == 0.0)
        throw Error("VqVaeModel: duplicate codebook rows " +
                    std::to_string(u) + " and " + std::to_string(v));
}

int quantize_nearest(const Eigen::VectorXd &v,
                     const Eigen::MatrixXd &codebook) {
  if (v.size() != codebook.cols())
    throw Error("quantize_nearest: dimension mismatch");
  int best = 0;
  double best_d = (codebook.row(0).transpose() - v).squaredNorm();
  for (int u = 1; u < codebook.rows(); ++u) {
    const double d = (codebook.row(u).transpose() - v).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = u;
    }
  }
  return best;
}

VqVaeLossTerms vqvae_loss(const FrameSequence &batch, const VqVaeModel &model) {
  if (batch.dim() != model.encoder.in_dim())
    throw Error("vqvae_loss: feature dim " + std::to_string(batch.dim()) +
                " != encoder input " + std::to_string(model.encoder.in_dim()));
  const int n = batch.n_frames();
  VqVaeLossTerms terms;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = batch.frames.row(i).cast<double>();
    const Eigen::VectorXd v = model.encoder.forward(x);
    const int z = quantize_nearest(v, model.codebook);
    const Eigen::VectorXd e = model.codebook.row(z);
    const double qerr = (e - v).squaredNorm();
    terms.reconstruction += (x - model.decoder.forward(e)).squaredNorm();
    terms.commitment += model.k1 * qerr;
    terms.codebook += model.k2 * qerr;
  }
  terms.reconstruction /= n;
  terms.commitment /= n;
  terms.codebook /= n;
  return terms;
}

namespace {

struct MlpGrads {
  Eigen::MatrixXd w1, w2;
  Eigen::VectorXd b1, b2;
  explicit MlpGrads(const Mlp &m)
      : w1(Eigen::MatrixXd::Zero(m.w1.rows(), m.w1.cols())),
        w2(Eigen::MatrixXd::Zero(m.w2.rows(), m.w2.cols())),
        b1(Eigen::VectorXd::Zero(m.b1.size())),
        b2(Eigen::VectorXd::Zero(m.b2.size())) {}
};

// Backprop through affine-tanh-affine; returns the input gradient.
Eigen::VectorXd mlp_backward(const Mlp &m, const Eigen::VectorXd &x,
                             const Eigen::VectorXd &dout, MlpGrads &g) {
  const Eigen::VectorXd pre = m.w1 * x + m.b1;
  const Eigen::VectorXd act = pre.array().tanh();
  g.w2 += dout * act.transpose();
  g.b2 += dout;
  const Eigen::VectorXd dact = m.w2.transpose() * dout;
  const Eigen::VectorXd dpre =
      (dact.array() * (1.0 - act.array().square())).matrix();
  g.w1 += dpre * x.transpose();
  g.b1 += dpre;
  return m.w1.transpose() * dpre;
}

}  // namespace

VqVaeGradients vqvae_backward(const FrameSequence &batch,
                              const VqVaeModel &model) {
  const int n = batch.n_frames();
  MlpGrads enc(model.encoder), dec(model.decoder);
  Eigen::MatrixXd cb_train =
      Eigen::MatrixXd::Zero(model.codebook.rows(), model.codebook.cols());
  Eigen::MatrixXd cb_full = cb_train;

  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = batch.frames.row(i).cast<double>();
    const Eigen::VectorXd v = model.encoder.forward(x);
    const int z = quantize_nearest(v, model.codebook);
    const Eigen::VectorXd e = model.codebook.row(z);

    const Eigen::VectorXd xh = model.decoder.forward(e);
    const Eigen::VectorXd drecon = 2.0 * (xh - x);
    const Eigen::VectorXd de_recon = mlp_backward(model.decoder, e, drecon, dec);

    cb_train.row(z) += 2.0 * model.k2 * (e - v);
    cb_full.row(z) +=
        de_recon + 2.0 * (model.k1 + model.k2) * (e - v);

    // Straight-through: the reconstruction gradient at the decoder input is
    // copied to the encoder output, plus the commitment term.
    const Eigen::VectorXd dv = de_recon + 2.0 * model.k1 * (v - e);
    mlp_backward(model.encoder, x, dv, enc);
  }

  VqVaeGradients g;
  g.encoder = {enc.w1 / n, enc.w2 / n, enc.b1 / n, enc.b2 / n};
  g.decoder = {dec.w1 / n, dec.w2 / n, dec.b1 / n, dec.b2 / n};
  g.codebook_train = cb_train / n;
  g.codebook_full = cb_full / n;
  return g;
}

// --------------------------------------------------------------------------
// Training.

namespace {

struct Adam {
  Eigen::MatrixXd m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long t = 0;

  explicit Adam(Eigen::Index rows, Eigen::Index cols)
      : m(Eigen::MatrixXd::Zero(rows, cols)),
        v(Eigen::MatrixXd::Zero(rows, cols)) {}

  void step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd &grad,
            double lr) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.array().square().matrix();
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    param -= (lr * (m / bc1).array() / ((v / bc2).array().sqrt() + eps))
                 .matrix();
  }
};

Eigen::MatrixXd glorot(int rows, int cols, Rng &rng) {
  const double s = std::sqrt(6.0 / (rows + cols));
  Eigen::MatrixXd w(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) w(r, c) = rng.uniform(-s, s);
  return w;
}

}  // namespace

VqVaeTrainResult vqvae_train(const std::vector<FrameSequence> &corpus,
                             const VqVaeTrainConfig &cfg) {
  if (corpus.empty()) throw Error("vqvae_train: empty corpus");
  long long total_frames = 0;
  const int dim = corpus.front().dim();
  for (const FrameSequence &s : corpus) {
    if (s.dim() != dim) throw Error("vqvae_train: inconsistent feature dims");
    total_frames += s.n_frames();
  }

  // One flat batch; full-batch gradients keep training deterministic.
  FrameSequence all;
  all.utterance_id = "batch";
  all.frames.resize(total_frames, dim);
  long long row = 0;
  for (const FrameSequence &s : corpus) {
    all.frames.middleRows(row, s.n_frames()) = s.frames;
    row += s.n_frames();
  }

  Rng rng(cfg.seed);
  VqVaeModel model;
  model.k1 = cfg.k1;
  model.k2 = cfg.k2;
  model.encoder.w1 = glorot(cfg.hidden_dim, dim, rng);
  model.encoder.b1 = Eigen::VectorXd::Zero(cfg.hidden_dim);
  model.encoder.w2 = glorot(cfg.latent_dim, cfg.hidden_dim, rng);
  model.encoder.b2 = Eigen::VectorXd::Zero(cfg.latent_dim);
  model.decoder.w1 = glorot(cfg.hidden_dim, cfg.latent_dim, rng);
  model.decoder.b1 = Eigen::VectorXd::Zero(cfg.hidden_dim);
  model.decoder.w2 = glorot(dim, cfg.hidden_dim, rng);
  model.decoder.b2 = Eigen::VectorXd::Zero(dim);

  // Codebook: latents of evenly strided frames, jittered to stay distinct.
  model.codebook.resize(cfg.n_units, cfg.latent_dim);
  for (int u = 0; u < cfg.n_units; ++u) {
    const long long idx = (total_frames * u) / cfg.n_units;
    const Eigen::VectorXd x = all.frames.row(idx).cast<double>();
    Eigen::VectorXd v = model.encoder.forward(x);
    for (int d = 0; d < cfg.latent_dim; ++d) v[d] += 1e-3 * rng.gaussian();
    model.codebook.row(u) = v;
  }

  Adam opt_ew1(cfg.hidden_dim, dim), opt_ew2(cfg.latent_dim, cfg.hidden_dim);
  Adam opt_eb1(cfg.hidden_dim, 1), opt_eb2(cfg.latent_dim, 1);
  Adam opt_dw1(cfg.hidden_dim, cfg.latent_dim), opt_dw2(dim, cfg.hidden_dim);
  Adam opt_db1(cfg.hidden_dim, 1), opt_db2(dim, 1);
  Adam opt_cb(cfg.n_units, cfg.latent_dim);

  VqVaeTrainResult result;
  StagnationLrSchedule schedule{cfg.learning_rate, cfg.stagnation_rel_tol,
                                cfg.stagnation_epochs};
  double lr = cfg.learning_rate;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const VqVaeLossTerms terms = vqvae_loss(all, model);
    const double loss = terms.total();
    if (!std::isfinite(loss))
      throw Error("vqvae_train: loss diverged (non-finite) at epoch " +
                  std::to_string(epoch));
    if (!result.loss_trace.empty())
      lr = schedule.observe(result.loss_trace.back(), loss);
    result.loss_trace.push_back(loss);
    result.lr_trace.push_back(lr);

    const VqVaeGradients g = vqvae_backward(all, model);
    opt_ew1.step(model.encoder.w1, g.encoder.w1, lr);
    opt_ew2.step(model.encoder.w2, g.encoder.w2, lr);
    opt_eb1.step(model.encoder.b1, g.encoder.b1, lr);
    opt_eb2.step(model.encoder.b2, g.encoder.b2, lr);
    opt_dw1.step(model.decoder.w1, g.decoder.w1, lr);
    opt_dw2.step(model.decoder.w2, g.decoder.w2, lr);
    opt_db1.step(model.decoder.b1, g.decoder.b1, lr);
    opt_db2.step(model.decoder.b2, g.decoder.b2, lr);
    opt_cb.step(model.codebook, g.codebook_train, lr);
  }
  result.model = std::move(model);
  return result;
}

std::vector<int> vqvae_encode_labels(const FrameSequence &seq,
                                     const VqVaeModel &model) {
  std::vector<int> labels(seq.n_frames());
  for (int i = 0; i < seq.n_frames(); ++i) {
    const Eigen::VectorXd x = seq.frames.row(i).cast<double>();
    labels[i] = quantize_nearest(model.encoder.forward(x), model.codebook);
  }
  return labels;
}

// --------------------------------------------------------------------------
// Model file: "UWSV", u32 version, dims, f64 payload.

namespace {

void put_matrix(std::ostream &out, const Eigen::MatrixXd &m) {
  const std::uint32_t rows = static_cast<std::uint32_t>(m.rows());
  const std::uint32_t cols = static_cast<std::uint32_t>(m.cols());
  out.write(reinterpret_cast<const char *>(&rows), 4);
  out.write(reinterpret_cast<const char *>(&cols), 4);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      double v = m(r, c);
      out.write(reinterpret_cast<const char *>(&v), 8);
    }
}

Eigen::MatrixXd get_matrix(std::istream &in, const std::string &what) {
  std::uint32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char *>(&rows), 4);
  in.read(reinterpret_cast<char *>(&cols), 4);
  if (!in) throw Error("load_vqvae: truncated " + what);
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      double v;
      in.read(reinterpret_cast<char *>(&v), 8);
      if (!in) throw Error("load_vqvae: truncated " + what);
      m(r, c) = v;
    }
  return m;
}

}  // namespace

void save_vqvae(const VqVaeModel &model, const fs::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_vqvae: cannot write '" + path.string() + "'");
  out.write("UWSV", 4);
  const std::uint32_t version = 1;
  out.write(reinterpret_cast<const char *>(&version), 4);
  out.write(reinterpret_cast<const char *>(&model.k1), 8);
  out.write(reinterpret_cast<const char *>(&model.k2), 8);
  put_matrix(out, model.encoder.w1);
  put_matrix(out, model.encoder.b1);
  put_matrix(out, model.encoder.w2);
  put_matrix(out, model.encoder.b2);
  put_matrix(out, model.codebook);
  put_matrix(out, model.decoder.w1);
  put_matrix(out, model.decoder.b1);
  put_matrix(out, model.decoder.w2);
  put_matrix(out, model.decoder.b2);
}

VqVaeModel load_vqvae(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_vqvae: cannot open '" + path.string() + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "UWSV")
    throw Error("load_vqvae: '" + path.string() + "': bad magic");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char *>(&version), 4);
  if (version != 1)
    throw Error("load_vqvae: unsupported version " + std::to_string(version));
  VqVaeModel m;
  in.read(reinterpret_cast<char *>(&m.k1), 8);
  in.read(reinterpret_cast<char *>(&m.k2), 8);
  m.encoder.w1 = get_matrix(in, "encoder.w1");
  m.encoder.b1 = get_matrix(in, "encoder.b1");
  m.encoder.w2 = get_matrix(in, "encoder.w2");
  m.encoder.b2 = get_matrix(in, "encoder.b2");
  m.codebook = get_matrix(in, "codebook");
  m.decoder.w1 = get_matrix(in, "decoder.w1");
  m.decoder.b1 = get_matrix(in, "decoder.b1");
  m.decoder.w2 = get_matrix(in, "decoder.w2");
  m.decoder.b2 = get_matrix(in, "decoder.b2");
  return m;
}

// --------------------------------------------------------------------------
// Grouped codebook.

int GroupedCodebook::dim() const {
  int d = 0;
  for (const Eigen::MatrixXd &cb : codebooks) d += static_cast<int>(cb.cols());
  return d;
}

void GroupedCodebook::validate() const {
  if (codebooks.empty()) throw Error("GroupedCodebook: no groups");
  const int v = vars();
  const auto cols = codebooks.front().cols();
  if (v < 2) throw Error("GroupedCodebook: need V >= 2");
  for (const Eigen::MatrixXd &cb : codebooks)
    if (cb.rows() != v || cb.cols() != cols)
      throw Error("GroupedCodebook: inconsistent group shapes");
}

int GroupedQuantizeResult::flat_index(int vars) const {
  int flat = 0;
  for (int idx : indices) flat = flat * vars + idx;
  return flat;
}

static GroupedQuantizeResult grouped_quantize_impl(const Eigen::VectorXd &z,
                                                   const GroupedCodebook &gc,
                                                   double temperature,
                                                   Rng *rng) {
  gc.validate();
  if (z.size() != gc.dim())
    throw Error("grouped_quantize: latent dim " + std::to_string(z.size()) +
                " != codebook dim " + std::to_string(gc.dim()));
  GroupedQuantizeResult res;
  res.quantized.resize(z.size());
  int offset = 0;
  for (const Eigen::MatrixXd &cb : gc.codebooks) {
    const int gdim = static_cast<int>(cb.cols());
    const Eigen::VectorXd part = z.segment(offset, gdim);
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < cb.rows(); ++i) {
      double score = -(cb.row(i).transpose() - part).squaredNorm();
      if (rng) {
        const double gumbel = -std::log(-std::log(
            std::min(std::max(rng->uniform(), 1e-12), 1.0 - 1e-12)));
        score = score / temperature + gumbel;
      }
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
    res.indices.push_back(best);
    res.quantized.segment(offset, gdim) = cb.row(best);
    offset += gdim;
  }
  return res;
}

GroupedQuantizeResult grouped_quantize_hard(const Eigen::VectorXd &z,
                                            const GroupedCodebook &gc) {
  return grouped_quantize_impl(z, gc, 1.0, nullptr);
}

GroupedQuantizeResult grouped_quantize_gumbel(const Eigen::VectorXd &z,
                                              const GroupedCodebook &gc,
                                              double temperature, Rng &rng) {
  if (temperature <= 0.0)
    throw Error("grouped_quantize_gumbel: temperature must be > 0");
  return grouped_quantize_impl(z, gc, temperature, &rng);
}

// --------------------------------------------------------------------------
// Contrastive loss.

ContrastiveLossConfig ContrastiveLossConfig::identity(int steps, int dim,
                                                      double lambda) {
  ContrastiveLossConfig cfg;
  cfg.lambda = lambda;
  for (int k = 0; k < steps; ++k) {
    cfg.step_w.push_back(Eigen::MatrixXd::Identity(dim, dim));
    cfg.step_b.push_back(Eigen::VectorXd::Zero(dim));
  }
  return cfg;
}

double contrastive_loss(const Eigen::MatrixXd &context,
                        const Eigen::MatrixXd &futures,
                        const std::vector<Eigen::VectorXd> &negatives,
                        const ContrastiveLossConfig &cfg) {
  const int T = static_cast<int>(context.rows());
  const int K = cfg.steps();
  if (K < 1) throw Error("contrastive_loss: need at least one step");
  if (futures.rows() != T || futures.cols() != context.cols())
    throw Error("contrastive_loss: context/future shape mismatch");
  if (T <= K)
    throw Error("contrastive_loss: sequence length " + std::to_string(T) +
                " must exceed K = " + std::to_string(K));
  if (negatives.empty()) throw Error("contrastive_loss: no negatives");

  double loss = 0.0;
  for (int k = 1; k <= K; ++k) {
    const Eigen::MatrixXd &w = cfg.step_w[k - 1];
    const Eigen::VectorXd &b = cfg.step_b[k - 1];
    for (int i = 0; i + k < T; ++i) {
      const Eigen::VectorXd h = w * context.row(i).transpose() + b;
      loss += log_sigmoid(futures.row(i + k).dot(h));
      double neg = 0.0;
      for (const Eigen::VectorXd &nz : negatives)
        neg += log_sigmoid(-nz.dot(h));
      loss += cfg.lambda * neg / double(negatives.size());
    }
  }
  return loss;
}

std::vector<Eigen::VectorXd> draw_negatives(const Eigen::MatrixXd &sequence,
                                            int n, unsigned long long seed) {
  if (sequence.rows() < 1) throw Error("draw_negatives: empty sequence");
  if (n < 1) throw Error("draw_negatives: need n >= 1");
  Rng rng(seed);
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i)
    out.push_back(sequence.row(rng.index(sequence.rows())));
  return out;
}

}  // namespace uws
