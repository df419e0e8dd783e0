#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "aud_internal.hpp"
#include "uws/common.hpp"

namespace uws {

static constexpr double kLn2Pi = 1.8378770664093454836;
static constexpr double kVarFloor = 1e-6;
static constexpr double kVarCeil = 1e6;

// --------------------------------------------------------------------------
// The decoding map f and its preimage.
//
// Per-state layout of the parameter vector psi:
//   [trans logits (2) | weight logits (C) | per comp: mean (D), logvar (D)]

static int state_block(int C, int D) { return 2 + C + 2 * C * D; }

int psi_dim(int n_states, int n_components, int dim) {
  return n_states * state_block(n_components, dim);
}

static Eigen::VectorXd softmax(const Eigen::VectorXd &logits) {
  const Eigen::ArrayXd shifted = logits.array() - logits.maxCoeff();
  Eigen::ArrayXd ex = shifted.exp();
  return (ex / ex.sum()).matrix();
}

UnitHmm decode_unit(const Eigen::VectorXd &psi, int n_states, int n_components,
                    int dim) {
  if (psi.size() != psi_dim(n_states, n_components, dim))
    throw Error("decode_unit: parameter vector has wrong size");
  const int B = state_block(n_components, dim);
  UnitHmm unit;
  unit.trans.resize(n_states, 2);
  for (int s = 0; s < n_states; ++s) {
    const int off = s * B;
    unit.trans.row(s) = softmax(psi.segment(off, 2)).transpose();
    StateEmission em;
    em.weights = softmax(psi.segment(off + 2, n_components));
    for (int c = 0; c < n_components; ++c) {
      GaussianComponent comp;
      comp.mean = psi.segment(off + 2 + n_components + c * 2 * dim, dim);
      comp.var = psi.segment(off + 2 + n_components + c * 2 * dim + dim, dim)
                     .array()
                     .exp()
                     .min(kVarCeil)
                     .max(kVarFloor)
                     .matrix();
      em.components.push_back(std::move(comp));
    }
    unit.states.push_back(std::move(em));
  }
  return unit;
}

static Eigen::VectorXd centered_log(const Eigen::VectorXd &probs) {
  Eigen::VectorXd lg = probs.array().max(1e-12).log();
  return lg.array() - lg.mean();
}

Eigen::VectorXd unit_preimage(const UnitHmm &unit) {
  const int S = unit.n_states();
  const int C = static_cast<int>(unit.states[0].components.size());
  const int D = static_cast<int>(unit.states[0].components[0].mean.size());
  const int B = state_block(C, D);
  Eigen::VectorXd psi(psi_dim(S, C, D));
  for (int s = 0; s < S; ++s) {
    const int off = s * B;
    psi.segment(off, 2) = centered_log(unit.trans.row(s).transpose());
    psi.segment(off + 2, C) = centered_log(unit.states[s].weights);
    for (int c = 0; c < C; ++c) {
      const GaussianComponent &comp = unit.states[s].components[c];
      psi.segment(off + 2 + C + c * 2 * D, D) = comp.mean;
      psi.segment(off + 2 + C + c * 2 * D + D, D) =
          comp.var.array().max(kVarFloor).log().matrix();
    }
  }
  return psi;
}

UnitHmm Subspace::decode(const Eigen::VectorXd &e) const {
  return decode_unit(w * e + b, n_states, n_components, dim);
}

Subspace HierSubspace::instantiate(const Eigen::VectorXd &alpha) const {
  if (alpha.size() != K())
    throw Error("HierSubspace: alpha has size " + std::to_string(alpha.size()) +
                ", expected " + std::to_string(K()));
  Subspace sub;
  sub.n_states = n_states;
  sub.n_components = n_components;
  sub.dim = dim;
  sub.w = tw[0];
  sub.b = tb[0];
  for (int k = 0; k < K(); ++k) {
    sub.w += alpha[k] * tw[k + 1];
    sub.b += alpha[k] * tb[k + 1];
  }
  return sub;
}

// --------------------------------------------------------------------------
// Supervised per-unit HMMs for subspace estimation.

namespace {

struct Pool {
  std::vector<Eigen::VectorXd> frames;
  long long tokens = 0;
};

void kmeans_mixture(const std::vector<Eigen::VectorXd> &frames, int C,
                    StateEmission &em, Rng &rng) {
  const int n = static_cast<int>(frames.size());
  const int dim = static_cast<int>(frames[0].size());
  std::vector<Eigen::VectorXd> centers;
  centers.push_back(frames[rng.index(n)]);
  while (static_cast<int>(centers.size()) < C) {
    // k-means++ style: pick the frame farthest from its nearest center.
    int far = 0;
    double far_d = -1.0;
    for (int i = 0; i < n; ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (const auto &c : centers) d = std::min(d, (frames[i] - c).squaredNorm());
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    Eigen::VectorXd c = frames[far];
    for (int d = 0; d < dim; ++d) c[d] += 1e-6 * rng.gaussian();
    centers.push_back(std::move(c));
  }
  std::vector<int> assign(n, 0);
  for (int it = 0; it < 10; ++it) {
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = (frames[i] - centers[0]).squaredNorm();
      for (int c = 1; c < C; ++c) {
        const double d = (frames[i] - centers[c]).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      assign[i] = best;
    }
    for (int c = 0; c < C; ++c) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
      int cnt = 0;
      for (int i = 0; i < n; ++i)
        if (assign[i] == c) {
          sum += frames[i];
          ++cnt;
        }
      if (cnt > 0) centers[c] = sum / cnt;
    }
  }
  em.weights.resize(C);
  for (int c = 0; c < C; ++c) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(dim);
    int cnt = 0;
    for (int i = 0; i < n; ++i)
      if (assign[i] == c) {
        sum += frames[i];
        sq += frames[i].array().square().matrix();
        ++cnt;
      }
    GaussianComponent comp;
    if (cnt > 0) {
      comp.mean = sum / cnt;
      comp.var = (sq / cnt - comp.mean.array().square().matrix())
                     .cwiseMax(1e-4);
    } else {
      comp.mean = centers[c];
      comp.var = Eigen::VectorXd::Constant(dim, 1.0);
    }
    em.weights[c] = std::max(1.0, double(cnt));
    em.components.push_back(std::move(comp));
  }
  em.weights /= em.weights.sum();
}

}  // namespace

std::map<std::string, UnitHmm> fit_supervised_units(const LabeledSource &src,
                                                    int n_states,
                                                    int n_components,
                                                    unsigned long long seed) {
  if (src.features.size() != src.labels.size())
    throw Error("fit_supervised_units: features/labels size mismatch");
  // Pool frames per (unit label, state) by uniform within-token splitting.
  std::map<std::string, std::vector<Pool>> pools;
  for (std::size_t i = 0; i < src.features.size(); ++i) {
    const FrameSequence &f = src.features[i];
    for (const UnitToken &tok : src.labels[i].tokens) {
      const int f0 = std::max(
          0, static_cast<int>(std::lround(tok.start_s / f.hop_s)));
      const int f1 = std::min(
          f.n_frames(), static_cast<int>(std::lround(tok.end_s / f.hop_s)));
      if (f1 <= f0) continue;
      auto &unit_pools = pools[tok.label];
      if (unit_pools.empty()) unit_pools.resize(n_states);
      const int len = f1 - f0;
      for (int s = 0; s < n_states; ++s) {
        const int a = f0 + len * s / n_states;
        const int b = f0 + len * (s + 1) / n_states;
        for (int fr = a; fr < b; ++fr)
          unit_pools[s].frames.push_back(f.frames.row(fr).cast<double>());
        if (b > a) ++unit_pools[s].tokens;
      }
    }
  }

  Rng rng(seed);
  std::map<std::string, UnitHmm> units;
  for (auto &[label, unit_pools] : pools) {
    long long total = 0;
    for (const Pool &p : unit_pools) total += p.frames.size();
    if (total < n_states)
      throw Error("fit_supervised_units: insufficient data for unit '" + label +
                  "'");
    // Backfill empty states from the union pool.
    std::vector<Eigen::VectorXd> all;
    for (const Pool &p : unit_pools)
      all.insert(all.end(), p.frames.begin(), p.frames.end());

    UnitHmm unit;
    unit.trans.resize(n_states, 2);
    for (int s = 0; s < n_states; ++s) {
      const Pool &p = unit_pools[s];
      const std::vector<Eigen::VectorXd> &frames =
          p.frames.empty() ? all : p.frames;
      StateEmission em;
      kmeans_mixture(frames, n_components, em, rng);
      unit.states.push_back(std::move(em));
      const double n_fr = std::max<double>(1.0, double(p.frames.size()));
      const double n_tok = std::max<double>(1.0, double(p.tokens));
      double self = (n_fr - n_tok) / n_fr;
      self = std::clamp(self, 1e-4, 1.0 - 1e-4);
      unit.trans(s, 0) = self;
      unit.trans(s, 1) = 1.0 - self;
    }
    units.emplace(label, std::move(unit));
  }
  if (units.empty()) throw Error("fit_supervised_units: no labeled tokens");
  return units;
}

// --------------------------------------------------------------------------
// Subspace fitting (PCA of the unit preimages).

namespace {

struct PcaFit {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
  Eigen::MatrixXd embeddings;  // n x E
  double max_rel_error = 0.0;
};

PcaFit pca_fit(const std::vector<Eigen::VectorXd> &points, int embed_dim) {
  const int n = static_cast<int>(points.size());
  const int P = static_cast<int>(points[0].size());
  Eigen::MatrixXd stack(n, P);
  for (int i = 0; i < n; ++i) stack.row(i) = points[i].transpose();
  PcaFit fit;
  fit.b = stack.colwise().mean().transpose();
  Eigen::MatrixXd centered = stack.rowwise() - fit.b.transpose();

  fit.w = Eigen::MatrixXd::Zero(P, embed_dim);
  fit.embeddings = Eigen::MatrixXd::Zero(n, embed_dim);
  if (embed_dim > 0) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(
        centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const int rank = static_cast<int>(svd.singularValues().size());
    for (int j = 0; j < std::min(embed_dim, rank); ++j) {
      const double sd = svd.singularValues()[j] / std::sqrt(double(n));
      if (sd < 1e-9) break;
      fit.w.col(j) = svd.matrixV().col(j) * sd;
      fit.embeddings.col(j) = centered * svd.matrixV().col(j) / sd;
    }
  }
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd rec =
        fit.w * fit.embeddings.row(i).transpose() + fit.b;
    const double rel = (rec - points[i]).norm() /
                       std::max(points[i].norm(), 1e-12);
    fit.max_rel_error = std::max(fit.max_rel_error, rel);
  }
  return fit;
}

std::vector<Eigen::VectorXd> source_preimages(const LabeledSource &src,
                                              int n_states, int n_components,
                                              unsigned long long seed) {
  std::vector<Eigen::VectorXd> psis;
  for (const auto &[label, unit] :
       fit_supervised_units(src, n_states, n_components, seed))
    psis.push_back(unit_preimage(unit));
  return psis;
}

}  // namespace

Subspace fit_subspace(const std::vector<LabeledSource> &sources, int embed_dim,
                      int n_states, int n_components, unsigned long long seed) {
  if (sources.empty()) throw Error("fit_subspace: no source corpora");
  std::vector<Eigen::VectorXd> psis;
  int dim = -1;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (dim < 0 && !sources[i].features.empty())
      dim = sources[i].features.front().dim();
    auto v = source_preimages(sources[i], n_states, n_components, seed + i);
    for (Eigen::VectorXd &p : v) psis.push_back(std::move(p));
  }
  if (psis.size() < 2) throw Error("fit_subspace: need at least 2 source units");

  const PcaFit fit = pca_fit(psis, embed_dim);
  Subspace sub;
  sub.w = fit.w;
  sub.b = fit.b;
  sub.n_states = n_states;
  sub.n_components = n_components;
  sub.dim = dim;
  sub.reconstruction_error = fit.max_rel_error;
  return sub;
}

HierSubspace fit_hier_subspace(const std::vector<LabeledSource> &sources,
                               int K, int embed_dim, int n_states,
                               int n_components, unsigned long long seed) {
  const int L = static_cast<int>(sources.size());
  if (L < 2) throw Error("fit_hier_subspace: need at least 2 source languages");
  if (K > L)
    throw Error("fit_hier_subspace: K = " + std::to_string(K) +
                " exceeds the number of source languages (" +
                std::to_string(L) + ")");
  int dim = sources.front().features.front().dim();

  std::vector<std::vector<Eigen::VectorXd>> psis(L);
  std::vector<Eigen::VectorXd> pooled;
  for (int l = 0; l < L; ++l) {
    psis[l] = source_preimages(sources[l], n_states, n_components, seed + l);
    pooled.insert(pooled.end(), psis[l].begin(), psis[l].end());
  }
  const int P = static_cast<int>(pooled.front().size());

  HierSubspace hier;
  hier.n_states = n_states;
  hier.n_components = n_components;
  hier.dim = dim;

  const PcaFit pool_fit = pca_fit(pooled, embed_dim);
  if (K == 0) {
    hier.tw = {pool_fit.w};
    hier.tb = {pool_fit.b};
    hier.reconstruction_error = pool_fit.max_rel_error;
    return hier;
  }

  const int E = embed_dim;
  hier.tw.assign(K + 1, Eigen::MatrixXd::Zero(P, E));
  hier.tb.assign(K + 1, Eigen::VectorXd::Zero(P));
  hier.tw[0] = pool_fit.w;
  hier.tb[0] = pool_fit.b;

  Rng rng(seed);
  std::vector<Eigen::VectorXd> alphas(L);
  for (int l = 0; l < L; ++l) {
    alphas[l].resize(K);
    for (int k = 0; k < K; ++k) alphas[l][k] = rng.gaussian();
  }
  std::vector<std::vector<Eigen::VectorXd>> embeds(L);
  {
    int row = 0;
    for (int l = 0; l < L; ++l)
      for (std::size_t u = 0; u < psis[l].size(); ++u)
        embeds[l].push_back(pool_fit.embeddings.row(row++).transpose());
  }

  const double ridge = 1e-6;
  const int F = (K + 1) * (E + 1);
  double prev_loss = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 200; ++iter) {
    // 1. Templates, one ridge LS shared across output dimensions.
    long long n_rows = 0;
    for (int l = 0; l < L; ++l) n_rows += psis[l].size();
    Eigen::MatrixXd X(n_rows, F);
    Eigen::MatrixXd Y(n_rows, P);
    long long r = 0;
    for (int l = 0; l < L; ++l) {
      Eigen::VectorXd at(K + 1);
      at[0] = 1.0;
      at.tail(K) = alphas[l];
      for (std::size_t u = 0; u < psis[l].size(); ++u, ++r) {
        Eigen::VectorXd et(E + 1);
        et.head(E) = embeds[l][u];
        et[E] = 1.0;
        for (int k = 0; k <= K; ++k)
          X.row(r).segment(k * (E + 1), E + 1) = at[k] * et.transpose();
        Y.row(r) = psis[l][u].transpose();
      }
    }
    const Eigen::MatrixXd xtx =
        X.transpose() * X + ridge * Eigen::MatrixXd::Identity(F, F);
    const Eigen::MatrixXd theta = xtx.ldlt().solve(X.transpose() * Y);
    for (int k = 0; k <= K; ++k) {
      hier.tw[k] = theta.middleRows(k * (E + 1), E).transpose();
      hier.tb[k] = theta.row(k * (E + 1) + E).transpose();
    }

    // 2. Per-language alpha.
    for (int l = 0; l < L; ++l) {
      Eigen::MatrixXd ata = ridge * Eigen::MatrixXd::Identity(K, K);
      Eigen::VectorXd atr = Eigen::VectorXd::Zero(K);
      for (std::size_t u = 0; u < psis[l].size(); ++u) {
        Eigen::MatrixXd A(P, K);
        for (int k = 0; k < K; ++k)
          A.col(k) = hier.tw[k + 1] * embeds[l][u] + hier.tb[k + 1];
        const Eigen::VectorXd res =
            psis[l][u] - hier.tw[0] * embeds[l][u] - hier.tb[0];
        ata += A.transpose() * A;
        atr += A.transpose() * res;
      }
      alphas[l] = ata.ldlt().solve(atr);
    }

    // 3. Per-unit embeddings under each language's instantiated subspace.
    double loss = 0.0;
    long long count = 0;
    for (int l = 0; l < L; ++l) {
      const Subspace sub = hier.instantiate(alphas[l]);
      const Eigen::MatrixXd wtw =
          sub.w.transpose() * sub.w + ridge * Eigen::MatrixXd::Identity(E, E);
      const auto solver = wtw.ldlt();
      for (std::size_t u = 0; u < psis[l].size(); ++u) {
        embeds[l][u] = solver.solve(sub.w.transpose() * (psis[l][u] - sub.b));
        loss += (sub.w * embeds[l][u] + sub.b - psis[l][u]).squaredNorm();
        ++count;
      }
    }
    loss /= double(count * P);
    if (prev_loss - loss < 1e-6) break;
    prev_loss = loss;
  }

  double max_rel = 0.0;
  for (int l = 0; l < L; ++l) {
    const Subspace sub = hier.instantiate(alphas[l]);
    for (std::size_t u = 0; u < psis[l].size(); ++u) {
      const double rel = (sub.w * embeds[l][u] + sub.b - psis[l][u]).norm() /
                         std::max(psis[l][u].norm(), 1e-12);
      max_rel = std::max(max_rel, rel);
    }
  }
  hier.reconstruction_error = max_rel;
  return hier;
}

// --------------------------------------------------------------------------
// Subspace EM (SHMM / H-SHMM).

namespace {

struct UnitStats {
  Eigen::MatrixXd trans;                // S x 2
  Eigen::MatrixXd comp_n;               // S x C
  std::vector<Eigen::MatrixXd> sx, sxx;  // S of C x D
};

// Expected complete-data log-likelihood terms that depend on one unit's
// parameters (responsibilities fixed).
double q_value(const UnitHmm &unit, const UnitStats &st) {
  const int S = unit.n_states();
  const int C = static_cast<int>(unit.states[0].components.size());
  const int D = static_cast<int>(unit.states[0].components[0].mean.size());
  double q = 0.0;
  for (int s = 0; s < S; ++s) {
    q += st.trans(s, 0) * std::log(unit.trans(s, 0)) +
         st.trans(s, 1) * std::log(unit.trans(s, 1));
    for (int c = 0; c < C; ++c) {
      const double n = st.comp_n(s, c);
      q += n * std::log(unit.states[s].weights[c]);
      const GaussianComponent &comp = unit.states[s].components[c];
      for (int d = 0; d < D; ++d) {
        const double m = comp.mean[d], v = comp.var[d];
        const double quad =
            st.sxx[s](c, d) - 2.0 * m * st.sx[s](c, d) + n * m * m;
        q += -0.5 * n * (kLn2Pi + std::log(v)) - 0.5 * quad / v;
      }
    }
  }
  return q;
}

Eigen::VectorXd q_grad_psi(const Eigen::VectorXd &psi, const UnitStats &st,
                           int S, int C, int D) {
  const UnitHmm unit = decode_unit(psi, S, C, D);
  const int B = 2 + C + 2 * C * D;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(psi.size());
  for (int s = 0; s < S; ++s) {
    const int off = s * B;
    const double t_total = st.trans.row(s).sum();
    for (int j = 0; j < 2; ++j)
      g[off + j] = st.trans(s, j) - t_total * unit.trans(s, j);
    const double n_total = st.comp_n.row(s).sum();
    for (int c = 0; c < C; ++c)
      g[off + 2 + c] =
          st.comp_n(s, c) - n_total * unit.states[s].weights[c];
    for (int c = 0; c < C; ++c) {
      const double n = st.comp_n(s, c);
      const GaussianComponent &comp = unit.states[s].components[c];
      for (int d = 0; d < D; ++d) {
        const double m = comp.mean[d], v = comp.var[d];
        g[off + 2 + C + c * 2 * D + d] = (st.sx[s](c, d) - n * m) / v;
        const double quad =
            st.sxx[s](c, d) - 2.0 * m * st.sx[s](c, d) + n * m * m;
        g[off + 2 + C + c * 2 * D + D + d] = -0.5 * n + 0.5 * quad / v;
      }
    }
  }
  return g;
}

UnitStats stats_of(const internal::Accumulator &acc, int u, int S, int C) {
  UnitStats st;
  st.trans = acc.trans[u];
  st.comp_n = acc.comp_n[u];
  st.sx.assign(S, Eigen::MatrixXd());
  st.sxx.assign(S, Eigen::MatrixXd());
  for (int s = 0; s < S; ++s) {
    st.sx[s] = acc.comp_sx[u][s];
    st.sxx[s] = acc.comp_sxx[u][s];
  }
  (void)C;
  return st;
}

double log_std_normal(const Eigen::VectorXd &x) {
  return -0.5 * (x.squaredNorm() + x.size() * kLn2Pi);
}

struct SubspaceEmResult {
  PhoneLoop model;
  VbState vb;
  Eigen::VectorXd alpha;
};

SubspaceEmResult train_subspace_em(const std::vector<FrameSequence> &corpus,
                                   const HierSubspace &hier,
                                   const AudTrainConfig &cfg,
                                   bool update_alpha) {
  if (corpus.empty()) throw Error("train_shmm: empty corpus");
  const int U = cfg.n_units;
  const int S = hier.n_states, C = hier.n_components, D = hier.dim;
  const int E = hier.embed_dim();
  if (corpus.front().dim() != D)
    throw Error("train_shmm: corpus dim " +
                std::to_string(corpus.front().dim()) +
                " != subspace dim " + std::to_string(D));

  Rng rng(cfg.seed);
  Eigen::MatrixXd embeds(U, E);
  for (int u = 0; u < U; ++u)
    for (int e = 0; e < E; ++e) embeds(u, e) = rng.gaussian();
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(hier.K());

  const Eigen::VectorXd pi_prior =
      Eigen::VectorXd::Constant(U, cfg.priors.pi_concentration);
  Eigen::VectorXd pi_counts = pi_prior;

  auto build_model = [&](const Subspace &sub) {
    PhoneLoop model;
    model.silence_unit = cfg.use_silence_unit ? 0 : -1;
    model.pi_counts = pi_counts;
    model.pi = pi_counts / pi_counts.sum();
    for (int u = 0; u < U; ++u)
      model.units.push_back(sub.decode(embeds.row(u).transpose()));
    return model;
  };

  VbState vb;
  PhoneLoop model;
  for (int iter = 0; iter < cfg.n_iters; ++iter) {
    const Subspace sub = hier.instantiate(alpha);
    model = build_model(sub);

    internal::Accumulator acc;
    acc.init(U, S, C, D);
    for (const FrameSequence &f : corpus)
      internal::accumulate_utterance(f, model, true, acc);
    acc.check_finite(iter);

    double elbo = acc.log_marginal - internal::dirichlet_kl(pi_counts, pi_prior);
    for (int u = 0; u < U; ++u)
      elbo += log_std_normal(embeds.row(u).transpose());
    if (update_alpha) elbo += log_std_normal(alpha);
    vb.elbo_trace.push_back(elbo);

    // M-step: conjugate pi, then gradient ascent with step halving.
    pi_counts = pi_prior + acc.pi;

    std::vector<UnitStats> stats;
    stats.reserve(U);
    for (int u = 0; u < U; ++u) stats.push_back(stats_of(acc, u, S, C));

    for (int u = 0; u < U; ++u) {
      Eigen::VectorXd e = embeds.row(u).transpose();
      auto objective = [&](const Eigen::VectorXd &cand) {
        return q_value(sub.decode(cand), stats[u]) - 0.5 * cand.squaredNorm();
      };
      double cur = objective(e);
      for (int step = 0; step < cfg.mstep_grad_steps; ++step) {
        const Eigen::VectorXd psi = sub.w * e + sub.b;
        const Eigen::VectorXd grad =
            sub.w.transpose() * q_grad_psi(psi, stats[u], S, C, D) - e;
        double eta = cfg.mstep_step_size;
        bool accepted = false;
        for (int h = 0; h < 25; ++h) {
          const Eigen::VectorXd cand = e + eta * grad;
          const double val = objective(cand);
          if (val > cur) {
            e = cand;
            cur = val;
            accepted = true;
            break;
          }
          eta *= 0.5;
        }
        if (!accepted) break;
      }
      embeds.row(u) = e.transpose();
    }

    if (update_alpha && !cfg.freeze_alpha && hier.K() > 0) {
      auto alpha_objective = [&](const Eigen::VectorXd &cand) {
        const Subspace s2 = hier.instantiate(cand);
        double val = -0.5 * cand.squaredNorm();
        for (int u = 0; u < U; ++u)
          val += q_value(s2.decode(embeds.row(u).transpose()), stats[u]);
        return val;
      };
      double cur = alpha_objective(alpha);
      for (int step = 0; step < cfg.mstep_grad_steps; ++step) {
        const Subspace s2 = hier.instantiate(alpha);
        Eigen::VectorXd grad = -alpha;
        for (int u = 0; u < U; ++u) {
          const Eigen::VectorXd e = embeds.row(u).transpose();
          const Eigen::VectorXd gpsi =
              q_grad_psi(s2.w * e + s2.b, stats[u], S, C, D);
          for (int k = 0; k < hier.K(); ++k)
            grad[k] += (hier.tw[k + 1] * e + hier.tb[k + 1]).dot(gpsi);
        }
        double eta = cfg.mstep_step_size;
        bool accepted = false;
        for (int h = 0; h < 25; ++h) {
          const Eigen::VectorXd cand = alpha + eta * grad;
          const double val = alpha_objective(cand);
          if (val > cur) {
            alpha = cand;
            cur = val;
            accepted = true;
            break;
          }
          eta *= 0.5;
        }
        if (!accepted) break;
      }
    }
  }

  model = build_model(hier.instantiate(alpha));
  SubspaceEmResult res;
  res.model = std::move(model);
  res.vb = std::move(vb);
  res.vb.embeddings = embeds;
  res.vb.alpha = alpha;
  res.alpha = alpha;
  return res;
}

}  // namespace

std::pair<PhoneLoop, VbState> train_shmm(
    const std::vector<FrameSequence> &corpus, const Subspace &subspace,
    const AudTrainConfig &cfg) {
  HierSubspace hier;
  hier.tw = {subspace.w};
  hier.tb = {subspace.b};
  hier.n_states = subspace.n_states;
  hier.n_components = subspace.n_components;
  hier.dim = subspace.dim;
  SubspaceEmResult res = train_subspace_em(corpus, hier, cfg, false);
  return {std::move(res.model), std::move(res.vb)};
}

HshmmResult train_hshmm(const std::vector<FrameSequence> &corpus,
                        const HierSubspace &hier, const AudTrainConfig &cfg) {
  SubspaceEmResult res = train_subspace_em(corpus, hier, cfg, true);
  return {std::move(res.model), std::move(res.vb), std::move(res.alpha)};
}

}  // namespace uws
