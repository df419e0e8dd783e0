#include "uws/aud.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>

#include "aud_internal.hpp"
#include "uws/common.hpp"

namespace uws {

static constexpr double kLn2Pi = 1.8378770664093454836;

// --------------------------------------------------------------------------
// Scoring.

double GaussianComponent::log_likelihood(const Eigen::VectorXd &x,
                                         bool expected) const {
  const int dim = static_cast<int>(mean.size());
  if (expected && post) {
    const GaussPosterior &p = *post;
    double acc = 0.0;
    const double elog_prec_shape = digamma(p.a);
    for (int d = 0; d < dim; ++d) {
      const double diff = x[d] - p.m[d];
      acc += elog_prec_shape - std::log(p.b[d]) - kLn2Pi -
             (p.a / p.b[d]) * diff * diff - 1.0 / p.kappa;
    }
    return 0.5 * acc;
  }
  double acc = 0.0;
  for (int d = 0; d < dim; ++d) {
    const double diff = x[d] - mean[d];
    acc += kLn2Pi + std::log(var[d]) + diff * diff / var[d];
  }
  return -0.5 * acc;
}

double StateEmission::log_weight(int c, bool expected) const {
  if (expected && weight_counts) {
    const Eigen::VectorXd &g = *weight_counts;
    return digamma(g[c]) - digamma(g.sum());
  }
  return std::log(weights[c]);
}

double StateEmission::score(const Eigen::VectorXd &x, bool expected) const {
  double best = kLogZero;
  std::vector<double> terms(components.size());
  for (std::size_t c = 0; c < components.size(); ++c) {
    terms[c] = log_weight(static_cast<int>(c), expected) +
               components[c].log_likelihood(x, expected);
    best = std::max(best, terms[c]);
  }
  if (best <= kLogZero) return kLogZero;
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - best);
  return best + std::log(sum);
}

double UnitHmm::log_trans(int state, int which, bool expected) const {
  if (expected && trans_counts) {
    const Eigen::MatrixXd &g = *trans_counts;
    return digamma(g(state, which)) - digamma(g.row(state).sum());
  }
  return std::log(trans(state, which));
}

void UnitHmm::validate() const {
  if (states.empty()) throw Error("UnitHmm: no states");
  if (trans.rows() != n_states() || trans.cols() != 2)
    throw Error("UnitHmm: bad transition shape");
  for (int s = 0; s < n_states(); ++s) {
    if (std::abs(trans.row(s).sum() - 1.0) > 1e-9)
      throw Error("UnitHmm: transition row " + std::to_string(s) +
                  " does not sum to 1");
    const StateEmission &em = states[s];
    if (std::abs(em.weights.sum() - 1.0) > 1e-9)
      throw Error("UnitHmm: mixture weights of state " + std::to_string(s) +
                  " do not sum to 1");
    for (const GaussianComponent &c : em.components)
      if ((c.var.array() <= 0.0).any())
        throw Error("UnitHmm: non-positive variance");
  }
}

double PhoneLoop::log_pi(int unit, bool expected) const {
  if (expected && pi_counts)
    return digamma((*pi_counts)[unit]) - digamma(pi_counts->sum());
  return std::log(pi[unit]);
}

std::string PhoneLoop::unit_label(int unit) const {
  if (unit == silence_unit) return "sil";
  return std::to_string(unit);
}

void PhoneLoop::validate() const {
  if (units.empty()) throw Error("PhoneLoop: no units");
  if (pi.size() != n_units()) throw Error("PhoneLoop: pi size mismatch");
  if (std::abs(pi.sum() - 1.0) > 1e-9)
    throw Error("PhoneLoop: pi does not sum to 1");
  for (const UnitHmm &u : units) u.validate();
}

// --------------------------------------------------------------------------
// Forward-backward.

namespace internal {

ScoreMatrix build_scores(const FrameSequence &features, const PhoneLoop &model,
                         bool expected) {
  const int n = features.n_frames();
  const int u_count = model.n_units();
  const int s_count = model.n_states();
  ScoreMatrix scores(n, u_count * s_count);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = features.frames.row(i).cast<double>();
    for (int u = 0; u < u_count; ++u)
      for (int s = 0; s < s_count; ++s)
        scores(i, u * s_count + s) = model.units[u].states[s].score(x, expected);
  }
  return scores;
}

LoopGraph build_graph(const PhoneLoop &model, bool expected) {
  const int u_count = model.n_units();
  const int s_count = model.n_states();
  LoopGraph g;
  g.n_units = u_count;
  g.n_states = s_count;
  g.log_pi.resize(u_count);
  g.log_self.resize(u_count, s_count);
  g.log_adv.resize(u_count, s_count);
  for (int u = 0; u < u_count; ++u) {
    g.log_pi[u] = model.log_pi(u, expected);
    for (int s = 0; s < s_count; ++s) {
      g.log_self(u, s) = model.units[u].log_trans(s, 0, expected);
      g.log_adv(u, s) = model.units[u].log_trans(s, 1, expected);
    }
  }
  return g;
}

// alpha(n, u*S+s); paths must exit a unit-final state at the end.
void forward(const LoopGraph &g, const ScoreMatrix &scores,
             Eigen::MatrixXd &alpha, std::vector<double> &exit_mass) {
  const int n = static_cast<int>(scores.rows());
  const int U = g.n_units, S = g.n_states;
  alpha.setConstant(n, U * S, kLogZero);
  exit_mass.assign(n, kLogZero);
  for (int u = 0; u < U; ++u)
    alpha(0, u * S) = g.log_pi[u] + scores(0, u * S);
  auto update_exit = [&](int i) {
    double m = kLogZero;
    for (int u = 0; u < U; ++u)
      m = log_sum_exp(m, alpha(i, u * S + S - 1) + g.log_adv(u, S - 1));
    exit_mass[i] = m;
  };
  update_exit(0);
  for (int i = 1; i < n; ++i) {
    for (int u = 0; u < U; ++u)
      for (int s = 0; s < S; ++s) {
        double acc = alpha(i - 1, u * S + s) + g.log_self(u, s);
        if (s > 0)
          acc = log_sum_exp(acc,
                            alpha(i - 1, u * S + s - 1) + g.log_adv(u, s - 1));
        else
          acc = log_sum_exp(acc, exit_mass[i - 1] + g.log_pi[u]);
        alpha(i, u * S + s) = acc + scores(i, u * S + s);
      }
    update_exit(i);
  }
}

void backward(const LoopGraph &g, const ScoreMatrix &scores,
              Eigen::MatrixXd &beta, std::vector<double> &entry_mass) {
  const int n = static_cast<int>(scores.rows());
  const int U = g.n_units, S = g.n_states;
  beta.setConstant(n, U * S, kLogZero);
  entry_mass.assign(n, kLogZero);
  for (int u = 0; u < U; ++u)
    beta(n - 1, u * S + S - 1) = g.log_adv(u, S - 1);
  for (int i = n - 2; i >= 0; --i) {
    double em = kLogZero;
    for (int u = 0; u < U; ++u)
      em = log_sum_exp(em,
                       g.log_pi[u] + scores(i + 1, u * S) + beta(i + 1, u * S));
    entry_mass[i + 1] = em;
    for (int u = 0; u < U; ++u)
      for (int s = 0; s < S; ++s) {
        double acc = g.log_self(u, s) + scores(i + 1, u * S + s) +
                     beta(i + 1, u * S + s);
        if (s < S - 1)
          acc = log_sum_exp(acc, g.log_adv(u, s) + scores(i + 1, u * S + s + 1) +
                                     beta(i + 1, u * S + s + 1));
        else
          acc = log_sum_exp(acc, g.log_adv(u, s) + em);
        beta(i, u * S + s) = acc;
      }
  }
}

}  // namespace internal

FbResult forward_backward(const FrameSequence &features, const PhoneLoop &model,
                          bool expected_llh) {
  model.validate();
  features.validate();
  const int n = features.n_frames();
  const int U = model.n_units(), S = model.n_states();

  const internal::ScoreMatrix scores =
      internal::build_scores(features, model, expected_llh);
  const internal::LoopGraph g = internal::build_graph(model, expected_llh);

  Eigen::MatrixXd alpha, beta;
  std::vector<double> exit_mass, entry_mass;
  internal::forward(g, scores, alpha, exit_mass);
  internal::backward(g, scores, beta, entry_mass);

  const double log_z = exit_mass[n - 1];
  if (log_z <= kLogZero || !std::isfinite(log_z))
    throw Error("forward_backward: '" + features.utterance_id +
                "': degenerate model (no admissible path)");

  FbResult res;
  res.log_marginal = log_z;
  res.state_post.resize(n, U * S);
  res.unit_post.setZero(n, U);
  for (int i = 0; i < n; ++i) {
    for (int q = 0; q < U * S; ++q) {
      const double lg = alpha(i, q) + beta(i, q) - log_z;
      const double p = lg <= kLogZero ? 0.0 : std::exp(lg);
      res.state_post(i, q) = p;
      res.unit_post(i, q / S) += p;
    }
    // Guard renormalization against accumulated rounding.
    const double row_sum = res.state_post.row(i).sum();
    if (row_sum <= 0.0 || !std::isfinite(row_sum))
      throw Error("forward_backward: '" + features.utterance_id +
                  "': degenerate posterior at frame " + std::to_string(i));
    res.state_post.row(i) /= row_sum;
    res.unit_post.row(i) /= row_sum;
  }
  return res;
}

// --------------------------------------------------------------------------
// Viterbi.

UnitSequence viterbi_decode(const FrameSequence &features,
                            const PhoneLoop &model) {
  model.validate();
  features.validate();
  const int n = features.n_frames();
  const int U = model.n_units(), S = model.n_states();
  const internal::ScoreMatrix scores =
      internal::build_scores(features, model, true);
  const internal::LoopGraph g = internal::build_graph(model, true);

  Eigen::MatrixXd delta(n, U * S);
  delta.setConstant(kLogZero);
  // Backpointers: 0 self, 1 advance within unit, 2 cross-unit entry.
  Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic> from(n, U * S);
  std::vector<int> best_exit_unit(n, -1);

  for (int u = 0; u < U; ++u) {
    delta(0, u * S) = g.log_pi[u] + scores(0, u * S);
    from(0, u * S) = 2;
  }
  auto best_exit = [&](int i) {
    int arg = -1;
    double best = kLogZero;
    for (int u = 0; u < U; ++u) {
      const double v = delta(i, u * S + S - 1) + g.log_adv(u, S - 1);
      if (v > best) {
        best = v;
        arg = u;
      }
    }
    return std::make_pair(arg, best);
  };
  for (int i = 1; i < n; ++i) {
    auto [exit_u, exit_v] = best_exit(i - 1);
    best_exit_unit[i - 1] = exit_u;
    for (int u = 0; u < U; ++u)
      for (int s = 0; s < S; ++s) {
        double best = delta(i - 1, u * S + s) + g.log_self(u, s);
        std::int8_t arg = 0;
        if (s > 0) {
          const double v = delta(i - 1, u * S + s - 1) + g.log_adv(u, s - 1);
          if (v > best) {
            best = v;
            arg = 1;
          }
        } else {
          const double v = exit_v + g.log_pi[u];
          if (v > best) {
            best = v;
            arg = 2;
          }
        }
        delta(i, u * S + s) = best + scores(i, u * S + s);
        from(i, u * S + s) = arg;
      }
  }

  int cur_u = -1;
  double best_final = kLogZero;
  for (int u = 0; u < U; ++u) {
    const double v = delta(n - 1, u * S + S - 1) + g.log_adv(u, S - 1);
    if (v > best_final) {
      best_final = v;
      cur_u = u;
    }
  }
  if (cur_u < 0)
    throw Error("viterbi_decode: '" + features.utterance_id +
                "': degenerate model (no admissible path)");

  // Backtrace; record the frame index where each unit traversal starts.
  std::vector<int> frame_unit(n);
  std::vector<bool> starts(n, false);
  int cur_s = S - 1;
  for (int i = n - 1; i >= 0; --i) {
    frame_unit[i] = cur_u;
    const std::int8_t arg = from(i, cur_u * S + cur_s);
    if (arg == 2) {
      starts[i] = true;
      if (i > 0) {
        cur_u = best_exit_unit[i - 1];
        cur_s = S - 1;
      }
    } else if (arg == 1) {
      --cur_s;
    }
  }

  UnitSequence seq;
  seq.utterance_id = features.utterance_id;
  seq.variant = UnitVariant::kRaw;
  int span_start = 0;
  for (int i = 1; i <= n; ++i) {
    if (i == n || starts[i]) {
      UnitToken t;
      t.label = model.unit_label(frame_unit[span_start]);
      t.start_s = span_start * features.hop_s;
      t.end_s = i * features.hop_s;
      seq.tokens.push_back(std::move(t));
      span_start = i;
    }
  }
  return seq;
}

// --------------------------------------------------------------------------
// Variational HMM training.

namespace internal {

void Accumulator::init(int U, int S, int C, int D) {
  pi.setZero(U);
  trans.assign(U, Eigen::MatrixXd::Zero(S, 2));
  comp_n.assign(U, Eigen::MatrixXd::Zero(S, C));
  comp_sx.assign(U, std::vector<Eigen::MatrixXd>(S, Eigen::MatrixXd::Zero(C, D)));
  comp_sxx.assign(U, std::vector<Eigen::MatrixXd>(S, Eigen::MatrixXd::Zero(C, D)));
  log_marginal = 0.0;
}

void Accumulator::check_finite(int iteration) const {
  auto bad = [&](double v) { return !std::isfinite(v); };
  if (bad(log_marginal) || bad(pi.sum()))
    throw Error("aud: NaN in statistics at iteration " +
                std::to_string(iteration));
  for (std::size_t u = 0; u < trans.size(); ++u)
    if (bad(trans[u].sum()) || bad(comp_n[u].sum()))
      throw Error("aud: NaN in statistics at iteration " +
                  std::to_string(iteration));
}

// One utterance worth of expected sufficient statistics.
void accumulate_utterance(const FrameSequence &features, const PhoneLoop &model,
                          bool expected, Accumulator &acc) {
  const int n = features.n_frames();
  const int U = model.n_units(), S = model.n_states();
  const int C = static_cast<int>(model.units[0].states[0].components.size());

  const ScoreMatrix scores = build_scores(features, model, expected);
  const LoopGraph g = build_graph(model, expected);
  Eigen::MatrixXd alpha, beta;
  std::vector<double> exit_mass, entry_mass;
  forward(g, scores, alpha, exit_mass);
  backward(g, scores, beta, entry_mass);
  const double log_z = exit_mass[n - 1];
  if (!std::isfinite(log_z) || log_z <= kLogZero)
    throw Error("aud: degenerate model on utterance '" + features.utterance_id +
                "'");
  acc.log_marginal += log_z;

  // Unit-entry posteriors -> pi counts.
  for (int u = 0; u < U; ++u) {
    const double lg = g.log_pi[u] + scores(0, u * S) + beta(0, u * S) - log_z;
    if (lg > kLogZero) acc.pi[u] += std::exp(lg);
  }
  for (int i = 0; i + 1 < n; ++i)
    for (int u = 0; u < U; ++u) {
      const double lg = exit_mass[i] + g.log_pi[u] + scores(i + 1, u * S) +
                        beta(i + 1, u * S) - log_z;
      if (lg > kLogZero) acc.pi[u] += std::exp(lg);
    }

  // Transition posteriors.
  for (int i = 0; i + 1 < n; ++i) {
    double entry_next = kLogZero;
    for (int u = 0; u < U; ++u)
      entry_next = log_sum_exp(
          entry_next, g.log_pi[u] + scores(i + 1, u * S) + beta(i + 1, u * S));
    for (int u = 0; u < U; ++u)
      for (int s = 0; s < S; ++s) {
        const double lself = alpha(i, u * S + s) + g.log_self(u, s) +
                             scores(i + 1, u * S + s) + beta(i + 1, u * S + s) -
                             log_z;
        if (lself > kLogZero) acc.trans[u](s, 0) += std::exp(lself);
        double ladv;
        if (s < S - 1)
          ladv = alpha(i, u * S + s) + g.log_adv(u, s) +
                 scores(i + 1, u * S + s + 1) + beta(i + 1, u * S + s + 1) -
                 log_z;
        else
          ladv = alpha(i, u * S + s) + g.log_adv(u, s) + entry_next - log_z;
        if (ladv > kLogZero) acc.trans[u](s, 1) += std::exp(ladv);
      }
  }
  for (int u = 0; u < U; ++u) {
    const double lg =
        alpha(n - 1, u * S + S - 1) + g.log_adv(u, S - 1) - log_z;
    if (lg > kLogZero) acc.trans[u](S - 1, 1) += std::exp(lg);
  }

  // Component responsibilities weighted by state posteriors.
  std::vector<double> terms(C);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = features.frames.row(i).cast<double>();
    const Eigen::VectorXd xx = x.array().square();
    for (int u = 0; u < U; ++u)
      for (int s = 0; s < S; ++s) {
        const double lg = alpha(i, u * S + s) + beta(i, u * S + s) - log_z;
        if (lg <= -30.0) continue;  // negligible mass
        const double gamma = std::exp(lg);
        const StateEmission &em = model.units[u].states[s];
        double mx = kLogZero;
        for (int c = 0; c < C; ++c) {
          terms[c] = em.log_weight(c, expected) +
                     em.components[c].log_likelihood(x, expected);
          mx = std::max(mx, terms[c]);
        }
        double denom = 0.0;
        for (int c = 0; c < C; ++c) denom += std::exp(terms[c] - mx);
        for (int c = 0; c < C; ++c) {
          const double r = gamma * std::exp(terms[c] - mx) / denom;
          if (r <= 0.0) continue;
          acc.comp_n[u](s, c) += r;
          acc.comp_sx[u][s].row(c) += r * x.transpose();
          acc.comp_sxx[u][s].row(c) += r * xx.transpose();
        }
      }
  }
}

double dirichlet_kl(const Eigen::VectorXd &q, const Eigen::VectorXd &p) {
  const double qs = q.sum(), ps = p.sum();
  double kl = std::lgamma(qs) - std::lgamma(ps);
  const double dg_qs = digamma(qs);
  for (int i = 0; i < q.size(); ++i)
    kl += std::lgamma(p[i]) - std::lgamma(q[i]) +
          (q[i] - p[i]) * (digamma(q[i]) - dg_qs);
  return kl;
}

double normal_gamma_kl(const GaussPosterior &q, const GaussPosterior &p) {
  const int dim = static_cast<int>(q.m.size());
  double kl = 0.0;
  for (int d = 0; d < dim; ++d) {
    const double e_prec = q.a / q.b[d];
    const double diff = q.m[d] - p.m[d];
    kl += 0.5 * (std::log(q.kappa / p.kappa) + p.kappa / q.kappa - 1.0 +
                 p.kappa * e_prec * diff * diff);
    kl += (q.a - p.a) * digamma(q.a) - std::lgamma(q.a) + std::lgamma(p.a) +
          p.a * (std::log(q.b[d]) - std::log(p.b[d])) +
          q.a * (p.b[d] - q.b[d]) / q.b[d];
  }
  return kl;
}

}  // namespace internal

namespace {

// Point parameters mirrored from the posteriors (used by non-expected
// scoring and serialization).
void refresh_point_params(PhoneLoop &model) {
  if (model.pi_counts) model.pi = *model.pi_counts / model.pi_counts->sum();
  for (UnitHmm &unit : model.units) {
    if (unit.trans_counts) {
      unit.trans = *unit.trans_counts;
      for (int s = 0; s < unit.n_states(); ++s)
        unit.trans.row(s) /= unit.trans.row(s).sum();
    }
    for (StateEmission &em : unit.states) {
      if (em.weight_counts) em.weights = *em.weight_counts / em.weight_counts->sum();
      for (GaussianComponent &c : em.components)
        if (c.post) {
          c.mean = c.post->m;
          c.var = (c.post->b / c.post->a).cwiseMax(1e-10);
        }
    }
  }
}

double hmm_kl_total(const PhoneLoop &model, const PhoneLoop &prior) {
  double kl = internal::dirichlet_kl(*model.pi_counts, *prior.pi_counts);
  for (int u = 0; u < model.n_units(); ++u) {
    const UnitHmm &qu = model.units[u];
    const UnitHmm &pu = prior.units[u];
    for (int s = 0; s < qu.n_states(); ++s) {
      kl += internal::dirichlet_kl(qu.trans_counts->row(s).transpose(),
                                   pu.trans_counts->row(s).transpose());
      kl += internal::dirichlet_kl(*qu.states[s].weight_counts,
                                   *pu.states[s].weight_counts);
      for (std::size_t c = 0; c < qu.states[s].components.size(); ++c)
        kl += internal::normal_gamma_kl(*qu.states[s].components[c].post,
                                        *pu.states[s].components[c].post);
    }
  }
  return kl;
}

}  // namespace

std::pair<PhoneLoop, VbState> train_hmm(
    const std::vector<FrameSequence> &corpus, const AudTrainConfig &cfg,
    const std::vector<std::vector<TimeInterval>> &silences) {
  if (corpus.empty()) throw Error("train_hmm: empty corpus");
  const int dim = corpus.front().dim();
  const int U = cfg.n_units, S = cfg.n_states, C = cfg.n_components;

  // Global data statistics drive the priors.
  long long total = 0;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(dim);
  for (const FrameSequence &f : corpus) {
    f.validate();
    if (f.dim() != dim) throw Error("train_hmm: inconsistent feature dims");
    sum += f.frames.colwise().sum().cast<double>();
    sumsq += f.frames.array().square().colwise().sum().cast<double>().matrix();
    total += f.n_frames();
  }
  const Eigen::VectorXd global_mean = sum / double(total);
  const Eigen::VectorXd global_var =
      (sumsq / double(total) - global_mean.array().square().matrix())
          .cwiseMax(1e-6);
  const Eigen::VectorXd global_std = global_var.cwiseSqrt();

  GaussPosterior prior_ng;
  prior_ng.m = global_mean;
  prior_ng.kappa = cfg.priors.kappa0;
  prior_ng.a = cfg.priors.a0;
  prior_ng.b = cfg.priors.a0 * global_var;

  auto make_prior_loop = [&]() {
    PhoneLoop loop;
    loop.pi_counts = Eigen::VectorXd::Constant(U, cfg.priors.pi_concentration);
    loop.pi = Eigen::VectorXd::Constant(U, 1.0 / U);
    for (int u = 0; u < U; ++u) {
      UnitHmm unit;
      unit.trans_counts =
          Eigen::MatrixXd::Constant(S, 2, cfg.priors.trans_concentration);
      unit.trans = Eigen::MatrixXd::Constant(S, 2, 0.5);
      for (int s = 0; s < S; ++s) {
        StateEmission em;
        em.weight_counts =
            Eigen::VectorXd::Constant(C, cfg.priors.weight_concentration);
        em.weights = Eigen::VectorXd::Constant(C, 1.0 / C);
        for (int c = 0; c < C; ++c) {
          GaussianComponent comp;
          comp.post = prior_ng;
          comp.mean = prior_ng.m;
          comp.var = prior_ng.b / prior_ng.a;
          em.components.push_back(std::move(comp));
        }
        unit.states.push_back(std::move(em));
      }
      loop.units.push_back(std::move(unit));
    }
    return loop;
  };

  const PhoneLoop prior = make_prior_loop();
  PhoneLoop model = make_prior_loop();
  model.silence_unit = cfg.use_silence_unit ? 0 : -1;

  // Symmetry breaking: jitter the posterior mean locations.
  Rng rng(cfg.seed);
  for (int u = 0; u < U; ++u)
    for (int s = 0; s < S; ++s)
      for (int c = 0; c < C; ++c) {
        GaussPosterior &p = *model.units[u].states[s].components[c].post;
        for (int d = 0; d < dim; ++d)
          p.m[d] += cfg.priors.mean_jitter * global_std[d] * rng.gaussian();
      }

  // Silence unit initialized on annotated silence frames when available.
  if (cfg.use_silence_unit && !silences.empty()) {
    Eigen::VectorXd ssum = Eigen::VectorXd::Zero(dim);
    long long scount = 0;
    for (std::size_t i = 0; i < corpus.size() && i < silences.size(); ++i) {
      const FrameSequence &f = corpus[i];
      for (int fr = 0; fr < f.n_frames(); ++fr) {
        const double mid = (fr + 0.5) * f.hop_s;
        for (const TimeInterval &iv : silences[i])
          if (mid >= iv.start_s && mid <= iv.end_s) {
            ssum += f.frames.row(fr).cast<double>();
            ++scount;
            break;
          }
      }
    }
    if (scount > 0) {
      const Eigen::VectorXd smean = ssum / double(scount);
      for (int s = 0; s < S; ++s)
        for (int c = 0; c < C; ++c) {
          GaussPosterior &p = *model.units[0].states[s].components[c].post;
          p.m = smean;
          for (int d = 0; d < dim; ++d)
            p.m[d] += 0.01 * global_std[d] * rng.gaussian();
        }
    }
  }

  VbState vb;
  for (int iter = 0; iter < cfg.n_iters; ++iter) {
    internal::Accumulator acc;
    acc.init(U, S, C, dim);
    for (const FrameSequence &f : corpus)
      internal::accumulate_utterance(f, model, true, acc);
    acc.check_finite(iter);

    vb.elbo_trace.push_back(acc.log_marginal - hmm_kl_total(model, prior));

    // Conjugate M-step.
    model.pi_counts = *prior.pi_counts + acc.pi;
    for (int u = 0; u < U; ++u) {
      UnitHmm &unit = model.units[u];
      unit.trans_counts = *prior.units[u].trans_counts + acc.trans[u];
      for (int s = 0; s < S; ++s) {
        StateEmission &em = unit.states[s];
        em.weight_counts = *prior.units[u].states[s].weight_counts +
                           acc.comp_n[u].row(s).transpose();
        for (int c = 0; c < C; ++c) {
          const double nw = acc.comp_n[u](s, c);
          GaussPosterior &q = *em.components[c].post;
          if (nw < 1e-12) {
            q = prior_ng;
            continue;
          }
          const Eigen::VectorXd xbar =
              acc.comp_sx[u][s].row(c).transpose() / nw;
          const Eigen::VectorXd ss =
              (acc.comp_sxx[u][s].row(c).transpose() -
               nw * xbar.array().square().matrix())
                  .cwiseMax(0.0);
          q.kappa = prior_ng.kappa + nw;
          q.a = prior_ng.a + 0.5 * nw;
          q.m = (prior_ng.kappa * prior_ng.m + nw * xbar) / q.kappa;
          const Eigen::VectorXd dm = xbar - prior_ng.m;
          q.b = prior_ng.b + 0.5 * ss +
                (0.5 * prior_ng.kappa * nw / q.kappa) *
                    dm.array().square().matrix();
        }
      }
    }
    refresh_point_params(model);
  }
  return {std::move(model), std::move(vb)};
}

// --------------------------------------------------------------------------
// Serialization: "UWSA", version, layout, parameters, optional posteriors.

namespace {

void put_vec(std::ostream &out, const Eigen::VectorXd &v) {
  const std::uint32_t n = static_cast<std::uint32_t>(v.size());
  out.write(reinterpret_cast<const char *>(&n), 4);
  for (std::uint32_t i = 0; i < n; ++i) {
    double x = v[i];
    out.write(reinterpret_cast<const char *>(&x), 8);
  }
}
Eigen::VectorXd get_vec(std::istream &in) {
  std::uint32_t n = 0;
  in.read(reinterpret_cast<char *>(&n), 4);
  Eigen::VectorXd v(n);
  for (std::uint32_t i = 0; i < n; ++i) in.read(reinterpret_cast<char *>(&v[i]), 8);
  if (!in) throw Error("load_phone_loop: truncated file");
  return v;
}
void put_mat(std::ostream &out, const Eigen::MatrixXd &m) {
  const std::uint32_t r = static_cast<std::uint32_t>(m.rows());
  const std::uint32_t c = static_cast<std::uint32_t>(m.cols());
  out.write(reinterpret_cast<const char *>(&r), 4);
  out.write(reinterpret_cast<const char *>(&c), 4);
  for (std::uint32_t i = 0; i < r; ++i)
    for (std::uint32_t j = 0; j < c; ++j) {
      double x = m(i, j);
      out.write(reinterpret_cast<const char *>(&x), 8);
    }
}
Eigen::MatrixXd get_mat(std::istream &in) {
  std::uint32_t r = 0, c = 0;
  in.read(reinterpret_cast<char *>(&r), 4);
  in.read(reinterpret_cast<char *>(&c), 4);
  Eigen::MatrixXd m(r, c);
  for (std::uint32_t i = 0; i < r; ++i)
    for (std::uint32_t j = 0; j < c; ++j)
      in.read(reinterpret_cast<char *>(&m(i, j)), 8);
  if (!in) throw Error("load_phone_loop: truncated file");
  return m;
}
void put_flag(std::ostream &out, bool f) {
  const std::uint8_t b = f ? 1 : 0;
  out.write(reinterpret_cast<const char *>(&b), 1);
}
bool get_flag(std::istream &in) {
  std::uint8_t b = 0;
  in.read(reinterpret_cast<char *>(&b), 1);
  return b != 0;
}

}  // namespace

void save_phone_loop(const PhoneLoop &model, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error("save_phone_loop: cannot write '" + path.string() + "'");
  out.write("UWSA", 4);
  const std::uint32_t version = 1;
  out.write(reinterpret_cast<const char *>(&version), 4);
  const std::int32_t silence = model.silence_unit;
  out.write(reinterpret_cast<const char *>(&silence), 4);
  const std::uint32_t U = static_cast<std::uint32_t>(model.n_units());
  out.write(reinterpret_cast<const char *>(&U), 4);
  put_vec(out, model.pi);
  put_flag(out, model.pi_counts.has_value());
  if (model.pi_counts) put_vec(out, *model.pi_counts);
  for (const UnitHmm &unit : model.units) {
    put_mat(out, unit.trans);
    put_flag(out, unit.trans_counts.has_value());
    if (unit.trans_counts) put_mat(out, *unit.trans_counts);
    const std::uint32_t S = static_cast<std::uint32_t>(unit.n_states());
    out.write(reinterpret_cast<const char *>(&S), 4);
    for (const StateEmission &em : unit.states) {
      put_vec(out, em.weights);
      put_flag(out, em.weight_counts.has_value());
      if (em.weight_counts) put_vec(out, *em.weight_counts);
      const std::uint32_t C = static_cast<std::uint32_t>(em.components.size());
      out.write(reinterpret_cast<const char *>(&C), 4);
      for (const GaussianComponent &comp : em.components) {
        put_vec(out, comp.mean);
        put_vec(out, comp.var);
        put_flag(out, comp.post.has_value());
        if (comp.post) {
          put_vec(out, comp.post->m);
          out.write(reinterpret_cast<const char *>(&comp.post->kappa), 8);
          out.write(reinterpret_cast<const char *>(&comp.post->a), 8);
          put_vec(out, comp.post->b);
        }
      }
    }
  }
}

PhoneLoop load_phone_loop(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_phone_loop: cannot open '" + path.string() + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "UWSA")
    throw Error("load_phone_loop: '" + path.string() + "': bad magic");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char *>(&version), 4);
  if (version != 1)
    throw Error("load_phone_loop: unsupported version " +
                std::to_string(version));
  PhoneLoop model;
  std::int32_t silence = -1;
  in.read(reinterpret_cast<char *>(&silence), 4);
  model.silence_unit = silence;
  std::uint32_t U = 0;
  in.read(reinterpret_cast<char *>(&U), 4);
  model.pi = get_vec(in);
  if (get_flag(in)) model.pi_counts = get_vec(in);
  for (std::uint32_t u = 0; u < U; ++u) {
    UnitHmm unit;
    unit.trans = get_mat(in);
    if (get_flag(in)) unit.trans_counts = get_mat(in);
    std::uint32_t S = 0;
    in.read(reinterpret_cast<char *>(&S), 4);
    for (std::uint32_t s = 0; s < S; ++s) {
      StateEmission em;
      em.weights = get_vec(in);
      if (get_flag(in)) em.weight_counts = get_vec(in);
      std::uint32_t C = 0;
      in.read(reinterpret_cast<char *>(&C), 4);
      for (std::uint32_t c = 0; c < C; ++c) {
        GaussianComponent comp;
        comp.mean = get_vec(in);
        comp.var = get_vec(in);
        if (get_flag(in)) {
          GaussPosterior p;
          p.m = get_vec(in);
          in.read(reinterpret_cast<char *>(&p.kappa), 8);
          in.read(reinterpret_cast<char *>(&p.a), 8);
          p.b = get_vec(in);
          comp.post = std::move(p);
        }
        em.components.push_back(std::move(comp));
      }
      unit.states.push_back(std::move(em));
    }
    model.units.push_back(std::move(unit));
  }
  if (!in) throw Error("load_phone_loop: truncated file");
  model.validate();
  return model;
}

}  // namespace uws
