// uws/aud.hpp
//
// Bayesian acoustic unit discovery. A phone-loop of left-to-right unit HMMs
// with diagonal Gaussian mixture emissions is trained by variational EM:
// the E-step is a forward-backward pass over the loop using expected
// log-likelihoods, the M-step is conjugate (HMM) or gradient-based through
// the subspace decoding map f (SHMM / H-SHMM). Decoding uses a Viterbi pass
// over the same expected scores.

#ifndef UWS_AUD_HPP
#define UWS_AUD_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "uws/types.hpp"

namespace uws {

// Normal-Gamma posterior over (mean, precision) of one diagonal Gaussian;
// kappa and the Gamma shape are shared across dimensions by conjugacy.
struct GaussPosterior {
  Eigen::VectorXd m;
  double kappa = 1.0;
  double a = 1.0;
  Eigen::VectorXd b;
};

struct GaussianComponent {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
  std::optional<GaussPosterior> post;

  // ln N(x | mean, var) or E_q[ln N(x | mu, lambda^-1)] when the posterior
  // is present and expected scoring is requested.
  double log_likelihood(const Eigen::VectorXd &x, bool expected) const;
};

struct StateEmission {
  Eigen::VectorXd weights;  // simplex
  std::optional<Eigen::VectorXd> weight_counts;  // Dirichlet posterior
  std::vector<GaussianComponent> components;

  double log_weight(int c, bool expected) const;
  // logsumexp over components of log weight + component log-likelihood.
  double score(const Eigen::VectorXd &x, bool expected) const;
};

struct UnitHmm {
  std::vector<StateEmission> states;  // left-to-right
  // Row s: [self, advance]; advancing from the last state exits the unit.
  Eigen::MatrixXd trans;
  std::optional<Eigen::MatrixXd> trans_counts;  // per-row Dirichlet posterior

  int n_states() const { return static_cast<int>(states.size()); }
  double log_trans(int state, int which, bool expected) const;
  void validate() const;
};

struct PhoneLoop {
  std::vector<UnitHmm> units;
  Eigen::VectorXd pi;  // unit weights, simplex
  std::optional<Eigen::VectorXd> pi_counts;  // Dirichlet posterior
  int silence_unit = -1;

  int n_units() const { return static_cast<int>(units.size()); }
  int n_states() const { return units.front().n_states(); }
  int dim() const {
    return static_cast<int>(units.front().states.front().components.front()
                                .mean.size());
  }
  double log_pi(int unit, bool expected) const;
  std::string unit_label(int unit) const;  // "sil" for the silence unit
  void validate() const;
};

struct FbResult {
  Eigen::MatrixXd state_post;  // N x (U * S), rows sum to 1
  Eigen::MatrixXd unit_post;   // N x U
  double log_marginal = 0.0;
};

// Modified forward-backward over the phone loop. Paths start in some unit's
// first state and must exit a unit-final state at the sequence end. With
// expected_llh the per-frame scores are E_q[ln p(x | eta)].
FbResult forward_backward(const FrameSequence &features, const PhoneLoop &model,
                          bool expected_llh);

// Modified Viterbi using expected log-likelihoods. Each complete traversal
// of a unit becomes one labeled span; spans tile the utterance.
UnitSequence viterbi_decode(const FrameSequence &features,
                            const PhoneLoop &model);

struct HmmPriors {
  double pi_concentration = 1.0;
  double trans_concentration = 1.0;
  double weight_concentration = 1.0;
  double kappa0 = 1.0;
  double a0 = 1.5;
  double mean_jitter = 1.0;  // init noise, in units of global feature std
};

struct AudTrainConfig {
  int n_units = 100;  // Dirichlet-process truncation
  int n_states = 3;
  int n_components = 4;
  int n_iters = 20;
  unsigned long long seed = 0;
  bool use_silence_unit = false;  // reserve unit 0, init on annotated silence
  HmmPriors priors;
  // Subspace M-step (SHMM / H-SHMM).
  int mstep_grad_steps = 5;
  double mstep_step_size = 1e-2;
  bool freeze_alpha = false;
};

struct VbState {
  std::vector<double> elbo_trace;  // one value per EM iteration
  Eigen::MatrixXd embeddings;      // U x E (subspace models)
  Eigen::VectorXd alpha;           // language embedding (H-SHMM)
};

// Variational EM with conjugate Normal-Gamma / Dirichlet updates.
std::pair<PhoneLoop, VbState> train_hmm(
    const std::vector<FrameSequence> &corpus, const AudTrainConfig &cfg,
    const std::vector<std::vector<TimeInterval>> &silences = {});

// ---------------------------------------------------------------------------
// Subspace models. Unit parameters are decoded from a low-dimensional
// embedding by eta = f(W e + b): transition rows and mixture weights via
// softmax, means identity, variances via exp clamped to [1e-6, 1e6].

int psi_dim(int n_states, int n_components, int dim);
UnitHmm decode_unit(const Eigen::VectorXd &psi, int n_states, int n_components,
                    int dim);
Eigen::VectorXd unit_preimage(const UnitHmm &unit);

struct Subspace {
  Eigen::MatrixXd w;  // psi_dim x embed_dim
  Eigen::VectorXd b;
  int n_states = 3;
  int n_components = 4;
  int dim = 0;
  double reconstruction_error = 0.0;  // max relative preimage error

  int embed_dim() const { return static_cast<int>(w.cols()); }
  UnitHmm decode(const Eigen::VectorXd &e) const;
};

struct HierSubspace {
  std::vector<Eigen::MatrixXd> tw;  // templates M_0..M_K
  std::vector<Eigen::VectorXd> tb;  // templates m_0..m_K
  int n_states = 3;
  int n_components = 4;
  int dim = 0;
  double reconstruction_error = 0.0;

  int K() const { return static_cast<int>(tw.size()) - 1; }
  int embed_dim() const { return static_cast<int>(tw.front().cols()); }
  // W^lambda = M_0 + sum_k alpha_k M_k, likewise for b.
  Subspace instantiate(const Eigen::VectorXd &alpha) const;
};

struct LabeledSource {
  std::vector<FrameSequence> features;
  std::vector<UnitSequence> labels;  // time-aligned gold unit sequences
};

// Supervised per-unit HMMs: frames of each token are uniformly split across
// states; mixtures fit by a few EM iterations.
std::map<std::string, UnitHmm> fit_supervised_units(const LabeledSource &src,
                                                    int n_states,
                                                    int n_components,
                                                    unsigned long long seed);

// Least-squares fit of (W, b) with per-unit embeddings so that f(W e + b)
// reconstructs the supervised units' preimages.
Subspace fit_subspace(const std::vector<LabeledSource> &sources, int embed_dim,
                      int n_states = 3, int n_components = 4,
                      unsigned long long seed = 0);

// Alternating least squares over templates, per-language alphas and unit
// embeddings until the reconstruction loss improvement drops below 1e-6.
HierSubspace fit_hier_subspace(const std::vector<LabeledSource> &sources,
                               int K, int embed_dim, int n_states = 3,
                               int n_components = 4,
                               unsigned long long seed = 0);

// Generalized EM: conjugate pi update, gradient M-step on the embeddings
// (and the language embedding for train_hshmm) with step-halving.
std::pair<PhoneLoop, VbState> train_shmm(
    const std::vector<FrameSequence> &corpus, const Subspace &subspace,
    const AudTrainConfig &cfg);

struct HshmmResult {
  PhoneLoop model;
  VbState state;
  Eigen::VectorXd alpha;
};
HshmmResult train_hshmm(const std::vector<FrameSequence> &corpus,
                        const HierSubspace &hier, const AudTrainConfig &cfg);

// Versioned "UWSA" model file.
void save_phone_loop(const PhoneLoop &model, const std::filesystem::path &path);
PhoneLoop load_phone_loop(const std::filesystem::path &path);

}  // namespace uws

#endif  // UWS_AUD_HPP
