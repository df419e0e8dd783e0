// uws/vq.hpp
//
// Neural discretization components.
//
// VqVaeModel is a frame-wise VQ-VAE: a two-layer perceptron encoder, a
// Euclidean nearest-embedding quantizer and a two-layer perceptron decoder,
// trained with manually derived gradients and a straight-through estimator.
// The grouped codebook, Gumbel-softmax assignment and the step-wise
// contrastive loss are standalone, individually testable pieces.

#ifndef UWS_VQ_HPP
#define UWS_VQ_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "uws/common.hpp"
#include "uws/types.hpp"

namespace uws {

// affine -> tanh -> affine
struct Mlp {
  Eigen::MatrixXd w1, w2;
  Eigen::VectorXd b1, b2;

  Eigen::VectorXd forward(const Eigen::VectorXd &x) const {
    return w2 * (w1 * x + b1).array().tanh().matrix() + b2;
  }
  int in_dim() const { return static_cast<int>(w1.cols()); }
  int out_dim() const { return static_cast<int>(w2.rows()); }
};

struct VqVaeModel {
  Mlp encoder;               // feature dim -> latent dim
  Eigen::MatrixXd codebook;  // U x latent dim, rows are unit embeddings
  Mlp decoder;               // latent dim -> feature dim
  double k1 = 2.0;           // commitment weight (encoder side)
  double k2 = 4.0;           // codebook weight

  int n_units() const { return static_cast<int>(codebook.rows()); }
  int latent_dim() const { return static_cast<int>(codebook.cols()); }
  void validate() const;
};

// argmin over rows of squared Euclidean distance; ties -> lowest index.
int quantize_nearest(const Eigen::VectorXd &v, const Eigen::MatrixXd &codebook);

struct VqVaeLossTerms {
  double reconstruction = 0.0;  // mean ||x - mu(eta_z)||^2
  double commitment = 0.0;      // k1 * mean ||eta_z - v||^2
  double codebook = 0.0;        // k2 * mean ||eta_z - v||^2
  double total() const { return reconstruction + commitment + codebook; }
};

// Minimized objective; per-frame terms averaged over the batch.
VqVaeLossTerms vqvae_loss(const FrameSequence &batch, const VqVaeModel &model);

// Gradients of the batch loss. `codebook_train` follows VQ-VAE semantics
// (only the codebook term moves the embeddings; reconstruction gradient is
// re-routed to the encoder by the straight-through estimator), while
// `codebook_full` is the plain mathematical gradient with assignments held
// fixed -- the quantity finite differences measure.
struct VqVaeGradients {
  Mlp encoder, decoder;  // same shapes as the model, holding gradients
  Eigen::MatrixXd codebook_train;
  Eigen::MatrixXd codebook_full;
};
VqVaeGradients vqvae_backward(const FrameSequence &batch,
                              const VqVaeModel &model);

struct VqVaeTrainConfig {
  int n_units = 50;
  int latent_dim = 16;
  int hidden_dim = 64;
  double k1 = 2.0;
  double k2 = 4.0;
  int epochs = 50;
  double learning_rate = 2e-3;
  // Halve the learning rate after this many consecutive epochs whose
  // relative loss improvement is below the tolerance.
  double stagnation_rel_tol = 1e-4;
  int stagnation_epochs = 2;
  unsigned long long seed = 0;
};

// Halves the rate once the relative loss improvement has been below the
// tolerance for `patience` consecutive epochs.
struct StagnationLrSchedule {
  double lr;
  double rel_tol = 1e-4;
  int patience = 2;
  int stagnant = 0;

  // Call once per epoch with the last two loss values; returns the rate to
  // use for the next update.
  double observe(double prev_loss, double cur_loss) {
    const double rel = (prev_loss - cur_loss) / std::max(std::abs(prev_loss), 1e-12);
    if (rel < rel_tol) {
      if (++stagnant >= patience) {
        lr *= 0.5;
        stagnant = 0;
      }
    } else {
      stagnant = 0;
    }
    return lr;
  }
};

struct VqVaeTrainResult {
  VqVaeModel model;
  std::vector<double> loss_trace;  // per-epoch loss before the update
  std::vector<double> lr_trace;    // learning rate used in each epoch
};

VqVaeTrainResult vqvae_train(const std::vector<FrameSequence> &corpus,
                             const VqVaeTrainConfig &cfg);

// Per-frame unit labels for one utterance.
std::vector<int> vqvae_encode_labels(const FrameSequence &seq,
                                     const VqVaeModel &model);

void save_vqvae(const VqVaeModel &model, const std::filesystem::path &path);
VqVaeModel load_vqvae(const std::filesystem::path &path);

// ---------------------------------------------------------------------------
// Grouped codebook quantization (vq-wav2vec style).

struct GroupedCodebook {
  std::vector<Eigen::MatrixXd> codebooks;  // G matrices of V x (d/G)

  int groups() const { return static_cast<int>(codebooks.size()); }
  int vars() const { return static_cast<int>(codebooks.front().rows()); }
  int dim() const;
  void validate() const;
};

struct GroupedQuantizeResult {
  std::vector<int> indices;  // one per group, in [0, V)
  Eigen::VectorXd quantized;
  // Lexicographic tuple index in [0, V^G); the unit label used downstream.
  int flat_index(int vars) const;
};

GroupedQuantizeResult grouped_quantize_hard(const Eigen::VectorXd &z,
                                            const GroupedCodebook &gc);
// Samples each group's index from softmax(-d^2 / temperature) via the
// Gumbel-max trick; at temperature -> 0 this matches hard mode on non-tied
// inputs.
GroupedQuantizeResult grouped_quantize_gumbel(const Eigen::VectorXd &z,
                                              const GroupedCodebook &gc,
                                              double temperature, Rng &rng);

// ---------------------------------------------------------------------------
// Step-wise contrastive loss.

struct ContrastiveLossConfig {
  double lambda = 1.0;
  std::vector<Eigen::MatrixXd> step_w;  // h_k(c) = W_k c + b_k, k = 1..K
  std::vector<Eigen::VectorXd> step_b;

  int steps() const { return static_cast<int>(step_w.size()); }
  static ContrastiveLossConfig identity(int steps, int dim, double lambda);
};

// sum_k sum_i [ log sigma(z_{i+k}. h_k(c_i)) +
//               lambda * mean_neg log sigma(-neg . h_k(c_i)) ]
// This is the maximized quantity; training code negates it.
double contrastive_loss(const Eigen::MatrixXd &context,
                        const Eigen::MatrixXd &futures,
                        const std::vector<Eigen::VectorXd> &negatives,
                        const ContrastiveLossConfig &cfg);

// Distractors drawn uniformly from the rows of the same sequence.
std::vector<Eigen::VectorXd> draw_negatives(const Eigen::MatrixXd &sequence,
                                            int n, unsigned long long seed);

}  // namespace uws

#endif  // UWS_VQ_HPP
