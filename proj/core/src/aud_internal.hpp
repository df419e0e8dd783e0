// Shared internals of the acoustic unit discovery trainers. Not installed.

#ifndef UWS_AUD_INTERNAL_HPP
#define UWS_AUD_INTERNAL_HPP

#include <vector>

#include "uws/aud.hpp"

namespace uws::internal {

using ScoreMatrix = Eigen::MatrixXd;  // N x (U * S)

struct LoopGraph {
  int n_units = 0;
  int n_states = 0;
  std::vector<double> log_pi;
  Eigen::MatrixXd log_self;  // U x S
  Eigen::MatrixXd log_adv;   // U x S; advancing from the last state exits
};

ScoreMatrix build_scores(const FrameSequence &features, const PhoneLoop &model,
                         bool expected);
LoopGraph build_graph(const PhoneLoop &model, bool expected);
void forward(const LoopGraph &g, const ScoreMatrix &scores,
             Eigen::MatrixXd &alpha, std::vector<double> &exit_mass);
void backward(const LoopGraph &g, const ScoreMatrix &scores,
              Eigen::MatrixXd &beta, std::vector<double> &entry_mass);

// Expected sufficient statistics of one E-step.
struct Accumulator {
  Eigen::VectorXd pi;                     // unit entry counts
  std::vector<Eigen::MatrixXd> trans;     // per unit: S x 2
  std::vector<Eigen::MatrixXd> comp_n;    // per unit: S x C
  std::vector<std::vector<Eigen::MatrixXd>> comp_sx;   // [u][s]: C x D
  std::vector<std::vector<Eigen::MatrixXd>> comp_sxx;  // [u][s]: C x D
  double log_marginal = 0.0;

  void init(int U, int S, int C, int D);
  void check_finite(int iteration) const;
};

void accumulate_utterance(const FrameSequence &features, const PhoneLoop &model,
                          bool expected, Accumulator &acc);

double dirichlet_kl(const Eigen::VectorXd &q, const Eigen::VectorXd &p);
double normal_gamma_kl(const GaussPosterior &q, const GaussPosterior &p);

}  // namespace uws::internal

#endif  // UWS_AUD_INTERNAL_HPP
