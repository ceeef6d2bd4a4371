#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tpvae/episodes.hpp"
#include "tpvae/model.hpp"
#include "tpvae/objective.hpp"

namespace tpvae {

struct SolverConfig {
  double lr = 0.1;
  double momentum = 0.0;
  std::size_t max_iters = 150;
  double tol = 1e-6;
  double tau = 25.0;
  double sigma_enc = 0.1;
  std::size_t mc_samples = 1;
  LossWeights weights;
  std::size_t d_hidden = 0;  // 0 means "same as the feature dimension"

  void validate() const;
  bool operator==(const SolverConfig&) const = default;
};

struct EpisodeResult {
  std::vector<std::size_t> predicted;
  double accuracy = 0.0;
  std::vector<LossBreakdown> loss_trace;
  std::size_t iters_run = 0;

  // Diagnostics gathered while solving.
  double max_row_sum_error = 0.0;  // over prior rows and final posterior rows
  bool prior_intact = true;        // prior bytes unchanged by the loop
  std::vector<std::size_t> predicted_counts;

  bool operator==(const EpisodeResult&) const = default;
};

/// velocity <- momentum * velocity + grads; params <- params - lr * velocity.
void sgd_step(std::span<double> params, std::span<const double> grads, double lr, double momentum,
              std::span<double> velocity);

/// Builds the initial state: decoder from `rng`, prototypes from the support
/// means, and the frozen prior from those prototypes.
TPVAEState init_state(const Episode& episode, const SolverConfig& cfg, RngStream& rng);

/// Initialize, snapshot the prior, then loop sample -> loss/gradient -> SGD
/// until max_iters or |total_t - total_{t-1}| < tol. Predictions use the
/// stored features and the final prototypes.
/// Throws NumericalError if the loss or gradient becomes non-finite.
EpisodeResult run_episode(const Episode& episode, const SolverConfig& cfg, RngStream& rng);

/// Nearest-prototype classification with the support means; no optimization.
EpisodeResult baseline_prototype(const Episode& episode, double tau);

double accuracy_of(const Episode& episode, const std::vector<std::size_t>& predicted);

}  // namespace tpvae
