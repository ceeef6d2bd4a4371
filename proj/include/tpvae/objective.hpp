#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tpvae/episodes.hpp"
#include "tpvae/model.hpp"

namespace tpvae {

/// Floor applied to every log argument.
inline constexpr double kLogFloor = 1e-12;

enum class TpForm {
  jensen_marginal,  // sum_k W_k log(P_k / W_k)
  literal,          // sum_k W_k log(sum_i p(y_i=k) / p(k|z_i))
};

std::string_view to_string(TpForm form) noexcept;
/// Accepts "jensen", "jensen_marginal" and "literal".
TpForm parse_tp_form(std::string_view text);

/// How the query-side terms are reduced over query shots.
enum class QueryReduction {
  sum,   // plain sums over query shots
  mean,  // sums divided by the number of query shots
};

std::string_view to_string(QueryReduction r) noexcept;
QueryReduction parse_query_reduction(std::string_view text);

struct LossWeights {
  double ce = 1.0;
  double recon = 1.0;
  double lik = 1.0;
  double tp = 1.0;
  TpForm tp_form = TpForm::jensen_marginal;
  QueryReduction reduction = QueryReduction::mean;

  void validate() const;
  /// "ce", "ce+re", "ce+tp", "ce+tp+re" for the four ablation presets, "custom" otherwise.
  std::string name() const;

  static LossWeights ce_only() { return {1, 0, 0, 0}; }
  static LossWeights ce_re() { return {1, 1, 1, 0}; }
  static LossWeights ce_tp() { return {1, 0, 0, 1}; }
  static LossWeights full() { return {1, 1, 1, 1}; }

  bool operator==(const LossWeights&) const = default;
};

/// Component values. recon, lik and tp are evidence-bound terms (to be
/// maximized); ce is a positive cross-entropy. In a breakdown returned by
/// total_loss the query-side fields already include the query reduction, so
/// total = w_ce*ce - (w_recon*recon + w_lik*lik + w_tp*tp) holds as stored.
struct LossBreakdown {
  double ce = 0.0;
  double recon = 0.0;
  double lik = 0.0;
  double tp = 0.0;
  double total = 0.0;

  bool operator==(const LossBreakdown&) const = default;
};

struct Gradients {
  Matrix d_psi;
  DecoderParams d_decoder;
};

/// N_q x N matrix of posterior rows for the given latents.
Matrix posterior_rows(const std::vector<Vec64>& latents, const Prototypes& protos);

/// Support cross-entropy averaged over Monte Carlo draws and support shots.
double loss_ce(const TPVAEState& state, const Episode& episode, const std::vector<LatentSet>& latents);

/// Decoder log-likelihood of the query features, summed over query shots.
double loss_recon(const TPVAEState& state, const std::vector<LatentSet>& latents, const Episode& episode);

/// Posterior-weighted class-conditional log-density, summed over query shots.
double loss_lik(const TPVAEState& state, const std::vector<LatentSet>& latents, const Episode& episode);

/// Task-level prior term for one set of posterior rows.
double loss_tp(const Matrix& posterior, const PriorMatrix& prior, TpForm form);

/// Sample-level term: -sum_i KL(posterior_i || prior_i).
double loss_sample_kl(const Matrix& posterior, const PriorMatrix& prior);

LossBreakdown total_loss(const TPVAEState& state, const Episode& episode, const LossWeights& weights,
                         const std::vector<LatentSet>& latents);

/// Analytic gradient of total_loss with respect to the prototypes and the
/// decoder, differentiating through the posterior weights as well.
/// Throws NumericalError naming the term that produced a non-finite value.
Gradients grad_total(const TPVAEState& state, const Episode& episode, const LossWeights& weights,
                     const std::vector<LatentSet>& latents);

/// Loss and gradient in one pass; this is what the solver calls.
LossBreakdown loss_and_grad(const TPVAEState& state, const Episode& episode, const LossWeights& weights,
                            const std::vector<LatentSet>& latents, Gradients* grads);

}  // namespace tpvae
