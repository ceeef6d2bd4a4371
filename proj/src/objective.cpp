#include "tpvae/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tpvae/errors.hpp"

namespace tpvae {

namespace {

double safe_log(double x) { return std::log(std::max(x, kLogFloor)); }

// Scores, log-probabilities and probabilities of one latent under the prototypes.
struct PointPosterior {
  std::vector<double> scores;
  std::vector<double> log_p;
  std::vector<double> p;

  explicit PointPosterior(std::size_t way) : scores(way), log_p(way), p(way) {}

  void eval(std::span<const double> z, const Prototypes& protos) {
    for (std::size_t k = 0; k < protos.way(); ++k) scores[k] = -protos.tau * sq_dist(z, protos.psi.row(k));
    log_softmax_into(scores, log_p);
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::exp(log_p[k]);
  }
};

// d score_k / d psi_k = 2 tau (z - psi_k); accumulates upstream * that.
void accumulate_score_grad(std::span<const double> z, const Prototypes& protos, std::size_t k, double upstream,
                           Matrix& d_psi) {
  if (upstream == 0.0) return;
  const double scale = 2.0 * protos.tau * upstream;
  const auto psi = protos.psi.row(k);
  auto out = d_psi.row(k);
  for (std::size_t d = 0; d < z.size(); ++d) out[d] += scale * (z[d] - psi[d]);
}

struct DecoderScratch {
  std::vector<double> hidden;
  std::vector<double> residual;
  std::vector<double> grad_hidden;
};

// Returns -1/2 ||target - decode(z)||^2 and leaves activations in scratch.
double recon_forward(const DecoderParams& theta, std::span<const double> z, std::span<const double> target,
                     DecoderScratch& s) {
  const std::size_t hidden = theta.hidden_dim();
  const std::size_t obs = theta.obs_dim();
  s.hidden.resize(hidden);
  s.residual.resize(obs);
  for (std::size_t h = 0; h < hidden; ++h) {
    const auto w = theta.w1.row(h);
    double a = theta.b1[h];
    for (std::size_t d = 0; d < z.size(); ++d) a += w[d] * z[d];
    s.hidden[h] = std::tanh(a);
  }
  double acc = 0.0;
  for (std::size_t o = 0; o < obs; ++o) {
    const auto w = theta.w2.row(o);
    double mu = theta.b2[o];
    for (std::size_t h = 0; h < hidden; ++h) mu += w[h] * s.hidden[h];
    s.residual[o] = target[o] - mu;
    acc += s.residual[o] * s.residual[o];
  }
  return -0.5 * acc;
}

// Adds coef * d(recon)/d(theta); d(recon)/d(mu) is the residual.
void recon_backward(const DecoderParams& theta, std::span<const double> z, DecoderScratch& s, double coef,
                    DecoderParams& grad) {
  const std::size_t hidden = theta.hidden_dim();
  const std::size_t obs = theta.obs_dim();
  s.grad_hidden.assign(hidden, 0.0);
  for (std::size_t o = 0; o < obs; ++o) {
    const double g_mu = coef * s.residual[o];
    grad.b2[o] += g_mu;
    const auto w = theta.w2.row(o);
    auto gw = grad.w2.row(o);
    for (std::size_t h = 0; h < hidden; ++h) {
      gw[h] += g_mu * s.hidden[h];
      s.grad_hidden[h] += g_mu * w[h];
    }
  }
  for (std::size_t h = 0; h < hidden; ++h) {
    const double g_a = s.grad_hidden[h] * (1.0 - s.hidden[h] * s.hidden[h]);
    grad.b1[h] += g_a;
    auto gw = grad.w1.row(h);
    for (std::size_t d = 0; d < z.size(); ++d) gw[d] += g_a * z[d];
  }
}

void check_latents(const Episode& episode, const std::vector<LatentSet>& latents) {
  if (latents.empty()) throw DimensionError("objective: no latent samples");
  for (const auto& set : latents) {
    if (set.support.size() != episode.support.size() || set.query.size() != episode.query.size()) {
      throw DimensionError("objective: latent set does not match episode");
    }
  }
}

void require_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value in loss term '") + term + "'");
}

}  // namespace

std::string_view to_string(TpForm form) noexcept {
  return form == TpForm::literal ? "literal" : "jensen";
}

TpForm parse_tp_form(std::string_view text) {
  if (text == "jensen" || text == "jensen_marginal") return TpForm::jensen_marginal;
  if (text == "literal") return TpForm::literal;
  throw std::invalid_argument("unknown tp form '" + std::string(text) + "'");
}

std::string_view to_string(QueryReduction r) noexcept { return r == QueryReduction::sum ? "sum" : "mean"; }

QueryReduction parse_query_reduction(std::string_view text) {
  if (text == "sum") return QueryReduction::sum;
  if (text == "mean") return QueryReduction::mean;
  throw std::invalid_argument("unknown query reduction '" + std::string(text) + "'");
}

void LossWeights::validate() const {
  for (double w : {ce, recon, lik, tp}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("loss weights must be finite and >= 0");
  }
  if (ce == 0.0 && recon == 0.0 && lik == 0.0 && tp == 0.0) {
    throw std::invalid_argument("at least one loss weight must be positive");
  }
}

std::string LossWeights::name() const {
  const auto same = [this](const LossWeights& w) {
    return ce == w.ce && recon == w.recon && lik == w.lik && tp == w.tp;
  };
  if (same(ce_only())) return "ce";
  if (same(ce_re())) return "ce+re";
  if (same(ce_tp())) return "ce+tp";
  if (same(full())) return "ce+tp+re";
  return "custom";
}

Matrix posterior_rows(const std::vector<Vec64>& latents, const Prototypes& protos) {
  Matrix rows(latents.size(), protos.way());
  std::vector<double> scores(protos.way());
  for (std::size_t i = 0; i < latents.size(); ++i) posterior_into(latents[i].view(), protos, scores, rows.row(i));
  return rows;
}

double loss_ce(const TPVAEState& state, const Episode& episode, const std::vector<LatentSet>& latents) {
  check_latents(episode, latents);
  PointPosterior post(state.prototypes.way());
  double acc = 0.0;
  for (const auto& set : latents) {
    for (std::size_t s = 0; s < episode.support.size(); ++s) {
      post.eval(set.support[s].view(), state.prototypes);
      acc -= post.log_p[episode.support[s].label];
    }
  }
  return acc / static_cast<double>(latents.size() * episode.support.size());
}

double loss_recon(const TPVAEState& state, const std::vector<LatentSet>& latents, const Episode& episode) {
  check_latents(episode, latents);
  state.decoder.validate();
  DecoderScratch scratch;
  double acc = 0.0;
  for (const auto& set : latents) {
    for (std::size_t i = 0; i < episode.query.size(); ++i) {
      acc += recon_forward(state.decoder, set.query[i].view(), episode.query[i].feature.view(), scratch);
    }
  }
  return acc / static_cast<double>(latents.size());
}

double loss_lik(const TPVAEState& state, const std::vector<LatentSet>& latents, const Episode& episode) {
  check_latents(episode, latents);
  PointPosterior post(state.prototypes.way());
  double acc = 0.0;
  for (const auto& set : latents) {
    for (const auto& z : set.query) {
      post.eval(z.view(), state.prototypes);
      for (std::size_t k = 0; k < post.p.size(); ++k) acc += post.p[k] * post.scores[k];
    }
  }
  return acc / static_cast<double>(latents.size());
}

double loss_tp(const Matrix& posterior, const PriorMatrix& prior, TpForm form) {
  if (posterior.rows != prior.queries() || posterior.cols != prior.way()) {
    throw DimensionError("loss_tp: posterior and prior shapes differ");
  }
  const std::size_t way = posterior.cols;
  std::vector<double> mass(way, 0.0);
  for (std::size_t i = 0; i < posterior.rows; ++i) {
    for (std::size_t k = 0; k < way; ++k) mass[k] += posterior(i, k);
  }
  double acc = 0.0;
  if (form == TpForm::jensen_marginal) {
    const auto prior_mass = prior.class_mass();
    for (std::size_t k = 0; k < way; ++k) acc += mass[k] * (safe_log(prior_mass[k]) - safe_log(mass[k]));
  } else {
    const Matrix& pr = prior.probs();
    for (std::size_t k = 0; k < way; ++k) {
      double ratio = 0.0;
      for (std::size_t i = 0; i < posterior.rows; ++i) ratio += pr(i, k) / std::max(posterior(i, k), kLogFloor);
      acc += mass[k] * safe_log(ratio);
    }
  }
  return acc;
}

double loss_sample_kl(const Matrix& posterior, const PriorMatrix& prior) {
  if (posterior.rows != prior.queries() || posterior.cols != prior.way()) {
    throw DimensionError("loss_sample_kl: posterior and prior shapes differ");
  }
  const Matrix& pr = prior.probs();
  double acc = 0.0;
  for (std::size_t i = 0; i < posterior.rows; ++i) {
    for (std::size_t k = 0; k < posterior.cols; ++k) {
      const double p = posterior(i, k);
      if (p == 0.0) continue;
      acc += p * (safe_log(pr(i, k)) - safe_log(p));
    }
  }
  return acc;
}

LossBreakdown loss_and_grad(const TPVAEState& state, const Episode& episode, const LossWeights& weights,
                            const std::vector<LatentSet>& latents, Gradients* grads) {
  check_latents(episode, latents);
  const Prototypes& protos = state.prototypes;
  const PriorMatrix& prior = state.prior;
  const std::size_t way = protos.way();
  const std::size_t n_support = episode.support.size();
  const std::size_t n_query = episode.query.size();
  if (prior.queries() != n_query || prior.way() != way) throw DimensionError("objective: prior shape mismatch");
  state.decoder.validate();

  const double inv_l = 1.0 / static_cast<double>(latents.size());
  const double query_scale =
      weights.reduction == QueryReduction::mean && n_query > 0 ? 1.0 / static_cast<double>(n_query) : 1.0;

  if (grads) {
    grads->d_psi = Matrix(way, protos.dim());
    grads->d_decoder = DecoderParams::zeros_like(state.decoder);
  }
  const double coef_ce = weights.ce * inv_l / static_cast<double>(n_support);
  const double coef_lik = -query_scale * weights.lik * inv_l;
  const double coef_tp = -query_scale * weights.tp * inv_l;
  const double coef_recon = -query_scale * weights.recon * inv_l;

  const std::vector<double> prior_mass = prior.class_mass();
  const Matrix& prior_rows = prior.probs();

  PointPosterior post(way);
  Matrix q_scores(n_query, way);
  Matrix q_probs(n_query, way);
  std::vector<double> mass(way);
  std::vector<double> tp_upstream;  // d tp / d p_ik, laid out like q_probs
  DecoderScratch scratch;

  double ce_sum = 0.0;
  double recon_sum = 0.0;
  double lik_sum = 0.0;
  double tp_sum = 0.0;

  for (const auto& set : latents) {
    for (std::size_t s = 0; s < n_support; ++s) {
      const auto z = set.support[s].view();
      const std::size_t label = episode.support[s].label;
      post.eval(z, protos);
      ce_sum -= post.log_p[label];
      if (grads && coef_ce != 0.0) {
        for (std::size_t k = 0; k < way; ++k) {
          const double g = coef_ce * (post.p[k] - (k == label ? 1.0 : 0.0));
          accumulate_score_grad(z, protos, k, g, grads->d_psi);
        }
      }
    }

    std::fill(mass.begin(), mass.end(), 0.0);
    std::vector<double> lik_point(n_query);
    for (std::size_t i = 0; i < n_query; ++i) {
      post.eval(set.query[i].view(), protos);
      double f = 0.0;
      for (std::size_t k = 0; k < way; ++k) {
        q_scores(i, k) = post.scores[k];
        q_probs(i, k) = post.p[k];
        f += post.p[k] * post.scores[k];
        mass[k] += post.p[k];
      }
      lik_point[i] = f;
      lik_sum += f;
    }
    tp_sum += loss_tp(q_probs, prior, weights.tp_form);

    if (grads && (coef_lik != 0.0 || coef_tp != 0.0)) {
      tp_upstream.assign(n_query * way, 0.0);
      if (coef_tp != 0.0) {
        if (weights.tp_form == TpForm::jensen_marginal) {
          for (std::size_t k = 0; k < way; ++k) {
            const double g = safe_log(prior_mass[k]) - safe_log(mass[k]) - (mass[k] > kLogFloor ? 1.0 : 0.0);
            for (std::size_t i = 0; i < n_query; ++i) tp_upstream[i * way + k] = g;
          }
        } else {
          for (std::size_t k = 0; k < way; ++k) {
            double ratio = 0.0;
            for (std::size_t i = 0; i < n_query; ++i) ratio += prior_rows(i, k) / std::max(q_probs(i, k), kLogFloor);
            const double log_ratio = safe_log(ratio);
            const double outer = ratio > kLogFloor ? mass[k] / ratio : 0.0;
            for (std::size_t i = 0; i < n_query; ++i) {
              const double p = q_probs(i, k);
              const double d_ratio = p > kLogFloor ? -prior_rows(i, k) / (p * p) : 0.0;
              tp_upstream[i * way + k] = log_ratio + outer * d_ratio;
            }
          }
        }
      }
      for (std::size_t i = 0; i < n_query; ++i) {
        const auto z = set.query[i].view();
        double mean_g = 0.0;
        for (std::size_t k = 0; k < way; ++k) mean_g += q_probs(i, k) * tp_upstream[i * way + k];
        for (std::size_t k = 0; k < way; ++k) {
          const double p = q_probs(i, k);
          const double g_lik = coef_lik * p * (1.0 + q_scores(i, k) - lik_point[i]);
          const double g_tp = coef_tp * p * (tp_upstream[i * way + k] - mean_g);
          if (!std::isfinite(g_lik)) throw NumericalError("non-finite gradient in loss term 'lik'");
          if (!std::isfinite(g_tp)) throw NumericalError("non-finite gradient in loss term 'tp'");
          accumulate_score_grad(z, protos, k, g_lik + g_tp, grads->d_psi);
        }
      }
    }

    for (std::size_t i = 0; i < n_query; ++i) {
      const auto z = set.query[i].view();
      recon_sum += recon_forward(state.decoder, z, episode.query[i].feature.view(), scratch);
      if (grads && coef_recon != 0.0) recon_backward(state.decoder, z, scratch, coef_recon, grads->d_decoder);
    }
  }

  LossBreakdown out;
  out.ce = ce_sum * inv_l / static_cast<double>(n_support);
  out.recon = query_scale * recon_sum * inv_l;
  out.lik = query_scale * lik_sum * inv_l;
  out.tp = query_scale * tp_sum * inv_l;
  out.total = weights.ce * out.ce - (weights.recon * out.recon + weights.lik * out.lik + weights.tp * out.tp);
  require_finite(out.ce, "ce");
  require_finite(out.recon, "recon");
  require_finite(out.lik, "lik");
  require_finite(out.tp, "tp");
  require_finite(out.total, "total");

  if (grads) {
    for (double v : grads->d_psi.data) {
      if (!std::isfinite(v)) throw NumericalError("non-finite prototype gradient");
    }
    for (const auto* buf : {&grads->d_decoder.w1.data, &grads->d_decoder.b1, &grads->d_decoder.w2.data,
                            &grads->d_decoder.b2}) {
      for (double v : *buf) {
        if (!std::isfinite(v)) throw NumericalError("non-finite gradient in loss term 'recon'");
      }
    }
  }
  return out;
}

LossBreakdown total_loss(const TPVAEState& state, const Episode& episode, const LossWeights& weights,
                         const std::vector<LatentSet>& latents) {
  return loss_and_grad(state, episode, weights, latents, nullptr);
}

Gradients grad_total(const TPVAEState& state, const Episode& episode, const LossWeights& weights,
                     const std::vector<LatentSet>& latents) {
  Gradients g;
  loss_and_grad(state, episode, weights, latents, &g);
  return g;
}

}  // namespace tpvae
