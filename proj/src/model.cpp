#include "tpvae/model.hpp"

#include <cmath>
#include <string>

#include "tpvae/errors.hpp"

namespace tpvae {

void Prototypes::validate() const {
  if (psi.rows < 2) throw DimensionError("prototypes: need at least 2 classes");
  if (psi.cols == 0) throw DimensionError("prototypes: zero dimension");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("prototypes: tau must be positive");
}

void DecoderParams::validate() const {
  if (b1.size() != w1.rows || w2.cols != w1.rows || b2.size() != w2.rows) {
    throw DimensionError("decoder: inconsistent parameter shapes");
  }
}

DecoderParams DecoderParams::zeros_like(const DecoderParams& shape) {
  return {Matrix(shape.w1.rows, shape.w1.cols), std::vector<double>(shape.b1.size(), 0.0),
          Matrix(shape.w2.rows, shape.w2.cols), std::vector<double>(shape.b2.size(), 0.0)};
}

PriorMatrix::PriorMatrix(Matrix rows) : rows_(std::move(rows)) {
  for (std::size_t i = 0; i < rows_.rows; ++i) {
    const auto r = rows_.row(i);
    (void)ProbRow(std::vector<double>(r.begin(), r.end()));
  }
}

ProbRow PriorMatrix::row(std::size_t i) const {
  const auto r = rows_.row(i);
  return ProbRow(std::vector<double>(r.begin(), r.end()));
}

std::vector<double> PriorMatrix::class_mass() const {
  std::vector<double> mass(rows_.cols, 0.0);
  for (std::size_t i = 0; i < rows_.rows; ++i) {
    for (std::size_t k = 0; k < rows_.cols; ++k) mass[k] += rows_(i, k);
  }
  return mass;
}

Prototypes init_prototypes(const Episode& episode, double tau) {
  const std::size_t way = episode.way();
  const std::size_t dim = episode.dim();
  Prototypes protos{Matrix(way, dim), tau};
  std::vector<std::size_t> counts(way, 0);
  for (const auto& s : episode.support) {
    if (s.label >= way) throw DimensionError("init_prototypes: support label out of range");
    auto row = protos.psi.row(s.label);
    for (std::size_t d = 0; d < dim; ++d) row[d] += s.feature[d];
    ++counts[s.label];
  }
  for (std::size_t k = 0; k < way; ++k) {
    if (counts[k] == 0) throw DimensionError("init_prototypes: class " + std::to_string(k) + " has no support shots");
    if (counts[k] == 1) continue;  // keep the single shot bitwise
    for (double& v : protos.psi.row(k)) v /= static_cast<double>(counts[k]);
  }
  protos.validate();
  return protos;
}

void posterior_into(std::span<const double> z, const Prototypes& protos, std::span<double> scores,
                    std::span<double> probs) {
  if (z.size() != protos.dim()) {
    throw DimensionError("posterior: latent has dimension " + std::to_string(z.size()) + ", prototypes " +
                         std::to_string(protos.dim()));
  }
  for (std::size_t k = 0; k < protos.way(); ++k) scores[k] = -protos.tau * sq_dist(z, protos.psi.row(k));
  log_softmax_into(scores, probs);
  for (double& p : probs) p = std::exp(p);
}

ProbRow posterior(const Vec64& z, const Prototypes& protos) {
  std::vector<double> scores(protos.way());
  std::vector<double> log_p(protos.way());
  if (z.size() != protos.dim()) throw DimensionError("posterior: dimension mismatch");
  for (std::size_t k = 0; k < protos.way(); ++k) scores[k] = -protos.tau * sq_dist(z.view(), protos.psi.row(k));
  log_softmax_into(scores, log_p);
  return ProbRow::from_log(log_p);
}

PriorMatrix snapshot_prior(const Episode& episode, const Prototypes& protos_init) {
  Matrix rows(episode.query.size(), protos_init.way());
  std::vector<double> scores(protos_init.way());
  for (std::size_t i = 0; i < episode.query.size(); ++i) {
    posterior_into(episode.query[i].feature.view(), protos_init, scores, rows.row(i));
  }
  return PriorMatrix(std::move(rows));
}

DecoderParams init_decoder(std::size_t d_obs, std::size_t d_hidden, std::size_t d_latent, RngStream& rng) {
  if (d_obs == 0 || d_hidden == 0 || d_latent == 0) throw DimensionError("init_decoder: dimensions must be positive");
  DecoderParams theta{Matrix(d_hidden, d_latent), std::vector<double>(d_hidden, 0.0), Matrix(d_obs, d_hidden),
                      std::vector<double>(d_obs, 0.0)};
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(d_latent));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(d_hidden));
  for (double& w : theta.w1.data) w = bound1 * (2.0 * rng.uniform() - 1.0);
  for (double& w : theta.w2.data) w = bound2 * (2.0 * rng.uniform() - 1.0);
  return theta;
}

Vec64 decode(const DecoderParams& theta, const Vec64& z) {
  theta.validate();
  if (z.size() != theta.latent_dim()) throw DimensionError("decode: latent dimension mismatch");
  std::vector<double> hidden(theta.hidden_dim());
  for (std::size_t h = 0; h < hidden.size(); ++h) {
    double a = theta.b1[h];
    const auto w = theta.w1.row(h);
    for (std::size_t d = 0; d < z.size(); ++d) a += w[d] * z[d];
    hidden[h] = std::tanh(a);
  }
  Vec64 out(theta.obs_dim());
  for (std::size_t o = 0; o < out.size(); ++o) {
    double a = theta.b2[o];
    const auto w = theta.w2.row(o);
    for (std::size_t h = 0; h < hidden.size(); ++h) a += w[h] * hidden[h];
    out[o] = a;
  }
  return out;
}

LatentSet deterministic_latents(const Episode& episode) {
  LatentSet set;
  set.support.reserve(episode.support.size());
  set.query.reserve(episode.query.size());
  for (const auto& s : episode.support) set.support.push_back(s.feature);
  for (const auto& q : episode.query) set.query.push_back(q.feature);
  return set;
}

std::vector<LatentSet> sample_latents(const Episode& episode, double sigma_enc, std::size_t mc_samples,
                                      RngStream& rng) {
  if (!(sigma_enc >= 0.0)) throw std::invalid_argument("sample_latents: sigma_enc must be >= 0");
  if (mc_samples < 1) throw std::invalid_argument("sample_latents: need at least one sample");
  std::vector<LatentSet> out;
  out.reserve(mc_samples);
  for (std::size_t l = 0; l < mc_samples; ++l) {
    LatentSet set;
    set.support.reserve(episode.support.size());
    set.query.reserve(episode.query.size());
    for (const auto& s : episode.support) set.support.push_back(gaussian_sample(s.feature, sigma_enc, rng));
    for (const auto& q : episode.query) set.query.push_back(gaussian_sample(q.feature, sigma_enc, rng));
    out.push_back(std::move(set));
  }
  return out;
}

std::vector<std::size_t> predict(const Episode& episode, const Prototypes& protos) {
  std::vector<std::size_t> labels(episode.query.size());
  for (std::size_t i = 0; i < episode.query.size(); ++i) {
    const auto z = episode.query[i].feature.view();
    std::size_t best = 0;
    double best_d = sq_dist(z, protos.psi.row(0));
    for (std::size_t k = 1; k < protos.way(); ++k) {
      const double d = sq_dist(z, protos.psi.row(k));
      if (d < best_d) {
        best = k;
        best_d = d;
      }
    }
    labels[i] = best;
  }
  return labels;
}

}  // namespace tpvae
