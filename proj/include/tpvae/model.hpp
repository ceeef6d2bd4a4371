#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tpvae/episodes.hpp"
#include "tpvae/numerics.hpp"

namespace tpvae {

/// Class prototypes and the softmax temperature (inverse class variance).
struct Prototypes {
  Matrix psi;  // way x dim
  double tau = 25.0;

  std::size_t way() const noexcept { return psi.rows; }
  std::size_t dim() const noexcept { return psi.cols; }
  void validate() const;

  bool operator==(const Prototypes&) const = default;
};

/// Decoder mean map: W2 * tanh(W1 * z + b1) + b2, with unit output variance.
struct DecoderParams {
  Matrix w1;               // hidden x latent
  std::vector<double> b1;  // hidden
  Matrix w2;               // obs x hidden
  std::vector<double> b2;  // obs

  std::size_t latent_dim() const noexcept { return w1.cols; }
  std::size_t hidden_dim() const noexcept { return w1.rows; }
  std::size_t obs_dim() const noexcept { return w2.rows; }
  void validate() const;

  /// Same shapes, all zeros.
  static DecoderParams zeros_like(const DecoderParams& shape);

  bool operator==(const DecoderParams&) const = default;
};

/// Per-query class distribution from the untrained classifier. Frozen once
/// built; only read access is exposed.
class PriorMatrix {
 public:
  PriorMatrix() = default;
  /// Rows must each be a valid distribution.
  explicit PriorMatrix(Matrix rows);

  const Matrix& probs() const noexcept { return rows_; }
  std::size_t queries() const noexcept { return rows_.rows; }
  std::size_t way() const noexcept { return rows_.cols; }
  ProbRow row(std::size_t i) const;
  /// Sum over queries of p(y_i = k).
  std::vector<double> class_mass() const;

  bool operator==(const PriorMatrix&) const = default;

 private:
  Matrix rows_;
};

struct TPVAEState {
  Prototypes prototypes;
  DecoderParams decoder;
  PriorMatrix prior;
  double sigma_enc = 0.1;
  std::size_t mc_samples = 1;
};

/// Row k is the mean of the support features labeled k.
Prototypes init_prototypes(const Episode& episode, double tau);

/// Softmax over -tau * ||z - psi_k||^2.
ProbRow posterior(const Vec64& z, const Prototypes& protos);

/// Fills `scores` with -tau * ||z - psi_k||^2 and `probs` with their softmax.
void posterior_into(std::span<const double> z, const Prototypes& protos, std::span<double> scores,
                    std::span<double> probs);

/// Posterior rows for every query, on the stored (noise-free) features.
PriorMatrix snapshot_prior(const Episode& episode, const Prototypes& protos_init);

/// Weights uniform in +-1/sqrt(fan_in), biases zero.
DecoderParams init_decoder(std::size_t d_obs, std::size_t d_hidden, std::size_t d_latent, RngStream& rng);

Vec64 decode(const DecoderParams& theta, const Vec64& z);

/// One Monte Carlo draw of encoder latents for every support and query shot.
struct LatentSet {
  std::vector<Vec64> support;
  std::vector<Vec64> query;
};

/// z = feature + sigma_enc * eps. sigma_enc = 0 returns the features exactly.
std::vector<LatentSet> sample_latents(const Episode& episode, double sigma_enc, std::size_t mc_samples,
                                      RngStream& rng);

/// Latents equal to the stored features.
LatentSet deterministic_latents(const Episode& episode);

/// Nearest-prototype label on the stored features; ties go to the lowest index.
std::vector<std::size_t> predict(const Episode& episode, const Prototypes& protos);

}  // namespace tpvae
