#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace tpvae {

/// Dense 64-bit vector. Constructors reject NaN and Inf.
class Vec64 {
 public:
  Vec64() = default;
  explicit Vec64(std::size_t n, double fill = 0.0);
  explicit Vec64(std::vector<double> values);
  Vec64(std::initializer_list<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }

  std::span<const double> view() const noexcept { return values_; }
  std::span<double> view() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool operator==(const Vec64&) const = default;

 private:
  std::vector<double> values_;
};

/// Categorical distribution over K classes.
class ProbRow {
 public:
  static constexpr double kSumTolerance = 1e-9;

  ProbRow() = default;
  /// Throws NumericalError unless entries are >= 0 and sum to 1 within kSumTolerance.
  explicit ProbRow(std::vector<double> probs);
  /// exp of log-probabilities produced by log_softmax.
  static ProbRow from_log(std::span<const double> log_probs);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t k) const noexcept { return probs_[k]; }
  std::span<const double> view() const noexcept { return probs_; }
  /// Lowest index among the maximal entries.
  std::size_t argmax() const noexcept;

  bool operator==(const ProbRow&) const = default;

 private:
  std::vector<double> probs_;
};

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) noexcept { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

/// Which consumer a random stream feeds. Folded into the stream id so that
/// every (seed, episode, purpose) triple owns an independent sequence.
enum class Purpose : std::uint8_t {
  generic = 0,
  episode_sampling = 1,
  decoder_init = 2,
  latent_sampling = 3,
  synth_means = 4,
  synth_features = 5,
};

std::uint64_t make_stream_id(std::uint64_t index, Purpose purpose) noexcept;

/// Philox4x32-10 block applied to the raw counter and key.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

/// Counter-based random stream. The output sequence is a pure function of
/// (seed, stream_id), so streams can be created in any order on any thread.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Unbiased integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_index(std::uint64_t bound) noexcept;
  /// Standard normal via Box-Muller.
  double normal() noexcept;

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Log-probabilities via log-sum-exp with max subtraction.
Vec64 log_softmax(const Vec64& scores);
/// Span variant used by the hot loops; `out` must have the same length as `scores`.
void log_softmax_into(std::span<const double> scores, std::span<double> out);

double sq_dist(const Vec64& a, const Vec64& b);
double sq_dist(std::span<const double> a, std::span<const double> b);

Vec64 gaussian_sample(const Vec64& mean, double sigma, RngStream& rng);

/// Central differences per coordinate.
Vec64 finite_diff_grad(const std::function<double(const Vec64&)>& f, const Vec64& x, double h = 1e-5);

/// FNV-1a over raw bytes; used for dataset and episode fingerprints.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t state = 0xcbf29ce484222325ULL) noexcept;

}  // namespace tpvae
