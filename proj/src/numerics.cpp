#include "tpvae/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tpvae/errors.hpp"

namespace tpvae {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericalError(std::string(what) + ": non-finite entry at index " + std::to_string(i));
    }
  }
}

}  // namespace

Vec64::Vec64(std::size_t n, double fill) : values_(n, fill) { require_finite({&fill, 1}, "Vec64"); }

Vec64::Vec64(std::vector<double> values) : values_(std::move(values)) { require_finite(values_, "Vec64"); }

Vec64::Vec64(std::initializer_list<double> values) : values_(values) { require_finite(values_, "Vec64"); }

ProbRow::ProbRow(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw DimensionError("ProbRow: empty distribution");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw NumericalError("ProbRow: entry outside [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw NumericalError("ProbRow: entries sum to " + std::to_string(sum));
  }
}

ProbRow ProbRow::from_log(std::span<const double> log_probs) {
  std::vector<double> p(log_probs.size());
  std::transform(log_probs.begin(), log_probs.end(), p.begin(), [](double v) { return std::exp(v); });
  return ProbRow(std::move(p));
}

std::size_t ProbRow::argmax() const noexcept {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

std::uint64_t make_stream_id(std::uint64_t index, Purpose purpose) noexcept {
  return (index << 8) | static_cast<std::uint64_t>(purpose);
}

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) noexcept {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept : seed_(seed), stream_id_(stream_id) {}

void RngStream::refill() noexcept {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
      static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
  const auto out = philox4x32_10(ctr, key);
  ++block_;
  buffer_[0] = (std::uint64_t{out[1]} << 32) | out[0];
  buffer_[1] = (std::uint64_t{out[3]} << 32) | out[2];
  buffered_ = 2;
}

std::uint64_t RngStream::next_u64() noexcept {
  if (buffered_ == 0) refill();
  return buffer_[2 - buffered_--];
}

double RngStream::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::uniform_index(std::uint64_t bound) noexcept {
  // Lemire's multiply-shift with rejection.
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next_u64()) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double RngStream::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

void log_softmax_into(std::span<const double> scores, std::span<double> out) {
  if (scores.empty()) throw DimensionError("log_softmax: empty input");
  if (out.size() != scores.size()) throw DimensionError("log_softmax: output length mismatch");
  const double top = *std::max_element(scores.begin(), scores.end());
  double acc = 0.0;
  for (double s : scores) acc += std::exp(s - top);
  const double log_acc = std::log(acc);
  for (std::size_t k = 0; k < scores.size(); ++k) out[k] = (scores[k] - top) - log_acc;
}

Vec64 log_softmax(const Vec64& scores) {
  Vec64 out(scores.size());
  log_softmax_into(scores.view(), out.view());
  return out;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("sq_dist: dimension mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    acc += diff * diff;
  }
  return acc;
}

double sq_dist(const Vec64& a, const Vec64& b) { return sq_dist(a.view(), b.view()); }

Vec64 gaussian_sample(const Vec64& mean, double sigma, RngStream& rng) {
  if (!(sigma >= 0.0)) throw NumericalError("gaussian_sample: sigma must be >= 0");
  Vec64 out = mean;
  if (sigma == 0.0) return out;
  for (std::size_t d = 0; d < out.size(); ++d) out[d] += sigma * rng.normal();
  return out;
}

Vec64 finite_diff_grad(const std::function<double(const Vec64&)>& f, const Vec64& x, double h) {
  if (!(h > 0.0)) throw OracleError("finite_diff_grad: step must be positive");
  Vec64 grad(x.size());
  Vec64 probe = x;
  for (std::size_t d = 0; d < x.size(); ++d) {
    probe[d] = x[d] + h;
    const double up = f(probe);
    probe[d] = x[d] - h;
    const double down = f(probe);
    probe[d] = x[d];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw OracleError("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(d));
    }
    grad[d] = (up - down) / (2.0 * h);
  }
  return grad;
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t state) noexcept {
  for (unsigned char b : bytes) {
    state ^= b;
    state *= 0x100000001b3ULL;
  }
  return state;
}

}  // namespace tpvae
