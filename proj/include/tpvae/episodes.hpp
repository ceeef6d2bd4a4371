#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tpvae/numerics.hpp"

namespace tpvae {

struct ClassFeatures {
  std::uint32_t class_id = 0;
  std::vector<Vec64> features;

  bool operator==(const ClassFeatures&) const = default;
};

/// Labeled feature vectors grouped by class. Immutable once constructed.
class EmbeddingDataset {
 public:
  /// Throws DimensionError on ragged features, duplicate ids or empty classes.
  EmbeddingDataset(std::size_t dim, std::vector<ClassFeatures> classes);

  std::size_t dim() const noexcept { return dim_; }
  const std::vector<ClassFeatures>& classes() const noexcept { return classes_; }
  std::size_t num_classes() const noexcept { return classes_.size(); }
  std::size_t num_records() const noexcept;

  /// Hash of dim, ids and feature bits; independent of file encoding.
  std::uint64_t fingerprint() const noexcept;

  bool operator==(const EmbeddingDataset&) const = default;

 private:
  std::size_t dim_;
  std::vector<ClassFeatures> classes_;
};

enum class Preprocess { none, l2, center_l2 };

std::string_view to_string(Preprocess mode) noexcept;
/// Accepts "none", "l2", "center_l2".
Preprocess parse_preprocess(std::string_view text);

struct EpisodeSpec {
  std::size_t way = 5;
  std::size_t shot = 1;
  std::vector<std::size_t> query_counts = {15, 15, 15, 15, 15};
  Preprocess preprocess = Preprocess::none;

  /// Throws std::invalid_argument when the spec is not self-consistent.
  void validate() const;
  std::size_t total_queries() const noexcept;

  bool operator==(const EpisodeSpec&) const = default;
};

/// Where an episode entry came from: position of the class in the dataset and
/// the instance index inside that class.
struct SourceRef {
  std::size_t class_pos = 0;
  std::size_t instance = 0;

  bool operator==(const SourceRef&) const = default;
  auto operator<=>(const SourceRef&) const = default;
};

struct Shot {
  Vec64 feature;
  std::size_t label = 0;  // episode-local, 0..way-1
  SourceRef source;

  bool operator==(const Shot&) const = default;
};

/// One N-way K-shot task. Query labels are kept for scoring only.
struct Episode {
  std::vector<Shot> support;
  std::vector<Shot> query;
  std::vector<std::uint32_t> class_ids;  // dataset id of each episode label
  EpisodeSpec spec;

  std::size_t way() const noexcept { return spec.way; }
  std::size_t dim() const noexcept { return support.empty() ? 0 : support.front().feature.size(); }
  /// Hash of the sampled (class, instance) selection, used to verify pairing.
  std::uint64_t selection_hash() const noexcept;

  bool operator==(const Episode&) const = default;
};

struct SynthSpec {
  std::size_t num_classes = 20;
  std::size_t dim = 64;
  std::size_t per_class = 200;
  double separation = 4.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Isotropic Gaussian mixture with unit within-class variance. Class means lie
/// uniformly on a sphere of radius separation/sqrt(2), so pairwise mean
/// distances concentrate near `separation` in high dimension. Features are
/// rounded to float precision so that FSE1 storage is lossless.
EmbeddingDataset gen_synthetic(const SynthSpec& spec);

enum class DatasetFormat { fse1, csv };

DatasetFormat parse_format(std::string_view text);
/// Picks csv for a ".csv" extension and fse1 otherwise.
DatasetFormat format_from_path(const std::filesystem::path& path);

EmbeddingDataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
EmbeddingDataset parse_fse1(std::string_view bytes);
EmbeddingDataset parse_csv(std::string_view text);

void save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path, DatasetFormat format);
std::string encode_fse1(const EmbeddingDataset& ds);
std::string encode_csv(const EmbeddingDataset& ds);

/// Applied to all features of one episode. center_l2 subtracts the mean of
/// the given set before normalizing. Zero vectors are left unchanged by l2.
std::vector<Vec64> preprocess(std::vector<Vec64> features, Preprocess mode);

/// Samples classes, then per class `shot + query_counts[n]` distinct
/// instances; the first `shot` go to the support set.
Episode sample_episode(const EmbeddingDataset& ds, const EpisodeSpec& spec, RngStream& rng);

}  // namespace tpvae
