#include "tpvae/episodes.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tpvae/errors.hpp"

namespace tpvae {

namespace {

constexpr std::size_t kFseHeaderBytes = 24;
constexpr std::uint32_t kFseVersion = 1;

void hash_u64(std::uint64_t& state, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  state = fnv1a64(buf, state);
}

std::uint64_t read_le(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= std::uint64_t{static_cast<unsigned char>(bytes[offset + i])} << (8 * i);
  }
  return v;
}

void write_le(std::string& out, std::uint64_t v, int width) {
  for (int i = 0; i < width; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

EmbeddingDataset group_records(std::size_t dim, std::map<std::uint32_t, std::vector<Vec64>>& by_class) {
  std::vector<ClassFeatures> classes;
  classes.reserve(by_class.size());
  for (auto& [id, feats] : by_class) classes.push_back({id, std::move(feats)});
  return EmbeddingDataset(dim, std::move(classes));
}

}  // namespace

EmbeddingDataset::EmbeddingDataset(std::size_t dim, std::vector<ClassFeatures> classes)
    : dim_(dim), classes_(std::move(classes)) {
  if (dim_ == 0) throw DimensionError("dataset: dim must be positive");
  std::set<std::uint32_t> ids;
  for (const auto& c : classes_) {
    if (!ids.insert(c.class_id).second) {
      throw DimensionError("dataset: duplicate class id " + std::to_string(c.class_id));
    }
    if (c.features.empty()) throw DimensionError("dataset: class " + std::to_string(c.class_id) + " is empty");
    for (const auto& f : c.features) {
      if (f.size() != dim_) {
        throw DimensionError("dataset: class " + std::to_string(c.class_id) + " has a feature of length " +
                             std::to_string(f.size()) + ", expected " + std::to_string(dim_));
      }
    }
  }
}

std::size_t EmbeddingDataset::num_records() const noexcept {
  std::size_t n = 0;
  for (const auto& c : classes_) n += c.features.size();
  return n;
}

std::uint64_t EmbeddingDataset::fingerprint() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  hash_u64(h, dim_);
  hash_u64(h, classes_.size());
  for (const auto& c : classes_) {
    hash_u64(h, c.class_id);
    hash_u64(h, c.features.size());
    for (const auto& f : c.features) {
      h = fnv1a64({reinterpret_cast<const unsigned char*>(f.values().data()), f.size() * sizeof(double)}, h);
    }
  }
  return h;
}

std::string_view to_string(Preprocess mode) noexcept {
  switch (mode) {
    case Preprocess::none: return "none";
    case Preprocess::l2: return "l2";
    case Preprocess::center_l2: return "center_l2";
  }
  return "none";
}

Preprocess parse_preprocess(std::string_view text) {
  if (text == "none") return Preprocess::none;
  if (text == "l2") return Preprocess::l2;
  if (text == "center_l2") return Preprocess::center_l2;
  throw std::invalid_argument("unknown preprocess mode '" + std::string(text) + "'");
}

void EpisodeSpec::validate() const {
  if (way < 2) throw std::invalid_argument("episode spec: way must be >= 2");
  if (shot < 1) throw std::invalid_argument("episode spec: shot must be >= 1");
  if (query_counts.size() != way) {
    throw std::invalid_argument("episode spec: " + std::to_string(query_counts.size()) + " query counts for " +
                                std::to_string(way) + " ways");
  }
  if (total_queries() == 0) throw std::invalid_argument("episode spec: at least one query shot required");
}

std::size_t EpisodeSpec::total_queries() const noexcept {
  return std::accumulate(query_counts.begin(), query_counts.end(), std::size_t{0});
}

std::uint64_t Episode::selection_hash() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto id : class_ids) hash_u64(h, id);
  for (const auto* set : {&support, &query}) {
    for (const auto& s : *set) {
      hash_u64(h, s.source.class_pos);
      hash_u64(h, s.source.instance);
    }
  }
  return h;
}

void SynthSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("synth: need at least 2 classes");
  if (dim < 1) throw std::invalid_argument("synth: dim must be positive");
  if (per_class < 1) throw std::invalid_argument("synth: per_class must be positive");
  if (!(separation >= 0.0) || !std::isfinite(separation)) {
    throw std::invalid_argument("synth: separation must be finite and >= 0");
  }
}

EmbeddingDataset gen_synthetic(const SynthSpec& spec) {
  spec.validate();
  const double radius = spec.separation / std::sqrt(2.0);
  RngStream mean_rng(spec.seed, make_stream_id(0, Purpose::synth_means));
  std::vector<ClassFeatures> classes;
  classes.reserve(spec.num_classes);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    std::vector<double> mean(spec.dim);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (auto& m : mean) {
        m = mean_rng.normal();
        norm2 += m * m;
      }
    } while (norm2 == 0.0);
    const double scale = radius / std::sqrt(norm2);
    for (auto& m : mean) m *= scale;

    RngStream feat_rng(spec.seed, make_stream_id(c, Purpose::synth_features));
    ClassFeatures cf{static_cast<std::uint32_t>(c), {}};
    cf.features.reserve(spec.per_class);
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      std::vector<double> x(spec.dim);
      for (std::size_t d = 0; d < spec.dim; ++d) {
        x[d] = static_cast<double>(static_cast<float>(mean[d] + feat_rng.normal()));
      }
      cf.features.emplace_back(std::move(x));
    }
    classes.push_back(std::move(cf));
  }
  return EmbeddingDataset(spec.dim, std::move(classes));
}

DatasetFormat parse_format(std::string_view text) {
  if (text == "fse1") return DatasetFormat::fse1;
  if (text == "csv") return DatasetFormat::csv;
  throw std::invalid_argument("unknown dataset format '" + std::string(text) + "'");
}

DatasetFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? DatasetFormat::csv : DatasetFormat::fse1;
}

EmbeddingDataset parse_fse1(std::string_view bytes) {
  using U = ParseError::Unit;
  if (bytes.size() < 4 || bytes.substr(0, 4) != "FSE1") throw ParseError("bad magic, expected \"FSE1\"", U::byte_offset, 0);
  if (bytes.size() < kFseHeaderBytes) throw ParseError("truncated header", U::byte_offset, bytes.size());
  const auto version = static_cast<std::uint32_t>(read_le(bytes, 4, 4));
  if (version != kFseVersion) throw ParseError("unsupported version " + std::to_string(version), U::byte_offset, 4);
  const auto class_count = static_cast<std::uint32_t>(read_le(bytes, 8, 4));
  const auto dim = static_cast<std::uint32_t>(read_le(bytes, 12, 4));
  const std::uint64_t record_count = read_le(bytes, 16, 8);
  if (dim == 0) throw ParseError("dim must be positive", U::byte_offset, 12);

  const std::size_t record_bytes = 4 + 4 * std::size_t{dim};
  std::map<std::uint32_t, std::vector<Vec64>> by_class;
  std::size_t offset = kFseHeaderBytes;
  for (std::uint64_t r = 0; r < record_count; ++r) {
    if (bytes.size() - offset < record_bytes) {
      throw ParseError("truncated record " + std::to_string(r), U::byte_offset, offset);
    }
    const auto id = static_cast<std::uint32_t>(read_le(bytes, offset, 4));
    std::vector<double> x(dim);
    for (std::uint32_t d = 0; d < dim; ++d) {
      const std::size_t at = offset + 4 + 4 * std::size_t{d};
      const auto raw = static_cast<std::uint32_t>(read_le(bytes, at, 4));
      float f;
      std::memcpy(&f, &raw, sizeof f);
      if (!std::isfinite(f)) throw ParseError("non-finite feature value", U::byte_offset, at);
      x[d] = f;
    }
    by_class[id].emplace_back(std::move(x));
    offset += record_bytes;
  }
  if (offset != bytes.size()) throw ParseError("trailing bytes after last record", U::byte_offset, offset);
  if (by_class.size() != class_count) {
    throw ParseError("header declares " + std::to_string(class_count) + " classes but records use " +
                         std::to_string(by_class.size()),
                     U::byte_offset, 8);
  }
  if (by_class.empty()) throw ParseError("dataset has no records", U::byte_offset, 16);
  return group_records(dim, by_class);
}

EmbeddingDataset parse_csv(std::string_view text) {
  using U = ParseError::Unit;
  std::map<std::uint32_t, std::vector<Vec64>> by_class;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::vector<std::string_view> fields;
    for (std::size_t start = 0;;) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }

    if (line_no == 1 && fields.front() == "class_id") {
      for (std::size_t d = 1; d < fields.size(); ++d) {
        if (fields[d] != "f" + std::to_string(d - 1)) throw ParseError("malformed header", U::line, line_no);
      }
      dim = fields.size() - 1;
      if (dim == 0) throw ParseError("header declares no feature columns", U::line, line_no);
      continue;
    }

    if (fields.size() < 2) throw ParseError("row has no feature values", U::line, line_no);
    if (dim == 0) dim = fields.size() - 1;
    if (fields.size() - 1 != dim) {
      throw ParseError("ragged row: " + std::to_string(fields.size() - 1) + " features, expected " +
                           std::to_string(dim),
                       U::line, line_no);
    }
    std::uint32_t id = 0;
    {
      const auto f = fields.front();
      auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), id);
      if (ec != std::errc() || end != f.data() + f.size() || f.empty()) {
        throw ParseError("class_id '" + std::string(f) + "' is not a nonnegative integer", U::line, line_no);
      }
    }
    std::vector<double> x(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      const auto f = fields[d + 1];
      auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), x[d]);
      if (ec != std::errc() || end != f.data() + f.size() || f.empty() || !std::isfinite(x[d])) {
        throw ParseError("bad feature value '" + std::string(f) + "'", U::line, line_no);
      }
    }
    by_class[id].emplace_back(std::move(x));
  }
  if (by_class.empty()) throw ParseError("dataset has no records", U::line, line_no);
  return group_records(dim, by_class);
}

EmbeddingDataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  const std::string bytes = read_file(path);
  return format == DatasetFormat::fse1 ? parse_fse1(bytes) : parse_csv(bytes);
}

std::string encode_fse1(const EmbeddingDataset& ds) {
  std::string out = "FSE1";
  write_le(out, kFseVersion, 4);
  write_le(out, ds.num_classes(), 4);
  write_le(out, ds.dim(), 4);
  write_le(out, ds.num_records(), 8);
  out.reserve(out.size() + ds.num_records() * (4 + 4 * ds.dim()));
  for (const auto& c : ds.classes()) {
    for (const auto& f : c.features) {
      write_le(out, c.class_id, 4);
      for (double v : f) {
        const auto narrowed = static_cast<float>(v);
        std::uint32_t raw;
        std::memcpy(&raw, &narrowed, sizeof raw);
        write_le(out, raw, 4);
      }
    }
  }
  return out;
}

std::string encode_csv(const EmbeddingDataset& ds) {
  std::string out = "class_id";
  for (std::size_t d = 0; d < ds.dim(); ++d) out += ",f" + std::to_string(d);
  out += '\n';
  for (const auto& c : ds.classes()) {
    for (const auto& f : c.features) {
      out += std::to_string(c.class_id);
      for (double v : f) {
        out += ',';
        append_double(out, v);
      }
      out += '\n';
    }
  }
  return out;
}

void save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path, DatasetFormat format) {
  const std::string bytes = format == DatasetFormat::fse1 ? encode_fse1(ds) : encode_csv(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<Vec64> preprocess(std::vector<Vec64> features, Preprocess mode) {
  if (mode == Preprocess::none || features.empty()) return features;
  const std::size_t dim = features.front().size();
  if (mode == Preprocess::center_l2) {
    std::vector<double> mean(dim, 0.0);
    for (const auto& f : features) {
      for (std::size_t d = 0; d < dim; ++d) mean[d] += f[d];
    }
    for (auto& m : mean) m /= static_cast<double>(features.size());
    for (auto& f : features) {
      for (std::size_t d = 0; d < dim; ++d) f[d] -= mean[d];
    }
  }
  for (auto& f : features) {
    double norm2 = 0.0;
    for (double v : f) norm2 += v * v;
    if (norm2 == 0.0) continue;
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t d = 0; d < dim; ++d) f[d] *= inv;
  }
  return features;
}

Episode sample_episode(const EmbeddingDataset& ds, const EpisodeSpec& spec, RngStream& rng) {
  spec.validate();
  if (ds.num_classes() < spec.way) {
    throw SamplingError("dataset has " + std::to_string(ds.num_classes()) + " classes, episode needs " +
                        std::to_string(spec.way));
  }
  std::vector<std::size_t> class_order(ds.num_classes());
  std::iota(class_order.begin(), class_order.end(), std::size_t{0});
  for (std::size_t n = 0; n < spec.way; ++n) {
    const std::size_t j = n + rng.uniform_index(class_order.size() - n);
    std::swap(class_order[n], class_order[j]);
  }

  Episode ep;
  ep.spec = spec;
  ep.class_ids.reserve(spec.way);
  ep.support.reserve(spec.way * spec.shot);
  ep.query.reserve(spec.total_queries());
  for (std::size_t n = 0; n < spec.way; ++n) {
    const std::size_t pos = class_order[n];
    const auto& cls = ds.classes()[pos];
    const std::size_t need = spec.shot + spec.query_counts[n];
    if (cls.features.size() < need) {
      throw SamplingError("class " + std::to_string(cls.class_id) + " has " + std::to_string(cls.features.size()) +
                          " samples, episode needs " + std::to_string(need));
    }
    ep.class_ids.push_back(cls.class_id);
    std::vector<std::size_t> idx(cls.features.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < need; ++i) {
      const std::size_t j = i + rng.uniform_index(idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    for (std::size_t i = 0; i < need; ++i) {
      Shot shot{cls.features[idx[i]], n, {pos, idx[i]}};
      (i < spec.shot ? ep.support : ep.query).push_back(std::move(shot));
    }
  }

  if (spec.preprocess != Preprocess::none) {
    std::vector<Vec64> all;
    all.reserve(ep.support.size() + ep.query.size());
    for (const auto& s : ep.support) all.push_back(s.feature);
    for (const auto& q : ep.query) all.push_back(q.feature);
    all = preprocess(std::move(all), spec.preprocess);
    std::size_t i = 0;
    for (auto& s : ep.support) s.feature = std::move(all[i++]);
    for (auto& q : ep.query) q.feature = std::move(all[i++]);
  }
  return ep;
}

}  // namespace tpvae
