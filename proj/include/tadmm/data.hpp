#pragma once

// Synthetic problem generators, heterogeneity injection, row/column
// partitioning and the two dataset file formats.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tadmm/error.hpp"
#include "tadmm/linalg.hpp"
#include "tadmm/rng.hpp"

namespace tadmm {

enum class RecipeKind { lasso, classification };

struct SyntheticRecipe {
  RecipeKind kind = RecipeKind::lasso;
  std::size_t m = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t sparsity = 10;  // active features (lasso)
  double noise_sigma = 1.0;   // lasso observation noise
  bool heterogeneous = false;
};

struct LassoData {
  DenseMatrix matrix;
  Vector targets;
  Vector x_true;
  double mu = 0.0;
};

struct ClassificationData {
  DenseMatrix matrix;
  Vector labels;
};

/// ||D^T b||_inf: the smallest l1 weight at which the lasso solution is zero.
inline double lasso_lambda_max(const DenseMatrix& d, std::span<const double> b) {
  return norm_inf(matvec(d, b, true));
}

/// The same threshold for l1-regularized logistic regression:
/// 1/2 ||D^T l||_inf, the gradient of the loss at x = 0.
inline double logistic_lambda_max(const DenseMatrix& d, std::span<const double> labels) {
  return 0.5 * norm_inf(matvec(d, labels, true));
}

inline constexpr double kPenaltyFraction = 0.1;

namespace detail {

inline void check_recipe(const SyntheticRecipe& r) {
  require(r.m >= 1 && r.n >= 1, "recipe: m and n must be >= 1");
}

inline DenseMatrix gaussian_matrix(std::size_t m, std::size_t n, std::uint64_t seed) {
  const CounterRng rng(seed, Stream::matrix);
  DenseMatrix d(m, n);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) d(r, c) = rng.normal(r * n + c);
  return d;
}

}  // namespace detail

/// Gaussian D, a sparse x_true with `sparsity` entries of magnitude one and
/// random sign, b = D x_true + sigma * eta, and mu at 10% of lambda_max.
inline LassoData gen_lasso(const SyntheticRecipe& recipe) {
  detail::check_recipe(recipe);
  detail::require(recipe.kind == RecipeKind::lasso, "gen_lasso: recipe kind is not lasso");
  if (recipe.sparsity > recipe.n)
    throw Error("gen_lasso: sparsity " + std::to_string(recipe.sparsity) + " exceeds n = " +
                std::to_string(recipe.n));
  const std::size_t m = recipe.m, n = recipe.n;
  LassoData out;
  out.matrix = detail::gaussian_matrix(m, n, recipe.seed);

  const CounterRng support(recipe.seed, Stream::support);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  out.x_true.assign(n, 0.0);
  for (std::size_t i = 0; i < recipe.sparsity; ++i) {
    const std::size_t j = i + support.below(i, n - i);
    std::swap(perm[i], perm[j]);
    out.x_true[perm[i]] = support.uniform(n + i) < 0.5 ? -1.0 : 1.0;
  }

  const CounterRng noise(recipe.seed, Stream::noise);
  out.targets = matvec(out.matrix, out.x_true);
  for (std::size_t r = 0; r < m; ++r) out.targets[r] += recipe.noise_sigma * noise.normal(r);
  out.mu = kPenaltyFraction * lasso_lambda_max(out.matrix, out.targets);
  return out;
}

/// Two Gaussian classes. Class -1 is standard normal; class +1 has mean one
/// in its first five columns. Class -1 gets floor(m/2) rows, then the rows
/// are shuffled with the seeded shuffle stream.
inline ClassificationData gen_classification(const SyntheticRecipe& recipe) {
  detail::check_recipe(recipe);
  detail::require(recipe.kind == RecipeKind::classification,
                  "gen_classification: recipe kind is not classification");
  detail::require(recipe.n >= 5, "gen_classification: n must be >= 5");
  const std::size_t m = recipe.m, n = recipe.n;
  const std::size_t negatives = m / 2;

  DenseMatrix base = detail::gaussian_matrix(m, n, recipe.seed);
  Vector labels(m);
  for (std::size_t r = 0; r < m; ++r) {
    labels[r] = r < negatives ? -1.0 : 1.0;
    if (labels[r] > 0.0)
      for (std::size_t c = 0; c < 5; ++c) base(r, c) += 1.0;
  }

  const CounterRng shuffle(recipe.seed, Stream::shuffle);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = m; i-- > 1;) std::swap(order[i], order[shuffle.below(i, i + 1)]);

  ClassificationData out{DenseMatrix(m, n), Vector(m)};
  for (std::size_t r = 0; r < m; ++r) {
    const auto src = base.row(order[r]);
    std::copy(src.begin(), src.end(), out.matrix.row(r).begin());
    out.labels[r] = labels[order[r]];
  }
  return out;
}

/// Per-shard offsets c_i ~ N(0, 1) from the heterogeneity stream.
inline Vector heterogeneity_offsets(std::size_t shards, std::uint64_t seed) {
  const CounterRng rng(seed, Stream::heterogeneity);
  Vector c(shards);
  for (std::size_t i = 0; i < shards; ++i) c[i] = rng.normal(i);
  return c;
}

/// Adds offsets[i] to every entry of shard i.
inline void heterogenize(std::span<DenseMatrix> shards, std::span<const double> offsets) {
  detail::require(!shards.empty(), "heterogenize: no shards");
  detail::require_dims(offsets.size() == shards.size(), "heterogenize: one offset per shard");
  for (std::size_t i = 0; i < shards.size(); ++i)
    for (double& v : shards[i].values()) v += offsets[i];
}

inline void heterogenize(std::span<DenseMatrix> shards, std::uint64_t seed) {
  const Vector c = heterogeneity_offsets(shards.size(), seed);
  heterogenize(shards, c);
}

/// Contiguous balanced block sizes; the first total % parts blocks get one extra.
inline std::vector<std::size_t> block_sizes(std::size_t total, std::size_t parts) {
  detail::require(parts >= 1, "partition: need at least one part");
  if (parts > total)
    throw Error("partition: " + std::to_string(parts) + " parts exceed dimension " +
                std::to_string(total));
  std::vector<std::size_t> sizes(parts, total / parts);
  for (std::size_t i = 0; i < total % parts; ++i) ++sizes[i];
  return sizes;
}

struct RowShard {
  DenseMatrix matrix;
  Vector targets;
};

inline std::vector<RowShard> partition_rows(const DenseMatrix& d, std::span<const double> targets,
                                            std::size_t parts) {
  detail::require_dims(targets.empty() || targets.size() == d.rows(),
                       "partition_rows: target length mismatch");
  std::vector<RowShard> out;
  std::size_t begin = 0;
  for (std::size_t size : block_sizes(d.rows(), parts)) {
    RowShard s{d.row_block(begin, size), {}};
    if (!targets.empty())
      s.targets.assign(targets.begin() + static_cast<std::ptrdiff_t>(begin),
                       targets.begin() + static_cast<std::ptrdiff_t>(begin + size));
    out.push_back(std::move(s));
    begin += size;
  }
  return out;
}

inline std::vector<DenseMatrix> partition_cols(const DenseMatrix& d, std::size_t parts) {
  std::vector<DenseMatrix> out;
  std::size_t begin = 0;
  for (std::size_t size : block_sizes(d.cols(), parts)) {
    out.push_back(d.col_block(begin, size));
    begin += size;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset files
//
// Binary (little-endian): "TADM", u32 version, u64 m, u64 n, u8 target kind,
// m*n row-major f64, then m f64 targets unless the kind is none.
// Text: header line "m n kind" (kind in none|real|labels), then one row per
// line with the target as the last field. Lines starting with '#' are skipped.

enum class TargetKind : std::uint8_t { none = 0, real = 1, labels = 2 };
enum class FileFormat { binary, text };

struct Dataset {
  DenseMatrix matrix;
  Vector targets;
  TargetKind kind = TargetKind::none;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

inline const char* to_string(TargetKind k) {
  switch (k) {
    case TargetKind::none: return "none";
    case TargetKind::real: return "real";
    case TargetKind::labels: return "labels";
  }
  return "none";
}

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "dataset binary format assumes a little-endian host");

template <class T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <class T>
T take(const std::string& buf, std::size_t& pos, const char* what) {
  if (pos + sizeof(T) > buf.size())
    throw ParseError(std::string("truncated dataset while reading ") + what, 0, pos);
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

inline void write_atomically(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline TargetKind parse_kind(const std::string& s, std::size_t line) {
  if (s == "none") return TargetKind::none;
  if (s == "real") return TargetKind::real;
  if (s == "labels") return TargetKind::labels;
  throw ParseError("unknown target kind '" + s + "'", line, 0);
}

inline Dataset load_binary(const std::string& buf) {
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(buf, pos, "version");
  if (version != kDatasetVersion)
    throw ParseError("unsupported dataset version " + std::to_string(version), 0, 4);
  const auto m = take<std::uint64_t>(buf, pos, "row count");
  const auto n = take<std::uint64_t>(buf, pos, "column count");
  const auto kind_byte = take<std::uint8_t>(buf, pos, "target kind");
  if (kind_byte > 2) throw ParseError("unknown target kind byte", 0, pos - 1);
  const auto kind = static_cast<TargetKind>(kind_byte);
  const std::uint64_t need = m * n + (kind == TargetKind::none ? 0 : m);
  if (n != 0 && m > (buf.size() / 8) / n)
    throw ParseError("truncated dataset: header promises more data than present", 0, pos);
  if (buf.size() - pos != need * 8)
    throw ParseError("dataset payload is " + std::to_string(buf.size() - pos) + " bytes, expected " +
                         std::to_string(need * 8),
                     0, pos);
  Vector vals(m * n);
  for (auto& v : vals) v = take<double>(buf, pos, "matrix entry");
  Dataset ds;
  ds.kind = kind;
  ds.matrix = DenseMatrix(m, n, std::move(vals));
  if (kind != TargetKind::none) {
    ds.targets.resize(m);
    for (auto& v : ds.targets) v = take<double>(buf, pos, "target");
  }
  return ds;
}

inline Dataset load_text(const std::string& buf) {
  std::istringstream in(buf);
  std::string line;
  std::size_t lineno = 0;
  std::size_t m = 0, n = 0;
  TargetKind kind = TargetKind::none;
  bool header = false;
  Vector vals, targets;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    if (!header) {
      std::string kind_s;
      if (!(ls >> m >> n >> kind_s)) throw ParseError("malformed header, expected 'm n kind'", lineno, 0);
      kind = parse_kind(kind_s, lineno);
      header = true;
      vals.reserve(m * n);
      continue;
    }
    if (row >= m) throw ParseError("more rows than the header declares", lineno, 0);
    const std::size_t expect = n + (kind == TargetKind::none ? 0 : 1);
    std::size_t count = 0;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size())
        throw ParseError("invalid number '" + tok + "'", lineno,
                         ls.tellg() == -1 ? line.size() : static_cast<std::size_t>(ls.tellg()));
      if (count < n)
        vals.push_back(v);
      else if (count == n && kind != TargetKind::none)
        targets.push_back(v);
      ++count;
    }
    if (count != expect)
      throw ParseError("row has " + std::to_string(count) + " fields, expected " +
                           std::to_string(expect),
                       lineno, 0);
    ++row;
  }
  if (!header) throw ParseError("missing header", lineno, 0);
  if (row != m)
    throw ParseError("file has " + std::to_string(row) + " rows, header declares " +
                         std::to_string(m),
                     lineno, 0);
  Dataset ds;
  ds.kind = kind;
  ds.matrix = DenseMatrix(m, n, std::move(vals));
  ds.targets = std::move(targets);
  return ds;
}

}  // namespace detail

inline void save_dataset(const std::filesystem::path& path, const DenseMatrix& d,
                         std::span<const double> targets, TargetKind kind, FileFormat format) {
  detail::require_dims(kind == TargetKind::none ? targets.empty() : targets.size() == d.rows(),
                       "save_dataset: target length does not match rows");
  std::string buf;
  if (format == FileFormat::binary) {
    buf.append("TADM");
    detail::put<std::uint32_t>(buf, kDatasetVersion);
    detail::put<std::uint64_t>(buf, d.rows());
    detail::put<std::uint64_t>(buf, d.cols());
    detail::put<std::uint8_t>(buf, static_cast<std::uint8_t>(kind));
    for (double v : d.values()) detail::put<double>(buf, v);
    for (double v : targets) detail::put<double>(buf, v);
  } else {
    char num[40];
    buf += std::to_string(d.rows()) + " " + std::to_string(d.cols()) + " " + to_string(kind) + "\n";
    for (std::size_t r = 0; r < d.rows(); ++r) {
      const auto row = d.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        std::snprintf(num, sizeof num, "%.17g", row[c]);
        if (c) buf += ' ';
        buf += num;
      }
      if (kind != TargetKind::none) {
        std::snprintf(num, sizeof num, "%.17g", targets[r]);
        buf += ' ';
        buf += num;
      }
      buf += '\n';
    }
  }
  detail::write_atomically(path, buf);
}

/// Reads either format; binary files are recognized by their magic bytes.
inline Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() >= 4 && buf.compare(0, 4, "TADM") == 0) return detail::load_binary(buf);
  return detail::load_text(buf);
}

}  // namespace tadmm
