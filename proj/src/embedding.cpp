#include "invot/embedding.hpp"

#include "invot/procrustes.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace invot {

namespace {

constexpr Index kCslsBlock = 1024;

ParseError parse_error(const std::string& name, std::size_t line, const std::string& what) {
  return ParseError(name + ":" + std::to_string(line) + ": " + what);
}

bool valid_utf8(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong forms, surrogates and out-of-range code points.
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      return false;
    }
    i += extra + 1;
  }
  return true;
}

// Splits on ASCII whitespace.
std::vector<std::string_view> fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <class T>
bool parse_number(std::string_view text, T& value) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  return ec == std::errc() && ptr == end;
}

void require_unit(const Matrix& m, const char* what) {
  for (Index j = 0; j < m.cols(); ++j) {
    if (std::abs(m.col(j).norm() - 1.0) > 1e-6) {
      throw InvalidInput(std::string(what) + " column " + std::to_string(j) + " is not unit-norm");
    }
  }
}

// Mean of the k largest entries in each row of `scores`.
Vector mean_top_k(const Matrix& scores, Index k) {
  Vector out(scores.rows());
  std::vector<double> row(static_cast<std::size_t>(scores.cols()));
  for (Index i = 0; i < scores.rows(); ++i) {
    for (Index j = 0; j < scores.cols(); ++j) row[static_cast<std::size_t>(j)] = scores(i, j);
    std::nth_element(row.begin(), row.begin() + (k - 1), row.end(), std::greater<>());
    out(i) = std::accumulate(row.begin(), row.begin() + k, 0.0) / static_cast<double>(k);
  }
  return out;
}

// Per-column mean of the k largest entries, accumulated over row blocks.
Vector column_mean_top_k(const Matrix& a, const Matrix& b, Index k) {
  // scores = a^T b; we need, for each column of b, its top-k over a's columns.
  const Index nb = b.cols();
  std::vector<std::vector<double>> best(static_cast<std::size_t>(nb));
  for (Index start = 0; start < a.cols(); start += kCslsBlock) {
    const Index len = std::min(kCslsBlock, a.cols() - start);
    const Matrix block = a.middleCols(start, len).transpose() * b;
    for (Index j = 0; j < nb; ++j) {
      auto& heap = best[static_cast<std::size_t>(j)];
      for (Index i = 0; i < len; ++i) {
        const double v = block(i, j);
        if (static_cast<Index>(heap.size()) < k) {
          heap.push_back(v);
          std::push_heap(heap.begin(), heap.end(), std::greater<>());
        } else if (v > heap.front()) {
          std::pop_heap(heap.begin(), heap.end(), std::greater<>());
          heap.back() = v;
          std::push_heap(heap.begin(), heap.end(), std::greater<>());
        }
      }
    }
  }
  Vector out(nb);
  for (Index j = 0; j < nb; ++j) {
    const auto& heap = best[static_cast<std::size_t>(j)];
    out(j) = std::accumulate(heap.begin(), heap.end(), 0.0) / static_cast<double>(heap.size());
  }
  return out;
}

std::vector<Index> top_indices(const Eigen::Ref<const Vector>& scores, Index topk) {
  std::vector<Index> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  const Index take = std::min(topk, scores.size());
  std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), [&](Index a, Index b) {
    return scores(a) > scores(b) || (scores(a) == scores(b) && a < b);
  });
  idx.resize(static_cast<std::size_t>(take));
  return idx;
}

Matrix normalized_columns(Matrix m) {
  for (Index j = 0; j < m.cols(); ++j) {
    const double norm = m.col(j).norm();
    if (!(norm > 0.0)) throw InvalidInput("mapped vector " + std::to_string(j) + " is zero");
    m.col(j) /= norm;
  }
  return m;
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::vector<std::string> tokens, Matrix vectors)
    : tokens_(std::move(tokens)), vectors_(std::move(vectors)) {
  if (static_cast<Index>(tokens_.size()) != vectors_.cols()) {
    throw InvalidInput("embedding table has " + std::to_string(tokens_.size()) + " tokens but " +
                       std::to_string(vectors_.cols()) + " vectors");
  }
  require_finite(vectors_, "embedding vectors");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<Index>(i)).second) {
      throw InvalidInput("duplicate token '" + tokens_[i] + "'");
    }
  }
}

Index EmbeddingTable::find(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

EmbeddingTable EmbeddingTable::head(Index count) const {
  if (count < 0 || count > vocab_size()) {
    throw InvalidInput("cannot take " + std::to_string(count) + " rows of a table with " +
                       std::to_string(vocab_size()));
  }
  return EmbeddingTable(std::vector<std::string>(tokens_.begin(), tokens_.begin() + count),
                        vectors_.leftCols(count));
}

EmbeddingTable load_embeddings(const std::string& path, Index max_vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open embedding file " + path);
  return read_embeddings(in, max_vocab, path);
}

EmbeddingTable read_embeddings(std::istream& in, Index max_vocab, const std::string& name) {
  if (max_vocab < 1) throw InvalidInput("max_vocab must be >= 1");
  std::string line;
  if (!std::getline(in, line)) throw parse_error(name, 1, "missing header");
  const auto header = fields(line);
  long long v = 0, d = 0;
  if (header.size() != 2 || !parse_number(header[0], v) || !parse_number(header[1], d) || v < 0 ||
      d < 1) {
    throw parse_error(name, 1, "header must be \"V d\" with V >= 0 and d >= 1");
  }

  const Index want = std::min<Index>(max_vocab, v);
  std::vector<std::string> tokens;
  std::unordered_map<std::string, Index> seen;
  Matrix vectors(d, want);
  std::size_t duplicates = 0;
  std::size_t line_no = 1;
  for (long long row = 0; row < v && static_cast<Index>(tokens.size()) < want; ++row) {
    ++line_no;
    if (!std::getline(in, line)) {
      throw parse_error(name, line_no, "expected " + std::to_string(v) + " rows, file ended after " +
                                           std::to_string(row));
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto parts = fields(line);
    if (parts.empty()) throw parse_error(name, line_no, "empty row");
    if (static_cast<long long>(parts.size()) != d + 1) {
      throw parse_error(name, line_no, "expected " + std::to_string(d) + " values, found " +
                                           std::to_string(parts.size() - 1));
    }
    std::string token(parts[0]);
    if (!valid_utf8(token)) throw parse_error(name, line_no, "token is not valid UTF-8");
    if (seen.count(token)) {
      ++duplicates;
      continue;
    }
    const Index col = static_cast<Index>(tokens.size());
    for (long long k = 0; k < d; ++k) {
      double value = 0.0;
      if (!parse_number(parts[static_cast<std::size_t>(k + 1)], value) || !std::isfinite(value)) {
        throw parse_error(name, line_no,
                          "bad value '" + std::string(parts[static_cast<std::size_t>(k + 1)]) + "'");
      }
      vectors(k, col) = value;
    }
    seen.emplace(token, col);
    tokens.push_back(std::move(token));
  }
  vectors.conservativeResize(d, static_cast<Index>(tokens.size()));
  EmbeddingTable table(std::move(tokens), std::move(vectors));
  table.duplicates_skipped = duplicates;
  return table;
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
  out << table.vocab_size() << ' ' << table.dim() << '\n';
  char buf[32];
  for (Index j = 0; j < table.vocab_size(); ++j) {
    out << table.tokens()[static_cast<std::size_t>(j)];
    for (Index i = 0; i < table.dim(); ++i) {
      const auto res = std::to_chars(buf, buf + sizeof buf, table.vectors()(i, j));
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

EmbeddingTable unit_normalize(const EmbeddingTable& table) {
  Matrix v = table.vectors();
  for (Index j = 0; j < v.cols(); ++j) {
    const double norm = v.col(j).norm();
    if (!(norm > 0.0)) {
      throw InvalidInput("token '" + table.tokens()[static_cast<std::size_t>(j)] + "' has a zero vector");
    }
    v.col(j) /= norm;
  }
  EmbeddingTable out(table.tokens(), std::move(v));
  out.duplicates_skipped = table.duplicates_skipped;
  return out;
}

void BilingualDictionary::add(const std::string& src, const std::string& tgt) {
  if (index[src].insert(tgt).second) pairs.emplace_back(src, tgt);
}

BilingualDictionary BilingualDictionary::identity(const std::vector<std::string>& src,
                                                  const std::vector<std::string>& tgt) {
  const std::set<std::string> targets(tgt.begin(), tgt.end());
  BilingualDictionary dict;
  for (const auto& token : src) {
    if (targets.count(token)) dict.add(token, token);
  }
  return dict;
}

BilingualDictionary load_dictionary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open dictionary file " + path);
  return read_dictionary(in, path);
}

BilingualDictionary read_dictionary(std::istream& in, const std::string& name) {
  BilingualDictionary dict;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto parts = fields(line);
    if (parts.empty()) continue;
    if (parts.size() != 2) throw parse_error(name, line_no, "expected \"src tgt\"");
    const std::string src(parts[0]), tgt(parts[1]);
    if (!valid_utf8(src) || !valid_utf8(tgt)) throw parse_error(name, line_no, "not valid UTF-8");
    dict.add(src, tgt);
  }
  return dict;
}

void TwoStageConfig::validate(Index vocab) const {
  if (stage1_size < 2) throw InvalidInput("stage1_size must be >= 2");
  if (stage1_size > stage2_vocab) {
    throw InvalidInput("stage1_size " + std::to_string(stage1_size) + " exceeds stage2_vocab " +
                       std::to_string(stage2_vocab));
  }
  if (stage2_vocab > vocab) {
    throw InvalidInput("stage2_vocab " + std::to_string(stage2_vocab) + " exceeds vocabulary size " +
                       std::to_string(vocab));
  }
  if (stage2_max_iters < 1) throw InvalidInput("stage2_max_iters must be >= 1");
  base.validate();
}

TwoStageResult align_embeddings(const EmbeddingTable& src, const EmbeddingTable& tgt,
                                const TwoStageConfig& cfg, const SolveOptions& stage1_options,
                                const SolveOptions& stage2_options) {
  if (src.dim() != tgt.dim()) {
    throw InvalidInput("source embeddings have d=" + std::to_string(src.dim()) + ", target d=" +
                       std::to_string(tgt.dim()));
  }
  cfg.validate(std::min(src.vocab_size(), tgt.vocab_size()));

  const auto points = [](const EmbeddingTable& t, Index count) {
    return PointSet(t.vectors().leftCols(count));
  };

  AlignmentResult first =
      solve(points(src, cfg.stage1_size), points(tgt, cfg.stage1_size), cfg.base, stage1_options);

  SolverConfig second = cfg.base;
  second.lambda0 = cfg.base.lambda_min;
  second.outer_max_iters = cfg.stage2_max_iters;
  SolveOptions options = stage2_options;
  options.initial_map = first.map.matrix();
  AlignmentResult full =
      solve(points(src, cfg.stage2_vocab), points(tgt, cfg.stage2_vocab), second, options);
  return TwoStageResult{std::move(first), std::move(full)};
}

std::vector<std::vector<Index>> csls_neighbors(const Matrix& queries, const Matrix& keys, Index k,
                                               Index topk) {
  if (queries.rows() != keys.rows()) throw InvalidInput("queries and keys differ in dimension");
  if (k < 1) throw InvalidInput("CSLS neighbourhood size must be >= 1");
  if (k > keys.cols()) {
    throw InvalidInput("CSLS neighbourhood " + std::to_string(k) + " exceeds " +
                       std::to_string(keys.cols()) + " keys");
  }
  if (k > queries.cols()) {
    throw InvalidInput("CSLS neighbourhood " + std::to_string(k) + " exceeds " +
                       std::to_string(queries.cols()) + " queries");
  }
  if (topk < 1) throw InvalidInput("topk must be >= 1");
  require_unit(queries, "query");
  require_unit(keys, "key");

  const Vector r_queries = column_mean_top_k(queries, keys, k);  // per key
  std::vector<std::vector<Index>> out;
  out.reserve(static_cast<std::size_t>(queries.cols()));
  for (Index start = 0; start < queries.cols(); start += kCslsBlock) {
    const Index len = std::min(kCslsBlock, queries.cols() - start);
    const Matrix cos = queries.middleCols(start, len).transpose() * keys;
    const Vector r_keys = mean_top_k(cos, k);  // per query
    for (Index i = 0; i < len; ++i) {
      const Vector score = 2.0 * cos.row(i).transpose() - r_queries - Vector::Constant(keys.cols(), r_keys(i));
      out.push_back(top_indices(score, topk));
    }
  }
  return out;
}

std::vector<std::vector<Index>> cosine_neighbors(const Matrix& queries, const Matrix& keys,
                                                 Index topk) {
  if (queries.rows() != keys.rows()) throw InvalidInput("queries and keys differ in dimension");
  if (topk < 1) throw InvalidInput("topk must be >= 1");
  std::vector<std::vector<Index>> out;
  out.reserve(static_cast<std::size_t>(queries.cols()));
  for (Index start = 0; start < queries.cols(); start += kCslsBlock) {
    const Index len = std::min(kCslsBlock, queries.cols() - start);
    const Matrix cos = queries.middleCols(start, len).transpose() * keys;
    for (Index i = 0; i < len; ++i) out.push_back(top_indices(cos.row(i).transpose(), topk));
  }
  return out;
}

PrecisionReport evaluate_precision(const std::vector<std::vector<Index>>& retrieved,
                                   const BilingualDictionary& dict,
                                   const std::vector<std::string>& query_tokens,
                                   const std::vector<std::string>& tgt_tokens,
                                   const std::vector<Index>& ks) {
  if (retrieved.size() != query_tokens.size()) {
    throw InvalidInput("one ranked list per query token is required");
  }
  if (ks.empty()) throw InvalidInput("at least one k is required");
  for (Index k : ks) {
    if (k < 1) throw InvalidInput("precision@k needs k >= 1");
  }
  std::unordered_map<std::string, std::size_t> query_of;
  for (std::size_t i = 0; i < query_tokens.size(); ++i) query_of.emplace(query_tokens[i], i);

  PrecisionReport report;
  std::map<Index, Index> hits;
  for (Index k : ks) hits[k] = 0;
  for (const auto& [src, accepted] : dict.index) {
    const auto it = query_of.find(src);
    if (it == query_of.end()) {
      ++report.skipped;
      continue;
    }
    ++report.evaluated;
    const auto& ranked = retrieved[it->second];
    for (auto& [k, count] : hits) {
      const std::size_t depth = std::min(ranked.size(), static_cast<std::size_t>(k));
      for (std::size_t r = 0; r < depth; ++r) {
        const auto idx = static_cast<std::size_t>(ranked[r]);
        if (idx < tgt_tokens.size() && accepted.count(tgt_tokens[idx])) {
          ++count;
          break;
        }
      }
    }
  }
  for (const auto& [k, count] : hits) {
    report.precision[k] =
        report.evaluated ? static_cast<double>(count) / static_cast<double>(report.evaluated) : 0.0;
  }
  return report;
}

PrecisionReport translate_and_evaluate(const EmbeddingTable& src, const EmbeddingTable& tgt,
                                       const Matrix& map, const BilingualDictionary& dict,
                                       Index csls_k, const std::vector<Index>& ks) {
  if (map.rows() != src.dim() || map.cols() != tgt.dim()) {
    throw InvalidInput("map shape does not match the embedding dimensions");
  }
  std::vector<std::string> query_tokens;
  std::vector<Index> columns;
  for (const auto& [token, accepted] : dict.index) {
    const Index col = src.find(token);
    if (col >= 0) {
      query_tokens.push_back(token);
      columns.push_back(col);
    }
  }
  Matrix queries(src.dim(), static_cast<Index>(columns.size()));
  for (std::size_t i = 0; i < columns.size(); ++i) {
    queries.col(static_cast<Index>(i)) = src.vectors().col(columns[i]);
  }
  const Index topk = *std::max_element(ks.begin(), ks.end());
  std::vector<std::vector<Index>> retrieved;
  if (!columns.empty()) {
    const Matrix keys = normalized_columns(map * tgt.vectors());
    retrieved = csls_neighbors(normalized_columns(queries), keys, csls_k, topk);
  }
  return evaluate_precision(retrieved, dict, query_tokens, tgt.tokens(), ks);
}

void write_map(std::ostream& out, const Matrix& map) {
  if (map.rows() != map.cols()) throw InvalidInput("map must be square");
  std::uint16_t probe = 1;
  unsigned char first = 0;
  std::memcpy(&first, &probe, 1);
  out << "INVOTMAP 1 d=" << map.rows() << " dtype=float64 order=col-major endian="
      << (first == 1 ? "little" : "big") << '\n';
  out.write(reinterpret_cast<const char*>(map.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(map.size())));
}

Matrix read_map(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw ParseError("map dump: missing header");
  std::istringstream hs(header);
  std::string magic, version, dfield, dtype, order, endian;
  hs >> magic >> version >> dfield >> dtype >> order >> endian;
  if (magic != "INVOTMAP" || version != "1" || dfield.rfind("d=", 0) != 0 ||
      dtype != "dtype=float64" || order != "order=col-major") {
    throw ParseError("map dump: unrecognized header '" + header + "'");
  }
  long long d = 0;
  if (!parse_number(std::string_view(dfield).substr(2), d) || d < 1) {
    throw ParseError("map dump: bad dimension in '" + header + "'");
  }
  std::uint16_t probe = 1;
  unsigned char first = 0;
  std::memcpy(&first, &probe, 1);
  const std::string native = first == 1 ? "endian=little" : "endian=big";
  if (endian != "endian=little" && endian != "endian=big") {
    throw ParseError("map dump: bad byte order in '" + header + "'");
  }
  Matrix m(d, d);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size()))) {
    throw ParseError("map dump: truncated payload");
  }
  if (endian != native) {
    auto* bytes = reinterpret_cast<unsigned char*>(m.data());
    for (Index i = 0; i < m.size(); ++i) std::reverse(bytes + 8 * i, bytes + 8 * i + 8);
  }
  return m;
}

EmbeddingTable synthetic_vocabulary(Index vocab, Index dim, std::uint64_t seed) {
  if (vocab < 1 || dim < 1) throw InvalidInput("vocabulary size and dimension must be >= 1");
  std::mt19937_64 rng(seed);
  constexpr double shape = 0.3;
  std::gamma_distribution<double> gamma(shape, 1.0);
  Matrix v(dim, vocab);
  std::vector<std::string> tokens;
  tokens.reserve(static_cast<std::size_t>(vocab));
  const int width = static_cast<int>(std::to_string(vocab - 1).size());
  for (Index j = 0; j < vocab; ++j) {
    for (Index i = 0; i < dim; ++i) v(i, j) = (gamma(rng) - shape) / std::sqrt(shape * static_cast<double>(i + 1));
    const double norm = v.col(j).norm();
    if (norm > 0.0) v.col(j) /= norm;
    std::string id = std::to_string(j);
    tokens.push_back("w" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id);
  }
  return EmbeddingTable(std::move(tokens), std::move(v));
}

EmbeddingTable transform_table(const EmbeddingTable& table, const Matrix& rotation) {
  if (rotation.cols() != table.dim()) throw InvalidInput("transform does not match table dimension");
  return EmbeddingTable(table.tokens(), rotation * table.vectors());
}

}  // namespace invot
