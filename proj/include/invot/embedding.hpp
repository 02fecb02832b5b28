#pragma once

#include "invot/core.hpp"
#include "invot/invariant_ot.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace invot {

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  /// Columns of `vectors` follow `tokens`; throws on duplicates or non-finite entries.
  EmbeddingTable(std::vector<std::string> tokens, Matrix vectors);

  const std::vector<std::string>& tokens() const { return tokens_; }
  const Matrix& vectors() const { return vectors_; }
  Index dim() const { return vectors_.rows(); }
  Index vocab_size() const { return vectors_.cols(); }
  /// Column of `token`, or -1.
  Index find(const std::string& token) const;
  /// The first `count` rows.
  EmbeddingTable head(Index count) const;

  /// Rows dropped by the loader because the token had already been seen.
  std::size_t duplicates_skipped = 0;

 private:
  std::vector<std::string> tokens_;
  Matrix vectors_;
  std::unordered_map<std::string, Index> index_;
};

/// Text format: header "V d", then lines "token f1 ... fd". Reads at most
/// max_vocab distinct tokens in file order.
EmbeddingTable load_embeddings(const std::string& path, Index max_vocab);
EmbeddingTable read_embeddings(std::istream& in, Index max_vocab, const std::string& name = "<stream>");
void write_embeddings(std::ostream& out, const EmbeddingTable& table);

/// Divides every column by its l2 norm; zero columns are rejected by token.
EmbeddingTable unit_normalize(const EmbeddingTable& table);

struct BilingualDictionary {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::map<std::string, std::set<std::string>> index;

  void add(const std::string& src, const std::string& tgt);
  /// token -> token for every token present in both lists, in `src` order.
  static BilingualDictionary identity(const std::vector<std::string>& src,
                                      const std::vector<std::string>& tgt);
};

/// One "src tgt" pair per line; repeated source tokens accumulate targets.
BilingualDictionary load_dictionary(const std::string& path);
BilingualDictionary read_dictionary(std::istream& in, const std::string& name = "<stream>");

struct TwoStageConfig {
  Index stage1_size = 5000;
  SolverConfig base{InvarianceBall(NormOrder::infinity(), 1)};
  int stage2_max_iters = 50;
  Index stage2_vocab = 20000;

  /// Requires stage1_size <= stage2_vocab <= vocab.
  void validate(Index vocab) const;
};

struct TwoStageResult {
  AlignmentResult stage1;
  AlignmentResult stage2;
};

/// Stage 1 anneals on the top stage1_size words of each table; stage 2 starts
/// from its map on the top stage2_vocab words with lambda held at lambda_min.
/// The maps send target vectors into the source space.
TwoStageResult align_embeddings(const EmbeddingTable& src, const EmbeddingTable& tgt,
                                const TwoStageConfig& cfg, const SolveOptions& stage1_options = {},
                                const SolveOptions& stage2_options = {});

/// Ranked key indices per query under
/// 2 cos(x, y) - r_keys(x) - r_queries(y), with r the mean cosine to the K
/// nearest neighbours on the other side. Columns must be unit-norm.
std::vector<std::vector<Index>> csls_neighbors(const Matrix& queries, const Matrix& keys, Index k,
                                               Index topk);

/// Plain cosine ranking, for comparison with CSLS.
std::vector<std::vector<Index>> cosine_neighbors(const Matrix& queries, const Matrix& keys,
                                                 Index topk);

struct PrecisionReport {
  std::map<Index, double> precision;  // k -> P@k
  Index evaluated = 0;
  Index skipped = 0;  // dictionary source tokens without a query
};

/// retrieved[i] ranks target indices for the query token query_tokens[i].
PrecisionReport evaluate_precision(const std::vector<std::vector<Index>>& retrieved,
                                   const BilingualDictionary& dict,
                                   const std::vector<std::string>& query_tokens,
                                   const std::vector<std::string>& tgt_tokens,
                                   const std::vector<Index>& ks);

/// Translates every dictionary source word found in `src` by CSLS against the
/// mapped target table and scores the result. Tokens whose target side is
/// missing from `tgt` still count as evaluated (and wrong).
PrecisionReport translate_and_evaluate(const EmbeddingTable& src, const EmbeddingTable& tgt,
                                       const Matrix& map, const BilingualDictionary& dict,
                                       Index csls_k, const std::vector<Index>& ks);

/// Header line "INVOTMAP 1 d=<d> dtype=float64 order=col-major endian=little"
/// followed by d*d raw doubles.
void write_map(std::ostream& out, const Matrix& map);
Matrix read_map(std::istream& in);

/// Unit-norm vocabulary with sparse, skewed, anisotropic coordinates:
/// x_i ~ (Gamma(0.3, 1) - 0.3) / sqrt(0.3 (i + 1)), then normalized.
/// Tokens are "w<index>", zero-padded.
EmbeddingTable synthetic_vocabulary(Index vocab, Index dim, std::uint64_t seed);

/// Same tokens, every vector multiplied by `rotation`.
EmbeddingTable transform_table(const EmbeddingTable& table, const Matrix& rotation);

}  // namespace invot
