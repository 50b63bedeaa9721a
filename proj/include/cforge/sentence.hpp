#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cforge/article_mapper.hpp"
#include "cforge/layout.hpp"

namespace cforge {

struct Sentence {
  std::string text;
  /// Position within its ROI stream (headline, content or caption) of the article.
  int index = 0;
  std::string language;
  std::string article_id;
  std::string page_id;
  RoiKind roi_kind = RoiKind::Content;
  int word_count = 0;
  /// Byte span inside the source ROI text.
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Splits on । ॥ . ? ! followed by whitespace or end of text; delimiters stay with the
/// preceding sentence. A '.' after a single Latin letter or a known abbreviation does not split.
std::vector<Sentence> split_sentences(std::string_view text, std::string_view language);

enum class Strategy { LAS, SLAS, LO };
std::string strategy_name(Strategy s);
std::optional<Strategy> strategy_from(std::string_view name);

struct Provenance {
  Date date;
  std::string left_page;
  std::string right_page;
  std::string left_article;
  std::string right_article;
  /// Sentence counts of the two articles (all streams).
  int left_article_sentences = 0;
  int right_article_sentences = 0;
};

struct SentencePair {
  Sentence left;
  Sentence right;
  double score = 0;
  Strategy strategy = Strategy::LAS;
  Provenance provenance;
};

// ---------------------------------------------------------------- embeddings

struct EmbeddingVector {
  std::vector<double> components;
  std::string provider_id;
  int dim() const { return static_cast<int>(components.size()); }
};

/// Character-trigram feature hashing (FNV-1a 64, sign from bit 32), L2-normalized.
/// Throws ValidationError for empty text or dim < 16.
EmbeddingVector hash_embed(std::string_view text, int dim = 256);

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  /// One unit vector per text, in order. Throws StageError on provider failure.
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts, const std::string& language) = 0;
};

struct PivotLexicon {
  std::string language;
  std::map<std::string, std::vector<std::string>> entries;

  /// Pivot tokens of a normalized source token; empty when unknown.
  const std::vector<std::string>* lookup(const std::string& token) const;
};

/// TSV `source<TAB>pivot`, repeated lines add pivots. Keys and values NFC + lowercase.
PivotLexicon load_lexicon(const std::filesystem::path& file, std::string language);
PivotLexicon parse_lexicon(std::string_view tsv, std::string language);

/// In-process provider: tokens are mapped to the pivot language through the lexicon of the
/// text's language (unknown tokens pass through), then hash-embedded.
class BuiltinProvider : public EmbeddingProvider {
 public:
  explicit BuiltinProvider(int dim = 256) : dim_(dim) {}
  void add_lexicon(std::shared_ptr<const PivotLexicon> lexicon);
  std::string id() const override;
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts, const std::string& language) override;

 private:
  int dim_;
  std::map<std::string, std::shared_ptr<const PivotLexicon>> lexicons_;
};

/// Client of the embedding sidecar: POST <base>/embed {"texts","language"}.
class HttpProvider : public EmbeddingProvider {
 public:
  /// `url` like http://127.0.0.1:8080 (an optional path prefix is kept).
  explicit HttpProvider(std::string url, int batch = 256, double timeout_seconds = 30);
  std::string id() const override;
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts, const std::string& language) override;

 private:
  std::string host_;
  int port_ = 80;
  std::string prefix_;
  int batch_;
  double timeout_;
  std::string model_id_;
};

double las_score(const Sentence& a, const Sentence& b, EmbeddingProvider& provider);

/// F1 over pivot-token multisets; tokens without an entry contribute nothing.
double lo_score(const Sentence& a, const Sentence& b, const PivotLexicon& lex_a, const PivotLexicon& lex_b);

// ---------------------------------------------------------------- length-based alignment

struct SlasParams {
  /// Expected right/left length ratio; <= 0 means estimate from the two inputs.
  double ratio = 0;
  double variance = 6.8;
  double prior_11 = 0.89;
  double prior_10 = 0.0099;
  double prior_21 = 0.089;
};

struct Bead {
  int left_count = 0;
  int right_count = 0;
  std::size_t left_begin = 0;
  std::size_t right_begin = 0;
  double cost = 0;
  double posterior = 0;
};

struct SlasAlignment {
  std::vector<Bead> beads;
  double cost = 0;
};

/// -log(P(length match) * prior) for one bead; insertions and deletions cost their prior only.
double bead_cost(int left_words, int right_words, int left_count, int right_count, double ratio,
                 const SlasParams& params);

/// Minimum-cost bead path with forward-backward posteriors on each bead.
SlasAlignment slas_dp(const std::vector<int>& left_words, const std::vector<int>& right_words,
                      const SlasParams& params);

/// right words / left words over both lists (1 when either is empty).
double estimate_length_ratio(const std::vector<Sentence>& left, const std::vector<Sentence>& right);

/// 1-1, 2-1 and 1-2 beads of the best path; merged sides are concatenated.
std::vector<SentencePair> slas_align(const std::vector<Sentence>& left, const std::vector<Sentence>& right,
                                     const SlasParams& params = {});

// ---------------------------------------------------------------- article pairs

struct AlignParams {
  double las_threshold = 0.6;
  double lo_threshold = 0.5;
  double slas_threshold = 0.5;
  SlasParams slas;
  unsigned workers = 1;
};

/// Sentences of one article, stream by stream, in reading order.
std::vector<Sentence> article_sentences(const ArticleRecord& article);

/// Aligns the sentences of a mapped article pair within matching ROI streams.
/// Throws ValidationError when the strategy's provider or lexicons are missing.
std::vector<SentencePair> align_sentences(const ArticlePair& pair, Strategy strategy, const AlignParams& params,
                                          EmbeddingProvider* provider = nullptr,
                                          const PivotLexicon* left_lexicon = nullptr,
                                          const PivotLexicon* right_lexicon = nullptr);

/// Headline similarity for embedded-article mapping, LAS over the given provider.
HeadlineSimilarity las_headline_similarity(EmbeddingProvider& provider, std::string left_language,
                                           std::string right_language);

}  // namespace cforge
