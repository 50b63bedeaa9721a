#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cforge/sentence.hpp"

namespace cforge {

struct CorpusStats {
  int total = 0;
  std::map<std::string, int> by_strategy;
  /// Keyed by ROI letter (H, C, P).
  std::map<std::string, int> by_kind;
  int duplicates_dropped = 0;
};

struct BilingualCorpus {
  std::vector<SentencePair> pairs;
  std::vector<std::string> languages;
  CorpusStats stats;
};

/// NFC, whitespace squeeze and trim, exact-duplicate removal; ordered by provenance then index.
BilingualCorpus build_corpus(const std::vector<SentencePair>& pairs, std::vector<std::string> languages = {});

/// Stable pair identifier: 12 hex digits of SHA-256 over both texts.
std::string pair_id(const SentencePair& pair);

std::string provenance_json(const SentencePair& pair);
std::string corpus_to_tsv(const std::vector<SentencePair>& pairs);
std::string corpus_to_jsonl(const std::vector<SentencePair>& pairs);
std::vector<SentencePair> corpus_from_jsonl(std::string_view text);

/// Writes <stem>.tsv and <stem>.jsonl for non-caption pairs and <stem>.caption.tsv/.jsonl
/// for the held-out caption split. Returns the paths written.
std::vector<std::filesystem::path> write_corpus(const BilingualCorpus& corpus, const std::filesystem::path& tsv);

/// Reads a corpus TSV (text columns, score, strategy, provenance JSON).
std::vector<SentencePair> read_corpus_tsv(const std::filesystem::path& file);
std::vector<SentencePair> read_pairs_jsonl(const std::filesystem::path& file);

// ---------------------------------------------------------------- STS sampling and reports

struct LengthBin {
  int lo = 1;
  /// Inclusive upper bound; nullopt = unbounded.
  std::optional<int> hi;
  std::string label() const;
  bool contains(int n) const { return n >= lo && (!hi || n <= *hi); }
};

/// {1-10, 11-19, 20+} words.
std::vector<LengthBin> sentence_length_bins();
/// {1-5, 6-15, 16+} sentences.
std::vector<LengthBin> article_length_bins();

struct StsRow {
  std::string pair_id;
  std::string left_text;
  std::string right_text;
  std::optional<int> score;
  std::string annotator;
};

struct StratumCount {
  std::string label;
  int available = 0;
  int taken = 0;
  int shortfall = 0;
};

struct StsSheet {
  std::vector<StsRow> rows;
  std::vector<StratumCount> strata;
};

/// Up to n_per_stratum pairs per bin of the left sentence's word count, drawn and shuffled
/// with a seeded generator.
StsSheet sample_sts(const BilingualCorpus& corpus, int n_per_stratum, const std::vector<LengthBin>& strata,
                    std::uint64_t seed);

std::string sheet_to_csv(const StsSheet& sheet);
/// CSV with header pair_id,left_text,right_text,score[,annotator]; RFC 4180 quoting.
std::vector<StsRow> parse_sheet_csv(std::string_view csv, const std::string& default_annotator);
std::vector<StsRow> read_sheet_csv(const std::filesystem::path& file);

struct StsBucket {
  double mean = 0;
  int count = 0;
};

struct StrategyReport {
  std::vector<StsBucket> by_sentence_length;
  std::vector<StsBucket> by_article_length;
  /// [sentence bin][article bin].
  std::vector<std::vector<StsBucket>> matrix;
  StsBucket overall;
};

struct StsRowError {
  std::size_t row = 0;
  std::string pair_id;
  std::string message;
};

struct StsReport {
  double mean_sts = 0;
  double frac_above_3 = 0;
  int pairs = 0;
  std::map<std::string, StrategyReport> strategies;
  std::vector<StsRowError> errors;
};

/// Averages annotators per pair, then reports the overall mean, the share strictly above 3 and
/// the per-strategy bucket means. Rows with an unknown pair id or a score outside 0..5 are skipped.
StsReport aggregate_sts(const std::vector<StsRow>& annotations, const BilingualCorpus& corpus);

std::string report_to_json(const StsReport& report);
/// Bucket table: one line per strategy, sentence-length then article-length columns.
std::string report_to_table(const StsReport& report);

// ---------------------------------------------------------------- BLEU

/// Corpus BLEU in [0, 100]. Tokens are whitespace-separated after NFC. Throws ValidationError
/// for an empty hypothesis list or mismatched lengths.
double bleu(const std::vector<std::string>& hypotheses, const std::vector<std::vector<std::string>>& references,
            int max_n = 4);

}  // namespace cforge
