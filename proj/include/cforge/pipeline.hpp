#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cforge/article_mapper.hpp"
#include "cforge/layout.hpp"
#include "cforge/ocr.hpp"
#include "cforge/sentence.hpp"

namespace cforge {

struct EngineConfig {
  std::string engine_id;
  /// "mock" or "command".
  std::string kind = "mock";
  int priority = 1;
  std::string command;
  std::filesystem::path truth;
  double corruption = 0.0;
  std::uint64_t seed = 0;
  bool fail = false;
};

struct PipelineConfig {
  std::filesystem::path base_dir;
  std::vector<std::string> languages;
  std::filesystem::path source_dir;
  std::filesystem::path manifest;
  std::filesystem::path cache_dir;
  std::filesystem::path out_dir;
  unsigned workers = 1;
  /// Use these article annotations instead of segmentation.
  std::optional<std::filesystem::path> annotations;
  /// Use the layout of a fixture truth file instead of segmentation.
  std::optional<std::filesystem::path> truth_layout;

  SegmentationParams segmentation;
  std::vector<EngineConfig> engines;
  MappingParams mapping;
  Strategy strategy = Strategy::LAS;
  /// "builtin" or an http:// URL of the embedding sidecar.
  std::string provider = "builtin";
  int embed_dim = 256;
  std::optional<std::filesystem::path> lexicon_left;
  std::optional<std::filesystem::path> lexicon_right;
  AlignParams align;
  /// Ratio for SLAS; 0 estimates it from every article of the run.
  double slas_ratio = 0;
  std::string corpus_name = "corpus";
};

/// Parses an INI-style config ([section] key = value). Relative paths resolve against the
/// config file's directory. Throws ValidationError on unknown keys or out-of-range values.
PipelineConfig load_config(const std::filesystem::path& file);
PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir);
void validate_config(const PipelineConfig& config);

std::vector<OcrEngineAdapter> build_engines(const std::vector<EngineConfig>& engines);

/// Embedding provider for the config (builtin with lexicons, or HTTP).
std::unique_ptr<EmbeddingProvider> build_provider(const PipelineConfig& config);

struct StageRecord {
  std::string name;
  std::string key;
  bool cache_hit = false;
  double seconds = 0;
  std::string status = "ok";
  std::string message;
};

struct RunReport {
  bool ok = true;
  std::vector<StageRecord> stages;
  int pages = 0;
  int ingest_errors = 0;
  int articles = 0;
  int embedded_articles = 0;
  int mapped_articles = 0;
  int mapped_embedded = 0;
  int aligned_pairs = 0;
  int corpus_pairs = 0;
  int caption_pairs = 0;
  std::vector<std::string> warnings;
  std::filesystem::path corpus_tsv;
  std::filesystem::path output_dir;

  std::string to_json() const;
  int exit_code() const { return ok ? 0 : 2; }
};

/// Runs ingest, segment, ocr, map-articles, map-embedded, align and corpus with per-stage
/// caching. Stage outputs live in cache_dir/<stage>/<key>/; final files are copied to out_dir.
/// Validation problems throw ValidationError before any stage runs; stage failures are
/// recorded in the report (ok = false).
RunReport run_pipeline(const PipelineConfig& config);

/// Fixture truth layout as article records on ingested pages (ids follow the pipeline scheme).
std::vector<ArticleRecord> truth_articles(const std::filesystem::path& truth_json, const PageSet& pages);

}  // namespace cforge
