#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cforge/date.hpp"
#include "cforge/layout.hpp"
#include "cforge/raster.hpp"

namespace cforge {

/// Shape of a synthetic bilingual edition pair.
struct FixtureSpec {
  std::string left_language = "kok";
  std::string right_language = "mar";
  Date date{2023, 1, 15};
  int left_articles = 4;
  int right_articles = 5;
  /// Articles that share their photographs across editions (= ground-truth article pairs).
  int shared_images = 3;
  int min_sentences = 4;
  int max_sentences = 9;
  double scale = 0.8;
  int brightness = 20;
  int shift = 10;
  double embedded_rate = 0.25;
  double second_photo_rate = 0.15;
  double distractor_photo_rate = 0.5;
  double subheadline_rate = 0.15;
  double drop_rate = 0.1;
  double extra_rate = 0.1;
  int vocabulary = 800;
  double partial_lexicon_coverage = 0.6;
  int page_width = 1100;
  int page_height = 1500;
  int columns = 3;
};

struct TruthRoi {
  RoiKind kind = RoiKind::Content;
  Box box;
  int seq_index = 0;
  std::optional<int> sub_index;
  std::string text;
  /// Byte offsets [begin, end) of each sentence inside `text`.
  std::vector<std::pair<std::size_t, std::size_t>> sentences;
};

struct TruthArticle {
  std::string key;
  std::string language;
  int page_number = 0;
  Box bounds;
  std::optional<std::string> parent;
  std::vector<TruthRoi> rois;
};

struct TruthSentencePair {
  std::string left;
  std::string right;
  RoiKind stream = RoiKind::Content;
};

struct FixturePage {
  std::string language;
  int page_number = 0;
  Raster pixels;
};

using LexiconEntries = std::vector<std::pair<std::string, std::string>>;

struct FixtureBundle {
  FixtureSpec spec;
  std::uint64_t seed = 0;
  std::vector<FixturePage> pages;
  std::vector<TruthArticle> articles;
  /// (left key, right key); includes embedded article pairs.
  std::vector<std::pair<std::string, std::string>> article_pairs;
  std::vector<TruthSentencePair> sentence_pairs;
  /// source token -> pivot token, complete and partial per language.
  LexiconEntries left_lexicon, right_lexicon;
  LexiconEntries left_partial_lexicon, right_partial_lexicon;

  int page_count(const std::string& language) const;
  const TruthArticle* article(const std::string& key) const;
};

/// Renders both editions with ground truth. Throws ValidationError for an inconsistent spec.
FixtureBundle gen_fixture(std::uint64_t seed, const FixtureSpec& spec = {});

/// Writes manifest.json, pages/, truth.json, lexicons and a ready-to-run config.ini.
void write_fixture(const FixtureBundle& bundle, const std::filesystem::path& dir);

/// Reads truth.json written by write_fixture (pages are not reloaded).
FixtureBundle read_fixture_truth(const std::filesystem::path& truth_json);

/// Procedural photograph used by the fixtures; exposed for feature-matching harnesses.
Raster make_photo(std::uint64_t seed, int width, int height);

/// Applies the cross-edition perturbation: crop offset, rescale, brightness shift (clipped).
Raster perturb_photo(const Raster& source, double scale, int brightness, int shift);

}  // namespace cforge
