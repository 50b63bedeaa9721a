#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cforge/features.hpp"
#include "cforge/layout.hpp"
#include "cforge/page_store.hpp"

namespace cforge {

enum class PairOrigin { ImagePivot, HeadlinePivot };

std::string origin_name(PairOrigin origin);

struct ImageEvidence {
  int left_seq = 0;
  int right_seq = 0;
  double similarity = 0;
};

struct ArticlePair {
  ArticleRecord left;
  ArticleRecord right;
  std::vector<ImageEvidence> evidence;
  double pair_score = 0;
  PairOrigin origin = PairOrigin::ImagePivot;
};

struct MappingParams {
  FeatureParams features;
  /// Similarity threshold on the best image pair of two articles.
  double threshold = 0.25;
  /// Threshold on headline similarity for embedded articles.
  double headline_threshold = 0.6;
  unsigned workers = 1;
};

/// One cell of a score matrix offered to the assignment step.
struct ScoredCandidate {
  std::size_t left = 0;
  std::size_t right = 0;
  double score = 0;
};

/// One-to-one greedy assignment by descending score; ties go to the smaller (left key,
/// right key). Only candidates with score >= threshold are considered.
std::vector<ScoredCandidate> greedy_assign(std::vector<ScoredCandidate> candidates, double threshold,
                                           const std::vector<std::string>& left_keys,
                                           const std::vector<std::string>& right_keys);

/// Features of one article image, computed once and reused across the similarity matrix.
struct ArticleImage {
  std::size_t article = 0;
  int seq_index = 0;
  ImageFeatures features;
};

/// Features of every Image ROI of the top-level articles in `articles`.
std::vector<ArticleImage> article_images(const std::vector<ArticleRecord>& articles, const PageSet& pages,
                                         const MappingParams& params);

/// Pairs top-level articles of `date` whose photographs match (image pivot).
std::vector<ArticlePair> map_articles(const std::vector<ArticleRecord>& left, const std::vector<ArticleRecord>& right,
                                      const Date& date, const PageSet& pages, const MappingParams& params = {});

/// Same, with precomputed image features.
std::vector<ArticlePair> map_articles(const std::vector<ArticleRecord>& left, const std::vector<ArticleRecord>& right,
                                      const Date& date, const std::vector<ArticleImage>& left_images,
                                      const std::vector<ArticleImage>& right_images, const MappingParams& params);

using HeadlineSimilarity = std::function<double(const std::string& left, const std::string& right)>;

/// Text of the main (sub_index 0) headline, if any.
std::optional<std::string> main_headline(const ArticleRecord& article);

/// Pairs embedded children of pair.left and pair.right by headline similarity.
std::vector<ArticlePair> map_embedded(const ArticlePair& pair, const std::vector<ArticleRecord>& left_articles,
                                      const std::vector<ArticleRecord>& right_articles, const HeadlineSimilarity& delta,
                                      double threshold, std::vector<std::string>* warnings = nullptr);

/// One JSON object per line: ids, pages, date, origin, score, evidence.
std::string pairs_to_jsonl(const std::vector<ArticlePair>& pairs);
void write_pairs(const std::filesystem::path& file, const std::vector<ArticlePair>& pairs);

/// Resolves a pair report against known articles. Throws ValidationError on unknown ids.
std::vector<ArticlePair> read_pairs(const std::filesystem::path& file, const std::vector<ArticleRecord>& articles);

}  // namespace cforge
