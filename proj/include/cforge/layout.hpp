#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cforge/date.hpp"
#include "cforge/geometry.hpp"
#include "cforge/page_store.hpp"

namespace cforge {

enum class RoiKind { Unclassified, Headline, Image, Caption, Content };

/// Marker letter: H, I, P (picture caption), C; U for unclassified.
char roi_letter(RoiKind kind);
std::optional<RoiKind> roi_kind_from(std::string_view name);

/// One region of interest. `seq_index` is the subscript of the marker, `sub_index` the
/// headline superscript. `text` holds OCR output, or the exported file name for images.
struct Roi {
  RoiKind kind = RoiKind::Unclassified;
  Box box;
  int seq_index = 0;
  std::optional<int> sub_index;
  int embed_level = 0;
  std::optional<std::string> text;

  friend bool operator==(const Roi&, const Roi&) = default;
};

struct ArticleRecord {
  std::string article_id;
  std::string page_id;
  std::string language;
  Date date;
  /// Article boundary on the page (frame box, or hull of the ROIs when unframed).
  Box bounds;
  std::vector<Roi> rois;
  std::optional<std::string> parent;

  int embed_level() const { return parent ? 1 : 0; }
  friend bool operator==(const ArticleRecord&, const ArticleRecord&) = default;
};

struct SegmentationParams {
  int ink_threshold = 200;
  double blank_coverage = 0.005;
  /// A ruled line must cover this fraction of the band it separates.
  double rule_span = 0.6;
  int rule_min_length = 40;
  int rule_max_thickness = 5;
  /// Minimum whitespace between articles that are not separated by rules or frames.
  int article_gap = 20;
  int block_row_gap = 8;
  int block_col_gap = 16;
  double frame_side_coverage = 0.9;
  double frame_max_interior_density = 0.5;
  int frame_min_side = 40;
  double image_min_density = 0.35;
  double image_max_blank_fraction = 0.05;
  double image_min_edge_density = 0.02;
  /// |dx| + |dy| above this counts as an edge pixel.
  int image_edge_gradient = 16;
  int image_min_side = 24;
  double headline_line_ratio = 1.8;
  double caption_max_gap_lines = 1.5;
  double caption_max_width_ratio = 1.2;
  int overlap_tolerance = 2;
};

struct PageMetrics {
  double median_line_height = 0.0;
};

struct Segmentation {
  std::vector<ArticleRecord> articles;
  std::vector<std::string> warnings;
};

/// Splits a page into article regions (recursive XY-cut; ruled lines and frames are hard
/// separators). ROIs come back Unclassified; embedded boxed articles get `parent` set.
Segmentation segment_page(const PageImage& page, const SegmentationParams& params = {});

/// Median text-line height over all text blocks on the page.
PageMetrics measure_page(const PageImage& page, const SegmentationParams& params = {});

/// Assigns H/I/P/C kinds and reading-order indices. Idempotent.
ArticleRecord classify_rois(const ArticleRecord& article, const PageImage& page,
                            const SegmentationParams& params = {});
ArticleRecord classify_rois(const ArticleRecord& article, const PageImage& page,
                            const PageMetrics& metrics, const SegmentationParams& params = {});

/// segment_page followed by classify_rois on every article.
std::vector<ArticleRecord> extract_articles(const PageImage& page, const SegmentationParams& params = {},
                                            std::vector<std::string>* warnings = nullptr);

/// Checks the ArticleRecord invariants; throws ValidationError naming the offending box.
void validate_article(const ArticleRecord& article, const PageImage& page,
                      const ArticleRecord* parent = nullptr);

/// Annotation JSON (array of records) <-> ArticleRecord.
std::string to_annotation_json(const std::vector<ArticleRecord>& articles, bool with_texts = false);
std::vector<ArticleRecord> load_annotations_text(std::string_view json_text, const PageSet& set);
std::vector<ArticleRecord> load_annotations(const std::filesystem::path& file, const PageSet& set);

/// Marker-text document. Throws ValidationError when a non-image ROI has no text.
std::string serialize_article(const ArticleRecord& article);

/// Reading order: bands of vertically overlapping boxes top to bottom, left to right inside a band.
std::vector<std::size_t> reading_order(const std::vector<Box>& boxes);

}  // namespace cforge
