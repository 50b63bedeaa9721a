#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cforge/date.hpp"
#include "cforge/raster.hpp"

namespace cforge {

/// One labeled newspaper page. `gray` is always present; `color` is kept when the source had it.
struct PageImage {
  std::string page_id;
  std::string language;
  Date date;
  int page_number = 1;
  Raster gray;
  std::optional<Raster> color;
  int dpi = 300;
};

struct ManifestEntry {
  std::string file;
  std::string language;
  Date date;
  int page_start = 1;
  int dpi = 300;
};

/// A manifest entry (or one page of it) that did not become a PageImage.
struct IngestError {
  std::size_t entry = 0;
  std::string file;
  std::optional<int> page_number;
  std::string message;
};

struct PageSet {
  std::vector<PageImage> pages;
  std::string manifest_digest;
  /// The two language codes of the run, in registration order.
  std::vector<std::string> languages;
  std::vector<IngestError> errors;

  const PageImage* find(std::string_view page_id) const;
};

struct IngestOptions {
  /// When set, only these two codes are accepted; otherwise the first two seen are registered.
  std::vector<std::string> languages;
  unsigned workers = 1;
};

/// Content address for a page: hash of its labels and pixels, 16 hex digits.
std::string make_page_id(std::string_view language, const Date& date, int page_number,
                         const Raster& pixels);

/// Parses the JSON manifest text. Throws ValidationError if it is not a JSON array;
/// malformed entries come back as errors in `bad`.
std::vector<std::optional<ManifestEntry>> parse_manifest(std::string_view json_text,
                                                         std::vector<IngestError>& bad);

/// Reads a manifest and its raster files (relative to `source_dir`). Never throws for
/// per-entry problems; those are collected in PageSet::errors.
PageSet ingest_bundle(const std::filesystem::path& source_dir, const std::filesystem::path& manifest,
                      const IngestOptions& options = {});

/// Pages for one language and date, ordered by page number.
std::vector<const PageImage*> get_pages(const PageSet& set, std::string_view language,
                                        const Date& date);

/// Distinct dates present in the set, ascending.
std::vector<Date> page_dates(const PageSet& set);

void save_store(const PageSet& set, const std::filesystem::path& dir);
PageSet load_store(const std::filesystem::path& dir);

/// Digest over every page id plus the manifest digest; stable across reruns.
std::string pageset_digest(const PageSet& set);

}  // namespace cforge
