#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cforge/layout.hpp"
#include "cforge/page_store.hpp"

namespace cforge {

struct OcrCandidate {
  std::string engine_id;
  std::string text;
  std::optional<double> confidence;
};

/// Recognizes the text inside `region` of `page`. Throws on failure.
using OcrInvoke = std::function<std::string(const PageImage& page, const Box& region)>;

/// Priority 1 is the highest rank; ties in voting go to the lowest number.
struct OcrEngineAdapter {
  std::string engine_id;
  int priority = 1;
  OcrInvoke invoke;
};

struct EngineFailure {
  std::string engine_id;
  std::string message;
};

struct EngineRun {
  std::vector<OcrCandidate> candidates;
  std::vector<EngineFailure> failures;
};

/// Runs every engine on the region. Throws StageError (with every diagnostic) when all fail.
EngineRun run_engines(const PageImage& page, const Box& region, const std::vector<OcrEngineAdapter>& ensemble);

/// Character-level majority vote over NFC scalars aligned to the longest candidate.
std::string vote(const std::vector<OcrCandidate>& candidates, const std::vector<OcrEngineAdapter>& ensemble);

struct RoiError {
  std::string article_id;
  RoiKind kind = RoiKind::Unclassified;
  int seq_index = 0;
  std::string message;
};

struct Extraction {
  ArticleRecord article;
  std::vector<RoiError> errors;
  std::vector<EngineFailure> engine_failures;
};

/// Fills Roi::text for text ROIs with the voted string. Image ROIs are written to
/// `image_dir/<article_id>_I<seq>.png` (when image_dir is set) and reference that file name.
Extraction extract_text(const ArticleRecord& article, const PageImage& page,
                        const std::vector<OcrEngineAdapter>& ensemble,
                        const std::optional<std::filesystem::path>& image_dir = std::nullopt);

std::string exported_image_name(const ArticleRecord& article, const Roi& roi);

/// External command; `{image}` in the template is replaced by a PNG crop of the region,
/// stdout (UTF-8) is the recognized text. A non-zero exit status is a failure.
OcrEngineAdapter make_command_engine(std::string engine_id, int priority, std::string command_template);

/// Ground-truth texts of fixture pages, keyed by (language, date, page_number).
class MockTruth {
 public:
  static std::shared_ptr<const MockTruth> load(const std::filesystem::path& truth_json);
  void add(const std::string& language, const Date& date, int page_number, const Box& box, std::string text);
  /// Text of the best-overlapping region (IoU ≥ 0.5), or empty.
  std::string lookup(const PageImage& page, const Box& region) const;

 private:
  struct Entry {
    Box box;
    std::string text;
  };
  std::map<std::string, std::vector<Entry>> pages_;
};

struct MockOptions {
  /// Probability that each scalar is replaced by a random symbol.
  double corruption = 0.0;
  std::uint64_t seed = 0;
  bool fail = false;
};

OcrEngineAdapter make_mock_engine(std::string engine_id, int priority, std::shared_ptr<const MockTruth> truth,
                                  MockOptions options = {});

/// Replaces each scalar with probability `rate`; exposed for the voting property tests.
std::string corrupt_text(const std::string& text, double rate, std::uint64_t seed);

}  // namespace cforge
