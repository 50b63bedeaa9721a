#include "cforge/ocr.hpp"

#include <array>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

#include "cforge/digest.hpp"
#include "cforge/error.hpp"
#include "cforge/rng.hpp"
#include "cforge/unicode.hpp"

namespace cforge {

namespace {

int priority_of(const std::string& engine, const std::vector<OcrEngineAdapter>& ensemble) {
  for (const auto& e : ensemble)
    if (e.engine_id == engine) return e.priority;
  return std::numeric_limits<int>::max();
}

/// Alignment of one candidate against the pivot: per pivot position the aligned scalar
/// (0 = gap), per slot 0..n the scalars inserted before pivot position slot.
struct Aligned {
  std::vector<char32_t> at;
  std::vector<std::u32string> inserted;
};

Aligned align_to(const std::u32string& pivot, const std::u32string& other) {
  const std::size_t n = pivot.size(), m = other.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (pivot[i - 1] == other[j - 1] ? 0 : 1)});

  Aligned a;
  a.at.assign(n, 0);
  a.inserted.assign(n + 1, {});
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && pivot[i - 1] == other[j - 1] && d[i][j] == d[i - 1][j - 1]) {
      a.at[--i] = other[--j];
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      --i;  // pivot scalar with a gap opposite
    } else if (j > 0 && d[i][j] == d[i][j - 1] + 1) {
      a.inserted[i].insert(a.inserted[i].begin(), other[--j]);
    } else {
      a.at[--i] = other[--j];
    }
  }
  return a;
}

template <typename T>
T majority(const std::vector<T>& votes, const std::vector<int>& priority) {
  std::size_t best = 0;
  int best_count = 0;
  for (std::size_t k = 0; k < votes.size(); ++k) {
    int count = 0;
    for (const auto& v : votes) count += v == votes[k] ? 1 : 0;
    if (count > best_count || (count == best_count && priority[k] < priority[best])) {
      best = k;
      best_count = count;
    }
  }
  return votes[best];
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  return out + "'";
}

std::string page_key(const std::string& language, const Date& date, int page_number) {
  return language + "|" + date.to_string() + "|" + std::to_string(page_number);
}

}  // namespace

EngineRun run_engines(const PageImage& page, const Box& region, const std::vector<OcrEngineAdapter>& ensemble) {
  if (ensemble.empty()) throw ValidationError("OCR ensemble is empty");
  if (region.empty() || !page.gray.bounds().contains(region))
    throw ValidationError("OCR region " + to_string(region) + " is outside page " + page.page_id);
  EngineRun run;
  for (const auto& engine : ensemble) {
    try {
      run.candidates.push_back({engine.engine_id, engine.invoke(page, region), std::nullopt});
    } catch (const std::exception& e) {
      run.failures.push_back({engine.engine_id, e.what()});
    }
  }
  if (run.candidates.empty()) {
    std::string msg = "all OCR engines failed on " + page.page_id + " " + to_string(region);
    for (const auto& f : run.failures) msg += "; " + f.engine_id + ": " + f.message;
    throw StageError(msg);
  }
  return run;
}

std::string vote(const std::vector<OcrCandidate>& candidates, const std::vector<OcrEngineAdapter>& ensemble) {
  if (candidates.empty()) return {};
  if (candidates.size() == 1) return candidates.front().text;

  std::vector<std::u32string> texts;
  std::vector<int> priority;
  for (const auto& c : candidates) {
    texts.push_back(unicode::decode(unicode::nfc(c.text)));
    priority.push_back(priority_of(c.engine_id, ensemble));
  }
  std::size_t pivot = 0;
  for (std::size_t k = 1; k < texts.size(); ++k)
    if (texts[k].size() > texts[pivot].size() ||
        (texts[k].size() == texts[pivot].size() && priority[k] < priority[pivot]))
      pivot = k;

  const std::u32string& p = texts[pivot];
  std::vector<Aligned> aligned;
  for (std::size_t k = 0; k < texts.size(); ++k) {
    if (k == pivot) {
      Aligned self;
      self.at.assign(p.begin(), p.end());
      self.inserted.assign(p.size() + 1, {});
      aligned.push_back(std::move(self));
    } else {
      aligned.push_back(align_to(p, texts[k]));
    }
  }

  std::u32string out;
  for (std::size_t col = 0; col <= p.size(); ++col) {
    std::vector<std::u32string> slot;
    for (const auto& a : aligned) slot.push_back(a.inserted[col]);
    out += majority(slot, priority);
    if (col == p.size()) break;
    std::vector<char32_t> column;
    for (const auto& a : aligned) column.push_back(a.at[col]);
    const char32_t winner = majority(column, priority);
    if (winner != 0) out.push_back(winner);
  }
  return unicode::encode(out);
}

std::string exported_image_name(const ArticleRecord& article, const Roi& roi) {
  return article.article_id + "_I" + std::to_string(roi.seq_index) + ".png";
}

Extraction extract_text(const ArticleRecord& article, const PageImage& page,
                        const std::vector<OcrEngineAdapter>& ensemble,
                        const std::optional<std::filesystem::path>& image_dir) {
  Extraction ex;
  ex.article = article;
  for (auto& roi : ex.article.rois) {
    if (roi.kind == RoiKind::Image) {
      const std::string name = exported_image_name(article, roi);
      if (image_dir) {
        std::filesystem::create_directories(*image_dir);
        const Raster& src = page.color ? *page.color : page.gray;
        write_png((*image_dir / name).string(), crop(src, roi.box));
      }
      roi.text = name;
      continue;
    }
    if (roi.kind == RoiKind::Unclassified) continue;
    try {
      EngineRun run = run_engines(page, roi.box, ensemble);
      roi.text = vote(run.candidates, ensemble);
      for (auto& f : run.failures) ex.engine_failures.push_back(std::move(f));
    } catch (const std::exception& e) {
      roi.text.reset();
      ex.errors.push_back({article.article_id, roi.kind, roi.seq_index, e.what()});
    }
  }
  return ex;
}

OcrEngineAdapter make_command_engine(std::string engine_id, int priority, std::string command_template) {
  if (command_template.find("{image}") == std::string::npos)
    throw ValidationError("engine " + engine_id + ": command template lacks {image}");
  OcrEngineAdapter a;
  a.engine_id = engine_id;
  a.priority = priority;
  a.invoke = [engine_id, command_template](const PageImage& page, const Box& region) {
    static std::atomic<unsigned long> counter{0};
    const auto file = std::filesystem::temp_directory_path() /
                      ("cforge_ocr_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".png");
    write_png(file.string(), crop(page.gray, region));
    std::string cmd = command_template;
    for (auto pos = cmd.find("{image}"); pos != std::string::npos; pos = cmd.find("{image}", pos)) {
      const std::string quoted = shell_quote(file.string());
      cmd.replace(pos, 7, quoted);
      pos += quoted.size();
    }
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) {
      std::filesystem::remove(file);
      throw StageError("cannot start engine command");
    }
    std::string out;
    std::array<char, 4096> buf{};
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
    const int status = ::pclose(pipe);
    std::error_code ec;
    std::filesystem::remove(file, ec);
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
      throw StageError("engine command exited with status " + std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out;
  };
  return a;
}

std::shared_ptr<const MockTruth> MockTruth::load(const std::filesystem::path& truth_json) {
  std::ifstream in(truth_json, std::ios::binary);
  if (!in) throw ValidationError("cannot read OCR truth file " + truth_json.string());
  const auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ValidationError("OCR truth file is not a JSON object");
  const auto date = Date::parse(doc.value("date", std::string{}));
  if (!date) throw ValidationError("OCR truth file has no valid date");
  auto truth = std::make_shared<MockTruth>();
  for (const auto& a : doc.at("articles")) {
    for (const auto& r : a.at("rois")) {
      if (r.at("kind").get<std::string>() == "I") continue;
      const auto& b = r.at("box");
      truth->add(a.at("language").get<std::string>(), *date, a.at("page_number").get<int>(),
                 {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()}, r.at("text").get<std::string>());
    }
  }
  return truth;
}

void MockTruth::add(const std::string& language, const Date& date, int page_number, const Box& box, std::string text) {
  pages_[page_key(language, date, page_number)].push_back({box, std::move(text)});
}

std::string MockTruth::lookup(const PageImage& page, const Box& region) const {
  const auto it = pages_.find(page_key(page.language, page.date, page.page_number));
  if (it == pages_.end()) return {};
  const Entry* best = nullptr;
  double best_iou = 0.5;
  for (const auto& e : it->second) {
    const double v = iou(e.box, region);
    if (v >= best_iou) {
      best_iou = v;
      best = &e;
    }
  }
  return best ? best->text : std::string{};
}

std::string corrupt_text(const std::string& text, double rate, std::uint64_t seed) {
  static const char32_t kNoise[] = {U'#', U'@', U'%', U'&', U'~', U'x', U'q', U'0', U'1', U'ॐ'};
  if (rate <= 0) return text;
  Rng rng(seed);
  std::u32string s = unicode::decode(text);
  for (auto& c : s)
    if (rng.bernoulli(rate)) c = kNoise[rng.uniform_int(0, 9)];
  return unicode::encode(s);
}

OcrEngineAdapter make_mock_engine(std::string engine_id, int priority, std::shared_ptr<const MockTruth> truth,
                                  MockOptions options) {
  OcrEngineAdapter a;
  a.engine_id = engine_id;
  a.priority = priority;
  a.invoke = [engine_id, truth = std::move(truth), options](const PageImage& page, const Box& region) {
    if (options.fail) throw StageError("mock engine " + engine_id + " configured to fail");
    std::string text = truth->lookup(page, region);
    const std::uint64_t seed =
        fnv1a64(page.page_id + "|" + to_string(region) + "|" + engine_id, options.seed ^ 0xcbf29ce484222325ULL);
    return corrupt_text(text, options.corruption, seed);
  };
  return a;
}

}  // namespace cforge
