#include "cforge/page_store.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "json.hpp"

#include "cforge/digest.hpp"
#include "cforge/error.hpp"
#include "cforge/work_pool.hpp"

namespace cforge {

using nlohmann::json;

namespace {

constexpr int kMinPageSide = 32;

std::string pixel_digest(const Raster& r) {
  Sha256 h;
  h.field(std::to_string(r.width)).field(std::to_string(r.height)).field(std::to_string(r.channels));
  h.update(std::span<const std::uint8_t>(r.data));
  return h.hex();
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Decoded {
  std::vector<Raster> pages;
  std::string error;
};

}  // namespace

const PageImage* PageSet::find(std::string_view page_id) const {
  for (const auto& p : pages)
    if (p.page_id == page_id) return &p;
  return nullptr;
}

std::string make_page_id(std::string_view language, const Date& date, int page_number,
                         const Raster& pixels) {
  Sha256 h;
  h.field(language).field(date.to_string()).field(std::to_string(page_number)).field(pixel_digest(pixels));
  return h.hex().substr(0, 16);
}

std::vector<std::optional<ManifestEntry>> parse_manifest(std::string_view json_text,
                                                         std::vector<IngestError>& bad) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ValidationError("manifest must be a JSON array");

  std::vector<std::optional<ManifestEntry>> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& e = doc[i];
    auto reject = [&](const std::string& why) {
      std::string file = e.is_object() && e.contains("file") && e["file"].is_string()
                             ? e["file"].get<std::string>()
                             : std::string();
      bad.push_back({i, file, std::nullopt, why});
      out.emplace_back(std::nullopt);
    };
    if (!e.is_object()) {
      reject("entry is not an object");
      continue;
    }
    if (!e.contains("file") || !e["file"].is_string()) { reject("missing \"file\""); continue; }
    if (!e.contains("language") || !e["language"].is_string() ||
        e["language"].get<std::string>().empty()) {
      reject("missing \"language\"");
      continue;
    }
    if (!e.contains("date") || !e["date"].is_string()) { reject("missing \"date\""); continue; }
    const auto date = Date::parse(e["date"].get<std::string>());
    if (!date) { reject("bad date " + e["date"].dump()); continue; }
    int start = 1;
    if (e.contains("page_start")) {
      if (!e["page_start"].is_number_integer() || e["page_start"].get<int>() < 1) {
        reject("page_start must be a positive integer");
        continue;
      }
      start = e["page_start"].get<int>();
    }
    int dpi = 300;
    if (e.contains("dpi")) {
      if (!e["dpi"].is_number_integer() || e["dpi"].get<int>() < 1) { reject("dpi must be positive"); continue; }
      dpi = e["dpi"].get<int>();
    }
    out.emplace_back(ManifestEntry{e["file"].get<std::string>(), e["language"].get<std::string>(),
                                   *date, start, dpi});
  }
  return out;
}

PageSet ingest_bundle(const std::filesystem::path& source_dir, const std::filesystem::path& manifest,
                      const IngestOptions& options) {
  PageSet set;
  const std::string text = read_text(manifest);
  set.manifest_digest = sha256_hex(text);
  const auto entries = parse_manifest(text, set.errors);

  // Decoding is the expensive part and is independent per entry.
  std::vector<Decoded> decoded(entries.size());
  parallel_for(entries.size(), options.workers, [&](std::size_t i) {
    if (!entries[i]) return;
    try {
      decoded[i].pages = read_image_pages((source_dir / entries[i]->file).string());
    } catch (const std::exception& e) {
      decoded[i].error = e.what();
    }
  });

  set.languages = options.languages;
  std::map<std::tuple<std::string, Date, int>, std::size_t> seen;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i]) continue;
    const ManifestEntry& entry = *entries[i];
    if (!decoded[i].error.empty()) {
      set.errors.push_back({i, entry.file, std::nullopt, decoded[i].error});
      continue;
    }
    const bool known = std::find(set.languages.begin(), set.languages.end(), entry.language) !=
                       set.languages.end();
    if (!known) {
      if (!options.languages.empty() || set.languages.size() >= 2) {
        set.errors.push_back({i, entry.file, std::nullopt,
                              "language '" + entry.language + "' is not one of the run's two languages"});
        continue;
      }
      set.languages.push_back(entry.language);
    }
    for (std::size_t k = 0; k < decoded[i].pages.size(); ++k) {
      Raster& raster = decoded[i].pages[k];
      const int number = entry.page_start + static_cast<int>(k);
      if (raster.width < kMinPageSide || raster.height < kMinPageSide) {
        set.errors.push_back({i, entry.file, number, "page smaller than 32x32"});
        continue;
      }
      const auto key = std::make_tuple(entry.language, entry.date, number);
      if (auto it = seen.find(key); it != seen.end()) {
        set.errors.push_back({i, entry.file, number,
                              "duplicate (language, date, page) already provided by entry " +
                                  std::to_string(it->second)});
        continue;
      }
      seen.emplace(key, i);
      PageImage page;
      page.language = entry.language;
      page.date = entry.date;
      page.page_number = number;
      page.dpi = entry.dpi;
      page.page_id = make_page_id(entry.language, entry.date, number, raster);
      if (raster.channels == 3) {
        page.gray = to_gray(raster);
        page.color = std::move(raster);
      } else {
        page.gray = std::move(raster);
      }
      set.pages.push_back(std::move(page));
    }
  }
  return set;
}

std::vector<const PageImage*> get_pages(const PageSet& set, std::string_view language, const Date& date) {
  std::vector<const PageImage*> out;
  for (const auto& p : set.pages)
    if (p.language == language && p.date == date) out.push_back(&p);
  std::stable_sort(out.begin(), out.end(),
                   [](const PageImage* a, const PageImage* b) { return a->page_number < b->page_number; });
  return out;
}

std::vector<Date> page_dates(const PageSet& set) {
  std::vector<Date> dates;
  for (const auto& p : set.pages) dates.push_back(p.date);
  std::sort(dates.begin(), dates.end());
  dates.erase(std::unique(dates.begin(), dates.end()), dates.end());
  return dates;
}

void save_store(const PageSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "pages");
  json doc;
  doc["manifest_digest"] = set.manifest_digest;
  doc["languages"] = set.languages;
  doc["pages"] = json::array();
  for (const auto& p : set.pages) {
    const std::string gray_name = "pages/" + p.page_id + ".png";
    write_png((dir / gray_name).string(), p.gray);
    json jp{{"page_id", p.page_id}, {"language", p.language}, {"date", p.date.to_string()},
            {"page_number", p.page_number}, {"dpi", p.dpi}, {"gray", gray_name}};
    if (p.color) {
      const std::string color_name = "pages/" + p.page_id + ".color.png";
      write_png((dir / color_name).string(), *p.color);
      jp["color"] = color_name;
    }
    doc["pages"].push_back(std::move(jp));
  }
  doc["errors"] = json::array();
  for (const auto& e : set.errors) {
    json je{{"entry", e.entry}, {"file", e.file}, {"message", e.message}};
    if (e.page_number) je["page_number"] = *e.page_number;
    doc["errors"].push_back(std::move(je));
  }
  std::ofstream(dir / "pageset.json") << doc.dump(2) << '\n';
}

PageSet load_store(const std::filesystem::path& dir) {
  const std::string text = read_text(dir / "pageset.json");
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("corrupt page store: " + std::string(e.what()));
  }
  PageSet set;
  set.manifest_digest = doc.at("manifest_digest").get<std::string>();
  set.languages = doc.at("languages").get<std::vector<std::string>>();
  for (const auto& jp : doc.at("pages")) {
    PageImage p;
    p.page_id = jp.at("page_id").get<std::string>();
    p.language = jp.at("language").get<std::string>();
    const auto date = Date::parse(jp.at("date").get<std::string>());
    if (!date) throw ValidationError("corrupt page store: bad date");
    p.date = *date;
    p.page_number = jp.at("page_number").get<int>();
    p.dpi = jp.at("dpi").get<int>();
    p.gray = read_png((dir / jp.at("gray").get<std::string>()).string());
    if (jp.contains("color")) p.color = read_png((dir / jp.at("color").get<std::string>()).string());
    set.pages.push_back(std::move(p));
  }
  for (const auto& je : doc.at("errors")) {
    IngestError e{je.at("entry").get<std::size_t>(), je.at("file").get<std::string>(), std::nullopt,
                  je.at("message").get<std::string>()};
    if (je.contains("page_number")) e.page_number = je["page_number"].get<int>();
    set.errors.push_back(std::move(e));
  }
  return set;
}

std::string pageset_digest(const PageSet& set) {
  Sha256 h;
  h.field(set.manifest_digest);
  for (const auto& l : set.languages) h.field(l);
  for (const auto& p : set.pages) h.field(p.page_id);
  for (const auto& e : set.errors) h.field(std::to_string(e.entry) + ":" + e.message);
  return h.hex();
}

}  // namespace cforge
