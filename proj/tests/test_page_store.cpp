#include <fstream>
#include <set>

#include "doctest.h"
#include "json.hpp"

#include "cforge/error.hpp"
#include "cforge/fixture.hpp"
#include "cforge/page_store.hpp"
#include "cforge/raster.hpp"
#include "support/oracle.hpp"

using namespace cforge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

Raster pattern(int w, int h, int seed, int channels = 1) {
  Raster r(w, h, channels);
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = static_cast<std::uint8_t>((i * 31 + seed * 7) % 251);
  return r;
}

void write_manifest(const fs::path& file, const json& entries) { std::ofstream(file) << entries.dump(); }

json entry(const std::string& file, const std::string& lang, const std::string& date, int start = 1) {
  return {{"file", file}, {"language", lang}, {"date", date}, {"page_start", start}};
}

}  // namespace

TEST_CASE("two single-page images become two pages") {
  const auto dir = testing::scratch_dir("ps-two");
  write_png((dir / "a.png").string(), pattern(64, 48, 1));
  write_png((dir / "b.png").string(), pattern(64, 48, 2));
  write_manifest(dir / "m.json", json::array({entry("a.png", "kok", "2023-01-15"), entry("b.png", "mar", "2023-01-15")}));
  const PageSet set = ingest_bundle(dir, dir / "m.json");
  CHECK(set.pages.size() == 2);
  CHECK(set.errors.empty());
  CHECK(set.languages == std::vector<std::string>{"kok", "mar"});
  CHECK(set.pages[0].page_id != set.pages[1].page_id);
  CHECK(set.pages[0].gray.width == 64);
}

TEST_CASE("multi-page tiff splits from the declared start") {
  const auto dir = testing::scratch_dir("ps-tiff");
  write_tiff_pages((dir / "doc.tif").string(), {pattern(40, 40, 1), pattern(40, 40, 2), pattern(40, 40, 3)});
  write_manifest(dir / "m.json", json::array({entry("doc.tif", "kok", "2023-01-15", 4)}));
  const PageSet set = ingest_bundle(dir, dir / "m.json");
  REQUIRE(set.pages.size() == 3);
  CHECK(set.pages[0].page_number == 4);
  CHECK(set.pages[1].page_number == 5);
  CHECK(set.pages[2].page_number == 6);
  CHECK(set.pages[2].gray == pattern(40, 40, 3));
}

TEST_CASE("absent file is a per-entry error") {
  const auto dir = testing::scratch_dir("ps-missing");
  write_manifest(dir / "m.json", json::array({entry("nope.png", "kok", "2023-01-15")}));
  const PageSet set = ingest_bundle(dir, dir / "m.json");
  CHECK(set.pages.empty());
  REQUIRE(set.errors.size() == 1);
  CHECK(set.errors[0].entry == 0);
  CHECK(set.errors[0].file == "nope.png");
}

TEST_CASE("bad entries are collected, good ones kept") {
  const auto dir = testing::scratch_dir("ps-bad");
  write_png((dir / "a.png").string(), pattern(64, 64, 1));
  write_png((dir / "tiny.png").string(), pattern(20, 20, 1));
  std::ofstream(dir / "junk.png") << "not an image";
  write_manifest(dir / "m.json", json::array({entry("a.png", "kok", "2023-01-15"), entry("a.png", "kok", "2023-01-15"),
                                              entry("junk.png", "kok", "2023-01-15"),
                                              entry("tiny.png", "mar", "2023-01-15"),
                                              entry("a.png", "kok", "2023-02-30"), json{{"file", "a.png"}},
                                              entry("a.png", "hin", "2023-01-16")}));
  const PageSet set = ingest_bundle(dir, dir / "m.json", {{"kok", "mar"}, 1});
  CHECK(set.pages.size() == 1);
  CHECK(set.errors.size() == 6);
  std::set<std::size_t> entries;
  for (const auto& e : set.errors) entries.insert(e.entry);
  CHECK(entries == std::set<std::size_t>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("manifest must be a JSON array") {
  const auto dir = testing::scratch_dir("ps-notarray");
  std::ofstream(dir / "m.json") << R"({"file":"a.png"})";
  CHECK_THROWS_AS(ingest_bundle(dir, dir / "m.json"), ValidationError);
}

TEST_CASE("color pages keep color and derive luma") {
  const auto dir = testing::scratch_dir("ps-color");
  Raster rgb(40, 40, 3);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) {
      rgb.at(x, y, 0) = static_cast<std::uint8_t>(x * 6);
      rgb.at(x, y, 1) = static_cast<std::uint8_t>(y * 6);
      rgb.at(x, y, 2) = static_cast<std::uint8_t>((x + y) * 3);
    }
  write_png((dir / "c.png").string(), rgb);
  write_manifest(dir / "m.json", json::array({entry("c.png", "kok", "2023-01-15")}));
  const PageSet set = ingest_bundle(dir, dir / "m.json");
  REQUIRE(set.pages.size() == 1);
  const auto& p = set.pages[0];
  REQUIRE(p.color);
  CHECK(*p.color == rgb);
  for (int y = 0; y < 40; y += 7)
    for (int x = 0; x < 40; x += 5) {
      const int r = rgb.at(x, y, 0), g = rgb.at(x, y, 1), b = rgb.at(x, y, 2);
      CHECK(p.gray.at(x, y) == (299 * r + 587 * g + 114 * b + 500) / 1000);
    }
}

TEST_CASE("get_pages filters and orders") {
  const auto dir = testing::scratch_dir("ps-get");
  write_png((dir / "a2.png").string(), pattern(64, 64, 2));
  write_png((dir / "a1.png").string(), pattern(64, 64, 1));
  write_png((dir / "b1.png").string(), pattern(64, 64, 3));
  write_manifest(dir / "m.json", json::array({entry("a2.png", "kok", "2023-01-15", 2), entry("a1.png", "kok", "2023-01-15", 1),
                                              entry("b1.png", "mar", "2023-01-15", 1)}));
  const PageSet set = ingest_bundle(dir, dir / "m.json");
  const auto d = *Date::parse("2023-01-15");
  const auto l1 = get_pages(set, "kok", d);
  REQUIRE(l1.size() == 2);
  CHECK(l1[0]->page_number == 1);
  CHECK(l1[1]->page_number == 2);
  CHECK(get_pages(set, "kok", *Date::parse("2023-01-16")).empty());

  std::size_t total = 0;
  std::set<std::string> ids;
  for (const auto& lang : set.languages)
    for (const auto& date : page_dates(set))
      for (const auto* p : get_pages(set, lang, date)) {
        ++total;
        CHECK(ids.insert(p->page_id).second);
      }
  CHECK(total == set.pages.size());
}

TEST_CASE("fixture seed 7 page count matches its declaration") {
  const auto dir = testing::scratch_dir("ps-fixture");
  const auto bundle = gen_fixture(7);
  write_fixture(bundle, dir);
  const PageSet set = ingest_bundle(dir, dir / "manifest.json");
  CHECK(set.errors.empty());
  const auto pages = get_pages(set, bundle.spec.left_language, bundle.spec.date);
  CHECK(static_cast<int>(pages.size()) == bundle.page_count(bundle.spec.left_language));
}

TEST_CASE("ingest is deterministic and the store round-trips") {
  const auto dir = testing::scratch_dir("ps-determinism");
  write_fixture(gen_fixture(3), dir);
  const PageSet a = ingest_bundle(dir, dir / "manifest.json");
  const PageSet b = ingest_bundle(dir, dir / "manifest.json", {{}, 4});
  CHECK(a.manifest_digest == b.manifest_digest);
  CHECK(pageset_digest(a) == pageset_digest(b));
  REQUIRE(a.pages.size() == b.pages.size());
  for (std::size_t i = 0; i < a.pages.size(); ++i) CHECK(a.pages[i].page_id == b.pages[i].page_id);

  save_store(a, dir / "store");
  const PageSet c = load_store(dir / "store");
  CHECK(pageset_digest(c) == pageset_digest(a));
  REQUIRE(c.pages.size() == a.pages.size());
  CHECK(c.pages[0].gray == a.pages[0].gray);
  CHECK(c.pages[0].date == a.pages[0].date);
}
