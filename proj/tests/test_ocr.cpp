#include <fstream>
#include <set>

#include "doctest.h"

#include "cforge/error.hpp"
#include "cforge/fixture.hpp"
#include "cforge/ocr.hpp"
#include "cforge/rng.hpp"
#include "cforge/unicode.hpp"
#include "support/oracle.hpp"

using namespace cforge;
namespace fs = std::filesystem;

namespace {

std::vector<OcrEngineAdapter> ranked(int n) {
  std::vector<OcrEngineAdapter> out;
  for (int i = 1; i <= n; ++i) out.push_back({"e" + std::to_string(i), i, {}});
  return out;
}

std::vector<OcrCandidate> cands(std::initializer_list<std::string> texts) {
  std::vector<OcrCandidate> out;
  int i = 1;
  for (const auto& t : texts) out.push_back({"e" + std::to_string(i++), t, std::nullopt});
  return out;
}

OcrEngineAdapter fixed(std::string id, int priority, std::string text) {
  return {id, priority, [text](const PageImage&, const Box&) { return text; }};
}

OcrEngineAdapter failing(std::string id, int priority) {
  return {id, priority, [id](const PageImage&, const Box&) -> std::string { throw StageError(id + " crashed"); }};
}

PageImage small_page() {
  PageImage p;
  p.page_id = "p1";
  p.language = "kok";
  p.date = *Date::parse("2023-01-15");
  p.page_number = 1;
  p.gray = Raster(200, 200, 1, 255);
  return p;
}

std::string random_word(Rng& rng, const std::u32string& alphabet, int lo, int hi) {
  std::u32string s;
  const auto n = rng.uniform_int(lo, hi);
  for (int i = 0; i < n; ++i) s += alphabet[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(alphabet.size()) - 1))];
  return unicode::encode(s);
}

const std::u32string kAlphabet = U"abcdefgh कखगघचछजझ";

}  // namespace

TEST_CASE("vote examples") {
  const auto e = ranked(3);
  CHECK(vote(cands({"karnataka", "karnataka", "karn@taka"}), e) == "karnataka");
  CHECK(vote(cands({"abc"}), e) == "abc");
  CHECK(vote(cands({"ab", "ac", "bc"}), e) == "ab");
}

TEST_CASE("vote tie-breaks follow engine priority") {
  auto e = ranked(3);
  // Three-way disagreement on the last column: the highest-ranked engine decides.
  CHECK(vote(cands({"xa", "xb", "xc"}), e) == "xa");
  e[0].priority = 3;
  e[2].priority = 1;
  CHECK(vote(cands({"xa", "xb", "xc"}), e) == "xc");
}

TEST_CASE("vote handles insertions and deletions") {
  const auto e = ranked(3);
  CHECK(vote(cands({"hello", "helo", "hello"}), e) == "hello");
  CHECK(vote(cands({"helo", "helo", "hello"}), e) == "helo");
  CHECK(vote(cands({"", "", "abc"}), e) == "");
  CHECK(vote(cands({"abc", "abc", ""}), e) == "abc");
}

TEST_CASE("vote works on NFC scalars") {
  const auto e = ranked(3);
  // Decomposed and composed spellings of the same text agree after normalization.
  CHECK(vote(cands({"caf\xC3\xA9", "cafe\xCC\x81", "cafe"}), e) == "caf\xC3\xA9");
}

TEST_CASE("vote(x, x, y) = x") {
  Rng rng(99);
  const auto e = ranked(3);
  for (int t = 0; t < 300; ++t) {
    const auto x = random_word(rng, kAlphabet, 0, 12);
    const auto y = random_word(rng, kAlphabet, 0, 12);
    CHECK(vote(cands({x, x, y}), e) == x);
    CHECK(vote(cands({x, y, x}), e) == x);
    CHECK(vote(cands({y, x, x}), e) == x);
  }
}

TEST_CASE("vote over identical candidates is the identity") {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto x = random_word(rng, kAlphabet, 0, 15);
    for (int n = 1; n <= 4; ++n) {
      std::vector<OcrCandidate> c(static_cast<std::size_t>(n), OcrCandidate{"", x, std::nullopt});
      for (int i = 0; i < n; ++i) c[static_cast<std::size_t>(i)].engine_id = "e" + std::to_string(i + 1);
      CHECK(vote(c, ranked(n)) == x);
    }
  }
}

TEST_CASE("vote is order independent under strict majorities") {
  Rng rng(17);
  const auto e = ranked(5);
  for (int t = 0; t < 200; ++t) {
    const auto x = random_word(rng, kAlphabet, 3, 12);
    // Three faithful copies and two single-substitution variants: every column has a strict majority.
    std::vector<std::string> texts{x, x, x, corrupt_text(x, 0.2, rng.next()), corrupt_text(x, 0.2, rng.next())};
    std::vector<OcrCandidate> c;
    for (std::size_t i = 0; i < texts.size(); ++i) c.push_back({"e" + std::to_string(i + 1), texts[i], std::nullopt});
    const auto base = vote(c, e);
    CHECK(base == x);
    rng.shuffle(c);
    CHECK(vote(c, e) == base);
  }
}

TEST_CASE("vote never invents characters") {
  Rng rng(23);
  const auto e = ranked(3);
  for (int t = 0; t < 300; ++t) {
    const std::vector<std::string> texts{random_word(rng, kAlphabet, 0, 8), random_word(rng, kAlphabet, 0, 8),
                                         random_word(rng, kAlphabet, 0, 8)};
    std::set<char32_t> seen;
    for (const auto& s : texts)
      for (char32_t c : unicode::decode(s)) seen.insert(c);
    const auto out = unicode::decode(vote(cands({texts[0], texts[1], texts[2]}), e));
    for (char32_t c : out) CHECK(seen.count(c));
  }
}

TEST_CASE("one engine corrupting 10% is outvoted") {
  Rng rng(2024);
  const auto e = ranked(3);
  int ok = 0;
  for (int t = 0; t < 200; ++t) {
    const auto truth = random_word(rng, kAlphabet, 5, 40);
    const auto noisy = corrupt_text(truth, 0.1, rng.next());
    ok += vote(cands({truth, noisy, truth}), e) == truth;
  }
  CHECK(ok == 200);
}

TEST_CASE("corrupt_text is deterministic and rate-bounded") {
  const std::string s(1000, 'a');
  CHECK(corrupt_text(s, 0.1, 7) == corrupt_text(s, 0.1, 7));
  CHECK(corrupt_text(s, 0.0, 7) == s);
  const auto c = unicode::decode(corrupt_text(s, 0.1, 7));
  REQUIRE(c.size() == 1000);
  int changed = 0;
  for (char32_t ch : c) changed += ch != U'a';
  CHECK(changed > 50);
  CHECK(changed < 150);
}

TEST_CASE("run_engines collects candidates and failures") {
  const PageImage page = small_page();
  const Box region{10, 10, 50, 20};
  const auto three = run_engines(page, region, {fixed("a", 1, "x"), fixed("b", 2, "x"), fixed("c", 3, "y")});
  CHECK(three.candidates.size() == 3);
  CHECK(three.failures.empty());

  const auto two = run_engines(page, region, {fixed("a", 1, "x"), failing("b", 2), fixed("c", 3, "y")});
  CHECK(two.candidates.size() == 2);
  REQUIRE(two.failures.size() == 1);
  CHECK(two.failures[0].engine_id == "b");

  try {
    run_engines(page, region, {failing("a", 1), failing("b", 2)});
    FAIL("expected failure");
  } catch (const StageError& e) {
    const std::string what = e.what();
    CHECK(what.find("a crashed") != std::string::npos);
    CHECK(what.find("b crashed") != std::string::npos);
  }
}

TEST_CASE("command engine returns the script's output") {
  const auto dir = testing::scratch_dir("ocr-cmd");
  const auto script = dir / "echo.sh";
  {
    std::ofstream s(script);
    s << "#!/bin/sh\n"
         "test -s \"$1\" || exit 3\n"
         "printf '%s\\n' '\xE0\xA4\xA8\xE0\xA4\xAE\xE0\xA4\xB8\xE0\xA5\x8D\xE0\xA4\x95\xE0\xA4\xBE\xE0\xA4\xB0 ok'\n";
  }
  fs::permissions(script, fs::perms::owner_all);
  const auto engine = make_command_engine("echo", 1, "'" + script.string() + "' {image}");
  const auto run = run_engines(small_page(), {0, 0, 40, 40}, {engine});
  REQUIRE(run.candidates.size() == 1);
  CHECK(run.candidates[0].text == "\xE0\xA4\xA8\xE0\xA4\xAE\xE0\xA4\xB8\xE0\xA5\x8D\xE0\xA4\x95\xE0\xA4\xBE\xE0\xA4\xB0 ok");

  const auto bad = make_command_engine("bad", 2, "sh -c 'exit 4' {image}");
  const auto mixed = run_engines(small_page(), {0, 0, 40, 40}, {engine, bad});
  CHECK(mixed.candidates.size() == 1);
  CHECK(mixed.failures.size() == 1);

  CHECK_THROWS_AS(make_command_engine("x", 1, "cat"), ValidationError);
}

TEST_CASE("extract_text with faithful mock engines reproduces the truth") {
  const auto dir = testing::scratch_dir("ocr-extract");
  const auto bundle = gen_fixture(6);
  write_fixture(bundle, dir);
  const auto truth = MockTruth::load(dir / "truth.json");
  const std::vector<OcrEngineAdapter> engines{make_mock_engine("m1", 1, truth), make_mock_engine("m2", 2, truth),
                                              make_mock_engine("m3", 3, truth, {0.1, 4, false})};
  int text_rois = 0;
  for (const auto& t : bundle.articles) {
    if (t.parent) continue;
    PageImage page;
    page.page_id = t.language + std::to_string(t.page_number);
    page.language = t.language;
    page.date = bundle.spec.date;
    page.page_number = t.page_number;
    for (const auto& p : bundle.pages)
      if (p.language == t.language && p.page_number == t.page_number) page.gray = p.pixels;
    ArticleRecord a;
    a.article_id = page.page_id + "-" + t.key;
    a.page_id = page.page_id;
    a.language = t.language;
    a.bounds = t.bounds;
    for (const auto& r : t.rois)
      a.rois.push_back({r.kind, r.box, r.seq_index, r.sub_index, 0, std::nullopt});
    const auto ex = extract_text(a, page, engines, dir / "images");
    CHECK(ex.errors.empty());
    for (std::size_t i = 0; i < t.rois.size(); ++i) {
      const auto& got = ex.article.rois[i];
      if (t.rois[i].kind == RoiKind::Image) {
        REQUIRE(got.text);
        CHECK(*got.text == exported_image_name(a, got));
        CHECK(fs::exists(dir / "images" / *got.text));
      } else {
        ++text_rois;
        REQUIRE(got.text);
        CHECK(*got.text == t.rois[i].text);
      }
    }
  }
  CHECK(text_rois > 10);
}

TEST_CASE("image-only article exports the image and has no texts") {
  const auto dir = testing::scratch_dir("ocr-image-only");
  ArticleRecord a;
  a.article_id = "p1-a1";
  a.page_id = "p1";
  a.rois = {{RoiKind::Image, {10, 10, 60, 60}, 1, std::nullopt, 0, std::nullopt}};
  const auto ex = extract_text(a, small_page(), {failing("never", 1)}, dir);
  CHECK(ex.errors.empty());
  CHECK(*ex.article.rois[0].text == "p1-a1_I1.png");
  CHECK(fs::exists(dir / "p1-a1_I1.png"));
}

TEST_CASE("per-ROI failures are recorded, not fatal") {
  ArticleRecord a;
  a.article_id = "p1-a1";
  a.page_id = "p1";
  a.rois = {{RoiKind::Headline, {10, 10, 60, 20}, 1, 0, 0, std::nullopt},
            {RoiKind::Content, {10, 40, 60, 60}, 1, std::nullopt, 0, std::nullopt}};
  int calls = 0;
  OcrEngineAdapter flaky{"flaky", 1, [&](const PageImage&, const Box& b) -> std::string {
                           ++calls;
                           if (b.y == 10) throw StageError("no text found");
                           return "body";
                         }};
  const auto ex = extract_text(a, small_page(), {flaky});
  REQUIRE(ex.errors.size() == 1);
  CHECK(ex.errors[0].kind == RoiKind::Headline);
  CHECK_FALSE(ex.article.rois[0].text);
  CHECK(*ex.article.rois[1].text == "body");
  CHECK(calls == 2);
}
