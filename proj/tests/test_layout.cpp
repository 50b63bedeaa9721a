#include <map>

#include "doctest.h"
#include "json.hpp"

#include "cforge/error.hpp"
#include "cforge/fixture.hpp"
#include "cforge/layout.hpp"

using namespace cforge;

namespace {

PageImage page_of(const FixturePage& p, const Date& date) {
  PageImage img;
  img.page_id = p.language + "-p" + std::to_string(p.page_number);
  img.language = p.language;
  img.date = date;
  img.page_number = p.page_number;
  img.gray = p.pixels;
  return img;
}

PageSet page_set(const FixtureBundle& b) {
  PageSet set;
  for (const auto& p : b.pages) set.pages.push_back(page_of(p, b.spec.date));
  set.languages = {b.spec.left_language, b.spec.right_language};
  return set;
}

// Truth article with the best bounds IoU, restricted to the same page and nesting level.
const TruthArticle* best_truth(const FixtureBundle& b, const PageImage& page, const ArticleRecord& a, double& best) {
  const TruthArticle* hit = nullptr;
  best = 0;
  for (const auto& t : b.articles) {
    if (t.language != page.language || t.page_number != page.page_number) continue;
    if (t.parent.has_value() != a.parent.has_value()) continue;
    const double o = iou(t.bounds, a.bounds);
    if (o > best) {
      best = o;
      hit = &t;
    }
  }
  return hit;
}

ArticleRecord simple_article() {
  ArticleRecord a;
  a.article_id = "p1-a1";
  a.page_id = "p1";
  a.language = "kok";
  a.bounds = {10, 10, 300, 400};
  a.rois = {{RoiKind::Headline, {20, 20, 200, 30}, 1, 0, 0, "headline text"},
            {RoiKind::Image, {20, 60, 200, 150}, 1, std::nullopt, 0, std::nullopt},
            {RoiKind::Caption, {20, 215, 200, 14}, 1, std::nullopt, 0, "caption text"},
            {RoiKind::Content, {20, 240, 200, 100}, 1, std::nullopt, 0, "content text"}};
  return a;
}

PageImage blank_page(int w = 400, int h = 500) {
  PageImage p;
  p.page_id = "p1";
  p.language = "kok";
  p.gray = Raster(w, h, 1, 255);
  return p;
}

}  // namespace

TEST_CASE("uniform white page yields no articles and a warning") {
  const auto seg = segment_page(blank_page());
  CHECK(seg.articles.empty());
  CHECK_FALSE(seg.warnings.empty());
}

TEST_CASE("fixture articles are found with their boxes and kinds") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto bundle = gen_fixture(seed);
    int truth_rois = 0, hit_rois = 0;
    for (const auto& fp : bundle.pages) {
      const PageImage page = page_of(fp, bundle.spec.date);
      const auto articles = extract_articles(page);
      int truth_articles = 0;
      for (const auto& t : bundle.articles) truth_articles += t.language == page.language && t.page_number == page.page_number;
      CHECK(static_cast<int>(articles.size()) == truth_articles);
      for (const auto& a : articles) {
        double best = 0;
        const TruthArticle* t = best_truth(bundle, page, a, best);
        REQUIRE(t);
        CHECK(best >= 0.9);
        for (const auto& tr : t->rois) {
          ++truth_rois;
          for (const auto& r : a.rois)
            if (r.kind == tr.kind && iou(r.box, tr.box) >= 0.8 && r.seq_index == tr.seq_index &&
                r.sub_index == tr.sub_index)
              ++hit_rois;
        }
      }
    }
    CHECK(hit_rois == truth_rois);
  }
}

TEST_CASE("embedded boxes become children with a parent") {
  FixtureSpec spec;
  spec.embedded_rate = 1.0;
  spec.left_articles = 2;
  spec.right_articles = 2;
  spec.shared_images = 1;
  const auto bundle = gen_fixture(11, spec);
  const PageImage page = page_of(bundle.pages.front(), bundle.spec.date);
  const auto articles = extract_articles(page);
  std::map<std::string, const ArticleRecord*> by_id;
  for (const auto& a : articles) by_id[a.article_id] = &a;
  int children = 0;
  for (const auto& a : articles) {
    if (!a.parent) continue;
    ++children;
    REQUIRE(by_id.count(*a.parent));
    const auto& parent = *by_id[*a.parent];
    CHECK_FALSE(parent.parent);
    for (const auto& r : a.rois) {
      CHECK(parent.bounds.contains(r.box, 2));
      CHECK(r.embed_level == 1);
    }
    CHECK_NOTHROW(validate_article(a, page, &parent));
  }
  CHECK(children >= 1);
}

TEST_CASE("article hulls are pairwise disjoint and classification is idempotent") {
  const auto bundle = gen_fixture(5);
  for (const auto& fp : bundle.pages) {
    const PageImage page = page_of(fp, bundle.spec.date);
    const auto articles = extract_articles(page);
    for (std::size_t i = 0; i < articles.size(); ++i) {
      for (std::size_t j = i + 1; j < articles.size(); ++j) {
        if (articles[i].parent || articles[j].parent) continue;
        CHECK_FALSE(overlaps(articles[i].bounds, articles[j].bounds, 2));
      }
      CHECK(classify_rois(articles[i], page) == articles[i]);
    }
  }
}

TEST_CASE("articles without photos have no image or caption regions") {
  FixtureSpec spec;
  spec.shared_images = 0;
  spec.distractor_photo_rate = 0;
  spec.embedded_rate = 0;
  const auto bundle = gen_fixture(4, spec);
  for (const auto& fp : bundle.pages)
    for (const auto& a : extract_articles(page_of(fp, bundle.spec.date)))
      for (const auto& r : a.rois) {
        CHECK(r.kind != RoiKind::Image);
        CHECK(r.kind != RoiKind::Caption);
      }
}

TEST_CASE("two photos are numbered in reading order with paired captions") {
  FixtureSpec spec;
  spec.second_photo_rate = 1.0;
  spec.left_articles = 2;
  spec.right_articles = 2;
  spec.shared_images = 2;
  spec.embedded_rate = 0;
  const auto bundle = gen_fixture(9, spec);
  int checked = 0;
  for (const auto& fp : bundle.pages)
    for (const auto& a : extract_articles(page_of(fp, bundle.spec.date))) {
      std::map<int, Box> images, captions;
      for (const auto& r : a.rois) {
        if (r.kind == RoiKind::Image) images[r.seq_index] = r.box;
        if (r.kind == RoiKind::Caption) captions[r.seq_index] = r.box;
      }
      if (images.size() < 2) continue;
      ++checked;
      CHECK(images.count(1));
      CHECK(images.count(2));
      CHECK(images[1].x < images[2].x);
      for (const auto& [k, cap] : captions) {
        REQUIRE(images.count(k));
        CHECK(cap.y >= images[k].bottom());
        CHECK(cap.x < images[k].right());
        CHECK(images[k].x < cap.right());
      }
    }
  CHECK(checked >= 2);
}

TEST_CASE("annotations load as declared and reject broken records") {
  PageSet set;
  set.pages.push_back(blank_page());
  set.languages = {"kok", "mar"};
  const std::string good = R"([{"article_id":"x1","page_id":"p1","rois":[
      {"kind":"H","box":[20,20,200,30],"seq_index":1,"sub_index":0},
      {"kind":"I","box":[20,60,200,150],"seq_index":1},
      {"kind":"P","box":[20,215,200,14],"seq_index":1},
      {"kind":"C","box":[20,240,200,100],"seq_index":1}]}])";
  const auto loaded = load_annotations_text(good, set);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].rois.size() == 4);
  CHECK(loaded[0].rois[2].kind == RoiKind::Caption);

  const std::string orphan_caption = R"([{"article_id":"x1","page_id":"p1","rois":[
      {"kind":"I","box":[20,60,200,150],"seq_index":1},
      {"kind":"P","box":[20,215,200,14],"seq_index":2}]}])";
  CHECK_THROWS_AS(load_annotations_text(orphan_caption, set), ValidationError);

  const std::string unknown_page = R"([{"article_id":"x1","page_id":"zz","rois":[
      {"kind":"C","box":[20,240,200,100],"seq_index":1}]}])";
  try {
    load_annotations_text(unknown_page, set);
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("x1") != std::string::npos);
  }

  const std::string overlapping = R"([{"article_id":"x1","page_id":"p1","rois":[
      {"kind":"C","box":[20,20,100,100],"seq_index":1},
      {"kind":"C","box":[50,50,100,100],"seq_index":2}]}])";
  try {
    load_annotations_text(overlapping, set);
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("[50,50,100,100]") != std::string::npos);
  }

  const std::string headline_without_sub = R"([{"article_id":"x1","page_id":"p1","rois":[
      {"kind":"H","box":[20,20,200,30],"seq_index":1}]}])";
  CHECK_THROWS_AS(load_annotations_text(headline_without_sub, set), ValidationError);
}

TEST_CASE("segmentation output round-trips through the annotation format") {
  const auto bundle = gen_fixture(2);
  const PageSet set = page_set(bundle);
  std::vector<ArticleRecord> all;
  for (const auto& p : set.pages)
    for (auto& a : extract_articles(p)) all.push_back(std::move(a));
  const auto reloaded = load_annotations_text(to_annotation_json(all), set);
  REQUIRE(reloaded.size() == all.size());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(reloaded[i] == all[i]);
}

TEST_CASE("serialize_article marker grammar") {
  const auto a = simple_article();
  const std::string doc = serialize_article(a);
  CHECK(doc ==
        "#article p1-a1 page=p1 parent=-\n"
        "[H|1|0]\nheadline text\n"
        "[I|1] file=p1-a1_I1.png\n"
        "[P|1]\ncaption text\n"
        "[C|1]\ncontent text\n");

  ArticleRecord child;
  child.article_id = "p1-a1-e1";
  child.page_id = "p1";
  child.parent = "p1-a1";
  child.rois = {{RoiKind::Headline, {30, 250, 150, 20}, 2, 0, 1, "embedded"}};
  CHECK(serialize_article(child) == "#article p1-a1-e1 page=p1 parent=p1-a1\n[H|2|0]\nembedded\n");

  auto missing = a;
  missing.rois[3].text.reset();
  try {
    serialize_article(missing);
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("C1") != std::string::npos);
  }
}

TEST_CASE("reading order is band then column") {
  const std::vector<Box> boxes{{300, 10, 100, 40}, {10, 12, 100, 40}, {10, 100, 100, 40}, {200, 95, 50, 50}};
  CHECK(reading_order(boxes) == std::vector<std::size_t>{1, 0, 2, 3});
}
