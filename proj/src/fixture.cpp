#include "cforge/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "json.hpp"

#include "cforge/digest.hpp"
#include "cforge/error.hpp"
#include "cforge/rng.hpp"
#include "cforge/unicode.hpp"

namespace cforge {

using nlohmann::json;

namespace {

// Page geometry of the synthetic editions.
constexpr int kMargin = 40;
constexpr int kGutter = 24;
constexpr int kFrame = 2;
constexpr int kPad = 10;  // frame + white padding
constexpr int kBlockGap = 16;
constexpr int kCaptionGap = 10;
constexpr int kBodyFont = 10;
constexpr int kBodyPitch = 14;
constexpr int kHeadFont = 24;
constexpr int kHeadPitch = 30;
constexpr int kSubFont = 20;
constexpr int kSubPitch = 26;
constexpr int kEmbedHeadFont = 22;
constexpr int kEmbedHeadPitch = 28;

Raster from_mat(const cv::Mat& m) {
  Raster r(m.cols, m.rows, 1);
  for (int y = 0; y < m.rows; ++y)
    std::copy_n(m.ptr<std::uint8_t>(y), m.cols, r.data.begin() + static_cast<std::ptrdiff_t>(y) * m.cols);
  return r;
}

cv::Mat to_mat(const Raster& r) {
  cv::Mat m(r.height, r.width, CV_8UC1);
  for (int y = 0; y < r.height; ++y)
    std::copy_n(r.data.begin() + static_cast<std::ptrdiff_t>(y) * r.width, r.width, m.ptr<std::uint8_t>(y));
  return m;
}

// ---------------------------------------------------------------- vocabulary

struct Vocabulary {
  std::vector<std::string> pivot, left, right;
  std::vector<double> cumulative;  // Zipf CDF over ranks

  std::size_t draw(Rng& rng) const {
    const double u = rng.uniform01() * cumulative.back();
    return static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                                    cumulative.begin());
  }
};

std::string make_word(Rng& rng, char32_t first, char32_t last, bool latin) {
  static const char32_t kMatras[] = {0, 0x093E, 0x093F, 0x0940, 0x0941, 0x0942, 0x0947, 0x0948, 0x094B, 0x094C};
  static const char kConsonants[] = "bdfgklmnprstvz";
  static const char kVowels[] = "aeiou";
  const int syllables = static_cast<int>(rng.uniform_int(1, 3));
  std::string out;
  for (int s = 0; s < syllables; ++s) {
    if (latin) {
      out.push_back(kConsonants[rng.uniform_int(0, 13)]);
      out.push_back(kVowels[rng.uniform_int(0, 4)]);
    } else {
      out += unicode::encode(static_cast<char32_t>(rng.uniform_int(first, last)));
      const char32_t m = kMatras[rng.uniform_int(0, 9)];
      if (m) out += unicode::encode(m);
    }
  }
  return out;
}

Vocabulary make_vocabulary(Rng& rng, int size) {
  Vocabulary v;
  std::set<std::string> seen_p, seen_l, seen_r;
  auto fresh = [&](std::set<std::string>& seen, auto gen) {
    for (;;) {
      std::string w = gen();
      if (seen.insert(w).second) return w;
    }
  };
  for (int i = 0; i < size; ++i) {
    v.pivot.push_back(fresh(seen_p, [&] { return make_word(rng, 0, 0, true); }));
    v.left.push_back(fresh(seen_l, [&] { return make_word(rng, 0x0915, 0x0927, false); }));
    v.right.push_back(fresh(seen_r, [&] { return make_word(rng, 0x0928, 0x0939, false); }));
  }
  double acc = 0;
  for (int i = 0; i < size; ++i) {
    acc += 1.0 / (i + 2.0);
    v.cumulative.push_back(acc);
  }
  return v;
}

struct SentencePlan {
  std::vector<std::size_t> tokens;
  bool question = false;
};

SentencePlan draw_sentence(Rng& rng, const Vocabulary& v, int min_len, int max_len) {
  SentencePlan s;
  const int n = static_cast<int>(rng.uniform_int(min_len, max_len));
  for (int i = 0; i < n; ++i) s.tokens.push_back(v.draw(rng));
  s.question = rng.bernoulli(0.12);
  return s;
}

SentencePlan draw_body_sentence(Rng& rng, const Vocabulary& v) {
  return rng.bernoulli(0.12) ? draw_sentence(rng, v, 20, 26) : draw_sentence(rng, v, 4, 17);
}

std::string render_sentence(const SentencePlan& s, const Vocabulary& v, bool left, bool terminal) {
  const auto& words = left ? v.left : v.right;
  std::string out;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[s.tokens[i]];
  }
  if (terminal) out += s.question ? "?" : (left ? "\xE0\xA5\xA4" : ".");  // danda for the left edition
  return out;
}

// ---------------------------------------------------------------- text rendering

struct Glyph {
  int w = 0, h = 0;
  std::vector<std::uint8_t> ink;
};

class GlyphCache {
 public:
  const Glyph& get(char32_t cp, int size) {
    const auto key = std::make_pair(cp, size);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Glyph g;
    g.h = size;
    g.w = std::max(3, static_cast<int>(std::lround(0.6 * size)));
    g.ink.assign(static_cast<std::size_t>(g.w) * g.h, 0);
    std::uint64_t bits = fnv1a64(unicode::encode(cp));
    const int stem = std::max(1, size / 10);
    for (int y = 0; y < g.h; ++y)
      for (int x = 0; x < stem; ++x) g.ink[static_cast<std::size_t>(y) * g.w + x] = 1;
    // 4x7 pattern to the right of the stem.
    for (int gy = 0; gy < 7; ++gy) {
      for (int gx = 0; gx < 4; ++gx) {
        const bool on = ((bits >> (gy * 4 + gx)) & 3) == 0 || gy == 0 || gy == 6 ? ((bits >> (gy * 4 + gx + 29)) & 1) : false;
        if (!on) continue;
        const int x0 = stem + (g.w - stem) * gx / 4, x1 = stem + (g.w - stem) * (gx + 1) / 4;
        const int y0 = g.h * gy / 7, y1 = g.h * (gy + 1) / 7;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) g.ink[static_cast<std::size_t>(y) * g.w + x] = 1;
      }
    }
    return cache_.emplace(key, std::move(g)).first->second;
  }

 private:
  std::map<std::pair<char32_t, int>, Glyph> cache_;
};

int letter_gap(int size) { return std::max(2, static_cast<int>(std::lround(0.2 * size))); }
int word_gap(int size) { return std::max(4, static_cast<int>(std::lround(0.5 * size))); }

class Canvas {
 public:
  Canvas(int w, int h) : r(w, h, 1, 255) {}
  Raster r;
  GlyphCache* glyphs = nullptr;

  int word_width(const std::u32string& word, int size) {
    int w = 0;
    for (std::size_t i = 0; i < word.size(); ++i) w += glyphs->get(word[i], size).w + (i ? letter_gap(size) : 0);
    return w;
  }

  /// Word-wrapped text block; returns the ink bounding box.
  Box text(const std::string& utf8, int x, int y, int max_width, int size, int pitch) {
    std::vector<std::u32string> words;
    std::u32string cur;
    for (char32_t c : unicode::decode(utf8)) {
      if (c == U' ') {
        if (!cur.empty()) words.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) words.push_back(cur);
    Box ink;
    int cx = x, cy = y;
    bool line_start = true;
    for (const auto& word : words) {
      const int ww = word_width(word, size);
      if (!line_start && cx + word_gap(size) + ww > x + max_width) {
        cx = x;
        cy += pitch;
        line_start = true;
      }
      if (!line_start) cx += word_gap(size);
      for (std::size_t i = 0; i < word.size(); ++i) {
        const Glyph& g = glyphs->get(word[i], size);
        if (i) cx += letter_gap(size);
        for (int gy = 0; gy < g.h; ++gy)
          for (int gx = 0; gx < g.w; ++gx)
            if (g.ink[static_cast<std::size_t>(gy) * g.w + gx]) r.at(cx + gx, cy + gy) = 0;
        ink = hull(ink, Box{cx, cy, g.w, g.h});
        cx += g.w;
      }
      line_start = false;
    }
    return ink;
  }

  void frame(const Box& b) {
    for (int t = 0; t < kFrame; ++t) {
      for (int x = b.x; x < b.right(); ++x) {
        r.at(x, b.y + t) = 0;
        r.at(x, b.bottom() - 1 - t) = 0;
      }
      for (int y = b.y; y < b.bottom(); ++y) {
        r.at(b.x + t, y) = 0;
        r.at(b.right() - 1 - t, y) = 0;
      }
    }
  }

  void blit(const Raster& img, int x, int y) {
    for (int yy = 0; yy < img.height; ++yy)
      for (int xx = 0; xx < img.width; ++xx) r.at(x + xx, y + yy) = img.at(xx, yy);
  }
};

// ---------------------------------------------------------------- article plans

struct PhotoPlan {
  Raster image;
  SentencePlan caption;
};

struct EmbeddedPlan {
  SentencePlan headline;
  std::vector<SentencePlan> content;
};

struct ArticlePlan {
  std::string key;
  bool left = true;
  SentencePlan headline;
  std::optional<SentencePlan> subheadline;
  std::vector<PhotoPlan> photos;
  std::vector<std::vector<SentencePlan>> paragraphs;
  std::optional<EmbeddedPlan> embedded;
};

struct RenderedArticle {
  Raster pixels;
  TruthArticle truth;
  std::optional<TruthArticle> embedded;
};

TruthRoi text_roi(RoiKind kind, const std::vector<SentencePlan>& sentences, const Vocabulary& v, bool left,
                  bool terminal) {
  TruthRoi roi;
  roi.kind = kind;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) roi.text.push_back(' ');
    const std::size_t begin = roi.text.size();
    roi.text += render_sentence(sentences[i], v, left, terminal);
    roi.sentences.emplace_back(begin, roi.text.size());
  }
  return roi;
}

RenderedArticle render_article(const ArticlePlan& plan, const Vocabulary& v, GlyphCache& glyphs, int width) {
  Canvas c(width, 4000);
  c.glyphs = &glyphs;
  RenderedArticle out;
  out.truth.key = plan.key;
  const int inner_x = kPad, inner_w = width - 2 * kPad;
  int y = kPad;
  int contents = 0;

  auto place_text = [&](TruthRoi roi, int size, int pitch, int x, int w, std::vector<TruthRoi>& into) {
    roi.box = c.text(roi.text, x, y, w, size, pitch);
    y = roi.box.bottom();
    into.push_back(std::move(roi));
  };

  TruthRoi head = text_roi(RoiKind::Headline, {plan.headline}, v, plan.left, false);
  head.seq_index = 1;
  head.sub_index = 0;
  place_text(head, kHeadFont, kHeadPitch, inner_x, inner_w, out.truth.rois);
  if (plan.subheadline) {
    y += kBlockGap;
    TruthRoi sub = text_roi(RoiKind::Headline, {*plan.subheadline}, v, plan.left, false);
    sub.seq_index = 1;
    sub.sub_index = 1;
    place_text(sub, kSubFont, kSubPitch, inner_x, inner_w, out.truth.rois);
  }

  if (!plan.photos.empty()) {
    y += kBlockGap;
    const int top = y;
    int x = inner_x;
    int bottom = y;
    for (std::size_t i = 0; i < plan.photos.size(); ++i) {
      const auto& ph = plan.photos[i];
      c.blit(ph.image, x, top);
      TruthRoi img;
      img.kind = RoiKind::Image;
      img.box = {x, top, ph.image.width, ph.image.height};
      img.seq_index = static_cast<int>(i) + 1;
      out.truth.rois.push_back(img);
      y = top + ph.image.height + kCaptionGap;
      TruthRoi cap = text_roi(RoiKind::Caption, {ph.caption}, v, plan.left, true);
      cap.seq_index = static_cast<int>(i) + 1;
      cap.box = c.text(cap.text, x, y, ph.image.width, kBodyFont, kBodyPitch);
      bottom = std::max(bottom, cap.box.bottom());
      out.truth.rois.push_back(std::move(cap));
      x += ph.image.width + 2 * kGutter;
    }
    y = bottom;
  }

  for (const auto& para : plan.paragraphs) {
    y += kBlockGap;
    TruthRoi roi = text_roi(RoiKind::Content, para, v, plan.left, true);
    roi.seq_index = ++contents;
    place_text(roi, kBodyFont, kBodyPitch, inner_x, inner_w, out.truth.rois);
  }

  if (plan.embedded) {
    y += kBlockGap;
    const int ew = inner_w * 4 / 5;
    const Box frame{inner_x, y, ew, 0};
    TruthArticle child;
    child.key = plan.key + "-e";
    child.parent = plan.key;
    y += kPad;
    TruthRoi eh = text_roi(RoiKind::Headline, {plan.embedded->headline}, v, plan.left, false);
    eh.seq_index = 2;
    eh.sub_index = 0;
    place_text(eh, kEmbedHeadFont, kEmbedHeadPitch, inner_x + kPad, ew - 2 * kPad, child.rois);
    y += kBlockGap;
    TruthRoi ec = text_roi(RoiKind::Content, plan.embedded->content, v, plan.left, true);
    ec.seq_index = 1;
    place_text(ec, kBodyFont, kBodyPitch, inner_x + kPad, ew - 2 * kPad, child.rois);
    y += kPad;
    child.bounds = {frame.x, frame.y, frame.w, y - frame.y};
    c.frame(child.bounds);
    out.embedded = std::move(child);
  }

  const int height = y + kPad;
  out.truth.bounds = {0, 0, width, height};
  c.frame(out.truth.bounds);
  out.pixels = crop(c.r, {0, 0, width, height});
  return out;
}

void offset(TruthArticle& a, int dx, int dy) {
  a.bounds.x += dx;
  a.bounds.y += dy;
  for (auto& r : a.rois) {
    r.box.x += dx;
    r.box.y += dy;
  }
}

json truth_roi_json(const TruthRoi& r) {
  json j{{"kind", std::string(1, roi_letter(r.kind))},
         {"box", {r.box.x, r.box.y, r.box.w, r.box.h}},
         {"seq_index", r.seq_index},
         {"text", r.text}};
  if (r.sub_index) j["sub_index"] = *r.sub_index;
  json offs = json::array();
  for (const auto& [b, e] : r.sentences) offs.push_back({b, e});
  j["sentences"] = offs;
  return j;
}

void write_lexicon(const std::filesystem::path& p, const LexiconEntries& entries) {
  std::ofstream out(p, std::ios::binary);
  for (const auto& [src, piv] : entries) out << src << '\t' << piv << '\n';
}

}  // namespace

int FixtureBundle::page_count(const std::string& language) const {
  int n = 0;
  for (const auto& p : pages) n += p.language == language ? 1 : 0;
  return n;
}

const TruthArticle* FixtureBundle::article(const std::string& key) const {
  for (const auto& a : articles)
    if (a.key == key) return &a;
  return nullptr;
}

Raster make_photo(std::uint64_t seed, int width, int height) {
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + 17);
  cv::Mat m(height, width, CV_8UC1);
  const double a = rng.uniform(40, 115), b = rng.uniform(40, 115);
  const double angle = rng.uniform(0, 2 * M_PI);
  const double cx = std::cos(angle), cy = std::sin(angle);
  const double span = std::abs(cx) * width + std::abs(cy) * height;
  for (int y = 0; y < height; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < width; ++x) {
      double t = (cx * x + cy * y) / span;
      t = t - std::floor(t);
      row[x] = static_cast<std::uint8_t>(a + (b - a) * t);
    }
  }
  const int shapes = std::max(24, width * height / 250);
  const int max_size = std::max(12, std::min(width, height) / 3);
  auto extent = [&] { return 3 + static_cast<int>((max_size - 3) * std::pow(rng.uniform01(), 3.0)); };
  for (int i = 0; i < shapes; ++i) {
    const cv::Scalar value(static_cast<double>(rng.uniform_int(10, 170)));
    const cv::Point center(static_cast<int>(rng.uniform_int(0, width - 1)),
                           static_cast<int>(rng.uniform_int(0, height - 1)));
    const int s1 = extent();
    const int s2 = extent();
    switch (rng.uniform_int(0, 3)) {
      case 0: cv::circle(m, center, s1, value, cv::FILLED, cv::LINE_AA); break;
      case 1: cv::rectangle(m, cv::Rect(center.x - s1, center.y - s2, 2 * s1, 2 * s2), value, cv::FILLED); break;
      case 2:
        cv::ellipse(m, center, cv::Size(s1, s2), rng.uniform(0, 180), 0, 360, value, cv::FILLED, cv::LINE_AA);
        break;
      default: {
        std::vector<cv::Point> tri;
        for (int k = 0; k < 3; ++k)
          tri.emplace_back(center.x + static_cast<int>(rng.uniform_int(-s1, s1)),
                           center.y + static_cast<int>(rng.uniform_int(-s2, s2)));
        cv::fillConvexPoly(m, tri, value, cv::LINE_AA);
      }
    }
  }
  // Multi-scale value noise so that local patches are distinctive.
  cv::Mat texture(height, width, CV_32F, cv::Scalar(0));
  for (int cell : {4, 9, 19}) {
    cv::Mat grid((height + cell - 1) / cell + 2, (width + cell - 1) / cell + 2, CV_32F);
    for (int y = 0; y < grid.rows; ++y)
      for (int x = 0; x < grid.cols; ++x) grid.at<float>(y, x) = static_cast<float>(rng.uniform(-1, 1));
    cv::Mat up;
    cv::resize(grid, up, cv::Size(grid.cols * cell, grid.rows * cell), 0, 0, cv::INTER_CUBIC);
    texture += up(cv::Rect(cell, cell, width, height)) * 24.0;
  }
  cv::Mat shaded;
  m.convertTo(shaded, CV_32F);
  shaded += texture;
  shaded.convertTo(m, CV_8U);
  cv::GaussianBlur(m, m, cv::Size(0, 0), 0.8);
  return from_mat(m);
}

Raster perturb_photo(const Raster& source, double scale, int brightness, int shift) {
  const Raster cut = crop(source, {shift, shift, source.width - shift, source.height - shift});
  cv::Mat m = to_mat(cut);
  if (scale != 1.0) {
    cv::Mat resized;
    const cv::Size size(static_cast<int>(std::lround(cut.width * scale)),
                        static_cast<int>(std::lround(cut.height * scale)));
    cv::resize(m, resized, size, 0, 0, scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
    m = resized;
  }
  Raster out = from_mat(m);
  for (auto& px : out.data) px = static_cast<std::uint8_t>(std::clamp(static_cast<int>(px) + brightness, 0, 255));
  return out;
}

FixtureBundle gen_fixture(std::uint64_t seed, const FixtureSpec& spec) {
  if (spec.shared_images < 0 || spec.shared_images > spec.left_articles || spec.shared_images > spec.right_articles)
    throw ValidationError("fixture spec: more shared images than articles on one side");
  if (spec.left_articles < 0 || spec.right_articles < 0) throw ValidationError("fixture spec: negative article count");
  if (spec.min_sentences < 1 || spec.max_sentences < spec.min_sentences)
    throw ValidationError("fixture spec: bad sentence range");
  if (spec.scale < 0.5 || spec.scale > 1.0 || std::abs(spec.brightness) > 40 || spec.shift < 0 || spec.shift > 40)
    throw ValidationError("fixture spec: perturbation out of range (scale in [0.5,1], |brightness| <= 40)");
  if (spec.left_language == spec.right_language) throw ValidationError("fixture spec: languages must differ");

  FixtureBundle bundle;
  bundle.spec = spec;
  bundle.seed = seed;
  Rng rng(seed);
  const Vocabulary vocab = make_vocabulary(rng, spec.vocabulary);

  const int col_w = (spec.page_width - 2 * kMargin - (spec.columns - 1) * kGutter) / spec.columns;
  const int inner_w = col_w - 2 * kPad;
  std::uint64_t photo_counter = seed * 1000003ULL;

  auto new_photo_pair = [&](bool two) {
    std::vector<std::pair<Raster, Raster>> out;
    const int n = two ? 2 : 1;
    for (int i = 0; i < n; ++i) {
      const int w = two ? static_cast<int>(rng.uniform_int(120, inner_w / 2 - kGutter))
                        : static_cast<int>(rng.uniform_int(190, inner_w));
      const int h = two ? static_cast<int>(rng.uniform_int(100, 130)) : static_cast<int>(rng.uniform_int(140, 190));
      const Raster source = make_photo(++photo_counter, w + spec.shift, h + spec.shift);
      out.emplace_back(crop(source, {0, 0, w, h}), perturb_photo(source, spec.scale, spec.brightness, spec.shift));
    }
    return out;
  };
  auto content = [&](int n) {
    std::vector<SentencePlan> s;
    for (int i = 0; i < n; ++i) s.push_back(draw_body_sentence(rng, vocab));
    return s;
  };
  auto paragraphs = [&](const std::vector<SentencePlan>& s) {
    std::vector<std::vector<SentencePlan>> paras;
    if (s.size() >= 6) {
      const std::size_t cut = s.size() / 2;
      paras.emplace_back(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(cut));
      paras.emplace_back(s.begin() + static_cast<std::ptrdiff_t>(cut), s.end());
    } else if (!s.empty()) {
      paras.push_back(s);
    }
    return paras;
  };

  std::vector<ArticlePlan> left_plans, right_plans;
  for (int i = 0; i < spec.shared_images; ++i) {
    ArticlePlan l, r;
    l.left = true;
    r.left = false;
    l.headline = draw_sentence(rng, vocab, 3, 6);
    r.headline = l.headline;
    if (rng.bernoulli(spec.subheadline_rate)) {
      l.subheadline = draw_sentence(rng, vocab, 3, 6);
      r.subheadline = l.subheadline;
    }
    for (auto& [lp, rp] : new_photo_pair(rng.bernoulli(spec.second_photo_rate))) {
      const SentencePlan cap = draw_sentence(rng, vocab, 4, 9);
      l.photos.push_back({std::move(lp), cap});
      r.photos.push_back({std::move(rp), cap});
    }
    const auto body = content(static_cast<int>(rng.uniform_int(spec.min_sentences, spec.max_sentences)));
    std::vector<SentencePlan> rbody;
    std::vector<std::pair<std::size_t, std::size_t>> kept;  // index in body, index in rbody
    for (std::size_t k = 0; k < body.size(); ++k) {
      if (rng.bernoulli(spec.drop_rate)) continue;
      kept.emplace_back(k, rbody.size());
      rbody.push_back(body[k]);
      if (rng.bernoulli(spec.extra_rate)) rbody.push_back(draw_body_sentence(rng, vocab));
    }
    l.paragraphs = paragraphs(body);
    r.paragraphs = paragraphs(rbody);
    if (rng.bernoulli(spec.embedded_rate)) {
      EmbeddedPlan e;
      e.headline = draw_sentence(rng, vocab, 3, 5);
      e.content = content(static_cast<int>(rng.uniform_int(2, 4)));
      l.embedded = e;
      r.embedded = e;
    }
    left_plans.push_back(std::move(l));
    right_plans.push_back(std::move(r));

    // Ground-truth sentence pairs for this article pair.
    auto add = [&](const SentencePlan& s, RoiKind stream, bool terminal) {
      bundle.sentence_pairs.push_back(
          {render_sentence(s, vocab, true, terminal), render_sentence(s, vocab, false, terminal), stream});
    };
    const auto& lp = left_plans.back();
    add(lp.headline, RoiKind::Headline, false);
    if (lp.subheadline) add(*lp.subheadline, RoiKind::Headline, false);
    for (const auto& ph : lp.photos) add(ph.caption, RoiKind::Caption, true);
    for (const auto& [a, b] : kept) add(body[a], RoiKind::Content, true);
    if (lp.embedded) {
      add(lp.embedded->headline, RoiKind::Headline, false);
      for (const auto& s : lp.embedded->content) add(s, RoiKind::Content, true);
    }
  }
  auto distractor = [&](bool left) {
    ArticlePlan a;
    a.left = left;
    a.headline = draw_sentence(rng, vocab, 3, 6);
    if (rng.bernoulli(spec.distractor_photo_rate)) {
      for (auto& [lp, rp] : new_photo_pair(false)) a.photos.push_back({left ? std::move(lp) : std::move(rp), draw_sentence(rng, vocab, 4, 9)});
    }
    a.paragraphs = paragraphs(content(static_cast<int>(rng.uniform_int(spec.min_sentences, spec.max_sentences))));
    if (rng.bernoulli(spec.embedded_rate / 2)) {
      EmbeddedPlan e;
      e.headline = draw_sentence(rng, vocab, 3, 5);
      e.content = content(static_cast<int>(rng.uniform_int(2, 4)));
      a.embedded = e;
    }
    return a;
  };
  for (int i = spec.shared_images; i < spec.left_articles; ++i) left_plans.push_back(distractor(true));
  for (int i = spec.shared_images; i < spec.right_articles; ++i) right_plans.push_back(distractor(false));

  std::vector<std::string> left_keys, right_keys;
  for (std::size_t i = 0; i < left_plans.size(); ++i) {
    left_plans[i].key = spec.left_language + "-" + std::to_string(i + 1);
    left_keys.push_back(left_plans[i].key);
  }
  for (std::size_t i = 0; i < right_plans.size(); ++i) {
    right_plans[i].key = spec.right_language + "-" + std::to_string(i + 1);
    right_keys.push_back(right_plans[i].key);
  }
  for (int i = 0; i < spec.shared_images; ++i) {
    bundle.article_pairs.emplace_back(left_keys[static_cast<std::size_t>(i)], right_keys[static_cast<std::size_t>(i)]);
    if (left_plans[static_cast<std::size_t>(i)].embedded)
      bundle.article_pairs.emplace_back(left_keys[static_cast<std::size_t>(i)] + "-e",
                                        right_keys[static_cast<std::size_t>(i)] + "-e");
  }

  GlyphCache glyphs;
  auto lay_out = [&](std::vector<ArticlePlan>& plans, const std::string& language) {
    std::vector<std::size_t> order(plans.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const int area_h = spec.page_height - 2 * kMargin;
    int page = 0, column = spec.columns, y = 0;
    Canvas* canvas = nullptr;
    std::vector<std::unique_ptr<Canvas>> canvases;
    for (std::size_t idx : order) {
      RenderedArticle ra = render_article(plans[idx], vocab, glyphs, col_w);
      const int h = ra.pixels.height;
      if (h > area_h) throw ValidationError("fixture spec: article taller than a page column");
      if (column >= spec.columns || y + h > area_h) {
        if (column + 1 < spec.columns && canvas) {
          ++column;
        } else {
          canvases.push_back(std::make_unique<Canvas>(spec.page_width, spec.page_height));
          canvas = canvases.back().get();
          ++page;
          column = 0;
        }
        y = 0;
      }
      const int x0 = kMargin + column * (col_w + kGutter);
      const int y0 = kMargin + y;
      canvas->blit(ra.pixels, x0, y0);
      ra.truth.language = language;
      ra.truth.page_number = page;
      offset(ra.truth, x0, y0);
      bundle.articles.push_back(ra.truth);
      if (ra.embedded) {
        ra.embedded->language = language;
        ra.embedded->page_number = page;
        offset(*ra.embedded, x0, y0);
        bundle.articles.push_back(*ra.embedded);
      }
      y += h + kGutter;
    }
    for (std::size_t p = 0; p < canvases.size(); ++p)
      bundle.pages.push_back({language, static_cast<int>(p) + 1, std::move(canvases[p]->r)});
  };
  lay_out(left_plans, spec.left_language);
  lay_out(right_plans, spec.right_language);

  for (std::size_t i = 0; i < vocab.pivot.size(); ++i) {
    bundle.left_lexicon.emplace_back(vocab.left[i], vocab.pivot[i]);
    bundle.right_lexicon.emplace_back(vocab.right[i], vocab.pivot[i]);
    if (rng.bernoulli(spec.partial_lexicon_coverage)) bundle.left_partial_lexicon.emplace_back(vocab.left[i], vocab.pivot[i]);
    if (rng.bernoulli(spec.partial_lexicon_coverage)) bundle.right_partial_lexicon.emplace_back(vocab.right[i], vocab.pivot[i]);
  }
  return bundle;
}

void write_fixture(const FixtureBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "pages");
  json manifest = json::array();
  for (const auto& p : bundle.pages) {
    const std::string name = "pages/" + p.language + "_p" + std::to_string(p.page_number) + ".png";
    write_png((dir / name).string(), p.pixels);
    manifest.push_back({{"file", name},
                        {"language", p.language},
                        {"date", bundle.spec.date.to_string()},
                        {"page_start", p.page_number}});
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';

  json truth;
  truth["seed"] = bundle.seed;
  truth["date"] = bundle.spec.date.to_string();
  truth["languages"] = {bundle.spec.left_language, bundle.spec.right_language};
  truth["page_counts"] = {{bundle.spec.left_language, bundle.page_count(bundle.spec.left_language)},
                          {bundle.spec.right_language, bundle.page_count(bundle.spec.right_language)}};
  truth["articles"] = json::array();
  for (const auto& a : bundle.articles) {
    json ja{{"key", a.key},
            {"language", a.language},
            {"page_number", a.page_number},
            {"bounds", {a.bounds.x, a.bounds.y, a.bounds.w, a.bounds.h}}};
    if (a.parent) ja["parent"] = *a.parent;
    ja["rois"] = json::array();
    for (const auto& r : a.rois) ja["rois"].push_back(truth_roi_json(r));
    truth["articles"].push_back(std::move(ja));
  }
  truth["article_pairs"] = json::array();
  for (const auto& [l, r] : bundle.article_pairs) truth["article_pairs"].push_back({l, r});
  truth["sentence_pairs"] = json::array();
  for (const auto& s : bundle.sentence_pairs)
    truth["sentence_pairs"].push_back({{"left", s.left}, {"right", s.right}, {"stream", std::string(1, roi_letter(s.stream))}});
  std::ofstream(dir / "truth.json") << truth.dump(1) << '\n';

  const auto& spec = bundle.spec;
  write_lexicon(dir / ("lexicon_" + spec.left_language + ".tsv"), bundle.left_lexicon);
  write_lexicon(dir / ("lexicon_" + spec.right_language + ".tsv"), bundle.right_lexicon);
  write_lexicon(dir / ("lexicon_" + spec.left_language + "_partial.tsv"), bundle.left_partial_lexicon);
  write_lexicon(dir / ("lexicon_" + spec.right_language + "_partial.tsv"), bundle.right_partial_lexicon);

  std::ofstream cfg(dir / "config.ini");
  cfg << "# generated by gen-fixture (seed " << bundle.seed << ")\n"
      << "[run]\n"
      << "languages = " << spec.left_language << "," << spec.right_language << "\n"
      << "manifest = manifest.json\n"
      << "workers = 1\n"
      << "cache_dir = cache\n"
      << "out_dir = out\n\n"
      << "[ocr]\n"
      << "engines = mock_a,mock_b,mock_c\n\n";
  for (int i = 0; i < 3; ++i) {
    const char id = static_cast<char>('a' + i);
    cfg << "[engine:mock_" << id << "]\n"
        << "kind = mock\n"
        << "priority = " << (i + 1) << "\n"
        << "truth = truth.json\n\n";
  }
  cfg << "[sentences]\n"
      << "strategy = las\n"
      << "provider = builtin\n"
      << "lexicon_left = lexicon_" << spec.left_language << ".tsv\n"
      << "lexicon_right = lexicon_" << spec.right_language << ".tsv\n";
}

FixtureBundle read_fixture_truth(const std::filesystem::path& truth_json) {
  std::ifstream in(truth_json, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + truth_json.string());
  json truth = json::parse(in);
  FixtureBundle b;
  b.seed = truth.value("seed", std::uint64_t{0});
  const auto date = Date::parse(truth.at("date").get<std::string>());
  if (!date) throw ValidationError("truth file has a bad date");
  b.spec.date = *date;
  b.spec.left_language = truth.at("languages").at(0).get<std::string>();
  b.spec.right_language = truth.at("languages").at(1).get<std::string>();
  for (const auto& ja : truth.at("articles")) {
    TruthArticle a;
    a.key = ja.at("key").get<std::string>();
    a.language = ja.at("language").get<std::string>();
    a.page_number = ja.at("page_number").get<int>();
    const auto& bb = ja.at("bounds");
    a.bounds = {bb[0].get<int>(), bb[1].get<int>(), bb[2].get<int>(), bb[3].get<int>()};
    if (ja.contains("parent")) a.parent = ja["parent"].get<std::string>();
    for (const auto& jr : ja.at("rois")) {
      TruthRoi r;
      r.kind = roi_kind_from(jr.at("kind").get<std::string>()).value_or(RoiKind::Content);
      const auto& rb = jr.at("box");
      r.box = {rb[0].get<int>(), rb[1].get<int>(), rb[2].get<int>(), rb[3].get<int>()};
      r.seq_index = jr.at("seq_index").get<int>();
      if (jr.contains("sub_index")) r.sub_index = jr["sub_index"].get<int>();
      r.text = jr.at("text").get<std::string>();
      for (const auto& o : jr.at("sentences")) r.sentences.emplace_back(o[0].get<std::size_t>(), o[1].get<std::size_t>());
      a.rois.push_back(std::move(r));
    }
    b.articles.push_back(std::move(a));
  }
  for (const auto& p : truth.at("article_pairs")) b.article_pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
  for (const auto& s : truth.at("sentence_pairs"))
    b.sentence_pairs.push_back({s.at("left").get<std::string>(), s.at("right").get<std::string>(),
                                roi_kind_from(s.at("stream").get<std::string>()).value_or(RoiKind::Content)});
  for (const auto& [lang, n] : truth.at("page_counts").items())
    for (int i = 0; i < n.get<int>(); ++i) b.pages.push_back({lang, i + 1, {}});
  return b;
}

}  // namespace cforge
