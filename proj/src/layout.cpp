#include "cforge/layout.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>

#include "json.hpp"

#include "cforge/error.hpp"

namespace cforge {

using nlohmann::json;

char roi_letter(RoiKind kind) {
  switch (kind) {
    case RoiKind::Headline: return 'H';
    case RoiKind::Image: return 'I';
    case RoiKind::Caption: return 'P';
    case RoiKind::Content: return 'C';
    case RoiKind::Unclassified: break;
  }
  return 'U';
}

std::optional<RoiKind> roi_kind_from(std::string_view name) {
  if (name == "H" || name == "Headline") return RoiKind::Headline;
  if (name == "I" || name == "Image") return RoiKind::Image;
  if (name == "P" || name == "Caption") return RoiKind::Caption;
  if (name == "C" || name == "Content") return RoiKind::Content;
  if (name == "U" || name == "Unclassified") return RoiKind::Unclassified;
  return std::nullopt;
}

namespace {

/// Summed-area table over a 0/1 mask.
class Integral {
 public:
  Integral() = default;
  Integral(const std::vector<std::uint8_t>& mask, int w, int h) : w_(w), h_(h), s_((w + 1) * (h + 1), 0) {
    for (int y = 0; y < h; ++y) {
      int row = 0;
      for (int x = 0; x < w; ++x) {
        row += mask[static_cast<std::size_t>(y) * w + x];
        s_[(y + 1) * (w + 1) + x + 1] = s_[y * (w + 1) + x + 1] + row;
      }
    }
  }
  long long sum(const Box& b) const {
    const int x0 = std::clamp(b.x, 0, w_), x1 = std::clamp(b.right(), 0, w_);
    const int y0 = std::clamp(b.y, 0, h_), y1 = std::clamp(b.bottom(), 0, h_);
    if (x1 <= x0 || y1 <= y0) return 0;
    return static_cast<long long>(s_[y1 * (w_ + 1) + x1]) - s_[y0 * (w_ + 1) + x1] -
           s_[y1 * (w_ + 1) + x0] + s_[y0 * (w_ + 1) + x0];
  }

 private:
  int w_ = 0, h_ = 0;
  std::vector<int> s_;
};

struct BlockStats {
  double density = 0;
  double blank_rows = 0;
  double blank_cols = 0;
  std::vector<int> line_heights;
  double median_line_height = 0;
};

double median_of(std::vector<int> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Ink, rule and frame analysis of one page, shared by segmentation and classification.
class PageAnalysis {
 public:
  PageAnalysis(const Raster& gray, const SegmentationParams& p)
      : gray_(gray), p_(p), w_(gray.width), h_(gray.height) {
    const std::size_t n = static_cast<std::size_t>(w_) * h_;
    ink_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) ink_[i] = gray.data[i] < p.ink_threshold ? 1 : 0;
    ink_sum_ = Integral(ink_, w_, h_);
    build_rules();
    find_frames();
  }

  int width() const { return w_; }
  int height() const { return h_; }
  long long ink(const Box& b) const { return ink_sum_.sum(b); }
  double coverage() const { return static_cast<double>(ink({0, 0, w_, h_})) / (static_cast<double>(w_) * h_); }
  const std::vector<Box>& frames() const { return frames_; }
  const std::vector<int>& frame_parent() const { return frame_parent_; }

  /// Frames whose nearest enclosing frame is `parent` (-1 = top level) and which lie in `within`.
  std::vector<Box> child_frames(int parent, const Box& within) const {
    std::vector<Box> out;
    for (std::size_t i = 0; i < frames_.size(); ++i)
      if (frame_parent_[i] == parent && within.contains(frames_[i])) out.push_back(frames_[i]);
    return out;
  }
  int frame_index(const Box& b) const {
    for (std::size_t i = 0; i < frames_.size(); ++i)
      if (frames_[i] == b) return static_cast<int>(i);
    return -1;
  }

  BlockStats stats(const Box& b) const {
    BlockStats s;
    if (b.empty()) return s;
    s.density = static_cast<double>(ink(b)) / static_cast<double>(b.area());
    int blank_rows = 0, run = 0;
    for (int y = b.y; y < b.bottom(); ++y) {
      if (ink({b.x, y, b.w, 1}) == 0) {
        ++blank_rows;
        if (run >= 2) s.line_heights.push_back(run);
        run = 0;
      } else {
        ++run;
      }
    }
    if (run >= 2) s.line_heights.push_back(run);
    int blank_cols = 0;
    for (int x = b.x; x < b.right(); ++x)
      if (ink({x, b.y, 1, b.h}) == 0) ++blank_cols;
    s.blank_rows = static_cast<double>(blank_rows) / b.h;
    s.blank_cols = static_cast<double>(blank_cols) / b.w;
    s.median_line_height = median_of(s.line_heights);
    return s;
  }

  double edge_density(const Box& b) const {
    if (b.w < 2 || b.h < 2) return 0.0;
    long long edges = 0;
    for (int y = b.y; y + 1 < b.bottom(); ++y) {
      for (int x = b.x; x + 1 < b.right(); ++x) {
        const int g = gray_.at(x, y);
        const int gx = std::abs(gray_.at(x + 1, y) - g);
        const int gy = std::abs(gray_.at(x, y + 1) - g);
        if (gx + gy > p_.image_edge_gradient) ++edges;
      }
    }
    return static_cast<double>(edges) / ((b.w - 1.0) * (b.h - 1.0));
  }

  bool looks_like_image(const BlockStats& s, const Box& b) const {
    return b.w >= p_.image_min_side && b.h >= p_.image_min_side && s.density > p_.image_min_density &&
           s.blank_rows <= p_.image_max_blank_fraction && s.blank_cols <= p_.image_max_blank_fraction &&
           edge_density(b) >= p_.image_min_edge_density;
  }

  bool looks_like_image(const Box& b) const { return looks_like_image(stats(b), b); }

  struct CutConfig {
    int row_gap;
    int col_gap;
    bool image_leaves;
  };

  /// Recursive XY-cut. Leaves are appended in reading order (top-to-bottom, left-to-right).
  void xy_cut(Box region, const std::vector<Box>& opaque, const CutConfig& cfg, std::vector<Box>& leaves,
              int depth = 0) const {
    region = trim(region, opaque);
    if (region.empty()) return;
    for (const Box& o : opaque)
      if (o.contains(region)) {
        leaves.push_back(o);
        return;
      }
    if (depth > 64 || (cfg.image_leaves && looks_like_image(region))) {
      leaves.push_back(region);
      return;
    }
    const auto rows = separators(region, opaque, true, cfg.row_gap);
    const auto cols = separators(region, opaque, false, cfg.col_gap);
    if (rows.bands.empty() && cols.bands.empty()) {
      leaves.push_back(region);
      return;
    }
    bool horizontal = !rows.bands.empty();
    if (!rows.bands.empty() && !cols.bands.empty()) {
      if (rows.has_rule != cols.has_rule) {
        horizontal = rows.has_rule;
      } else {
        horizontal = rows.widest >= cols.widest;
      }
    }
    const auto& chosen = horizontal ? rows : cols;
    int start = horizontal ? region.y : region.x;
    const int end = horizontal ? region.bottom() : region.right();
    auto emit = [&](int a, int b) {
      if (b <= a) return;
      const Box piece = horizontal ? Box{region.x, a, region.w, b - a} : Box{a, region.y, b - a, region.h};
      xy_cut(piece, opaque, cfg, leaves, depth + 1);
    };
    for (const auto& [a, b] : chosen.bands) {
      emit(start, a);
      start = b;
    }
    emit(start, end);
  }

 private:
  struct Separators {
    std::vector<std::pair<int, int>> bands;  // [begin, end) along the cut axis
    bool has_rule = false;
    int widest = 0;
  };

  long long occupancy(const Box& b, const std::vector<Box>& opaque) const {
    long long n = ink(b);
    for (const Box& o : opaque) n += intersect(o, b).area();
    return n;
  }

  Box trim(const Box& region, const std::vector<Box>& opaque) const {
    const Box r = intersect(region, {0, 0, w_, h_});
    if (r.empty()) return {};
    int y0 = r.y, y1 = r.bottom() - 1, x0 = r.x, x1 = r.right() - 1;
    while (y0 <= y1 && occupancy({r.x, y0, r.w, 1}, opaque) == 0) ++y0;
    while (y1 >= y0 && occupancy({r.x, y1, r.w, 1}, opaque) == 0) --y1;
    if (y0 > y1) return {};
    while (x0 <= x1 && occupancy({x0, y0, 1, y1 - y0 + 1}, opaque) == 0) ++x0;
    while (x1 >= x0 && occupancy({x1, y0, 1, y1 - y0 + 1}, opaque) == 0) --x1;
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
  }

  Separators separators(const Box& r, const std::vector<Box>& opaque, bool horizontal, int gap) const {
    const int n = horizontal ? r.h : r.w;
    const int span = horizontal ? r.w : r.h;
    std::vector<char> blank(n, 0), rule(n, 0);
    for (int i = 0; i < n; ++i) {
      const Box line = horizontal ? Box{r.x, r.y + i, r.w, 1} : Box{r.x + i, r.y, 1, r.h};
      bool in_opaque = false;
      for (const Box& o : opaque)
        if (!intersect(o, line).empty()) in_opaque = true;
      if (in_opaque) continue;
      if (ink(line) == 0) {
        blank[i] = 1;
        continue;
      }
      const long long rule_px = horizontal ? free_h_.sum(line) : free_v_.sum(line);
      rule[i] = rule_px >= p_.rule_span * span ? 1 : 0;
    }
    // A thick stack of "rule" lines is a solid block, not a separator.
    for (int i = 0; i < n;) {
      if (!rule[i]) { ++i; continue; }
      int j = i;
      while (j < n && rule[j]) ++j;
      if (j - i > p_.rule_max_thickness) std::fill(rule.begin() + i, rule.begin() + j, 0);
      i = j;
    }
    Separators out;
    for (int i = 0; i < n;) {
      if (!blank[i] && !rule[i]) { ++i; continue; }
      int j = i;
      int blanks = 0;
      bool any_rule = false;
      while (j < n && (blank[j] || rule[j])) {
        blanks += blank[j];
        any_rule = any_rule || rule[j];
        ++j;
      }
      const bool at_edge = i == 0 || j == n;
      const bool valid = (any_rule && (blanks >= 2 || at_edge)) || (!at_edge && j - i >= gap);
      if (valid) {
        const int base = horizontal ? r.y : r.x;
        out.bands.emplace_back(base + i, base + j);
        out.has_rule = out.has_rule || any_rule;
        out.widest = std::max(out.widest, j - i);
      }
      i = j;
    }
    return out;
  }

  void build_rules() {
    const std::size_t n = static_cast<std::size_t>(w_) * h_;
    hrule_.assign(n, 0);
    vrule_.assign(n, 0);
    for (int y = 0; y < h_; ++y) {
      int x = 0;
      while (x < w_) {
        if (!ink_[static_cast<std::size_t>(y) * w_ + x]) { ++x; continue; }
        int e = x;
        while (e < w_ && ink_[static_cast<std::size_t>(y) * w_ + e]) ++e;
        if (e - x >= p_.rule_min_length)
          for (int k = x; k < e; ++k) hrule_[static_cast<std::size_t>(y) * w_ + k] = 1;
        x = e;
      }
    }
    for (int x = 0; x < w_; ++x) {
      int y = 0;
      while (y < h_) {
        if (!ink_[static_cast<std::size_t>(y) * w_ + x]) { ++y; continue; }
        int e = y;
        while (e < h_ && ink_[static_cast<std::size_t>(e) * w_ + x]) ++e;
        if (e - y >= p_.rule_min_length)
          for (int k = y; k < e; ++k) vrule_[static_cast<std::size_t>(k) * w_ + x] = 1;
        y = e;
      }
    }
  }

  void find_frames() {
    const std::size_t n = static_cast<std::size_t>(w_) * h_;
    std::vector<int> label(n, -1);
    std::vector<std::vector<std::size_t>> components;
    std::vector<Box> boxes;
    for (std::size_t start = 0; start < n; ++start) {
      if (label[start] >= 0 || !(hrule_[start] || vrule_[start])) continue;
      const int id = static_cast<int>(components.size());
      components.emplace_back();
      std::queue<std::size_t> q;
      q.push(start);
      label[start] = id;
      int x0 = w_, y0 = h_, x1 = -1, y1 = -1;
      while (!q.empty()) {
        const std::size_t cur = q.front();
        q.pop();
        components[id].push_back(cur);
        const int cx = static_cast<int>(cur % w_), cy = static_cast<int>(cur / w_);
        x0 = std::min(x0, cx); x1 = std::max(x1, cx);
        y0 = std::min(y0, cy); y1 = std::max(y1, cy);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w_ || ny >= h_) continue;
            const std::size_t k = static_cast<std::size_t>(ny) * w_ + nx;
            if (label[k] < 0 && (hrule_[k] || vrule_[k])) {
              label[k] = id;
              q.push(k);
            }
          }
        }
      }
      boxes.push_back({x0, y0, x1 - x0 + 1, y1 - y0 + 1});
    }

    Integral hsum(hrule_, w_, h_), vsum(vrule_, w_, h_);
    std::vector<std::uint8_t> frame_px(n, 0);
    const int t = p_.rule_max_thickness;
    for (std::size_t c = 0; c < boxes.size(); ++c) {
      const Box& b = boxes[c];
      if (b.w < p_.frame_min_side || b.h < p_.frame_min_side) continue;
      auto best_row = [&](int from, int to) {
        long long best = 0;
        for (int y = std::max(from, b.y); y < std::min(to, b.bottom()); ++y)
          best = std::max(best, hsum.sum({b.x, y, b.w, 1}));
        return best;
      };
      auto best_col = [&](int from, int to) {
        long long best = 0;
        for (int x = std::max(from, b.x); x < std::min(to, b.right()); ++x)
          best = std::max(best, vsum.sum({x, b.y, 1, b.h}));
        return best;
      };
      const double need_w = p_.frame_side_coverage * b.w, need_h = p_.frame_side_coverage * b.h;
      if (best_row(b.y, b.y + t) < need_w || best_row(b.bottom() - t, b.bottom()) < need_w) continue;
      if (best_col(b.x, b.x + t) < need_h || best_col(b.right() - t, b.right()) < need_h) continue;
      const Box interior = shrink(b, t + 1);
      if (interior.empty()) continue;
      const double density = static_cast<double>(ink(interior)) / static_cast<double>(interior.area());
      if (density > p_.frame_max_interior_density) continue;
      frames_.push_back(b);
      for (std::size_t k : components[c]) frame_px[k] = 1;
    }
    std::sort(frames_.begin(), frames_.end(), [](const Box& a, const Box& b) {
      return std::tie(a.y, a.x, a.w, a.h) < std::tie(b.y, b.x, b.w, b.h);
    });
    frame_parent_.assign(frames_.size(), -1);
    for (std::size_t i = 0; i < frames_.size(); ++i) {
      long long best_area = -1;
      for (std::size_t j = 0; j < frames_.size(); ++j) {
        if (i == j || !frames_[j].contains(frames_[i]) || frames_[j] == frames_[i]) continue;
        if (best_area < 0 || frames_[j].area() < best_area) {
          best_area = frames_[j].area();
          frame_parent_[i] = static_cast<int>(j);
        }
      }
    }
    std::vector<std::uint8_t> fh(n), fv(n);
    for (std::size_t k = 0; k < n; ++k) {
      fh[k] = hrule_[k] && !frame_px[k];
      fv[k] = vrule_[k] && !frame_px[k];
    }
    free_h_ = Integral(fh, w_, h_);
    free_v_ = Integral(fv, w_, h_);
  }

  const Raster& gray_;
  SegmentationParams p_;
  int w_, h_;
  std::vector<std::uint8_t> ink_, hrule_, vrule_;
  Integral ink_sum_, free_h_, free_v_;
  std::vector<Box> frames_;
  std::vector<int> frame_parent_;
};

struct EmbeddedDraft {
  Box frame;
  std::vector<Box> blocks;
};

struct ArticleDraft {
  Box bounds;
  std::vector<Box> blocks;
  std::vector<EmbeddedDraft> embedded;
};

struct PageStructure {
  std::vector<ArticleDraft> articles;
  PageMetrics metrics;
};

PageStructure analyze(const PageAnalysis& pa, const SegmentationParams& p) {
  PageStructure out;
  const Box page{0, 0, pa.width(), pa.height()};
  const PageAnalysis::CutConfig article_cut{p.article_gap, p.article_gap, false};
  const PageAnalysis::CutConfig block_cut{p.block_row_gap, p.block_col_gap, true};
  const int inset = p.rule_max_thickness + 1;

  std::vector<Box> leaves;
  pa.xy_cut(page, pa.child_frames(-1, page), article_cut, leaves);

  for (const Box& leaf : leaves) {
    ArticleDraft draft;
    draft.bounds = leaf;
    const int fi = pa.frame_index(leaf);
    const Box inner = fi >= 0 ? shrink(leaf, inset) : leaf;
    const std::vector<Box> nested = fi >= 0 ? pa.child_frames(fi, inner) : pa.child_frames(-1, inner);
    std::vector<Box> blocks;
    pa.xy_cut(inner, nested, block_cut, blocks);
    for (const Box& b : blocks) {
      if (std::find(nested.begin(), nested.end(), b) != nested.end()) {
        EmbeddedDraft e;
        e.frame = b;
        pa.xy_cut(shrink(b, inset), {}, block_cut, e.blocks);
        if (!e.blocks.empty()) draft.embedded.push_back(std::move(e));
      } else {
        draft.blocks.push_back(b);
      }
    }
    if (!draft.blocks.empty() || !draft.embedded.empty()) out.articles.push_back(std::move(draft));
  }

  std::vector<int> lines;
  auto collect = [&](const Box& b) {
    const BlockStats s = pa.stats(b);
    if (pa.looks_like_image(s, b)) return;
    lines.insert(lines.end(), s.line_heights.begin(), s.line_heights.end());
  };
  for (const auto& a : out.articles) {
    for (const Box& b : a.blocks) collect(b);
    for (const auto& e : a.embedded)
      for (const Box& b : e.blocks) collect(b);
  }
  out.metrics.median_line_height = median_of(lines);
  return out;
}

bool is_headline_block(const PageAnalysis& pa, const Box& b, const PageMetrics& m, const SegmentationParams& p) {
  if (m.median_line_height <= 0) return false;
  const BlockStats s = pa.stats(b);
  if (pa.looks_like_image(s, b) || s.line_heights.empty()) return false;
  return s.median_line_height >= p.headline_line_ratio * m.median_line_height;
}

Box roi_hull(const std::vector<Roi>& rois) {
  Box h;
  for (const auto& r : rois) h = hull(h, r.box);
  return h;
}

std::vector<Roi> ordered_rois(const std::vector<Box>& blocks, int level) {
  std::vector<Roi> rois;
  for (std::size_t i : reading_order(blocks)) {
    Roi r;
    r.box = blocks[i];
    r.embed_level = level;
    rois.push_back(r);
  }
  return rois;
}

}  // namespace

std::vector<std::size_t> reading_order(const std::vector<Box>& boxes) {
  std::vector<std::size_t> idx(boxes.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(boxes[a].y, boxes[a].x) < std::tie(boxes[b].y, boxes[b].x);
  });
  std::vector<std::size_t> out;
  std::size_t i = 0;
  while (i < idx.size()) {
    int band_bottom = boxes[idx[i]].bottom();
    std::size_t j = i + 1;
    while (j < idx.size() && boxes[idx[j]].y < band_bottom) {
      band_bottom = std::max(band_bottom, boxes[idx[j]].bottom());
      ++j;
    }
    std::vector<std::size_t> band(idx.begin() + static_cast<std::ptrdiff_t>(i),
                                  idx.begin() + static_cast<std::ptrdiff_t>(j));
    std::stable_sort(band.begin(), band.end(), [&](std::size_t a, std::size_t b) {
      return std::tie(boxes[a].x, boxes[a].y) < std::tie(boxes[b].x, boxes[b].y);
    });
    out.insert(out.end(), band.begin(), band.end());
    i = j;
  }
  return out;
}

Segmentation segment_page(const PageImage& page, const SegmentationParams& params) {
  Segmentation result;
  const PageAnalysis pa(page.gray, params);
  if (pa.coverage() < params.blank_coverage) {
    result.warnings.push_back("page " + page.page_id + ": blank (ink coverage below " +
                              std::to_string(params.blank_coverage * 100) + "%)");
    return result;
  }
  const PageStructure ps = analyze(pa, params);
  int index = 0;
  for (const auto& draft : ps.articles) {
    ArticleRecord main;
    main.article_id = page.page_id + "-a" + std::to_string(++index);
    main.page_id = page.page_id;
    main.language = page.language;
    main.date = page.date;
    main.bounds = draft.bounds;
    std::vector<Box> blocks = draft.blocks;
    std::vector<ArticleRecord> children;
    for (const auto& e : draft.embedded) {
      const bool has_headline = std::any_of(e.blocks.begin(), e.blocks.end(), [&](const Box& b) {
        return is_headline_block(pa, b, ps.metrics, params);
      });
      if (!has_headline) {
        // A box without its own headline is decoration around part of the parent's text.
        blocks.insert(blocks.end(), e.blocks.begin(), e.blocks.end());
        continue;
      }
      ArticleRecord child;
      child.article_id = main.article_id + "-e" + std::to_string(children.size() + 1);
      child.page_id = page.page_id;
      child.language = page.language;
      child.date = page.date;
      child.bounds = e.frame;
      child.parent = main.article_id;
      child.rois = ordered_rois(e.blocks, 1);
      children.push_back(std::move(child));
    }
    main.rois = ordered_rois(blocks, 0);
    if (main.rois.empty()) {
      // Only embedded content: the parent keeps the frame hull but needs at least one ROI,
      // so the first child is promoted to a main article.
      if (children.empty()) continue;
      ArticleRecord promoted = std::move(children.front());
      children.erase(children.begin());
      promoted.article_id = main.article_id;
      promoted.parent.reset();
      for (auto& r : promoted.rois) r.embed_level = 0;
      main = std::move(promoted);
      for (auto& c : children) c.parent = main.article_id;
    }
    result.articles.push_back(std::move(main));
    for (auto& c : children) result.articles.push_back(std::move(c));
  }
  return result;
}

PageMetrics measure_page(const PageImage& page, const SegmentationParams& params) {
  const PageAnalysis pa(page.gray, params);
  return analyze(pa, params).metrics;
}

ArticleRecord classify_rois(const ArticleRecord& article, const PageImage& page,
                            const SegmentationParams& params) {
  return classify_rois(article, page, measure_page(page, params), params);
}

ArticleRecord classify_rois(const ArticleRecord& article, const PageImage& page, const PageMetrics& metrics,
                            const SegmentationParams& params) {
  const PageAnalysis pa(page.gray, params);
  ArticleRecord out = article;
  const int level = article.embed_level();

  std::vector<Box> boxes;
  for (const auto& r : article.rois) boxes.push_back(r.box);
  const auto order = reading_order(boxes);

  std::vector<Roi> rois;
  std::vector<BlockStats> stats;
  for (std::size_t i : order) {
    Roi r = article.rois[i];
    r.kind = RoiKind::Content;
    r.seq_index = 0;
    r.sub_index.reset();
    r.embed_level = level;
    stats.push_back(pa.stats(r.box));
    rois.push_back(std::move(r));
  }

  const double mlh = metrics.median_line_height;
  for (std::size_t i = 0; i < rois.size(); ++i) {
    if (pa.looks_like_image(stats[i], rois[i].box)) {
      rois[i].kind = RoiKind::Image;
    } else if (mlh > 0 && !stats[i].line_heights.empty() &&
               stats[i].median_line_height >= params.headline_line_ratio * mlh) {
      rois[i].kind = RoiKind::Headline;
    }
  }

  // Caption candidates: text just below an image, no wider than the image allows.
  struct Candidate {
    int gap;
    std::size_t text;
    std::size_t image;
  };
  std::vector<Candidate> candidates;
  for (std::size_t t = 0; t < rois.size(); ++t) {
    if (rois[t].kind != RoiKind::Content) continue;
    for (std::size_t im = 0; im < rois.size(); ++im) {
      if (rois[im].kind != RoiKind::Image) continue;
      const Box& tb = rois[t].box;
      const Box& ib = rois[im].box;
      const int gap = tb.y - ib.bottom();
      const int overlap = std::min(tb.right(), ib.right()) - std::max(tb.x, ib.x);
      if (gap < -params.overlap_tolerance || gap > params.caption_max_gap_lines * mlh) continue;
      if (overlap <= 0 || tb.w > params.caption_max_width_ratio * ib.w) continue;
      candidates.push_back({gap, t, im});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.gap, a.text, a.image) < std::tie(b.gap, b.text, b.image);
  });
  std::vector<char> text_used(rois.size(), 0), image_used(rois.size(), 0);
  std::vector<std::size_t> caption_of(rois.size(), rois.size());
  for (const auto& c : candidates) {
    if (text_used[c.text] || image_used[c.image]) continue;
    text_used[c.text] = image_used[c.image] = 1;
    caption_of[c.text] = c.image;
    rois[c.text].kind = RoiKind::Caption;
  }

  int headlines = 0, images = 0, contents = 0;
  for (auto& r : rois) {
    switch (r.kind) {
      case RoiKind::Headline:
        r.seq_index = level + 1;
        r.sub_index = headlines++;
        break;
      case RoiKind::Image: r.seq_index = ++images; break;
      case RoiKind::Content: r.seq_index = ++contents; break;
      default: break;
    }
  }
  for (std::size_t t = 0; t < rois.size(); ++t)
    if (rois[t].kind == RoiKind::Caption) rois[t].seq_index = rois[caption_of[t]].seq_index;

  out.rois = std::move(rois);
  return out;
}

std::vector<ArticleRecord> extract_articles(const PageImage& page, const SegmentationParams& params,
                                            std::vector<std::string>* warnings) {
  Segmentation seg = segment_page(page, params);
  if (warnings) warnings->insert(warnings->end(), seg.warnings.begin(), seg.warnings.end());
  if (seg.articles.empty()) return {};
  const PageMetrics metrics = measure_page(page, params);
  std::vector<ArticleRecord> out;
  out.reserve(seg.articles.size());
  for (const auto& a : seg.articles) out.push_back(classify_rois(a, page, metrics, params));
  return out;
}

void validate_article(const ArticleRecord& article, const PageImage& page, const ArticleRecord* parent) {
  const std::string who = "article " + article.article_id;
  if (article.rois.empty()) throw ValidationError(who + ": no ROIs");
  if (parent && parent->parent) throw ValidationError(who + ": embedded articles cannot nest deeper than one level");
  const Box page_box = page.gray.bounds();
  std::vector<int> image_seqs;
  for (const auto& r : article.rois)
    if (r.kind == RoiKind::Image) image_seqs.push_back(r.seq_index);
  for (const auto& r : article.rois) {
    if (r.box.w <= 0 || r.box.h <= 0 || !page_box.contains(r.box))
      throw ValidationError(who + ": box " + to_string(r.box) + " outside page bounds");
    if (r.seq_index < 0) throw ValidationError(who + ": negative seq_index on " + to_string(r.box));
    if (r.sub_index.has_value() != (r.kind == RoiKind::Headline))
      throw ValidationError(who + ": sub_index must be present exactly on headlines, box " + to_string(r.box));
    if (r.kind == RoiKind::Caption &&
        std::find(image_seqs.begin(), image_seqs.end(), r.seq_index) == image_seqs.end())
      throw ValidationError(who + ": caption " + to_string(r.box) + " has no image with seq_index " +
                            std::to_string(r.seq_index));
    if (parent && !parent->bounds.contains(r.box, 2))
      throw ValidationError(who + ": embedded box " + to_string(r.box) + " lies outside parent " +
                            parent->article_id);
  }
  for (std::size_t i = 0; i < article.rois.size(); ++i)
    for (std::size_t j = i + 1; j < article.rois.size(); ++j)
      if (overlaps(article.rois[i].box, article.rois[j].box, 2))
        throw ValidationError(who + ": boxes " + to_string(article.rois[i].box) + " and " +
                              to_string(article.rois[j].box) + " overlap");
}

std::string to_annotation_json(const std::vector<ArticleRecord>& articles, bool with_texts) {
  json doc = json::array();
  for (const auto& a : articles) {
    json ja{{"article_id", a.article_id}, {"page_id", a.page_id}};
    if (a.parent) ja["parent"] = *a.parent;
    ja["bounds"] = {a.bounds.x, a.bounds.y, a.bounds.w, a.bounds.h};
    ja["rois"] = json::array();
    for (const auto& r : a.rois) {
      json jr{{"kind", std::string(1, roi_letter(r.kind))},
              {"box", {r.box.x, r.box.y, r.box.w, r.box.h}},
              {"seq_index", r.seq_index}};
      if (r.sub_index) jr["sub_index"] = *r.sub_index;
      if (with_texts && r.text) jr["text"] = *r.text;
      ja["rois"].push_back(std::move(jr));
    }
    doc.push_back(std::move(ja));
  }
  return doc.dump(1);
}

namespace {

Box parse_box(const json& j, const std::string& who) {
  if (!j.is_array() || j.size() != 4) throw ValidationError(who + ": box must be [x,y,w,h]");
  for (const auto& v : j)
    if (!v.is_number_integer()) throw ValidationError(who + ": box must be integers");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

}  // namespace

std::vector<ArticleRecord> load_annotations_text(std::string_view json_text, const PageSet& set) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("annotation file is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ValidationError("annotation file must be a JSON array of articles");
  std::vector<ArticleRecord> out;
  std::map<std::string, std::size_t> by_id;
  for (const auto& ja : doc) {
    ArticleRecord a;
    a.article_id = ja.value("article_id", std::string());
    const std::string who = "annotation record '" + a.article_id + "'";
    if (a.article_id.empty()) throw ValidationError("annotation record without article_id");
    if (by_id.count(a.article_id)) throw ValidationError(who + ": duplicate article_id");
    a.page_id = ja.value("page_id", std::string());
    const PageImage* page = set.find(a.page_id);
    if (!page) throw ValidationError(who + ": unknown page_id '" + a.page_id + "'");
    a.language = page->language;
    a.date = page->date;
    if (ja.contains("parent") && !ja["parent"].is_null()) a.parent = ja["parent"].get<std::string>();
    if (!ja.contains("rois") || !ja["rois"].is_array()) throw ValidationError(who + ": missing rois");
    for (const auto& jr : ja["rois"]) {
      Roi r;
      const auto kind = roi_kind_from(jr.value("kind", std::string()));
      if (!kind) throw ValidationError(who + ": unknown ROI kind " + jr.value("kind", std::string()));
      r.kind = *kind;
      r.box = parse_box(jr.value("box", json()), who);
      r.seq_index = jr.value("seq_index", 0);
      if (jr.contains("sub_index") && !jr["sub_index"].is_null()) r.sub_index = jr["sub_index"].get<int>();
      if (jr.contains("text") && jr["text"].is_string()) r.text = jr["text"].get<std::string>();
      r.embed_level = a.parent ? 1 : 0;
      a.rois.push_back(std::move(r));
    }
    a.bounds = ja.contains("bounds") ? parse_box(ja["bounds"], who) : roi_hull(a.rois);
    by_id[a.article_id] = out.size();
    out.push_back(std::move(a));
  }
  for (const auto& a : out) {
    const ArticleRecord* parent = nullptr;
    if (a.parent) {
      auto it = by_id.find(*a.parent);
      if (it == by_id.end())
        throw ValidationError("annotation record '" + a.article_id + "': unknown parent '" + *a.parent + "'");
      parent = &out[it->second];
      if (parent->page_id != a.page_id)
        throw ValidationError("annotation record '" + a.article_id + "': parent is on another page");
    }
    validate_article(a, *set.find(a.page_id), parent);
  }
  return out;
}

std::vector<ArticleRecord> load_annotations(const std::filesystem::path& file, const PageSet& set) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("cannot read annotation file " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_annotations_text(ss.str(), set);
}

std::string serialize_article(const ArticleRecord& article) {
  std::ostringstream out;
  out << "#article " << article.article_id << " page=" << article.page_id
      << " parent=" << (article.parent ? *article.parent : "-") << '\n';
  for (const auto& r : article.rois) {
    const char k = roi_letter(r.kind);
    if (r.kind == RoiKind::Unclassified)
      throw ValidationError("article " + article.article_id + ": unclassified ROI " + to_string(r.box));
    if (r.kind == RoiKind::Headline) {
      out << '[' << k << '|' << r.seq_index << '|' << r.sub_index.value_or(0) << "]\n";
    } else if (r.kind == RoiKind::Image) {
      out << '[' << k << '|' << r.seq_index << "] file="
          << r.text.value_or(article.article_id + "_I" + std::to_string(r.seq_index) + ".png") << '\n';
      continue;
    } else {
      out << '[' << k << '|' << r.seq_index << "]\n";
    }
    if (!r.text)
      throw ValidationError("article " + article.article_id + ": missing text for ROI " +
                            std::string(1, k) + std::to_string(r.seq_index) + " " + to_string(r.box));
    out << *r.text << '\n';
  }
  return out.str();
}

}  // namespace cforge
