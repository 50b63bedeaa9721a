#include "cforge/article_mapper.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "cforge/error.hpp"
#include "cforge/work_pool.hpp"

namespace cforge {

using nlohmann::json;

std::string origin_name(PairOrigin origin) {
  return origin == PairOrigin::ImagePivot ? "image" : "headline";
}

std::vector<ScoredCandidate> greedy_assign(std::vector<ScoredCandidate> candidates, double threshold,
                                           const std::vector<std::string>& left_keys,
                                           const std::vector<std::string>& right_keys) {
  std::erase_if(candidates, [&](const ScoredCandidate& c) { return !(c.score >= threshold); });
  std::stable_sort(candidates.begin(), candidates.end(), [&](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (left_keys[a.left] != left_keys[b.left]) return left_keys[a.left] < left_keys[b.left];
    return right_keys[a.right] < right_keys[b.right];
  });
  std::vector<char> used_l(left_keys.size(), 0), used_r(right_keys.size(), 0);
  std::vector<ScoredCandidate> out;
  for (const auto& c : candidates) {
    if (used_l[c.left] || used_r[c.right]) continue;
    used_l[c.left] = used_r[c.right] = 1;
    out.push_back(c);
  }
  return out;
}

std::vector<ArticleImage> article_images(const std::vector<ArticleRecord>& articles, const PageSet& pages,
                                         const MappingParams& params) {
  std::vector<ArticleImage> jobs;
  std::vector<const PageImage*> sources;
  for (std::size_t i = 0; i < articles.size(); ++i) {
    const auto& a = articles[i];
    if (a.parent) continue;
    const PageImage* page = pages.find(a.page_id);
    if (!page) throw ValidationError("article " + a.article_id + " refers to unknown page " + a.page_id);
    for (const auto& r : a.rois) {
      if (r.kind != RoiKind::Image || r.box.w < 32 || r.box.h < 32) continue;
      jobs.push_back({i, r.seq_index, {}});
      sources.push_back(page);
    }
  }
  parallel_for(jobs.size(), params.workers, [&](std::size_t k) {
    const auto& roi_article = articles[jobs[k].article];
    for (const auto& r : roi_article.rois)
      if (r.kind == RoiKind::Image && r.seq_index == jobs[k].seq_index)
        jobs[k].features = extract_features(crop(sources[k]->gray, r.box), params.features);
  });
  return jobs;
}

std::vector<ArticlePair> map_articles(const std::vector<ArticleRecord>& left, const std::vector<ArticleRecord>& right,
                                      const Date& date, const PageSet& pages, const MappingParams& params) {
  return map_articles(left, right, date, article_images(left, pages, params), article_images(right, pages, params),
                      params);
}

std::vector<ArticlePair> map_articles(const std::vector<ArticleRecord>& left, const std::vector<ArticleRecord>& right,
                                      const Date& date, const std::vector<ArticleImage>& left_images,
                                      const std::vector<ArticleImage>& right_images, const MappingParams& params) {
  std::vector<std::vector<ImageEvidence>> evidence(left.size() * right.size());
  std::vector<double> best(left.size() * right.size(), -1.0);
  auto eligible = [&](const ArticleRecord& a) { return a.date == date && !a.parent; };

  std::vector<double> sims(left_images.size() * right_images.size(), 0.0);
  parallel_for(left_images.size(), params.workers, [&](std::size_t i) {
    for (std::size_t j = 0; j < right_images.size(); ++j)
      sims[i * right_images.size() + j] =
          image_similarity(left_images[i].features, right_images[j].features, params.features);
  });
  for (std::size_t i = 0; i < left_images.size(); ++i) {
    for (std::size_t j = 0; j < right_images.size(); ++j) {
      const auto& li = left_images[i];
      const auto& rj = right_images[j];
      if (!eligible(left[li.article]) || !eligible(right[rj.article])) continue;
      const std::size_t cell = li.article * right.size() + rj.article;
      const double s = sims[i * right_images.size() + j];
      evidence[cell].push_back({li.seq_index, rj.seq_index, s});
      best[cell] = std::max(best[cell], s);
    }
  }

  std::vector<ScoredCandidate> candidates;
  for (std::size_t i = 0; i < left.size(); ++i)
    for (std::size_t j = 0; j < right.size(); ++j)
      if (best[i * right.size() + j] >= 0) candidates.push_back({i, j, best[i * right.size() + j]});
  std::vector<std::string> lk, rk;
  for (const auto& a : left) lk.push_back(a.article_id);
  for (const auto& a : right) rk.push_back(a.article_id);

  std::vector<ArticlePair> out;
  for (const auto& c : greedy_assign(std::move(candidates), params.threshold, lk, rk)) {
    ArticlePair p;
    p.left = left[c.left];
    p.right = right[c.right];
    p.evidence = evidence[c.left * right.size() + c.right];
    std::stable_sort(p.evidence.begin(), p.evidence.end(),
                     [](const ImageEvidence& a, const ImageEvidence& b) { return a.similarity > b.similarity; });
    p.pair_score = c.score;
    p.origin = PairOrigin::ImagePivot;
    out.push_back(std::move(p));
  }
  return out;
}

std::optional<std::string> main_headline(const ArticleRecord& article) {
  const Roi* best = nullptr;
  for (const auto& r : article.rois)
    if (r.kind == RoiKind::Headline && r.text && !r.text->empty() &&
        (!best || r.sub_index.value_or(0) < best->sub_index.value_or(0)))
      best = &r;
  if (!best) return std::nullopt;
  return *best->text;
}

std::vector<ArticlePair> map_embedded(const ArticlePair& pair, const std::vector<ArticleRecord>& left_articles,
                                      const std::vector<ArticleRecord>& right_articles, const HeadlineSimilarity& delta,
                                      double threshold, std::vector<std::string>* warnings) {
  auto children = [&](const std::vector<ArticleRecord>& all, const std::string& parent) {
    std::vector<std::pair<const ArticleRecord*, std::string>> out;
    for (const auto& a : all) {
      if (a.parent != parent) continue;
      auto h = main_headline(a);
      if (!h) {
        if (warnings) warnings->push_back("embedded article " + a.article_id + " has no headline text; skipped");
        continue;
      }
      out.emplace_back(&a, std::move(*h));
    }
    return out;
  };
  const auto lc = children(left_articles, pair.left.article_id);
  const auto rc = children(right_articles, pair.right.article_id);
  std::vector<ScoredCandidate> candidates;
  for (std::size_t i = 0; i < lc.size(); ++i)
    for (std::size_t j = 0; j < rc.size(); ++j) candidates.push_back({i, j, delta(lc[i].second, rc[j].second)});
  std::vector<std::string> lk, rk;
  for (const auto& c : lc) lk.push_back(c.first->article_id);
  for (const auto& c : rc) rk.push_back(c.first->article_id);
  std::vector<ArticlePair> out;
  for (const auto& c : greedy_assign(std::move(candidates), threshold, lk, rk)) {
    ArticlePair p;
    p.left = *lc[c.left].first;
    p.right = *rc[c.right].first;
    p.pair_score = c.score;
    p.origin = PairOrigin::HeadlinePivot;
    out.push_back(std::move(p));
  }
  return out;
}

std::string pairs_to_jsonl(const std::vector<ArticlePair>& pairs) {
  std::ostringstream out;
  for (const auto& p : pairs) {
    json j{{"left", p.left.article_id},
           {"right", p.right.article_id},
           {"left_page", p.left.page_id},
           {"right_page", p.right.page_id},
           {"date", p.left.date.to_string()},
           {"origin", origin_name(p.origin)},
           {"pair_score", p.pair_score}};
    if (p.left.parent) j["left_parent"] = *p.left.parent;
    if (p.right.parent) j["right_parent"] = *p.right.parent;
    j["evidence"] = json::array();
    for (const auto& e : p.evidence)
      j["evidence"].push_back({{"left", p.left.article_id + "_I" + std::to_string(e.left_seq)},
                               {"right", p.right.article_id + "_I" + std::to_string(e.right_seq)},
                               {"similarity", e.similarity}});
    out << j.dump() << '\n';
  }
  return out.str();
}

void write_pairs(const std::filesystem::path& file, const std::vector<ArticlePair>& pairs) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw StageError("cannot write " + file.string());
  out << pairs_to_jsonl(pairs);
}

std::vector<ArticlePair> read_pairs(const std::filesystem::path& file, const std::vector<ArticleRecord>& articles) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("cannot read pair report " + file.string());
  std::map<std::string, const ArticleRecord*> by_id;
  for (const auto& a : articles) by_id[a.article_id] = &a;
  auto resolve = [&](const std::string& id) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("pair report refers to unknown article " + id);
    return *it->second;
  };
  auto seq_of = [](const std::string& ref) {
    const auto pos = ref.rfind("_I");
    return pos == std::string::npos ? 0 : std::stoi(ref.substr(pos + 2));
  };
  std::vector<ArticlePair> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw ValidationError(file.string() + ":" + std::to_string(line_no) + ": not a JSON object");
    ArticlePair p;
    p.left = resolve(j.at("left").get<std::string>());
    p.right = resolve(j.at("right").get<std::string>());
    p.origin = j.value("origin", std::string("image")) == "headline" ? PairOrigin::HeadlinePivot : PairOrigin::ImagePivot;
    p.pair_score = j.value("pair_score", 0.0);
    for (const auto& e : j.value("evidence", json::array()))
      p.evidence.push_back({seq_of(e.at("left").get<std::string>()), seq_of(e.at("right").get<std::string>()),
                            e.at("similarity").get<double>()});
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace cforge
