#include "cforge/sentence.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "cforge/digest.hpp"
#include "cforge/error.hpp"
#include "cforge/unicode.hpp"
#include "cforge/work_pool.hpp"

namespace cforge {

namespace {

bool is_delimiter(char32_t c) { return c == U'।' || c == U'॥' || c == U'.' || c == U'?' || c == U'!'; }

bool is_ascii_alpha(char32_t c) { return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z'); }

const std::set<std::u32string>& abbreviations() {
  static const std::set<std::u32string> k{U"dr", U"mr", U"mrs", U"ms", U"st", U"vs", U"e.g", U"i.e", U"no", U"prof"};
  return k;
}

/// True when the '.' at `pos` ends an abbreviation or a Latin initial.
bool guarded(const std::u32string& s, std::size_t pos) {
  std::size_t b = pos;
  while (b > 0 && !unicode::is_space(s[b - 1])) --b;
  std::u32string word = s.substr(b, pos - b);
  if (word.size() == 1 && is_ascii_alpha(word[0])) return true;
  for (auto& c : word)
    if (c >= U'A' && c <= U'Z') c = c - U'A' + U'a';
  return abbreviations().count(word) > 0;
}

int word_count(std::string_view text) { return static_cast<int>(unicode::tokenize(text).size()); }

}  // namespace

std::vector<Sentence> split_sentences(std::string_view text, std::string_view language) {
  std::vector<Sentence> out;
  const std::u32string s = unicode::decode(text);
  // Byte offset of every scalar (and of the end).
  std::vector<std::size_t> offset(s.size() + 1, 0);
  for (std::size_t i = 0; i < s.size(); ++i) offset[i + 1] = offset[i] + unicode::encode(s[i]).size();

  auto emit = [&](std::size_t from, std::size_t to) {
    while (from < to && unicode::is_space(s[from])) ++from;
    while (to > from && unicode::is_space(s[to - 1])) --to;
    if (from == to) return;
    Sentence st;
    st.begin = offset[from];
    st.end = offset[to];
    st.text = std::string(text.substr(st.begin, st.end - st.begin));
    st.word_count = word_count(st.text);
    if (st.word_count == 0) return;
    st.language = std::string(language);
    st.index = static_cast<int>(out.size());
    out.push_back(std::move(st));
  };

  std::size_t start = 0;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_delimiter(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && is_delimiter(s[j])) ++j;
    const bool at_break = j == s.size() || unicode::is_space(s[j]);
    const bool single_dot = j == i + 1 && s[i] == U'.';
    if (at_break && !(single_dot && guarded(s, i))) {
      emit(start, j);
      start = j;
    }
    i = j;
  }
  emit(start, s.size());
  return out;
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::LAS: return "las";
    case Strategy::SLAS: return "slas";
    case Strategy::LO: return "lo";
  }
  return "las";
}

std::optional<Strategy> strategy_from(std::string_view name) {
  std::string n(name);
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
  if (n == "las") return Strategy::LAS;
  if (n == "slas") return Strategy::SLAS;
  if (n == "lo") return Strategy::LO;
  return std::nullopt;
}

// ---------------------------------------------------------------- embeddings

EmbeddingVector hash_embed(std::string_view text, int dim) {
  if (dim < 16) throw ValidationError("hash_embed dimension must be at least 16");
  const std::u32string s = unicode::decode(unicode::lowercase(unicode::nfc(unicode::squeeze_spaces(text))));
  if (s.empty()) throw ValidationError("hash_embed of empty text");
  const std::u32string padded = U" " + s + U" ";
  std::vector<double> signed_counts(static_cast<std::size_t>(dim), 0.0);
  std::vector<double> counts(static_cast<std::size_t>(dim), 0.0);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    const std::uint64_t h = fnv1a64(unicode::encode(std::u32string_view(padded).substr(i, 3)));
    const auto bucket = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim));
    signed_counts[bucket] += ((h >> 32) & 1) ? -1.0 : 1.0;
    counts[bucket] += 1.0;
  }
  auto norm = [](const std::vector<double>& v) {
    double s2 = 0;
    for (double x : v) s2 += x * x;
    return std::sqrt(s2);
  };
  EmbeddingVector out;
  out.provider_id = "hash" + std::to_string(dim);
  double n = norm(signed_counts);
  out.components = n > 0 ? signed_counts : counts;
  if (n <= 0) n = norm(counts);
  for (double& x : out.components) x /= n;
  return out;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.components.size() != b.components.size()) throw StageError("embedding dimensions differ");
  double dot = 0;
  for (std::size_t k = 0; k < a.components.size(); ++k) dot += a.components[k] * b.components[k];
  return std::clamp(dot, -1.0, 1.0);
}

const std::vector<std::string>* PivotLexicon::lookup(const std::string& token) const {
  auto it = entries.find(token);
  return it == entries.end() ? nullptr : &it->second;
}

PivotLexicon parse_lexicon(std::string_view tsv, std::string language) {
  PivotLexicon lex;
  lex.language = std::move(language);
  std::istringstream in{std::string(tsv)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ValidationError("lexicon line " + std::to_string(line_no) + " has no tab separator");
    const std::string src = unicode::lowercase(unicode::nfc(unicode::squeeze_spaces(line.substr(0, tab))));
    const std::string piv = unicode::lowercase(unicode::nfc(unicode::squeeze_spaces(line.substr(tab + 1))));
    if (src.empty() || piv.empty()) continue;
    auto& pivots = lex.entries[src];
    if (std::find(pivots.begin(), pivots.end(), piv) == pivots.end()) pivots.push_back(piv);
  }
  return lex;
}

PivotLexicon load_lexicon(const std::filesystem::path& file, std::string language) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("cannot read lexicon " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_lexicon(buf.str(), std::move(language));
}

void BuiltinProvider::add_lexicon(std::shared_ptr<const PivotLexicon> lexicon) {
  lexicons_[lexicon->language] = std::move(lexicon);
}

std::string BuiltinProvider::id() const { return "builtin-hash" + std::to_string(dim_); }

std::vector<EmbeddingVector> BuiltinProvider::embed(const std::vector<std::string>& texts,
                                                    const std::string& language) {
  const auto it = lexicons_.find(language);
  const PivotLexicon* lex = it == lexicons_.end() ? nullptr : it->second.get();
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    const auto tokens = unicode::tokenize(t);
    std::string mapped;
    for (const auto& tok : tokens) {
      const auto* pivots = lex ? lex->lookup(tok) : nullptr;
      if (pivots) {
        for (const auto& p : *pivots) mapped += (mapped.empty() ? "" : " ") + p;
      } else {
        mapped += (mapped.empty() ? "" : " ") + tok;
      }
    }
    EmbeddingVector v = hash_embed(mapped.empty() ? t : mapped, dim_);
    v.provider_id = id();
    out.push_back(std::move(v));
  }
  return out;
}

double las_score(const Sentence& a, const Sentence& b, EmbeddingProvider& provider) {
  const auto va = provider.embed({a.text}, a.language);
  const auto vb = provider.embed({b.text}, b.language);
  if (va.size() != 1 || vb.size() != 1) throw StageError("embedding provider returned a wrong number of vectors");
  return cosine(va[0], vb[0]);
}

double lo_score(const Sentence& a, const Sentence& b, const PivotLexicon& lex_a, const PivotLexicon& lex_b) {
  auto pivot_bag = [](const Sentence& s, const PivotLexicon& lex) {
    std::map<std::string, int> bag;
    int total = 0;
    for (const auto& tok : unicode::tokenize(s.text)) {
      const auto* pivots = lex.lookup(tok);
      if (!pivots) continue;
      for (const auto& p : *pivots) {
        ++bag[p];
        ++total;
      }
    }
    return std::make_pair(bag, total);
  };
  const auto [bag_a, total_a] = pivot_bag(a, lex_a);
  const auto [bag_b, total_b] = pivot_bag(b, lex_b);
  if (total_a == 0 || total_b == 0) return 0.0;
  int common = 0;
  for (const auto& [tok, n] : bag_a) {
    const auto it = bag_b.find(tok);
    if (it != bag_b.end()) common += std::min(n, it->second);
  }
  if (common == 0) return 0.0;
  const double p = static_cast<double>(common) / total_a;
  const double r = static_cast<double>(common) / total_b;
  return 2 * p * r / (p + r);
}

// ---------------------------------------------------------------- length-based alignment

double bead_cost(int left_words, int right_words, int left_count, int right_count, double ratio,
                 const SlasParams& params) {
  if (left_count == 0 || right_count == 0) return -std::log(params.prior_10);
  const double prior = left_count == 1 && right_count == 1 ? params.prior_11 : params.prior_21;
  const double l1 = left_words, l2 = right_words;
  const double mean = (l1 + l2 / ratio) / 2.0;
  const double delta = mean > 0 ? (l1 * ratio - l2) / std::sqrt(mean * params.variance) : 0.0;
  const double p = std::erfc(std::abs(delta) / std::numbers::sqrt2);
  return -std::log(std::max(p, DBL_MIN)) - std::log(prior);
}

SlasAlignment slas_dp(const std::vector<int>& left_words, const std::vector<int>& right_words,
                      const SlasParams& params) {
  SlasAlignment out;
  const std::size_t n = left_words.size(), m = right_words.size();
  if (n == 0 || m == 0) return out;
  double ratio = params.ratio;
  if (ratio <= 0) {
    double sl = 0, sr = 0;
    for (int w : left_words) sl += w;
    for (int w : right_words) sr += w;
    ratio = sl > 0 && sr > 0 ? sr / sl : 1.0;
  }
  static constexpr int kBeads[5][2] = {{1, 1}, {1, 0}, {0, 1}, {2, 1}, {1, 2}};
  auto span = [](const std::vector<int>& v, std::size_t from, int count) {
    int s = 0;
    for (int k = 0; k < count; ++k) s += v[from + static_cast<std::size_t>(k)];
    return s;
  };
  auto cost_of = [&](std::size_t i, std::size_t j, int di, int dj) {
    return bead_cost(span(left_words, i, di), span(right_words, j, dj), di, dj, ratio, params);
  };
  constexpr double inf = std::numeric_limits<double>::infinity();
  const auto idx = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  std::vector<double> best((n + 1) * (m + 1), inf), alpha((n + 1) * (m + 1), -inf), beta((n + 1) * (m + 1), -inf);
  std::vector<int> back((n + 1) * (m + 1), -1);
  best[0] = 0;
  alpha[0] = 0;
  auto log_add = [](double a, double b) {
    if (a == -inf) return b;
    if (b == -inf) return a;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
  };
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t j = 0; j <= m; ++j) {
      if (i == 0 && j == 0) continue;
      for (int b = 0; b < 5; ++b) {
        const int di = kBeads[b][0], dj = kBeads[b][1];
        if (i < static_cast<std::size_t>(di) || j < static_cast<std::size_t>(dj)) continue;
        const std::size_t pi = i - static_cast<std::size_t>(di), pj = j - static_cast<std::size_t>(dj);
        if (best[idx(pi, pj)] == inf) continue;
        const double c = cost_of(pi, pj, di, dj);
        if (best[idx(pi, pj)] + c < best[idx(i, j)]) {
          best[idx(i, j)] = best[idx(pi, pj)] + c;
          back[idx(i, j)] = b;
        }
        alpha[idx(i, j)] = log_add(alpha[idx(i, j)], alpha[idx(pi, pj)] - c);
      }
    }
  }
  beta[idx(n, m)] = 0;
  for (std::size_t ii = n + 1; ii-- > 0;) {
    for (std::size_t jj = m + 1; jj-- > 0;) {
      if (ii == n && jj == m) continue;
      for (int b = 0; b < 5; ++b) {
        const std::size_t ni = ii + static_cast<std::size_t>(kBeads[b][0]);
        const std::size_t nj = jj + static_cast<std::size_t>(kBeads[b][1]);
        if (ni > n || nj > m) continue;
        beta[idx(ii, jj)] = log_add(beta[idx(ii, jj)], beta[idx(ni, nj)] - cost_of(ii, jj, kBeads[b][0], kBeads[b][1]));
      }
    }
  }
  const double z = alpha[idx(n, m)];
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const int b = back[idx(i, j)];
    const int di = kBeads[b][0], dj = kBeads[b][1];
    Bead bead;
    bead.left_count = di;
    bead.right_count = dj;
    bead.left_begin = i - static_cast<std::size_t>(di);
    bead.right_begin = j - static_cast<std::size_t>(dj);
    bead.cost = cost_of(bead.left_begin, bead.right_begin, di, dj);
    bead.posterior =
        std::clamp(std::exp(alpha[idx(bead.left_begin, bead.right_begin)] - bead.cost + beta[idx(i, j)] - z), 0.0, 1.0);
    out.beads.push_back(bead);
    i = bead.left_begin;
    j = bead.right_begin;
  }
  std::reverse(out.beads.begin(), out.beads.end());
  out.cost = best[idx(n, m)];
  return out;
}

double estimate_length_ratio(const std::vector<Sentence>& left, const std::vector<Sentence>& right) {
  double sl = 0, sr = 0;
  for (const auto& s : left) sl += s.word_count;
  for (const auto& s : right) sr += s.word_count;
  return sl > 0 && sr > 0 ? sr / sl : 1.0;
}

namespace {

Sentence merge(const std::vector<Sentence>& v, std::size_t from, int count) {
  Sentence s = v[from];
  for (int k = 1; k < count; ++k) {
    const Sentence& next = v[from + static_cast<std::size_t>(k)];
    s.text += " " + next.text;
    s.word_count += next.word_count;
    s.end = next.end;
  }
  return s;
}

}  // namespace

std::vector<SentencePair> slas_align(const std::vector<Sentence>& left, const std::vector<Sentence>& right,
                                     const SlasParams& params) {
  std::vector<SentencePair> out;
  if (left.empty() || right.empty()) return out;
  SlasParams p = params;
  if (p.ratio <= 0) p.ratio = estimate_length_ratio(left, right);
  std::vector<int> lw, rw;
  for (const auto& s : left) lw.push_back(s.word_count);
  for (const auto& s : right) rw.push_back(s.word_count);
  for (const auto& bead : slas_dp(lw, rw, p).beads) {
    if (bead.left_count == 0 || bead.right_count == 0) continue;
    SentencePair sp;
    sp.left = merge(left, bead.left_begin, bead.left_count);
    sp.right = merge(right, bead.right_begin, bead.right_count);
    sp.score = bead.posterior;
    sp.strategy = Strategy::SLAS;
    out.push_back(std::move(sp));
  }
  return out;
}

// ---------------------------------------------------------------- article pairs

std::vector<Sentence> article_sentences(const ArticleRecord& article) {
  std::vector<Sentence> out;
  for (RoiKind kind : {RoiKind::Headline, RoiKind::Content, RoiKind::Caption}) {
    int index = 0;
    for (const auto& roi : article.rois) {
      if (roi.kind != kind || !roi.text) continue;
      for (auto& s : split_sentences(*roi.text, article.language)) {
        s.index = index++;
        s.article_id = article.article_id;
        s.page_id = article.page_id;
        s.roi_kind = kind;
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

namespace {

struct Cell {
  std::size_t l;
  std::size_t r;
  double score;
};

std::vector<Cell> greedy_cells(std::vector<Cell> cells, double threshold) {
  std::erase_if(cells, [&](const Cell& c) { return !(c.score >= threshold); });
  std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.l, a.r) < std::tie(b.l, b.r);
  });
  std::set<std::size_t> used_l, used_r;
  std::vector<Cell> out;
  for (const auto& c : cells) {
    if (used_l.count(c.l) || used_r.count(c.r)) continue;
    used_l.insert(c.l);
    used_r.insert(c.r);
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::vector<SentencePair> align_sentences(const ArticlePair& pair, Strategy strategy, const AlignParams& params,
                                          EmbeddingProvider* provider, const PivotLexicon* left_lexicon,
                                          const PivotLexicon* right_lexicon) {
  if (strategy == Strategy::LAS && !provider) throw ValidationError("LAS alignment needs an embedding provider");
  if (strategy == Strategy::LO && (!left_lexicon || !right_lexicon))
    throw ValidationError("LO alignment needs a pivot lexicon for both languages");

  const auto left = article_sentences(pair.left);
  const auto right = article_sentences(pair.right);
  Provenance prov;
  prov.date = pair.left.date;
  prov.left_page = pair.left.page_id;
  prov.right_page = pair.right.page_id;
  prov.left_article = pair.left.article_id;
  prov.right_article = pair.right.article_id;
  prov.left_article_sentences = static_cast<int>(left.size());
  prov.right_article_sentences = static_cast<int>(right.size());

  std::vector<EmbeddingVector> lv, rv;
  if (strategy == Strategy::LAS && !left.empty() && !right.empty()) {
    std::vector<std::string> lt, rt;
    for (const auto& s : left) lt.push_back(s.text);
    for (const auto& s : right) rt.push_back(s.text);
    lv = provider->embed(lt, pair.left.language);
    rv = provider->embed(rt, pair.right.language);
    if (lv.size() != left.size() || rv.size() != right.size())
      throw StageError("embedding provider returned a wrong number of vectors");
  }

  std::vector<SentencePair> out;
  for (RoiKind kind : {RoiKind::Headline, RoiKind::Content, RoiKind::Caption}) {
    std::vector<std::size_t> li, ri;
    for (std::size_t k = 0; k < left.size(); ++k)
      if (left[k].roi_kind == kind) li.push_back(k);
    for (std::size_t k = 0; k < right.size(); ++k)
      if (right[k].roi_kind == kind) ri.push_back(k);
    if (li.empty() || ri.empty()) continue;

    if (strategy == Strategy::SLAS) {
      std::vector<Sentence> ls, rs;
      for (auto k : li) ls.push_back(left[k]);
      for (auto k : ri) rs.push_back(right[k]);
      SlasParams sp = params.slas;
      if (sp.ratio <= 0) sp.ratio = estimate_length_ratio(left, right);
      for (auto& p : slas_align(ls, rs, sp)) {
        if (!(p.score >= params.slas_threshold)) continue;
        p.provenance = prov;
        out.push_back(std::move(p));
      }
      continue;
    }

    std::vector<Cell> cells;
    for (std::size_t a = 0; a < li.size(); ++a) {
      for (std::size_t b = 0; b < ri.size(); ++b) {
        const double s = strategy == Strategy::LAS ? cosine(lv[li[a]], rv[ri[b]])
                                                   : lo_score(left[li[a]], right[ri[b]], *left_lexicon, *right_lexicon);
        cells.push_back({a, b, s});
      }
    }
    const double threshold = strategy == Strategy::LAS ? params.las_threshold : params.lo_threshold;
    for (const auto& c : greedy_cells(std::move(cells), threshold)) {
      SentencePair p;
      p.left = left[li[c.l]];
      p.right = right[ri[c.r]];
      p.score = c.score;
      p.strategy = strategy;
      p.provenance = prov;
      out.push_back(std::move(p));
    }
  }
  return out;
}

HeadlineSimilarity las_headline_similarity(EmbeddingProvider& provider, std::string left_language,
                                           std::string right_language) {
  return [&provider, left_language, right_language](const std::string& l, const std::string& r) {
    const auto a = provider.embed({l}, left_language);
    const auto b = provider.embed({r}, right_language);
    return cosine(a.at(0), b.at(0));
  };
}

}  // namespace cforge
