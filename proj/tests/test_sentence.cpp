#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include "doctest.h"

#include "cforge/error.hpp"
#include "cforge/fixture.hpp"
#include "cforge/rng.hpp"
#include "cforge/sentence.hpp"
#include "cforge/unicode.hpp"

using namespace cforge;

namespace {

class StubProvider : public EmbeddingProvider {
 public:
  std::map<std::string, std::vector<double>> table;
  int calls = 0;
  std::string id() const override { return "stub"; }
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts, const std::string&) override {
    ++calls;
    std::vector<EmbeddingVector> out;
    for (const auto& t : texts) out.push_back({table.at(t), "stub"});
    return out;
  }
};

Sentence sent(const std::string& text, const std::string& lang = "kok", RoiKind kind = RoiKind::Content) {
  Sentence s;
  s.text = text;
  s.language = lang;
  s.roi_kind = kind;
  s.word_count = static_cast<int>(unicode::tokenize(text).size());
  return s;
}

std::string tsv(const LexiconEntries& entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += k + "\t" + v + "\n";
  return out;
}

// Every bead path over n x m by direct recursion; returns the minimum total cost.
double brute_force(const std::vector<int>& l, const std::vector<int>& r, std::size_t i, std::size_t j, double ratio,
                   const SlasParams& p) {
  if (i == l.size() && j == r.size()) return 0;
  static constexpr int kBeads[5][2] = {{1, 1}, {1, 0}, {0, 1}, {2, 1}, {1, 2}};
  double best = std::numeric_limits<double>::infinity();
  for (const auto& b : kBeads) {
    const std::size_t ni = i + static_cast<std::size_t>(b[0]), nj = j + static_cast<std::size_t>(b[1]);
    if (ni > l.size() || nj > r.size()) continue;
    int lw = 0, rw = 0;
    for (std::size_t k = i; k < ni; ++k) lw += l[k];
    for (std::size_t k = j; k < nj; ++k) rw += r[k];
    best = std::min(best, bead_cost(lw, rw, b[0], b[1], ratio, p) + brute_force(l, r, ni, nj, ratio, p));
  }
  return best;
}

// Sum over every path of exp(-cost), and the same restricted to paths containing the bead.
void path_mass(const std::vector<int>& l, const std::vector<int>& r, std::size_t i, std::size_t j, double ratio,
               const SlasParams& p, double acc, const Bead& target, bool hit, double& total, double& with) {
  if (i == l.size() && j == r.size()) {
    total += std::exp(-acc);
    if (hit) with += std::exp(-acc);
    return;
  }
  static constexpr int kBeads[5][2] = {{1, 1}, {1, 0}, {0, 1}, {2, 1}, {1, 2}};
  for (const auto& b : kBeads) {
    const std::size_t ni = i + static_cast<std::size_t>(b[0]), nj = j + static_cast<std::size_t>(b[1]);
    if (ni > l.size() || nj > r.size()) continue;
    int lw = 0, rw = 0;
    for (std::size_t k = i; k < ni; ++k) lw += l[k];
    for (std::size_t k = j; k < nj; ++k) rw += r[k];
    const bool is = i == target.left_begin && j == target.right_begin && b[0] == target.left_count &&
                    b[1] == target.right_count;
    path_mass(l, r, ni, nj, ratio, p, acc + bead_cost(lw, rw, b[0], b[1], ratio, p), target, hit || is, total, with);
  }
}

std::vector<int> random_lengths(Rng& rng, int lo, int hi) {
  std::vector<int> v(static_cast<std::size_t>(rng.uniform_int(lo, hi)));
  for (auto& x : v) x = static_cast<int>(rng.uniform_int(1, 30));
  return v;
}

ArticleRecord with_texts(const std::string& id, const std::string& lang,
                         const std::vector<std::pair<RoiKind, std::string>>& rois) {
  ArticleRecord a;
  a.article_id = id;
  a.page_id = id + "-p";
  a.language = lang;
  a.date = Date{2023, 1, 15};
  int y = 0;
  for (const auto& [kind, text] : rois) {
    a.rois.push_back({kind, {0, y, 100, 20}, 1, kind == RoiKind::Headline ? std::optional<int>(0) : std::nullopt, 0, text});
    y += 30;
  }
  return a;
}

ArticlePair pair_of(ArticleRecord l, ArticleRecord r) {
  ArticlePair p;
  p.left = std::move(l);
  p.right = std::move(r);
  return p;
}

ArticleRecord from_truth(const TruthArticle& t, const std::string& lang) {
  ArticleRecord a;
  a.article_id = t.key;
  a.page_id = lang + std::to_string(t.page_number);
  a.language = lang;
  a.date = Date{2023, 1, 15};
  a.bounds = t.bounds;
  for (const auto& r : t.rois) a.rois.push_back({r.kind, r.box, r.seq_index, r.sub_index, 0, r.text});
  return a;
}

}  // namespace

TEST_CASE("sentence splitting") {
  const auto two = split_sentences("राम घरी गेला। तो झोपला।", "mar");
  REQUIRE(two.size() == 2);
  CHECK(two[0].text == "राम घरी गेला।");
  CHECK(two[1].text == "तो झोपला।");
  CHECK(two[0].word_count == 3);
  CHECK(two[1].index == 1);
  CHECK(split_sentences("", "mar").empty());
  CHECK(split_sentences("   ", "mar").empty());
  CHECK(split_sentences("Dr. Rao met A. Naik. Then he left!", "en").size() == 2);
  CHECK(split_sentences("one॥ two? three", "kok").size() == 3);
  CHECK(split_sentences("3.14 is pi.", "en").size() == 1);
}

TEST_CASE("fixture sentence offsets are reproduced") {
  int danda_question = 0;
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    const auto bundle = gen_fixture(seed);
    for (const auto& a : bundle.articles)
      for (const auto& r : a.rois) {
        if (r.kind != RoiKind::Content || r.text.empty()) continue;
        const auto got = split_sentences(r.text, a.language);
        REQUIRE(got.size() == r.sentences.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
          CHECK(got[i].begin == r.sentences[i].first);
          CHECK(got[i].end == r.sentences[i].second);
          CHECK(got[i].text == r.text.substr(got[i].begin, got[i].end - got[i].begin));
        }
        const bool has_danda = r.text.find("\xE0\xA5\xA4") != std::string::npos;
        if (has_danda && r.text.find('?') != std::string::npos) ++danda_question;
      }
  }
  CHECK(danda_question >= 1);
}

TEST_CASE("hash_embed contract") {
  const auto a = hash_embed("abcdef");
  CHECK(a.components == hash_embed("abcdef").components);
  CHECK(a.dim() == 256);
  double n = 0;
  for (double v : a.components) n += v * v;
  CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(cosine(a, hash_embed("abcdeg")) > cosine(a, hash_embed("zzzzzz")));
  CHECK(hash_embed("x", 16).dim() == 16);
  CHECK_THROWS_AS(hash_embed(""), ValidationError);
  CHECK_THROWS_AS(hash_embed("abc", 8), ValidationError);

  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::string s;
    for (int k = rng.uniform_int(1, 30); k > 0; --k) s += static_cast<char>('a' + rng.uniform_int(0, 25));
    const auto e = hash_embed(s, 64);
    double m = 0;
    for (double v : e.components) m += v * v;
    CHECK(std::sqrt(m) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(cosine(e, e) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("las_score with a stub provider") {
  StubProvider p;
  p.table = {{"x", {1, 0}}, {"y", {0, 1}}, {"z", {0.6, 0.8}}};
  CHECK(las_score(sent("x"), sent("y", "mar"), p) == doctest::Approx(0.0));
  CHECK(las_score(sent("x"), sent("z", "mar"), p) == doctest::Approx(0.6));
  CHECK(las_score(sent("z"), sent("z", "mar"), p) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(las_score(sent("x"), sent("z", "mar"), p) == las_score(sent("z"), sent("x", "mar"), p));
}

TEST_CASE("las_score is symmetric with the builtin provider") {
  BuiltinProvider p;
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    std::string a, b;
    for (int k = 0; k < 6; ++k) a += std::string(1, static_cast<char>('a' + rng.uniform_int(0, 9))) + "x ";
    for (int k = 0; k < 6; ++k) b += std::string(1, static_cast<char>('a' + rng.uniform_int(0, 9))) + "y ";
    CHECK(las_score(sent(a), sent(b, "mar"), p) == las_score(sent(b, "mar"), sent(a), p));
  }
  CHECK(las_score(sent("same words here"), sent("same words here", "mar"), p) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("lo_score arithmetic") {
  const auto lex_a = parse_lexicon("a1\tthe\na2\tcat\na3\tsat\n", "kok");
  const auto lex_b = parse_lexicon("b1\tcat\nb2\tsat\nb3\tmat\nb4\tdog\n", "mar");
  CHECK(lo_score(sent("a1 a2 a3"), sent("b1 b2 b3", "mar"), lex_a, lex_b) == doctest::Approx(2.0 / 3.0));
  CHECK(lo_score(sent("a1"), sent("b4", "mar"), lex_a, lex_b) == 0.0);
  CHECK(lo_score(sent("a2 a3"), sent("b1 b2", "mar"), lex_a, lex_b) == doctest::Approx(1.0));
  CHECK(lo_score(sent("unknown"), sent("b1", "mar"), lex_a, lex_b) == 0.0);
  // Partial coverage: the unknown token contributes nothing.
  CHECK(lo_score(sent("a2 zz"), sent("b1", "mar"), lex_a, lex_b) == doctest::Approx(1.0));
  // Precision 1/3, recall 1/1.
  CHECK(lo_score(sent("a1 a2 a3"), sent("b1", "mar"), lex_a, lex_b) == doctest::Approx(0.5));
}

TEST_CASE("lo_score is symmetric") {
  const auto lex = parse_lexicon("p\tone\nq\ttwo\nr\tthree\ns\tone\ns\tfour\n", "kok");
  Rng rng(13);
  const std::vector<std::string> words{"p", "q", "r", "s", "t"};
  for (int t = 0; t < 200; ++t) {
    std::string a, b;
    for (int k = rng.uniform_int(1, 6); k > 0; --k) a += words[static_cast<std::size_t>(rng.uniform_int(0, 4))] + " ";
    for (int k = rng.uniform_int(1, 6); k > 0; --k) b += words[static_cast<std::size_t>(rng.uniform_int(0, 4))] + " ";
    CHECK(lo_score(sent(a), sent(b), lex, lex) == doctest::Approx(lo_score(sent(b), sent(a), lex, lex)));
  }
}

TEST_CASE("lexicon parsing normalizes and accumulates") {
  const auto lex = parse_lexicon("Abc\tX\nabc\ty\n\ne\xCC\x81\tz\n", "kok");
  REQUIRE(lex.lookup("abc"));
  CHECK(*lex.lookup("abc") == std::vector<std::string>{"x", "y"});
  CHECK(lex.lookup("\xC3\xA9"));
  CHECK_FALSE(lex.lookup("nope"));
  CHECK_THROWS_AS(parse_lexicon("no tab here\n", "kok"), ValidationError);
}

TEST_CASE("SLAS DP equals brute force on small instances") {
  Rng rng(1234);
  SlasParams p;
  for (int t = 0; t < 200; ++t) {
    const auto l = random_lengths(rng, 1, 5), r = random_lengths(rng, 1, 5);
    p.ratio = 0.7 + 0.6 * rng.uniform01();
    const auto dp = slas_dp(l, r, p);
    CHECK(dp.cost == doctest::Approx(brute_force(l, r, 0, 0, p.ratio, p)).epsilon(1e-9));
    double sum = 0;
    std::size_t li = 0, ri = 0;
    for (const auto& b : dp.beads) {
      CHECK(b.left_begin == li);
      CHECK(b.right_begin == ri);
      li += static_cast<std::size_t>(b.left_count);
      ri += static_cast<std::size_t>(b.right_count);
      sum += b.cost;
      CHECK(b.posterior >= 0.0);
      CHECK(b.posterior <= 1.0);
    }
    CHECK(li == l.size());
    CHECK(ri == r.size());
    CHECK(sum == doctest::Approx(dp.cost));
  }
}

TEST_CASE("SLAS posteriors match path enumeration") {
  Rng rng(77);
  SlasParams p;
  p.ratio = 1.1;
  for (int t = 0; t < 30; ++t) {
    const auto l = random_lengths(rng, 1, 4), r = random_lengths(rng, 1, 4);
    for (const auto& b : slas_dp(l, r, p).beads) {
      double total = 0, with = 0;
      path_mass(l, r, 0, 0, p.ratio, p, 0, b, false, total, with);
      CHECK(b.posterior == doctest::Approx(with / total).epsilon(1e-9));
    }
  }
}

TEST_CASE("SLAS examples") {
  SlasParams p;
  p.ratio = 1.0;
  const auto diag = slas_dp({5, 12, 8, 20}, {5, 12, 8, 20}, p);
  REQUIRE(diag.beads.size() == 4);
  for (const auto& b : diag.beads) {
    CHECK(b.left_count == 1);
    CHECK(b.right_count == 1);
  }

  const std::vector<int> l{10, 14, 9, 30}, r{10, 14, 9};
  const auto extra = slas_dp(l, r, p);
  CHECK(extra.cost == doctest::Approx(brute_force(l, r, 0, 0, 1.0, p)));
  REQUIRE(extra.beads.size() == 4);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(extra.beads[i].left_count == 1);
    CHECK(extra.beads[i].right_count == 1);
  }
  CHECK(extra.beads[3].left_count == 1);
  CHECK(extra.beads[3].right_count == 0);
  CHECK(slas_dp({}, {3}, p).beads.empty());
}

TEST_CASE("slas_align emits only 1-1, 2-1 and 1-2 beads with merged text") {
  std::vector<Sentence> left{sent("a b c d e"), sent("f g"), sent("h i j"), sent("k l m n o p q r")};
  std::vector<Sentence> right{sent("v w x y z", "mar"), sent("q r s t u", "mar"), sent("a b c d e f g h", "mar")};
  for (std::size_t i = 0; i < left.size(); ++i) left[i].index = static_cast<int>(i);
  SlasParams p;
  p.ratio = 1.0;
  const auto pairs = slas_align(left, right, p);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].left.text == "a b c d e");
  CHECK(pairs[1].left.text == "f g h i j");
  CHECK(pairs[1].left.word_count == 5);
  CHECK(pairs[2].right.text == "a b c d e f g h");
  for (const auto& sp : pairs) {
    CHECK(sp.strategy == Strategy::SLAS);
    CHECK(sp.score >= 0.0);
    CHECK(sp.score <= 1.0);
  }
  CHECK(slas_align({}, right, p).empty());
}

TEST_CASE("length ratio estimate") {
  CHECK(estimate_length_ratio({sent("a b"), sent("c d")}, {sent("a b c", "mar"), sent("d e f", "mar")}) ==
        doctest::Approx(1.5));
  CHECK(estimate_length_ratio({}, {sent("a")}) == 1.0);
}

TEST_CASE("alignment stays within ROI streams and is one-to-one") {
  const auto l = with_texts("l", "kok", {{RoiKind::Headline, "alpha beta gamma"}, {RoiKind::Content, "alpha beta gamma. delta eps zeta."}});
  const auto r = with_texts("r", "mar", {{RoiKind::Headline, "delta eps zeta"}, {RoiKind::Content, "alpha beta gamma. delta eps zeta. alpha beta gamma."}});
  BuiltinProvider p;
  AlignParams params;
  params.las_threshold = 0.3;
  const auto pairs = align_sentences(pair_of(l, r), Strategy::LAS, params, &p);
  std::set<std::pair<RoiKind, int>> ls, rs;
  for (const auto& sp : pairs) {
    CHECK(sp.left.roi_kind == sp.right.roi_kind);
    CHECK(ls.insert({sp.left.roi_kind, sp.left.index}).second);
    CHECK(rs.insert({sp.right.roi_kind, sp.right.index}).second);
    CHECK(sp.provenance.left_article == "l");
    CHECK(sp.provenance.right_article == "r");
    CHECK(sp.provenance.left_article_sentences == 3);
    CHECK(sp.provenance.right_article_sentences == 4);
    CHECK(sp.score >= -1.0);
    CHECK(sp.score <= 1.0);
  }
  // Headline "alpha beta gamma" must not pair with content even though it matches textually.
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].left.text == "alpha beta gamma.");
  CHECK(pairs[0].right.index == 0);
  CHECK(pairs[1].left.text == "delta eps zeta.");
}

TEST_CASE("empty content on one side yields no pairs") {
  const auto l = with_texts("l", "kok", {{RoiKind::Content, "alpha beta gamma."}});
  const auto r = with_texts("r", "mar", {{RoiKind::Content, ""}});
  BuiltinProvider p;
  const auto lex = parse_lexicon("a\tb\n", "kok");
  CHECK(align_sentences(pair_of(l, r), Strategy::LAS, {}, &p).empty());
  CHECK(align_sentences(pair_of(l, r), Strategy::SLAS, {}).empty());
  CHECK(align_sentences(pair_of(l, r), Strategy::LO, {}, nullptr, &lex, &lex).empty());
}

TEST_CASE("missing strategy dependencies are rejected") {
  const auto l = with_texts("l", "kok", {{RoiKind::Content, "alpha."}});
  const auto r = with_texts("r", "mar", {{RoiKind::Content, "beta."}});
  const auto lex = parse_lexicon("a\tb\n", "kok");
  CHECK_THROWS_AS(align_sentences(pair_of(l, r), Strategy::LAS, {}), ValidationError);
  CHECK_THROWS_AS(align_sentences(pair_of(l, r), Strategy::LO, {}, nullptr, &lex), ValidationError);
  CHECK_NOTHROW(align_sentences(pair_of(l, r), Strategy::SLAS, {}));
}

TEST_CASE("fixture pairs: LAS recovers the truth and outranks SLAS and LO") {
  for (std::uint64_t seed : {1, 2}) {
    const auto bundle = gen_fixture(seed);
    const auto& spec = bundle.spec;
    auto lex_l = std::make_shared<PivotLexicon>(parse_lexicon(tsv(bundle.left_lexicon), spec.left_language));
    auto lex_r = std::make_shared<PivotLexicon>(parse_lexicon(tsv(bundle.right_lexicon), spec.right_language));
    const auto part_l = parse_lexicon(tsv(bundle.left_partial_lexicon), spec.left_language);
    const auto part_r = parse_lexicon(tsv(bundle.right_partial_lexicon), spec.right_language);
    BuiltinProvider provider;
    provider.add_lexicon(lex_l);
    provider.add_lexicon(lex_r);

    std::vector<ArticlePair> pairs;
    std::vector<Sentence> all_l, all_r;
    for (const auto& [lk, rk] : bundle.article_pairs) {
      pairs.push_back(pair_of(from_truth(*bundle.article(lk), spec.left_language),
                              from_truth(*bundle.article(rk), spec.right_language)));
      for (const auto& s : article_sentences(pairs.back().left)) all_l.push_back(s);
      for (const auto& s : article_sentences(pairs.back().right)) all_r.push_back(s);
    }
    AlignParams params;
    params.slas.ratio = estimate_length_ratio(all_l, all_r);

    std::multiset<std::pair<std::string, std::string>> truth;
    for (const auto& t : bundle.sentence_pairs) truth.insert({t.left, t.right});
    auto f1 = [&](Strategy s) {
      std::multiset<std::pair<std::string, std::string>> remaining = truth;
      int predicted = 0, correct = 0;
      for (const auto& p : pairs)
        for (const auto& sp : align_sentences(p, s, params, &provider, &part_l, &part_r)) {
          ++predicted;
          const auto it = remaining.find({sp.left.text, sp.right.text});
          if (it != remaining.end()) {
            ++correct;
            remaining.erase(it);
          }
        }
      const double prec = predicted ? double(correct) / predicted : 0, rec = double(correct) / truth.size();
      return prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    };
    const double las = f1(Strategy::LAS), slas = f1(Strategy::SLAS), lo = f1(Strategy::LO);
    CHECK(las >= 0.9);
    CHECK(las >= slas);
    CHECK(las >= lo);
  }
}

TEST_CASE("raising an alignment threshold never adds a pair") {
  const auto bundle = gen_fixture(3);
  const auto& spec = bundle.spec;
  auto lex_l = std::make_shared<PivotLexicon>(parse_lexicon(tsv(bundle.left_lexicon), spec.left_language));
  auto lex_r = std::make_shared<PivotLexicon>(parse_lexicon(tsv(bundle.right_lexicon), spec.right_language));
  BuiltinProvider provider;
  provider.add_lexicon(lex_l);
  provider.add_lexicon(lex_r);
  const auto& [lk, rk] = bundle.article_pairs.front();
  const auto pair = pair_of(from_truth(*bundle.article(lk), spec.left_language),
                            from_truth(*bundle.article(rk), spec.right_language));
  auto keyset = [](const std::vector<SentencePair>& v) {
    std::set<std::tuple<RoiKind, int, int>> s;
    for (const auto& p : v) s.insert({p.left.roi_kind, p.left.index, p.right.index});
    return s;
  };
  for (Strategy s : {Strategy::LAS, Strategy::LO, Strategy::SLAS}) {
    std::set<std::tuple<RoiKind, int, int>> previous;
    bool first = true;
    for (double t : {0.0, 0.2, 0.4, 0.6, 0.8, 0.95}) {
      AlignParams params;
      params.las_threshold = params.lo_threshold = params.slas_threshold = t;
      params.slas.ratio = 1.0;
      const auto now = keyset(align_sentences(pair, s, params, &provider, lex_l.get(), lex_r.get()));
      if (!first) CHECK(std::includes(previous.begin(), previous.end(), now.begin(), now.end()));
      previous = now;
      first = false;
    }
  }
}

TEST_CASE("strategy names round-trip") {
  for (Strategy s : {Strategy::LAS, Strategy::SLAS, Strategy::LO}) CHECK(strategy_from(strategy_name(s)) == s);
  CHECK_FALSE(strategy_from("bleu"));
}
