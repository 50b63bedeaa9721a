#include "cforge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "cforge/digest.hpp"
#include "cforge/error.hpp"
#include "cforge/rng.hpp"
#include "cforge/unicode.hpp"

namespace cforge {

using nlohmann::json;

namespace {

int kind_rank(RoiKind k) {
  switch (k) {
    case RoiKind::Headline: return 0;
    case RoiKind::Content: return 1;
    case RoiKind::Caption: return 2;
    default: return 3;
  }
}

std::string normalize(std::string_view text) { return unicode::squeeze_spaces(unicode::nfc(text)); }

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& file, const std::string& content) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw StageError("cannot write " + file.string());
  out << content;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json provenance_object(const SentencePair& p) {
  const auto& pr = p.provenance;
  return json{{"date", pr.date.to_string()},
              {"left_page", pr.left_page},
              {"right_page", pr.right_page},
              {"left_article", pr.left_article},
              {"right_article", pr.right_article},
              {"left_language", p.left.language},
              {"right_language", p.right.language},
              {"roi", std::string(1, roi_letter(p.left.roi_kind))},
              {"left_index", p.left.index},
              {"right_index", p.right.index},
              {"left_words", p.left.word_count},
              {"right_words", p.right.word_count},
              {"left_article_sentences", pr.left_article_sentences},
              {"right_article_sentences", pr.right_article_sentences},
              {"split", p.left.roi_kind == RoiKind::Caption ? "caption" : "main"}};
}

SentencePair pair_from(const std::string& left, const std::string& right, double score, const std::string& strategy,
                       const json& prov) {
  SentencePair p;
  p.left.text = left;
  p.right.text = right;
  p.score = score;
  const auto s = strategy_from(strategy);
  if (!s) throw ValidationError("unknown strategy '" + strategy + "'");
  p.strategy = *s;
  const auto date = Date::parse(prov.value("date", std::string{}));
  if (date) p.provenance.date = *date;
  p.provenance.left_page = prov.value("left_page", std::string{});
  p.provenance.right_page = prov.value("right_page", std::string{});
  p.provenance.left_article = prov.value("left_article", std::string{});
  p.provenance.right_article = prov.value("right_article", std::string{});
  p.provenance.left_article_sentences = prov.value("left_article_sentences", 0);
  p.provenance.right_article_sentences = prov.value("right_article_sentences", 0);
  p.left.language = prov.value("left_language", std::string{});
  p.right.language = prov.value("right_language", std::string{});
  const auto kind = roi_kind_from(prov.value("roi", std::string("C"))).value_or(RoiKind::Content);
  p.left.roi_kind = p.right.roi_kind = kind;
  p.left.index = prov.value("left_index", 0);
  p.right.index = prov.value("right_index", 0);
  p.left.article_id = p.provenance.left_article;
  p.right.article_id = p.provenance.right_article;
  p.left.page_id = p.provenance.left_page;
  p.right.page_id = p.provenance.right_page;
  p.left.word_count = prov.value("left_words", static_cast<int>(unicode::tokenize(left).size()));
  p.right.word_count = prov.value("right_words", static_cast<int>(unicode::tokenize(right).size()));
  return p;
}

}  // namespace

BilingualCorpus build_corpus(const std::vector<SentencePair>& pairs, std::vector<std::string> languages) {
  BilingualCorpus c;
  c.languages = std::move(languages);
  std::vector<SentencePair> norm;
  norm.reserve(pairs.size());
  for (const auto& p : pairs) {
    SentencePair q = p;
    q.left.text = normalize(p.left.text);
    q.right.text = normalize(p.right.text);
    if (q.left.text.empty() || q.right.text.empty()) continue;
    norm.push_back(std::move(q));
  }
  std::stable_sort(norm.begin(), norm.end(), [](const SentencePair& a, const SentencePair& b) {
    const auto key = [](const SentencePair& p) {
      return std::make_tuple(p.provenance.date, p.provenance.left_page, p.provenance.left_article,
                             p.provenance.right_article, kind_rank(p.left.roi_kind), p.left.index, p.right.index,
                             strategy_name(p.strategy), p.left.text, p.right.text);
    };
    return key(a) < key(b);
  });
  std::set<std::pair<std::string, std::string>> seen;
  for (auto& p : norm) {
    if (!seen.emplace(p.left.text, p.right.text).second) {
      ++c.stats.duplicates_dropped;
      continue;
    }
    ++c.stats.total;
    ++c.stats.by_strategy[strategy_name(p.strategy)];
    ++c.stats.by_kind[std::string(1, roi_letter(p.left.roi_kind))];
    c.pairs.push_back(std::move(p));
  }
  if (c.languages.empty() && !c.pairs.empty())
    c.languages = {c.pairs.front().left.language, c.pairs.front().right.language};
  return c;
}

std::string pair_id(const SentencePair& pair) {
  Sha256 h;
  h.field(pair.left.text).field(pair.right.text);
  return h.hex().substr(0, 12);
}

std::string provenance_json(const SentencePair& pair) { return provenance_object(pair).dump(); }

std::string corpus_to_tsv(const std::vector<SentencePair>& pairs) {
  std::string out;
  for (const auto& p : pairs)
    out += p.left.text + '\t' + p.right.text + '\t' + fixed6(p.score) + '\t' + strategy_name(p.strategy) + '\t' +
           provenance_json(p) + '\n';
  return out;
}

std::string corpus_to_jsonl(const std::vector<SentencePair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    json j{{"left", p.left.text},
           {"right", p.right.text},
           {"score", p.score},
           {"strategy", strategy_name(p.strategy)},
           {"provenance", provenance_object(p)}};
    out += j.dump() + '\n';
  }
  return out;
}

std::vector<SentencePair> corpus_from_jsonl(std::string_view text) {
  std::vector<SentencePair> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw ValidationError("pair line " + std::to_string(line_no) + " is not a JSON object");
    out.push_back(pair_from(j.at("left").get<std::string>(), j.at("right").get<std::string>(),
                            j.value("score", 0.0), j.value("strategy", std::string("las")),
                            j.value("provenance", json::object())));
  }
  return out;
}

std::vector<std::filesystem::path> write_corpus(const BilingualCorpus& corpus, const std::filesystem::path& tsv) {
  std::vector<SentencePair> main, captions;
  for (const auto& p : corpus.pairs) (p.left.roi_kind == RoiKind::Caption ? captions : main).push_back(p);
  auto sibling = [&](const std::string& suffix) {
    auto f = tsv;
    f.replace_filename(tsv.stem().string() + suffix);
    return f;
  };
  const std::vector<std::filesystem::path> files{tsv, sibling(".jsonl"), sibling(".caption.tsv"),
                                                 sibling(".caption.jsonl")};
  write_file(files[0], corpus_to_tsv(main));
  write_file(files[1], corpus_to_jsonl(main));
  write_file(files[2], corpus_to_tsv(captions));
  write_file(files[3], corpus_to_jsonl(captions));
  return files;
}

std::vector<SentencePair> read_corpus_tsv(const std::filesystem::path& file) {
  std::vector<SentencePair> out;
  std::istringstream in(read_file(file));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t from = 0;
    for (int k = 0; k < 4; ++k) {
      const auto tab = line.find('\t', from);
      if (tab == std::string::npos) break;
      cols.push_back(line.substr(from, tab - from));
      from = tab + 1;
    }
    cols.push_back(line.substr(from));
    if (cols.size() != 5)
      throw ValidationError(file.string() + ":" + std::to_string(line_no) + ": expected 5 tab-separated columns");
    const auto prov = json::parse(cols[4], nullptr, false);
    if (prov.is_discarded()) throw ValidationError(file.string() + ":" + std::to_string(line_no) + ": bad provenance");
    out.push_back(pair_from(cols[0], cols[1], std::stod(cols[2]), cols[3], prov));
  }
  return out;
}

std::vector<SentencePair> read_pairs_jsonl(const std::filesystem::path& file) {
  return corpus_from_jsonl(read_file(file));
}

// ---------------------------------------------------------------- STS

std::string LengthBin::label() const { return hi ? std::to_string(lo) + "-" + std::to_string(*hi) : std::to_string(lo) + "+"; }

std::vector<LengthBin> sentence_length_bins() { return {{1, 10}, {11, 19}, {20, std::nullopt}}; }
std::vector<LengthBin> article_length_bins() { return {{1, 5}, {6, 15}, {16, std::nullopt}}; }

StsSheet sample_sts(const BilingualCorpus& corpus, int n_per_stratum, const std::vector<LengthBin>& strata,
                    std::uint64_t seed) {
  if (n_per_stratum < 0) throw ValidationError("n_per_stratum must not be negative");
  StsSheet sheet;
  Rng rng(seed);
  for (const auto& bin : strata) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < corpus.pairs.size(); ++i)
      if (bin.contains(corpus.pairs[i].left.word_count)) members.push_back(i);
    rng.shuffle(members);
    StratumCount count;
    count.label = bin.label();
    count.available = static_cast<int>(members.size());
    count.taken = std::min(count.available, n_per_stratum);
    count.shortfall = n_per_stratum - count.taken;
    for (int k = 0; k < count.taken; ++k) {
      const auto& p = corpus.pairs[members[static_cast<std::size_t>(k)]];
      sheet.rows.push_back({pair_id(p), p.left.text, p.right.text, std::nullopt, {}});
    }
    sheet.strata.push_back(count);
  }
  rng.shuffle(sheet.rows);
  return sheet;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (quoted) throw ValidationError("unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string sheet_to_csv(const StsSheet& sheet) {
  std::string out = "pair_id,left_text,right_text,score\n";
  for (const auto& r : sheet.rows)
    out += csv_field(r.pair_id) + ',' + csv_field(r.left_text) + ',' + csv_field(r.right_text) + ',' +
           (r.score ? std::to_string(*r.score) : std::string{}) + '\n';
  return out;
}

std::vector<StsRow> parse_sheet_csv(std::string_view csv, const std::string& default_annotator) {
  auto rows = parse_csv(csv);
  if (rows.empty()) return {};
  const auto& header = rows.front();
  if (header.size() < 4 || header[0] != "pair_id" || header[3] != "score")
    throw ValidationError("annotation sheet header must be pair_id,left_text,right_text,score[,annotator]");
  std::vector<StsRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto& r = rows[i];
    r.resize(std::max<std::size_t>(r.size(), 5));
    StsRow row;
    row.pair_id = r[0];
    row.left_text = r[1];
    row.right_text = r[2];
    const std::string score = unicode::squeeze_spaces(r[3]);
    if (!score.empty()) {
      std::size_t used = 0;
      try {
        const int v = std::stoi(score, &used);
        if (used == score.size()) row.score = v;
        else row.score = -1;
      } catch (const std::exception&) {
        row.score = -1;
      }
    }
    row.annotator = r[4].empty() ? default_annotator : r[4];
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<StsRow> read_sheet_csv(const std::filesystem::path& file) {
  return parse_sheet_csv(read_file(file), file.stem().string());
}

StsReport aggregate_sts(const std::vector<StsRow>& annotations, const BilingualCorpus& corpus) {
  StsReport rep;
  std::map<std::string, const SentencePair*> by_id;
  for (const auto& p : corpus.pairs) by_id.emplace(pair_id(p), &p);

  // pair id -> (sum, count), in first-seen order for determinism.
  std::vector<std::string> order;
  std::map<std::string, std::pair<double, int>> scores;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    if (!by_id.count(a.pair_id)) {
      rep.errors.push_back({i, a.pair_id, "unknown pair id"});
      continue;
    }
    if (!a.score) continue;  // not annotated yet
    if (*a.score < 0 || *a.score > 5) {
      rep.errors.push_back({i, a.pair_id, "score outside 0..5"});
      continue;
    }
    auto [it, fresh] = scores.try_emplace(a.pair_id, 0.0, 0);
    if (fresh) order.push_back(a.pair_id);
    it->second.first += *a.score;
    it->second.second += 1;
  }

  const auto sbins = sentence_length_bins();
  const auto abins = article_length_bins();
  struct Acc {
    double sum = 0;
    int n = 0;
    void add(double v) {
      sum += v;
      ++n;
    }
    StsBucket bucket() const { return {n ? sum / n : 0.0, n}; }
  };
  struct StrategyAcc {
    std::vector<Acc> s, a;
    std::vector<std::vector<Acc>> m;
    Acc all;
  };
  std::map<std::string, StrategyAcc> acc;
  double total = 0;
  int above = 0;
  for (const auto& id : order) {
    const auto& [sum, n] = scores[id];
    const double v = sum / n;
    const SentencePair& p = *by_id[id];
    total += v;
    above += v > 3.0 ? 1 : 0;
    auto& sa = acc[strategy_name(p.strategy)];
    if (sa.s.empty()) {
      sa.s.resize(sbins.size());
      sa.a.resize(abins.size());
      sa.m.assign(sbins.size(), std::vector<Acc>(abins.size()));
    }
    sa.all.add(v);
    std::optional<std::size_t> si, ai;
    for (std::size_t k = 0; k < sbins.size(); ++k)
      if (sbins[k].contains(p.left.word_count)) si = k;
    for (std::size_t k = 0; k < abins.size(); ++k)
      if (abins[k].contains(p.provenance.left_article_sentences)) ai = k;
    if (si) sa.s[*si].add(v);
    if (ai) sa.a[*ai].add(v);
    if (si && ai) sa.m[*si][*ai].add(v);
  }
  rep.pairs = static_cast<int>(order.size());
  rep.mean_sts = rep.pairs ? total / rep.pairs : 0.0;
  rep.frac_above_3 = rep.pairs ? static_cast<double>(above) / rep.pairs : 0.0;
  for (const auto& [name, sa] : acc) {
    StrategyReport sr;
    for (const auto& x : sa.s) sr.by_sentence_length.push_back(x.bucket());
    for (const auto& x : sa.a) sr.by_article_length.push_back(x.bucket());
    for (const auto& row : sa.m) {
      sr.matrix.emplace_back();
      for (const auto& x : row) sr.matrix.back().push_back(x.bucket());
    }
    sr.overall = sa.all.bucket();
    rep.strategies[name] = std::move(sr);
  }
  return rep;
}

std::string report_to_json(const StsReport& report) {
  auto bucket = [](const StsBucket& b) { return json{{"mean", b.mean}, {"count", b.count}}; };
  json j{{"mean_sts", report.mean_sts}, {"frac_above_3", report.frac_above_3}, {"pairs", report.pairs}};
  j["sentence_bins"] = json::array();
  for (const auto& b : sentence_length_bins()) j["sentence_bins"].push_back(b.label());
  j["article_bins"] = json::array();
  for (const auto& b : article_length_bins()) j["article_bins"].push_back(b.label());
  j["strategies"] = json::object();
  for (const auto& [name, sr] : report.strategies) {
    json s;
    s["overall"] = bucket(sr.overall);
    s["by_sentence_length"] = json::array();
    for (const auto& b : sr.by_sentence_length) s["by_sentence_length"].push_back(bucket(b));
    s["by_article_length"] = json::array();
    for (const auto& b : sr.by_article_length) s["by_article_length"].push_back(bucket(b));
    s["matrix"] = json::array();
    for (const auto& row : sr.matrix) {
      json r = json::array();
      for (const auto& b : row) r.push_back(bucket(b));
      s["matrix"].push_back(r);
    }
    j["strategies"][name] = s;
  }
  j["errors"] = json::array();
  for (const auto& e : report.errors) j["errors"].push_back({{"row", e.row}, {"pair_id", e.pair_id}, {"message", e.message}});
  return j.dump(2);
}

std::string report_to_table(const StsReport& report) {
  std::ostringstream out;
  out << "strategy";
  for (const auto& b : sentence_length_bins()) out << '\t' << b.label() << "w";
  for (const auto& b : article_length_bins()) out << '\t' << b.label() << "s";
  out << '\n';
  char buf[32];
  for (const auto& [name, sr] : report.strategies) {
    out << name;
    for (const auto& b : sr.by_sentence_length) {
      std::snprintf(buf, sizeof buf, "%.1f", b.mean);
      out << '\t' << (b.count ? buf : "-");
    }
    for (const auto& b : sr.by_article_length) {
      std::snprintf(buf, sizeof buf, "%.1f", b.mean);
      out << '\t' << (b.count ? buf : "-");
    }
    out << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.2f", report.mean_sts);
  out << "mean\t" << buf;
  std::snprintf(buf, sizeof buf, "%.1f", report.frac_above_3 * 100);
  out << "\tabove_3\t" << buf << "%\n";
  return out.str();
}

// ---------------------------------------------------------------- BLEU

namespace {

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(unicode::nfc(s));
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::map<std::vector<std::string>, int> ngrams(const std::vector<std::string>& w, int n) {
  std::map<std::vector<std::string>, int> out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= w.size(); ++i)
    ++out[std::vector<std::string>(w.begin() + static_cast<std::ptrdiff_t>(i),
                                   w.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return out;
}

}  // namespace

double bleu(const std::vector<std::string>& hypotheses, const std::vector<std::vector<std::string>>& references,
            int max_n) {
  if (hypotheses.empty()) throw ValidationError("bleu needs at least one hypothesis");
  if (hypotheses.size() != references.size()) throw ValidationError("bleu: hypothesis and reference counts differ");
  if (max_n < 1) throw ValidationError("bleu: max_n must be at least 1");
  std::vector<double> matches(static_cast<std::size_t>(max_n), 0), totals(static_cast<std::size_t>(max_n), 0);
  double hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto hyp = words(hypotheses[s]);
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : references[s]) refs.push_back(words(r));
    hyp_len += static_cast<double>(hyp.size());
    // Closest reference length, shorter wins ties.
    std::size_t best = refs.empty() ? 0 : refs.front().size();
    for (const auto& r : refs) {
      const auto d = [&](std::size_t len) { return std::abs(static_cast<long>(len) - static_cast<long>(hyp.size())); };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += static_cast<double>(best);
    for (int n = 1; n <= max_n; ++n) {
      const auto h = ngrams(hyp, n);
      std::map<std::vector<std::string>, int> clip;
      for (const auto& r : refs)
        for (const auto& [g, c] : ngrams(r, n)) clip[g] = std::max(clip[g], c);
      for (const auto& [g, c] : h) {
        totals[static_cast<std::size_t>(n - 1)] += c;
        const auto it = clip.find(g);
        if (it != clip.end()) matches[static_cast<std::size_t>(n - 1)] += std::min(c, it->second);
      }
    }
  }
  if (matches[0] == 0) return 0.0;
  double log_sum = 0;
  int orders = 0;
  for (int n = 0; n < max_n; ++n) {
    const auto k = static_cast<std::size_t>(n);
    if (totals[k] == 0) continue;
    const double m = matches[k] > 0 ? matches[k] : 0.1;
    log_sum += std::log(m / totals[k]);
    ++orders;
  }
  const double precision = std::exp(log_sum / orders);
  const double bp = hyp_len >= ref_len ? 1.0 : (hyp_len > 0 ? std::exp(1.0 - ref_len / hyp_len) : 0.0);
  return std::clamp(100.0 * bp * precision, 0.0, 100.0);
}

}  // namespace cforge
