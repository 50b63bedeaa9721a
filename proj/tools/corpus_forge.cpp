// corpus-forge: command-line front end for the bilingual corpus pipeline.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cforge/article_mapper.hpp"
#include "cforge/corpus.hpp"
#include "cforge/error.hpp"
#include "cforge/features.hpp"
#include "cforge/fixture.hpp"
#include "cforge/layout.hpp"
#include "cforge/ocr.hpp"
#include "cforge/page_store.hpp"
#include "cforge/pipeline.hpp"
#include "cforge/raster.hpp"
#include "cforge/sentence.hpp"
#include "cforge/work_pool.hpp"

using namespace cforge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw StageError("cannot write " + p.string());
  out << text;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::vector<std::string> out;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

std::vector<ArticleRecord> load_articles(const fs::path& dir_or_file, const PageSet& pages) {
  const fs::path f = fs::is_directory(dir_or_file) ? dir_or_file / "articles.json" : dir_or_file;
  return load_annotations(f, pages);
}

void split_languages(const std::vector<ArticleRecord>& all, const PageSet& pages, std::vector<ArticleRecord>& left,
                     std::vector<ArticleRecord>& right) {
  if (pages.languages.size() != 2) throw ValidationError("the store does not register two languages");
  for (const auto& a : all) (a.language == pages.languages[0] ? left : right).push_back(a);
}

std::vector<ArticleRecord> merge_unique(std::vector<ArticleRecord> a, const std::vector<ArticleRecord>& b) {
  for (const auto& x : b)
    if (std::none_of(a.begin(), a.end(), [&](const ArticleRecord& y) { return y.article_id == x.article_id; }))
      a.push_back(x);
  return a;
}

struct Provider {
  std::string spec = "builtin";
  std::vector<std::string> lexicons;
  int dim = 256;

  std::unique_ptr<EmbeddingProvider> make(const std::vector<std::string>& languages) const {
    if (spec != "builtin") return std::make_unique<HttpProvider>(spec);
    auto p = std::make_unique<BuiltinProvider>(dim);
    for (std::size_t i = 0; i < lexicons.size() && i < languages.size(); ++i)
      p->add_lexicon(std::make_shared<PivotLexicon>(load_lexicon(lexicons[i], languages[i])));
    return p;
  }
};

int run_ingest(const std::string& manifest, const std::string& source, const std::string& languages,
               unsigned workers, const std::string& out) {
  IngestOptions opt;
  opt.workers = workers;
  if (!languages.empty()) {
    std::istringstream in(languages);
    std::string code;
    while (std::getline(in, code, ',')) opt.languages.push_back(code);
  }
  const fs::path src = source.empty() ? fs::path(manifest).parent_path() : fs::path(source);
  const PageSet set = ingest_bundle(src, manifest, opt);
  save_store(set, out);
  json summary{{"pages", set.pages.size()}, {"languages", set.languages}, {"errors", json::array()}};
  for (const auto& e : set.errors) {
    summary["errors"].push_back({{"entry", e.entry}, {"file", e.file}, {"message", e.message}});
    std::cerr << "ingest: " << e.file << ": " << e.message << '\n';
  }
  std::cout << summary.dump(2) << '\n';
  return set.pages.empty() ? 2 : 0;
}

int run_segment(const std::string& store, const std::string& annotations, const std::string& truth,
                unsigned workers, const std::string& out) {
  const PageSet pages = load_store(store);
  std::vector<ArticleRecord> articles;
  std::vector<std::string> warnings;
  if (!annotations.empty()) {
    articles = load_annotations(annotations, pages);
  } else if (!truth.empty()) {
    articles = truth_articles(truth, pages);
  } else {
    std::vector<std::vector<ArticleRecord>> per(pages.pages.size());
    std::vector<std::vector<std::string>> warn(pages.pages.size());
    parallel_for(pages.pages.size(), workers,
                 [&](std::size_t i) { per[i] = extract_articles(pages.pages[i], {}, &warn[i]); });
    for (std::size_t i = 0; i < per.size(); ++i) {
      articles.insert(articles.end(), per[i].begin(), per[i].end());
      warnings.insert(warnings.end(), warn[i].begin(), warn[i].end());
    }
  }
  for (const auto& w : warnings) std::cerr << "segment: " << w << '\n';
  fs::create_directories(out);
  spit(fs::path(out) / "articles.json", to_annotation_json(articles) + "\n");
  std::cout << json{{"articles", articles.size()}, {"warnings", warnings.size()}}.dump() << '\n';
  return 0;
}

int run_ocr(const std::string& store, const std::string& articles_dir, const std::string& engines_config,
            unsigned workers, std::string out) {
  const PageSet pages = load_store(store);
  const auto articles = load_articles(articles_dir, pages);
  const PipelineConfig cfg = parse_config(slurp(engines_config), fs::absolute(engines_config).parent_path());
  if (cfg.engines.empty()) throw ValidationError(engines_config + " declares no OCR engines");
  const auto engines = build_engines(cfg.engines);
  if (out.empty()) out = articles_dir;
  fs::create_directories(out);
  std::vector<Extraction> results(articles.size());
  parallel_for(articles.size(), workers, [&](std::size_t i) {
    results[i] = extract_text(articles[i], *pages.find(articles[i].page_id), engines, fs::path(out) / "images");
  });
  std::vector<ArticleRecord> done;
  int roi_errors = 0;
  for (auto& r : results) {
    for (const auto& e : r.errors) {
      ++roi_errors;
      std::cerr << "ocr: " << e.article_id << " " << roi_letter(e.kind) << e.seq_index << ": " << e.message << '\n';
    }
    for (const auto& f : r.engine_failures) std::cerr << "ocr: engine " << f.engine_id << ": " << f.message << '\n';
    done.push_back(std::move(r.article));
  }
  spit(fs::path(out) / "articles.json", to_annotation_json(done, true) + "\n");
  std::cout << json{{"articles", done.size()}, {"roi_errors", roi_errors}}.dump() << '\n';
  return 0;
}

std::vector<fs::path> image_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif" || ext == ".tiff") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

int run_match_images(const std::string& left, const std::string& right, const FeatureParams& params,
                     unsigned workers, const std::string& report) {
  const auto lf = image_files(left);
  const auto rf = image_files(right);
  auto features = [&](const std::vector<fs::path>& files) {
    std::vector<ImageFeatures> out(files.size());
    parallel_for(files.size(), workers, [&](std::size_t i) {
      out[i] = extract_features(to_gray(read_image_pages(files[i].string()).at(0)), params);
    });
    return out;
  };
  const auto la = features(lf);
  const auto ra = features(rf);
  std::vector<double> sim(la.size() * ra.size());
  parallel_for(sim.size(), workers,
               [&](std::size_t k) { sim[k] = image_similarity(la[k / ra.size()], ra[k % ra.size()], params); });
  std::ostringstream tsv;
  tsv << "left";
  for (const auto& f : rf) tsv << '\t' << f.filename().string();
  tsv << '\n';
  for (std::size_t i = 0; i < lf.size(); ++i) {
    tsv << lf[i].filename().string();
    for (std::size_t j = 0; j < rf.size(); ++j) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", sim[i * rf.size() + j]);
      tsv << '\t' << buf;
    }
    tsv << '\n';
  }
  spit(report, tsv.str());
  return 0;
}

int run_map_articles(const std::string& store, const std::string& left_dir, const std::string& right_dir,
                     const std::string& date_text, MappingParams params, const Provider& prov,
                     const std::string& out) {
  const PageSet pages = load_store(store);
  const auto date = Date::parse(date_text);
  if (!date) throw ValidationError("--date must be YYYY-MM-DD: " + date_text);
  const auto all = merge_unique(load_articles(left_dir, pages), load_articles(right_dir, pages));
  std::vector<ArticleRecord> left, right;
  split_languages(all, pages, left, right);
  auto pairs = map_articles(left, right, *date, pages, params);
  const auto provider = prov.make(pages.languages);
  const auto delta = las_headline_similarity(*provider, pages.languages[0], pages.languages[1]);
  std::vector<std::string> warnings;
  const std::size_t top = pairs.size();
  for (std::size_t i = 0; i < top; ++i)
    for (auto& e : map_embedded(pairs[i], left, right, delta, params.headline_threshold, &warnings))
      pairs.push_back(std::move(e));
  for (const auto& w : warnings) std::cerr << "map-articles: " << w << '\n';
  write_pairs(out, pairs);
  std::cout << json{{"article_pairs", top}, {"embedded_pairs", pairs.size() - top}}.dump() << '\n';
  return 0;
}

int run_align(const std::string& store, const std::vector<std::string>& article_dirs, const std::string& pairs_file,
              const std::string& strategy_text, const Provider& prov, double slas_ratio, const std::string& out) {
  const auto strategy = strategy_from(strategy_text);
  if (!strategy) throw ValidationError("--strategy must be las, slas or lo");
  const PageSet pages = load_store(store);
  std::vector<ArticleRecord> all;
  for (const auto& d : article_dirs) all = merge_unique(std::move(all), load_articles(d, pages));
  const auto pairs = read_pairs(pairs_file, all);
  AlignParams params;
  if (slas_ratio > 0) {
    params.slas.ratio = slas_ratio;
  } else if (*strategy == Strategy::SLAS) {
    std::vector<Sentence> ls, rs;
    for (const auto& p : pairs) {
      for (auto& s : article_sentences(p.left)) ls.push_back(std::move(s));
      for (auto& s : article_sentences(p.right)) rs.push_back(std::move(s));
    }
    params.slas.ratio = estimate_length_ratio(ls, rs);
  }
  std::unique_ptr<EmbeddingProvider> provider;
  std::optional<PivotLexicon> lex_l, lex_r;
  if (*strategy == Strategy::LAS) provider = prov.make(pages.languages);
  if (*strategy == Strategy::LO) {
    if (prov.lexicons.size() != 2) throw ValidationError("strategy lo needs --lexicons <left.tsv> <right.tsv>");
    lex_l = load_lexicon(prov.lexicons[0], pages.languages[0]);
    lex_r = load_lexicon(prov.lexicons[1], pages.languages[1]);
  }
  std::vector<SentencePair> aligned;
  for (const auto& p : pairs)
    for (auto& s : align_sentences(p, *strategy, params, provider.get(), lex_l ? &*lex_l : nullptr,
                                   lex_r ? &*lex_r : nullptr))
      aligned.push_back(std::move(s));
  spit(out, corpus_to_jsonl(aligned));
  std::cout << json{{"article_pairs", pairs.size()}, {"sentence_pairs", aligned.size()}}.dump() << '\n';
  return 0;
}

BilingualCorpus corpus_from_file(const fs::path& file) {
  const auto ext = file.extension().string();
  const auto pairs = ext == ".tsv" ? read_corpus_tsv(file) : read_pairs_jsonl(file);
  return build_corpus(pairs);
}

int run_corpus(const std::string& in, const std::string& languages, const std::string& out) {
  const auto pairs = read_pairs_jsonl(in);
  std::vector<std::string> langs;
  std::istringstream ls(languages);
  for (std::string c; std::getline(ls, c, ',');)
    if (!c.empty()) langs.push_back(c);
  const auto corpus = build_corpus(pairs, langs);
  for (const auto& p : write_corpus(corpus, out)) std::cerr << "corpus: wrote " << p.string() << '\n';
  std::cout << json{{"pairs", corpus.stats.total},
                    {"duplicates_dropped", corpus.stats.duplicates_dropped},
                    {"by_strategy", corpus.stats.by_strategy},
                    {"by_kind", corpus.stats.by_kind}}
                   .dump()
            << '\n';
  return 0;
}

int run_sample_sts(const std::string& corpus_file, int n, const std::string& strata, std::uint64_t seed,
                   const std::string& out) {
  const auto corpus = corpus_from_file(corpus_file);
  if (strata != "sentence" && strata != "article") throw ValidationError("--strata must be sentence or article");
  const auto sheet = sample_sts(corpus, n, strata == "sentence" ? sentence_length_bins() : article_length_bins(), seed);
  spit(out, sheet_to_csv(sheet));
  json j = json::array();
  for (const auto& s : sheet.strata) {
    j.push_back({{"stratum", s.label}, {"available", s.available}, {"taken", s.taken}, {"shortfall", s.shortfall}});
    if (s.shortfall > 0) std::cerr << "sample-sts: stratum " << s.label << " short by " << s.shortfall << '\n';
  }
  std::cout << j.dump() << '\n';
  return 0;
}

int run_sts_report(const std::vector<std::string>& sheets, const std::string& corpus_file, bool table,
                   const std::string& out) {
  const auto corpus = corpus_from_file(corpus_file);
  std::vector<StsRow> rows;
  for (const auto& s : sheets) {
    auto r = read_sheet_csv(s);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const auto report = aggregate_sts(rows, corpus);
  for (const auto& e : report.errors) std::cerr << "sts-report: row " << e.row << " " << e.pair_id << ": " << e.message << '\n';
  const std::string text = report_to_json(report);
  if (!out.empty()) spit(out, text + "\n");
  std::cout << (table ? report_to_table(report) : text + "\n");
  return 0;
}

int run_bleu(const std::string& hyp, const std::vector<std::string>& refs) {
  const auto h = lines_of(hyp);
  std::vector<std::vector<std::string>> r;
  for (const auto& f : refs) r.push_back(lines_of(f));
  for (const auto& x : r)
    if (x.size() != h.size())
      throw ValidationError("reference has " + std::to_string(x.size()) + " lines, hypothesis " + std::to_string(h.size()));
  std::vector<std::vector<std::string>> per_segment(h.size());
  for (std::size_t i = 0; i < h.size(); ++i)
    for (const auto& x : r) per_segment[i].push_back(x[i]);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", bleu(h, per_segment));
  std::cout << buf << '\n';
  return 0;
}

int run_run(const std::string& config, const std::string& report_file) {
  const auto cfg = load_config(config);
  const auto report = run_pipeline(cfg);
  const std::string text = report.to_json();
  if (!report_file.empty()) spit(report_file, text + "\n");
  std::cout << text << '\n';
  return report.exit_code();
}

int run_gen_fixture(std::uint64_t seed, FixtureSpec spec, const std::string& out) {
  const auto bundle = gen_fixture(seed, spec);
  write_fixture(bundle, out);
  std::cout << json{{"pages", bundle.pages.size()},
                    {"articles", bundle.articles.size()},
                    {"article_pairs", bundle.article_pairs.size()},
                    {"sentence_pairs", bundle.sentence_pairs.size()}}
                   .dump()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"corpus-forge: bilingual sentence pairs from newspaper page images"};
  app.require_subcommand(1);
  unsigned workers = 1;
  app.add_option("--workers", workers, "Work pool size")->check(CLI::Range(1u, 256u));

  std::function<int()> action;

  std::string manifest, source, languages, out;
  auto* ingest = app.add_subcommand("ingest", "Validate page images and build a page store");
  ingest->add_option("--manifest", manifest)->required();
  ingest->add_option("--source", source, "Directory the manifest paths are relative to");
  ingest->add_option("--languages", languages, "Expected codes, comma separated");
  ingest->add_option("--out", out, "Store directory")->required();
  ingest->callback([&] { action = [&] { return run_ingest(manifest, source, languages, workers, out); }; });

  std::string store, annotations, truth_layout;
  auto* segment = app.add_subcommand("segment", "Split pages into articles and classify regions");
  segment->add_option("--store", store)->required();
  segment->add_option("--annotations", annotations, "Use these article annotations instead");
  segment->add_option("--truth-layout", truth_layout, "Use the layout of a fixture truth.json instead");
  segment->add_option("--out", out)->required();
  segment->callback([&] { action = [&] { return run_segment(store, annotations, truth_layout, workers, out); }; });

  std::string articles_dir, engines;
  auto* ocr = app.add_subcommand("ocr", "Recognize article text with the OCR ensemble");
  ocr->add_option("--store", store)->required();
  ocr->add_option("--articles", articles_dir)->required();
  ocr->add_option("--engines", engines, "Config file with [ocr] and [engine:*] sections")->required();
  ocr->add_option("--out", out, "Output directory (default: the articles directory)");
  ocr->callback([&] { action = [&] { return run_ocr(store, articles_dir, engines, workers, out); }; });

  std::string left, right, report;
  MappingParams mapping;
  auto* match = app.add_subcommand("match-images", "Similarity matrix between two image directories");
  match->add_option("--left", left)->required();
  match->add_option("--right", right)->required();
  match->add_option("--report", report, "TSV output")->required();
  match->add_option("--ratio", mapping.features.ratio)->check(CLI::Range(0.01, 0.99));
  match->add_option("--max-dim", mapping.features.max_dim)->check(CLI::Range(32, 16384));
  match->callback([&] { action = [&] { return run_match_images(left, right, mapping.features, workers, report); }; });

  std::string date;
  Provider prov;
  auto* map = app.add_subcommand("map-articles", "Pair articles across editions by shared photographs");
  map->add_option("--store", store)->required();
  map->add_option("--left", left, "Articles with text (directory or articles.json)")->required();
  map->add_option("--right", right)->required();
  map->add_option("--date", date)->required();
  map->add_option("--threshold", mapping.threshold)->check(CLI::Range(0.0, 1.0));
  map->add_option("--headline-threshold", mapping.headline_threshold)->check(CLI::Range(-1.0, 1.0));
  map->add_option("--provider", prov.spec, "builtin or http://host:port");
  map->add_option("--lexicons", prov.lexicons)->expected(2);
  map->add_option("--out", out)->required();
  map->callback([&] { action = [&] { return run_map_articles(store, left, right, date, mapping, prov, out); }; });

  std::vector<std::string> article_dirs;
  std::string pairs_file, strategy = "las";
  double slas_ratio = 0;
  auto* align = app.add_subcommand("align", "Align sentences of mapped article pairs");
  align->add_option("--store", store)->required();
  align->add_option("--articles", article_dirs, "Articles with text")->required();
  align->add_option("--pairs", pairs_file)->required();
  align->add_option("--strategy", strategy)->check(CLI::IsMember({"las", "slas", "lo"}));
  align->add_option("--provider", prov.spec);
  align->add_option("--lexicons", prov.lexicons)->expected(2);
  align->add_option("--slas-ratio", slas_ratio, "0 estimates it from the input")->check(CLI::Range(0.0, 100.0));
  align->add_option("--out", out)->required();
  align->callback([&] {
    action = [&] { return run_align(store, article_dirs, pairs_file, strategy, prov, slas_ratio, out); };
  });

  std::string in;
  auto* corpus = app.add_subcommand("corpus", "Normalize, deduplicate and write the corpus");
  corpus->add_option("--in", in, "Aligned pairs (JSONL)")->required();
  corpus->add_option("--languages", languages);
  corpus->add_option("--out", out, "Corpus TSV")->required();
  corpus->callback([&] { action = [&] { return run_corpus(in, languages, out); }; });

  int per_stratum = 100;
  std::uint64_t seed = 1;
  std::string strata = "sentence";
  auto* sample = app.add_subcommand("sample-sts", "Draw a stratified annotation sheet");
  sample->add_option("--corpus", in)->required();
  sample->add_option("--n", per_stratum, "Pairs per stratum")->check(CLI::Range(1, 1000000));
  sample->add_option("--strata", strata)->check(CLI::IsMember({"sentence", "article"}));
  sample->add_option("--seed", seed);
  sample->add_option("--out", out)->required();
  sample->callback([&] { action = [&] { return run_sample_sts(in, per_stratum, strata, seed, out); }; });

  std::vector<std::string> sheets;
  bool table = false;
  auto* sts = app.add_subcommand("sts-report", "Aggregate STS annotations");
  sts->add_option("--annotations", sheets)->required();
  sts->add_option("--corpus", in)->required();
  sts->add_flag("--table", table, "Print per-strategy bucket means as a table");
  sts->add_option("--out", out, "JSON report");
  sts->callback([&] { action = [&] { return run_sts_report(sheets, in, table, out); }; });

  std::string hyp;
  std::vector<std::string> refs;
  auto* bl = app.add_subcommand("bleu", "Corpus BLEU of a hypothesis file");
  bl->add_option("--hyp", hyp)->required();
  bl->add_option("--ref", refs)->required();
  bl->callback([&] { action = [&] { return run_bleu(hyp, refs); }; });

  std::string config;
  auto* run = app.add_subcommand("run", "Run the full pipeline");
  run->add_option("--config", config)->required();
  run->add_option("--report", report, "Also write the run report here");
  run->callback([&] { action = [&] { return run_run(config, report); }; });

  FixtureSpec spec;
  auto* fixture = app.add_subcommand("gen-fixture", "Render a synthetic bilingual bundle with ground truth");
  fixture->add_option("--seed", seed)->required();
  fixture->add_option("--left-articles", spec.left_articles)->check(CLI::Range(1, 200));
  fixture->add_option("--right-articles", spec.right_articles)->check(CLI::Range(1, 200));
  fixture->add_option("--shared", spec.shared_images)->check(CLI::Range(0, 200));
  fixture->add_option("--left-language", spec.left_language);
  fixture->add_option("--right-language", spec.right_language);
  fixture->add_option("--scale", spec.scale)->check(CLI::Range(0.5, 1.0));
  fixture->add_option("--brightness", spec.brightness)->check(CLI::Range(-40, 40));
  fixture->add_option("--out", out)->required();
  fixture->callback([&] { action = [&] { return run_gen_fixture(seed, spec, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    return action();
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const StageError& e) {
    std::cerr << "stage failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << '\n';
    return 2;
  }
}
