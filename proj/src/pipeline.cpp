#include "cforge/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <unistd.h>

#include "json.hpp"

#include "cforge/corpus.hpp"
#include "cforge/digest.hpp"
#include "cforge/error.hpp"
#include "cforge/fixture.hpp"
#include "cforge/work_pool.hpp"

namespace cforge {

using nlohmann::json;
namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

// ---------------------------------------------------------------- config parsing

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

std::string unquote(std::string s) {
  s = trim(std::move(s));
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(unquote(s));
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Section {
 public:
  Section(std::string name, const pt::ptree& tree) : name_(std::move(name)), tree_(tree) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '\x1f'));
    if (!v) return std::nullopt;
    return unquote(*v);
  }
  template <typename T>
  void get(const std::string& key, T& target) {
    const auto v = raw(key);
    if (!v) return;
    try {
      std::size_t used = 0;
      if constexpr (std::is_same_v<T, double>) {
        target = std::stod(*v, &used);
      } else if constexpr (std::is_same_v<T, bool>) {
        if (*v == "true" || *v == "yes" || *v == "1") target = true;
        else if (*v == "false" || *v == "no" || *v == "0") target = false;
        else throw std::invalid_argument("bool");
        used = v->size();
      } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        target = std::stoull(*v, &used);
      } else if constexpr (std::is_same_v<T, unsigned>) {
        const long x = std::stol(*v, &used);
        if (x < 0) throw std::invalid_argument("negative");
        target = static_cast<unsigned>(x);
      } else {
        target = static_cast<T>(std::stol(*v, &used));
      }
      if (used != v->size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ValidationError("config [" + name_ + "] " + key + ": cannot parse '" + *v + "'");
    }
  }
  void get(const std::string& key, std::string& target) {
    if (auto v = raw(key)) target = *v;
  }
  void finish() const {
    for (const auto& [k, v] : tree_)
      if (!used_.count(k)) throw ValidationError("config [" + name_ + "]: unknown key '" + k + "'");
  }

 private:
  std::string name_;
  const pt::ptree& tree_;
  std::set<std::string> used_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

void check_range(const std::string& what, double v, double lo, double hi) {
  if (!(v >= lo && v <= hi))
    throw ValidationError("config " + what + " = " + std::to_string(v) + " is outside [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]");
}

// ---------------------------------------------------------------- stage plumbing

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw StageError("cannot write " + p.string());
  out << content;
}

struct StageFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Stages {
 public:
  Stages(fs::path cache, RunReport& report) : cache_(std::move(cache)), report_(report) {}

  template <typename Produce>
  fs::path run(const std::string& name, const std::string& key, Produce&& produce) {
    const auto start = std::chrono::steady_clock::now();
    StageRecord rec;
    rec.name = name;
    rec.key = key;
    const fs::path dir = cache_ / name / key;
    if (fs::exists(dir / ".complete")) {
      rec.cache_hit = true;
    } else {
      const fs::path tmp = cache_ / name / (key + ".tmp" + std::to_string(::getpid()));
      fs::remove_all(tmp);
      fs::create_directories(tmp);
      try {
        produce(tmp);
        write_file(tmp / ".complete", key + "\n");
        fs::remove_all(dir);
        fs::rename(tmp, dir);
      } catch (const std::exception& e) {
        std::error_code ec;
        fs::remove_all(tmp, ec);
        rec.status = "failed";
        rec.message = e.what();
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        report_.stages.push_back(rec);
        report_.ok = false;
        std::cerr << "stage " << name << " failed: " << e.what() << '\n';
        throw StageFailed(e.what());
      }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "stage " << name << (rec.cache_hit ? " (cached)" : "") << " " << rec.seconds << "s\n";
    report_.stages.push_back(rec);
    return dir;
  }

 private:
  fs::path cache_;
  RunReport& report_;
};

std::string segmentation_key(const SegmentationParams& p) {
  std::ostringstream o;
  o << p.ink_threshold << ',' << p.blank_coverage << ',' << p.rule_span << ',' << p.rule_min_length << ','
    << p.rule_max_thickness << ',' << p.article_gap << ',' << p.block_row_gap << ',' << p.block_col_gap << ','
    << p.frame_side_coverage << ',' << p.frame_max_interior_density << ',' << p.frame_min_side << ','
    << p.image_min_density << ',' << p.image_max_blank_fraction << ',' << p.image_min_edge_density << ','
    << p.image_edge_gradient << ',' << p.image_min_side << ',' << p.headline_line_ratio << ','
    << p.caption_max_gap_lines << ',' << p.caption_max_width_ratio << ',' << p.overlap_tolerance;
  return o.str();
}

std::string file_digest(const std::optional<fs::path>& p) { return p ? sha256_file(p->string()) : "-"; }

std::string provider_key(const PipelineConfig& c) {
  return c.provider + "|" + std::to_string(c.embed_dim) + "|" + file_digest(c.lexicon_left) + "|" +
         file_digest(c.lexicon_right);
}

}  // namespace

// ---------------------------------------------------------------- config

PipelineConfig parse_config(std::string_view text, const fs::path& base_dir) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  PipelineConfig c;
  c.base_dir = base_dir;
  c.source_dir = base_dir;
  c.cache_dir = base_dir / "cache";
  c.out_dir = base_dir / "out";
  c.manifest = base_dir / "manifest.json";
  std::vector<std::string> engine_order;
  std::map<std::string, EngineConfig> engines;

  for (const auto& [name, section] : tree) {
    if (section.empty() && !section.data().empty())
      throw ValidationError("config: key '" + name + "' outside of a section");
    Section s(name, section);
    if (name == "run") {
      if (auto v = s.raw("languages")) c.languages = split_list(*v);
      if (auto v = s.raw("manifest")) c.manifest = resolve(base_dir, *v);
      if (auto v = s.raw("source_dir")) c.source_dir = resolve(base_dir, *v);
      if (auto v = s.raw("cache_dir")) c.cache_dir = resolve(base_dir, *v);
      if (auto v = s.raw("out_dir")) c.out_dir = resolve(base_dir, *v);
      if (auto v = s.raw("annotations")) c.annotations = resolve(base_dir, *v);
      if (auto v = s.raw("truth_layout")) c.truth_layout = resolve(base_dir, *v);
      s.get("workers", c.workers);
    } else if (name == "segmentation") {
      auto& p = c.segmentation;
      s.get("ink_threshold", p.ink_threshold);
      s.get("blank_coverage", p.blank_coverage);
      s.get("rule_span", p.rule_span);
      s.get("rule_min_length", p.rule_min_length);
      s.get("rule_max_thickness", p.rule_max_thickness);
      s.get("article_gap", p.article_gap);
      s.get("block_row_gap", p.block_row_gap);
      s.get("block_col_gap", p.block_col_gap);
      s.get("frame_side_coverage", p.frame_side_coverage);
      s.get("frame_max_interior_density", p.frame_max_interior_density);
      s.get("frame_min_side", p.frame_min_side);
      s.get("image_min_density", p.image_min_density);
      s.get("image_max_blank_fraction", p.image_max_blank_fraction);
      s.get("image_min_edge_density", p.image_min_edge_density);
      s.get("image_edge_gradient", p.image_edge_gradient);
      s.get("image_min_side", p.image_min_side);
      s.get("headline_line_ratio", p.headline_line_ratio);
      s.get("caption_max_gap_lines", p.caption_max_gap_lines);
      s.get("caption_max_width_ratio", p.caption_max_width_ratio);
      s.get("overlap_tolerance", p.overlap_tolerance);
    } else if (name == "ocr") {
      if (auto v = s.raw("engines")) engine_order = split_list(*v);
    } else if (name.rfind("engine:", 0) == 0) {
      EngineConfig e;
      e.engine_id = name.substr(7);
      s.get("kind", e.kind);
      s.get("priority", e.priority);
      s.get("command", e.command);
      if (auto v = s.raw("truth")) e.truth = resolve(base_dir, *v);
      s.get("corruption", e.corruption);
      s.get("seed", e.seed);
      s.get("fail", e.fail);
      engines[e.engine_id] = e;
    } else if (name == "features") {
      auto& f = c.mapping.features;
      s.get("octaves", f.octaves);
      s.get("scales", f.scales);
      s.get("sigma", f.sigma);
      s.get("contrast_threshold", f.contrast_threshold);
      s.get("edge_threshold", f.edge_threshold);
      s.get("ratio", f.ratio);
      s.get("max_dim", f.max_dim);
      s.get("upscale_below", f.upscale_below);
      s.get("similarity_threshold", c.mapping.threshold);
    } else if (name == "embedded") {
      s.get("headline_threshold", c.mapping.headline_threshold);
    } else if (name == "sentences") {
      if (auto v = s.raw("strategy")) {
        const auto st = strategy_from(*v);
        if (!st) throw ValidationError("config [sentences] strategy: unknown '" + *v + "' (las, slas, lo)");
        c.strategy = *st;
      }
      s.get("provider", c.provider);
      s.get("dim", c.embed_dim);
      if (auto v = s.raw("lexicon_left")) c.lexicon_left = resolve(base_dir, *v);
      if (auto v = s.raw("lexicon_right")) c.lexicon_right = resolve(base_dir, *v);
      s.get("las_threshold", c.align.las_threshold);
      s.get("lo_threshold", c.align.lo_threshold);
      s.get("slas_threshold", c.align.slas_threshold);
      s.get("slas_ratio", c.slas_ratio);
      s.get("slas_variance", c.align.slas.variance);
    } else if (name == "corpus") {
      s.get("name", c.corpus_name);
    } else {
      throw ValidationError("config: unknown section [" + name + "]");
    }
    s.finish();
  }
  if (engine_order.empty())
    for (const auto& [id, e] : engines) engine_order.push_back(id);
  for (const auto& id : engine_order) {
    const auto it = engines.find(id);
    if (it == engines.end()) throw ValidationError("config [ocr] engines: no [engine:" + id + "] section");
    c.engines.push_back(it->second);
  }
  c.align.workers = c.workers;
  c.mapping.workers = c.workers;
  return c;
}

PipelineConfig load_config(const fs::path& file) {
  const PipelineConfig c = parse_config(read_file(file), fs::absolute(file).parent_path());
  validate_config(c);
  return c;
}

void validate_config(const PipelineConfig& c) {
  if (c.languages.size() != 2) throw ValidationError("config [run] languages: exactly two codes required");
  if (c.languages[0] == c.languages[1]) throw ValidationError("config [run] languages: codes must differ");
  if (c.workers < 1 || c.workers > 256) throw ValidationError("config [run] workers must be in 1..256");
  if (!fs::exists(c.manifest)) throw ValidationError("config: manifest " + c.manifest.string() + " does not exist");
  if (c.annotations && !fs::exists(*c.annotations))
    throw ValidationError("config: annotations " + c.annotations->string() + " does not exist");
  if (c.truth_layout && !fs::exists(*c.truth_layout))
    throw ValidationError("config: truth_layout " + c.truth_layout->string() + " does not exist");
  if (c.annotations && c.truth_layout) throw ValidationError("config: annotations and truth_layout are exclusive");

  const auto& s = c.segmentation;
  check_range("[segmentation] ink_threshold", s.ink_threshold, 1, 255);
  check_range("[segmentation] blank_coverage", s.blank_coverage, 0, 1);
  check_range("[segmentation] rule_span", s.rule_span, 0, 1);
  check_range("[segmentation] frame_side_coverage", s.frame_side_coverage, 0, 1);
  check_range("[segmentation] frame_max_interior_density", s.frame_max_interior_density, 0, 1);
  check_range("[segmentation] image_min_density", s.image_min_density, 0, 1);
  check_range("[segmentation] image_max_blank_fraction", s.image_max_blank_fraction, 0, 1);
  check_range("[segmentation] image_min_edge_density", s.image_min_edge_density, 0, 1);
  check_range("[segmentation] headline_line_ratio", s.headline_line_ratio, 1, 10);
  check_range("[segmentation] caption_max_gap_lines", s.caption_max_gap_lines, 0, 20);
  check_range("[segmentation] caption_max_width_ratio", s.caption_max_width_ratio, 0.1, 10);
  check_range("[segmentation] block_row_gap", s.block_row_gap, 1, 1000);
  check_range("[segmentation] block_col_gap", s.block_col_gap, 1, 1000);

  if (c.engines.empty()) throw ValidationError("config: at least one OCR engine is required");
  std::set<int> priorities;
  std::set<std::string> ids;
  for (const auto& e : c.engines) {
    if (e.engine_id.empty()) throw ValidationError("config: engine with empty id");
    if (!ids.insert(e.engine_id).second) throw ValidationError("config: duplicate engine " + e.engine_id);
    if (e.priority < 1) throw ValidationError("config [engine:" + e.engine_id + "] priority must be positive");
    if (!priorities.insert(e.priority).second)
      throw ValidationError("config: engine priorities must be unique (" + std::to_string(e.priority) + ")");
    if (e.kind == "mock") {
      if (!fs::exists(e.truth))
        throw ValidationError("config [engine:" + e.engine_id + "] truth file " + e.truth.string() + " does not exist");
      check_range("[engine:" + e.engine_id + "] corruption", e.corruption, 0, 1);
    } else if (e.kind == "command") {
      if (e.command.find("{image}") == std::string::npos)
        throw ValidationError("config [engine:" + e.engine_id + "] command needs an {image} placeholder");
    } else {
      throw ValidationError("config [engine:" + e.engine_id + "] kind must be mock or command");
    }
  }

  const auto& f = c.mapping.features;
  check_range("[features] octaves", f.octaves, 1, 8);
  check_range("[features] scales", f.scales, 1, 8);
  check_range("[features] sigma", f.sigma, 0.5, 5);
  check_range("[features] contrast_threshold", f.contrast_threshold, 0, 1);
  check_range("[features] edge_threshold", f.edge_threshold, 1, 100);
  if (!(f.ratio > 0 && f.ratio < 1)) throw ValidationError("config [features] ratio must be in (0, 1)");
  check_range("[features] max_dim", f.max_dim, 32, 16384);
  check_range("[features] upscale_below", f.upscale_below, 0, 4096);
  check_range("[features] similarity_threshold", c.mapping.threshold, 0, 1);
  check_range("[embedded] headline_threshold", c.mapping.headline_threshold, -1, 1);

  check_range("[sentences] las_threshold", c.align.las_threshold, -1, 1);
  check_range("[sentences] lo_threshold", c.align.lo_threshold, 0, 1);
  check_range("[sentences] slas_threshold", c.align.slas_threshold, 0, 1);
  check_range("[sentences] slas_ratio", c.slas_ratio, 0, 100);
  check_range("[sentences] slas_variance", c.align.slas.variance, 1e-6, 1000);
  check_range("[sentences] dim", c.embed_dim, 16, 65536);
  if (c.provider != "builtin" && c.provider.rfind("http://", 0) != 0)
    throw ValidationError("config [sentences] provider must be builtin or an http:// URL");
  for (const auto* lex : {&c.lexicon_left, &c.lexicon_right})
    if (*lex && !fs::exists(**lex)) throw ValidationError("config: lexicon " + (*lex)->string() + " does not exist");
  if (c.strategy == Strategy::LO && (!c.lexicon_left || !c.lexicon_right))
    throw ValidationError("config: strategy lo needs lexicon_left and lexicon_right");
  if (c.corpus_name.empty() || c.corpus_name.find('/') != std::string::npos)
    throw ValidationError("config [corpus] name must be a plain file stem");
}

std::vector<OcrEngineAdapter> build_engines(const std::vector<EngineConfig>& engines) {
  std::vector<OcrEngineAdapter> out;
  std::map<fs::path, std::shared_ptr<const MockTruth>> truths;
  for (const auto& e : engines) {
    if (e.kind == "command") {
      out.push_back(make_command_engine(e.engine_id, e.priority, e.command));
      continue;
    }
    auto& t = truths[e.truth];
    if (!t) t = MockTruth::load(e.truth);
    out.push_back(make_mock_engine(e.engine_id, e.priority, t, {e.corruption, e.seed, e.fail}));
  }
  return out;
}

std::unique_ptr<EmbeddingProvider> build_provider(const PipelineConfig& c) {
  if (c.provider != "builtin") return std::make_unique<HttpProvider>(c.provider);
  auto p = std::make_unique<BuiltinProvider>(c.embed_dim);
  if (c.lexicon_left) p->add_lexicon(std::make_shared<PivotLexicon>(load_lexicon(*c.lexicon_left, c.languages[0])));
  if (c.lexicon_right) p->add_lexicon(std::make_shared<PivotLexicon>(load_lexicon(*c.lexicon_right, c.languages[1])));
  return p;
}

std::vector<ArticleRecord> truth_articles(const fs::path& truth_json, const PageSet& pages) {
  const FixtureBundle truth = read_fixture_truth(truth_json);
  std::map<std::string, std::string> ids;
  std::map<std::string, int> top_count, child_count;
  std::vector<ArticleRecord> out;
  for (const auto& t : truth.articles) {
    const PageImage* page = nullptr;
    for (const auto* p : get_pages(pages, t.language, truth.spec.date))
      if (p->page_number == t.page_number) page = p;
    if (!page) throw ValidationError("truth article " + t.key + " is on a page that was not ingested");
    ArticleRecord a;
    a.page_id = page->page_id;
    a.language = t.language;
    a.date = truth.spec.date;
    a.bounds = t.bounds;
    if (t.parent) {
      const auto it = ids.find(*t.parent);
      if (it == ids.end()) throw ValidationError("truth article " + t.key + " precedes its parent");
      a.parent = it->second;
      a.article_id = it->second + "-e" + std::to_string(++child_count[it->second]);
    } else {
      a.article_id = page->page_id + "-a" + std::to_string(++top_count[page->page_id]);
    }
    ids[t.key] = a.article_id;
    for (const auto& tr : t.rois) {
      Roi r;
      r.kind = tr.kind;
      r.box = tr.box;
      r.seq_index = tr.seq_index;
      r.sub_index = tr.sub_index;
      r.embed_level = a.embed_level();
      a.rois.push_back(r);
    }
    out.push_back(std::move(a));
  }
  return out;
}

// ---------------------------------------------------------------- report

std::string RunReport::to_json() const {
  json j{{"status", ok ? "ok" : "failed"},
         {"counts",
          {{"pages", pages},
           {"ingest_errors", ingest_errors},
           {"articles", articles},
           {"embedded_articles", embedded_articles},
           {"mapped_articles", mapped_articles},
           {"mapped_embedded_articles", mapped_embedded},
           {"aligned_pairs", aligned_pairs},
           {"mapped_sentences", corpus_pairs},
           {"caption_pairs", caption_pairs}}},
         {"corpus", corpus_tsv.string()},
         {"output_dir", output_dir.string()}};
  j["stages"] = json::array();
  for (const auto& s : stages) {
    json js{{"name", s.name}, {"key", s.key}, {"cache_hit", s.cache_hit}, {"seconds", s.seconds}, {"status", s.status}};
    if (!s.message.empty()) js["message"] = s.message;
    j["stages"].push_back(js);
  }
  j["warnings"] = warnings;
  return j.dump(2);
}

// ---------------------------------------------------------------- run

RunReport run_pipeline(const PipelineConfig& config) {
  validate_config(config);
  RunReport report;
  report.output_dir = config.out_dir;
  fs::create_directories(config.cache_dir);
  fs::create_directories(config.out_dir);
  Stages stages(config.cache_dir, report);
  const std::string& L1 = config.languages[0];
  const std::string& L2 = config.languages[1];

  auto finish = [&] {
    write_file(config.out_dir / "report.json", report.to_json() + "\n");
    return report;
  };

  try {
    // ingest
    Sha256 ingest_h;
    ingest_h.field("ingest").field(L1).field(L2).field(read_file(config.manifest));
    {
      std::vector<IngestError> bad;
      for (const auto& e : parse_manifest(read_file(config.manifest), bad)) {
        if (!e) continue;
        const fs::path f = resolve(config.source_dir, e->file);
        ingest_h.field(e->file).field(fs::exists(f) ? sha256_file(f.string()) : "missing");
      }
    }
    const std::string ingest_key = ingest_h.hex().substr(0, 24);
    const fs::path store_dir = stages.run("ingest", ingest_key, [&](const fs::path& dir) {
      PageSet set = ingest_bundle(config.source_dir, config.manifest, {config.languages, config.workers});
      if (set.pages.empty()) throw StageError("no page could be ingested");
      save_store(set, dir);
    });
    const PageSet pages = load_store(store_dir);
    report.pages = static_cast<int>(pages.pages.size());
    report.ingest_errors = static_cast<int>(pages.errors.size());
    for (const auto& e : pages.errors) report.warnings.push_back("ingest: " + e.file + ": " + e.message);

    // segment
    Sha256 seg_h;
    seg_h.field("segment").field(ingest_key).field(segmentation_key(config.segmentation))
        .field(file_digest(config.annotations)).field(file_digest(config.truth_layout));
    const std::string seg_key = seg_h.hex().substr(0, 24);
    const fs::path seg_dir = stages.run("segment", seg_key, [&](const fs::path& dir) {
      std::vector<ArticleRecord> articles;
      std::vector<std::string> warnings;
      if (config.annotations) {
        articles = load_annotations(*config.annotations, pages);
      } else if (config.truth_layout) {
        articles = truth_articles(*config.truth_layout, pages);
      } else {
        std::vector<std::vector<ArticleRecord>> per_page(pages.pages.size());
        std::vector<std::vector<std::string>> per_warn(pages.pages.size());
        parallel_for(pages.pages.size(), config.workers, [&](std::size_t i) {
          per_page[i] = extract_articles(pages.pages[i], config.segmentation, &per_warn[i]);
        });
        for (std::size_t i = 0; i < per_page.size(); ++i) {
          for (auto& a : per_page[i]) articles.push_back(std::move(a));
          for (auto& w : per_warn[i]) warnings.push_back(std::move(w));
        }
      }
      write_file(dir / "articles.json", to_annotation_json(articles) + "\n");
      write_file(dir / "warnings.json", json(warnings).dump(1) + "\n");
    });
    for (const auto& w : json::parse(read_file(seg_dir / "warnings.json"))) report.warnings.push_back(w.get<std::string>());

    // ocr
    Sha256 ocr_h;
    ocr_h.field("ocr").field(seg_key);
    for (const auto& e : config.engines)
      ocr_h.field(e.engine_id).field(e.kind).field(std::to_string(e.priority)).field(e.command)
          .field(e.kind == "mock" ? sha256_file(e.truth.string()) : "-").field(std::to_string(e.corruption))
          .field(std::to_string(e.seed)).field(e.fail ? "fail" : "ok");
    const std::string ocr_key = ocr_h.hex().substr(0, 24);
    const fs::path ocr_dir = stages.run("ocr", ocr_key, [&](const fs::path& dir) {
      const auto articles = load_annotations(seg_dir / "articles.json", pages);
      const auto engines = build_engines(config.engines);
      std::vector<Extraction> results(articles.size());
      parallel_for(articles.size(), config.workers, [&](std::size_t i) {
        results[i] = extract_text(articles[i], *pages.find(articles[i].page_id), engines, dir / "images");
      });
      std::vector<ArticleRecord> out;
      json errors = json::array();
      fs::create_directories(dir / "articles");
      for (auto& r : results) {
        for (const auto& e : r.errors)
          errors.push_back({{"article_id", e.article_id}, {"roi", std::string(1, roi_letter(e.kind)) + std::to_string(e.seq_index)},
                            {"message", e.message}});
        for (const auto& f : r.engine_failures)
          errors.push_back({{"article_id", r.article.article_id}, {"engine", f.engine_id}, {"message", f.message}});
        try {
          write_file(dir / "articles" / (r.article.article_id + ".txt"), serialize_article(r.article));
        } catch (const ValidationError&) {
          // ROIs without text are listed in errors.json
        }
        out.push_back(std::move(r.article));
      }
      write_file(dir / "articles.json", to_annotation_json(out, true) + "\n");
      write_file(dir / "errors.json", errors.dump(1) + "\n");
    });
    const auto articles = load_annotations(ocr_dir / "articles.json", pages);
    for (const auto& e : json::parse(read_file(ocr_dir / "errors.json")))
      report.warnings.push_back("ocr: " + e.value("article_id", std::string{}) + ": " + e.value("message", std::string{}));
    std::vector<ArticleRecord> left, right;
    for (const auto& a : articles) {
      (a.language == L1 ? left : right).push_back(a);
      if (a.parent) ++report.embedded_articles;
    }
    report.articles = static_cast<int>(articles.size());

    // map-articles
    Sha256 map_h;
    const auto& fp = config.mapping.features;
    map_h.field("map").field(ocr_key).field(std::to_string(fp.octaves)).field(std::to_string(fp.scales))
        .field(std::to_string(fp.sigma)).field(std::to_string(fp.contrast_threshold))
        .field(std::to_string(fp.edge_threshold)).field(std::to_string(fp.ratio)).field(std::to_string(fp.max_dim))
        .field(std::to_string(fp.upscale_below)).field(std::to_string(config.mapping.threshold));
    const std::string map_key = map_h.hex().substr(0, 24);
    const fs::path map_dir = stages.run("map-articles", map_key, [&](const fs::path& dir) {
      std::vector<ArticlePair> all;
      for (const auto& date : page_dates(pages)) {
        std::vector<ArticleRecord> l, r;
        for (const auto& a : left)
          if (a.date == date) l.push_back(a);
        for (const auto& a : right)
          if (a.date == date) r.push_back(a);
        for (auto& p : map_articles(l, r, date, pages, config.mapping)) all.push_back(std::move(p));
      }
      write_pairs(dir / "pairs.jsonl", all);
    });
    const auto image_pairs = read_pairs(map_dir / "pairs.jsonl", articles);
    report.mapped_articles = static_cast<int>(image_pairs.size());

    // map-embedded
    Sha256 emb_h;
    emb_h.field("embedded").field(map_key).field(provider_key(config))
        .field(std::to_string(config.mapping.headline_threshold));
    const std::string emb_key = emb_h.hex().substr(0, 24);
    std::unique_ptr<EmbeddingProvider> provider;
    auto get_provider = [&]() -> EmbeddingProvider& {
      if (!provider) provider = build_provider(config);
      return *provider;
    };
    const fs::path emb_dir = stages.run("map-embedded", emb_key, [&](const fs::path& dir) {
      std::vector<ArticlePair> all;
      std::vector<std::string> warnings;
      const auto delta = las_headline_similarity(get_provider(), L1, L2);
      for (const auto& p : image_pairs)
        for (auto& e : map_embedded(p, left, right, delta, config.mapping.headline_threshold, &warnings))
          all.push_back(std::move(e));
      write_pairs(dir / "pairs.jsonl", all);
      write_file(dir / "warnings.json", json(warnings).dump(1) + "\n");
    });
    const auto embedded_pairs = read_pairs(emb_dir / "pairs.jsonl", articles);
    report.mapped_embedded = static_cast<int>(embedded_pairs.size());
    for (const auto& w : json::parse(read_file(emb_dir / "warnings.json"))) report.warnings.push_back(w.get<std::string>());

    // align
    Sha256 align_h;
    align_h.field("align").field(emb_key).field(strategy_name(config.strategy)).field(provider_key(config))
        .field(std::to_string(config.align.las_threshold)).field(std::to_string(config.align.lo_threshold))
        .field(std::to_string(config.align.slas_threshold)).field(std::to_string(config.slas_ratio))
        .field(std::to_string(config.align.slas.variance));
    const std::string align_key = align_h.hex().substr(0, 24);
    const fs::path align_dir = stages.run("align", align_key, [&](const fs::path& dir) {
      AlignParams params = config.align;
      if (config.slas_ratio > 0) {
        params.slas.ratio = config.slas_ratio;
      } else {
        std::vector<Sentence> ls, rs;
        for (const auto& a : left)
          for (auto& s : article_sentences(a)) ls.push_back(std::move(s));
        for (const auto& a : right)
          for (auto& s : article_sentences(a)) rs.push_back(std::move(s));
        params.slas.ratio = estimate_length_ratio(ls, rs);
      }
      std::optional<PivotLexicon> lex_l, lex_r;
      if (config.strategy == Strategy::LO) {
        lex_l = load_lexicon(*config.lexicon_left, L1);
        lex_r = load_lexicon(*config.lexicon_right, L2);
      }
      std::vector<ArticlePair> all = image_pairs;
      all.insert(all.end(), embedded_pairs.begin(), embedded_pairs.end());
      std::vector<SentencePair> aligned;
      for (const auto& p : all) {
        auto got = align_sentences(p, config.strategy, params,
                                   config.strategy == Strategy::LAS ? &get_provider() : nullptr,
                                   lex_l ? &*lex_l : nullptr, lex_r ? &*lex_r : nullptr);
        for (auto& s : got) aligned.push_back(std::move(s));
      }
      write_file(dir / "aligned.jsonl", corpus_to_jsonl(aligned));
    });
    const auto aligned = read_pairs_jsonl(align_dir / "aligned.jsonl");
    report.aligned_pairs = static_cast<int>(aligned.size());

    // corpus
    const std::string corpus_key = sha256_hex("corpus|" + align_key + "|" + config.corpus_name).substr(0, 24);
    const fs::path corpus_dir = stages.run("corpus", corpus_key, [&](const fs::path& dir) {
      const BilingualCorpus corpus = build_corpus(aligned, config.languages);
      write_corpus(corpus, dir / (config.corpus_name + ".tsv"));
      json stats{{"total", corpus.stats.total},
                 {"duplicates_dropped", corpus.stats.duplicates_dropped},
                 {"by_strategy", corpus.stats.by_strategy},
                 {"by_kind", corpus.stats.by_kind}};
      write_file(dir / "stats.json", stats.dump(2) + "\n");
    });
    const auto stats = json::parse(read_file(corpus_dir / "stats.json"));
    report.caption_pairs = stats["by_kind"].value("P", 0);
    report.corpus_pairs = stats.value("total", 0) - report.caption_pairs;

    // publish
    for (const auto& entry : fs::directory_iterator(corpus_dir)) {
      if (entry.path().filename() == ".complete") continue;
      fs::copy_file(entry.path(), config.out_dir / entry.path().filename(), fs::copy_options::overwrite_existing);
    }
    fs::copy_file(map_dir / "pairs.jsonl", config.out_dir / "article_pairs.jsonl", fs::copy_options::overwrite_existing);
    fs::copy_file(emb_dir / "pairs.jsonl", config.out_dir / "embedded_pairs.jsonl", fs::copy_options::overwrite_existing);
    fs::copy_file(align_dir / "aligned.jsonl", config.out_dir / "aligned.jsonl", fs::copy_options::overwrite_existing);
    report.corpus_tsv = config.out_dir / (config.corpus_name + ".tsv");
  } catch (const StageFailed&) {
    report.ok = false;
  }
  return finish();
}

}  // namespace cforge
