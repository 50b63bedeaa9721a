#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cforge/fixture.hpp"
#include "cforge/pipeline.hpp"

namespace cforge::testing {

struct Tally {
  int predicted = 0;
  int correct = 0;
  int truth = 0;
  double precision() const { return predicted ? double(correct) / predicted : 1.0; }
  double recall() const { return truth ? double(correct) / truth : 1.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
};

struct RunEval {
  Tally articles;
  Tally sentences;
  RunReport report;
  double seconds = 0;
};

/// Pipeline article id -> truth key (same language and page, bounds IoU >= 0.5).
std::map<std::string, std::string> truth_keys(const FixtureBundle& truth, const std::vector<ArticleRecord>& articles,
                                              const PageSet& pages);

/// Scores a finished run in `config.out_dir` against the bundle's truth.json.
RunEval evaluate_run(const PipelineConfig& config, const RunReport& report, const std::filesystem::path& fixture_dir);

/// Writes a fixture, loads its config, applies `tweak` and runs the pipeline with scoring.
RunEval run_fixture(const std::filesystem::path& fixture_dir, const std::function<void(PipelineConfig&)>& tweak = {});

/// Spec for the end-to-end suite: 20 shared photographs per bundle.
FixtureSpec suite_spec();

/// Scratch directory under the system temp dir, removed first.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace cforge::testing
