#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "cforge/raster.hpp"

namespace cforge {

struct Keypoint {
  double x = 0;
  double y = 0;
  /// Gaussian sigma in source-image pixels.
  double scale = 0;
  /// Radians in [0, 2pi).
  double orientation = 0;
  double response = 0;
  int octave = 0;
  /// Continuous scale index inside the octave.
  double layer = 0;
};

struct Descriptor {
  std::array<float, 128> vector{};
  std::size_t keypoint = 0;
};

struct MatchPair {
  std::size_t a = 0;
  std::size_t b = 0;
  double distance = 0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  double score = 0;
};

struct FeatureParams {
  int octaves = 4;
  int scales = 3;
  double sigma = 1.6;
  double contrast_threshold = 0.04;
  double edge_threshold = 10;
  double ratio = 0.75;
  double similarity_threshold = 0.25;
  int max_dim = 1024;
  /// Images whose longer side is below this are doubled before detection.
  int upscale_below = 256;
};

/// Keypoints and descriptors of one image; keypoint coordinates refer to the image as given.
struct ImageFeatures {
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;
};

/// DoG extrema with sub-pixel refinement, contrast and edge filtering, and orientation
/// assignment. Throws ValidationError for images smaller than 32x32.
std::vector<Keypoint> detect_keypoints(const Raster& gray, const FeatureParams& params = {});

/// 4x4x8 gradient histograms; keypoints whose window leaves the image are dropped.
std::vector<Descriptor> compute_descriptors(const Raster& gray, const std::vector<Keypoint>& kps,
                                            const FeatureParams& params = {});

/// Ratio test, then one-to-one greedy by ascending nearest distance.
MatchResult match_descriptors(const std::vector<Descriptor>& a, const std::vector<Descriptor>& b, double ratio);

/// Downscales to max_dim, then detects and describes. Coordinates are mapped back to `gray`.
ImageFeatures extract_features(const Raster& gray, const FeatureParams& params = {});

double image_similarity(const ImageFeatures& a, const ImageFeatures& b, const FeatureParams& params = {});
double image_similarity(const Raster& a, const Raster& b, const FeatureParams& params = {});

}  // namespace cforge
