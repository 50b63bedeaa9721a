#include "cforge/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "cforge/error.hpp"

namespace cforge {

namespace {

constexpr int kBorder = 5;
constexpr int kMaxInterpSteps = 5;
constexpr int kOrientBins = 36;
constexpr double kOrientSigma = 1.5;
constexpr double kOrientRadius = 3.0 * kOrientSigma;
constexpr double kOrientPeak = 0.8;
constexpr int kDescWidth = 4;
constexpr int kDescBins = 8;
constexpr double kDescScale = 3.0;
constexpr double kDescClamp = 0.2;
constexpr double kInitSigma = 0.5;
constexpr double kTwoPi = 2 * std::numbers::pi;

cv::Mat to_float(const Raster& gray) {
  if (gray.channels != 1) throw ValidationError("feature extraction expects a grayscale raster");
  cv::Mat m(gray.height, gray.width, CV_32F);
  for (int y = 0; y < gray.height; ++y) {
    float* row = m.ptr<float>(y);
    for (int x = 0; x < gray.width; ++x) row[x] = gray.at(x, y) / 255.0f;
  }
  return m;
}

struct Pyramid {
  std::vector<std::vector<cv::Mat>> gauss;
  std::vector<std::vector<cv::Mat>> dog;
  int scales = 3;
  double sigma = 1.6;
};

Pyramid build_pyramid(const Raster& gray, const FeatureParams& p) {
  if (gray.width < 32 || gray.height < 32) throw ValidationError("image smaller than 32x32");
  Pyramid pyr;
  pyr.scales = p.scales;
  pyr.sigma = p.sigma;
  cv::Mat base = to_float(gray);
  const double base_sigma = std::sqrt(std::max(p.sigma * p.sigma - kInitSigma * kInitSigma, 0.01));
  cv::GaussianBlur(base, base, cv::Size(0, 0), base_sigma, base_sigma);

  const int levels = p.scales + 3;
  std::vector<double> inc(static_cast<std::size_t>(levels));
  const double k = std::pow(2.0, 1.0 / p.scales);
  inc[0] = p.sigma;
  for (int i = 1; i < levels; ++i) {
    const double prev = std::pow(k, i - 1) * p.sigma;
    const double total = prev * k;
    inc[static_cast<std::size_t>(i)] = std::sqrt(total * total - prev * prev);
  }

  const int max_oct = std::max(1, static_cast<int>(std::floor(std::log2(std::min(gray.width, gray.height)))) - 2);
  const int octaves = std::min(p.octaves, max_oct);
  for (int o = 0; o < octaves; ++o) {
    std::vector<cv::Mat> g(static_cast<std::size_t>(levels));
    if (o == 0) {
      g[0] = base;
    } else {
      const cv::Mat& src = pyr.gauss[static_cast<std::size_t>(o - 1)][static_cast<std::size_t>(p.scales)];
      cv::resize(src, g[0], cv::Size(src.cols / 2, src.rows / 2), 0, 0, cv::INTER_NEAREST);
    }
    for (int i = 1; i < levels; ++i) {
      const double s = inc[static_cast<std::size_t>(i)];
      cv::GaussianBlur(g[static_cast<std::size_t>(i - 1)], g[static_cast<std::size_t>(i)], cv::Size(0, 0), s, s);
    }
    std::vector<cv::Mat> d(static_cast<std::size_t>(levels - 1));
    for (int i = 0; i + 1 < levels; ++i)
      cv::subtract(g[static_cast<std::size_t>(i + 1)], g[static_cast<std::size_t>(i)], d[static_cast<std::size_t>(i)]);
    pyr.gauss.push_back(std::move(g));
    pyr.dog.push_back(std::move(d));
  }
  return pyr;
}

inline float px(const cv::Mat& m, int r, int c) { return m.at<float>(r, c); }

/// Refines an extremum; returns false when it drifts out, fails to converge, or is filtered.
bool refine(const Pyramid& pyr, int o, int& layer, int& r, int& c, const FeatureParams& p, Keypoint& kp) {
  const auto& dog = pyr.dog[static_cast<std::size_t>(o)];
  double xi = 0, xr = 0, xc = 0;
  int step = 0;
  for (; step < kMaxInterpSteps; ++step) {
    const cv::Mat& prev = dog[static_cast<std::size_t>(layer - 1)];
    const cv::Mat& img = dog[static_cast<std::size_t>(layer)];
    const cv::Mat& next = dog[static_cast<std::size_t>(layer + 1)];
    const double v2 = 2.0 * px(img, r, c);
    const double dx = (px(img, r, c + 1) - px(img, r, c - 1)) * 0.5;
    const double dy = (px(img, r + 1, c) - px(img, r - 1, c)) * 0.5;
    const double ds = (px(next, r, c) - px(prev, r, c)) * 0.5;
    const double dxx = px(img, r, c + 1) + px(img, r, c - 1) - v2;
    const double dyy = px(img, r + 1, c) + px(img, r - 1, c) - v2;
    const double dss = px(next, r, c) + px(prev, r, c) - v2;
    const double dxy = (px(img, r + 1, c + 1) - px(img, r + 1, c - 1) - px(img, r - 1, c + 1) + px(img, r - 1, c - 1)) * 0.25;
    const double dxs = (px(next, r, c + 1) - px(next, r, c - 1) - px(prev, r, c + 1) + px(prev, r, c - 1)) * 0.25;
    const double dys = (px(next, r + 1, c) - px(next, r - 1, c) - px(prev, r + 1, c) + px(prev, r - 1, c)) * 0.25;
    const cv::Matx33d H(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
    const cv::Vec3d g(dx, dy, ds);
    cv::Vec3d x;
    if (!cv::solve(H, g, x, cv::DECOMP_LU)) return false;
    xc = -x[0];
    xr = -x[1];
    xi = -x[2];
    if (std::abs(xi) < 0.5 && std::abs(xr) < 0.5 && std::abs(xc) < 0.5) break;
    if (std::abs(xi) > 1e6 || std::abs(xr) > 1e6 || std::abs(xc) > 1e6) return false;
    c += static_cast<int>(std::lround(xc));
    r += static_cast<int>(std::lround(xr));
    layer += static_cast<int>(std::lround(xi));
    if (layer < 1 || layer > pyr.scales || c < kBorder || c >= img.cols - kBorder || r < kBorder ||
        r >= img.rows - kBorder)
      return false;
  }
  if (step >= kMaxInterpSteps) return false;

  const cv::Mat& prev = dog[static_cast<std::size_t>(layer - 1)];
  const cv::Mat& img = dog[static_cast<std::size_t>(layer)];
  const cv::Mat& next = dog[static_cast<std::size_t>(layer + 1)];
  const double dx = (px(img, r, c + 1) - px(img, r, c - 1)) * 0.5;
  const double dy = (px(img, r + 1, c) - px(img, r - 1, c)) * 0.5;
  const double ds = (px(next, r, c) - px(prev, r, c)) * 0.5;
  const double contrast = px(img, r, c) + 0.5 * (dx * xc + dy * xr + ds * xi);
  if (std::abs(contrast) * pyr.scales < p.contrast_threshold) return false;

  const double v2 = 2.0 * px(img, r, c);
  const double dxx = px(img, r, c + 1) + px(img, r, c - 1) - v2;
  const double dyy = px(img, r + 1, c) + px(img, r - 1, c) - v2;
  const double dxy = (px(img, r + 1, c + 1) - px(img, r + 1, c - 1) - px(img, r - 1, c + 1) + px(img, r - 1, c - 1)) * 0.25;
  const double tr = dxx + dyy;
  const double det = dxx * dyy - dxy * dxy;
  const double e = p.edge_threshold;
  if (det <= 0 || tr * tr * e >= (e + 1) * (e + 1) * det) return false;

  const double unit = std::ldexp(1.0, o);
  kp.x = (c + xc) * unit;
  kp.y = (r + xr) * unit;
  kp.octave = o;
  kp.layer = layer + xi;
  kp.scale = p.sigma * std::pow(2.0, (layer + xi) / pyr.scales) * unit;
  kp.response = std::abs(contrast);
  return true;
}

/// Gradient-orientation histogram peaks around a keypoint.
std::vector<double> orientations(const cv::Mat& img, int r, int c, double sigma_oct) {
  const int radius = static_cast<int>(std::lround(kOrientRadius * sigma_oct));
  const double weight_sigma = kOrientSigma * sigma_oct;
  const double denom = -1.0 / (2.0 * weight_sigma * weight_sigma);
  std::array<double, kOrientBins> hist{};
  for (int i = -radius; i <= radius; ++i) {
    const int y = r + i;
    if (y <= 0 || y >= img.rows - 1) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int x = c + j;
      if (x <= 0 || x >= img.cols - 1) continue;
      const double dx = px(img, y, x + 1) - px(img, y, x - 1);
      const double dy = px(img, y - 1, x) - px(img, y + 1, x);
      const double w = std::exp((i * i + j * j) * denom);
      double angle = std::atan2(dy, dx);
      if (angle < 0) angle += kTwoPi;
      int bin = static_cast<int>(std::lround(kOrientBins * angle / kTwoPi));
      if (bin >= kOrientBins) bin -= kOrientBins;
      hist[static_cast<std::size_t>(bin)] += w * std::hypot(dx, dy);
    }
  }
  std::array<double, kOrientBins> smooth{};
  for (int b = 0; b < kOrientBins; ++b) {
    auto h = [&](int k) { return hist[static_cast<std::size_t>((k + kOrientBins) % kOrientBins)]; };
    smooth[static_cast<std::size_t>(b)] =
        (h(b - 2) + h(b + 2)) * (1.0 / 16) + (h(b - 1) + h(b + 1)) * (4.0 / 16) + h(b) * (6.0 / 16);
  }
  const double peak = *std::max_element(smooth.begin(), smooth.end());
  std::vector<double> out;
  if (peak <= 0) return out;
  for (int b = 0; b < kOrientBins; ++b) {
    const double left = smooth[static_cast<std::size_t>((b + kOrientBins - 1) % kOrientBins)];
    const double right = smooth[static_cast<std::size_t>((b + 1) % kOrientBins)];
    const double v = smooth[static_cast<std::size_t>(b)];
    if (v > left && v > right && v >= kOrientPeak * peak) {
      double bin = b + 0.5 * (left - right) / (left - 2 * v + right);
      if (bin < 0) bin += kOrientBins;
      if (bin >= kOrientBins) bin -= kOrientBins;
      out.push_back(kTwoPi * bin / kOrientBins);
    }
  }
  return out;
}

std::vector<Keypoint> detect(const Pyramid& pyr, const FeatureParams& p) {
  std::vector<Keypoint> out;
  const float prelim = static_cast<float>(0.5 * p.contrast_threshold / p.scales);
  for (std::size_t o = 0; o < pyr.dog.size(); ++o) {
    const auto& dog = pyr.dog[o];
    for (int s = 1; s <= pyr.scales; ++s) {
      const cv::Mat& prev = dog[static_cast<std::size_t>(s - 1)];
      const cv::Mat& img = dog[static_cast<std::size_t>(s)];
      const cv::Mat& next = dog[static_cast<std::size_t>(s + 1)];
      for (int r = kBorder; r < img.rows - kBorder; ++r) {
        for (int c = kBorder; c < img.cols - kBorder; ++c) {
          const float v = px(img, r, c);
          if (std::abs(v) <= prelim) continue;
          bool is_ext = true;
          for (const cv::Mat* m : {&prev, &img, &next}) {
            for (int dr = -1; dr <= 1 && is_ext; ++dr)
              for (int dc = -1; dc <= 1 && is_ext; ++dc) {
                if (m == &img && dr == 0 && dc == 0) continue;
                const float n = px(*m, r + dr, c + dc);
                is_ext = v > 0 ? v >= n : v <= n;
              }
            if (!is_ext) break;
          }
          if (!is_ext) continue;
          int layer = s, rr = r, cc = c;
          Keypoint kp;
          if (!refine(pyr, static_cast<int>(o), layer, rr, cc, p, kp)) continue;
          const double sigma_oct = p.sigma * std::pow(2.0, (kp.layer) / pyr.scales);
          const cv::Mat& g = pyr.gauss[o][static_cast<std::size_t>(layer)];
          for (double angle : orientations(g, rr, cc, sigma_oct)) {
            Keypoint k = kp;
            k.orientation = angle;
            out.push_back(k);
          }
        }
      }
    }
  }
  return out;
}

std::vector<Descriptor> describe(const Pyramid& pyr, const std::vector<Keypoint>& kps) {
  constexpr int d = kDescWidth, n = kDescBins;
  std::vector<Descriptor> out;
  for (std::size_t idx = 0; idx < kps.size(); ++idx) {
    const Keypoint& kp = kps[idx];
    if (kp.octave < 0 || kp.octave >= static_cast<int>(pyr.gauss.size())) continue;
    const double unit = std::ldexp(1.0, kp.octave);
    const int layer = std::clamp(static_cast<int>(std::lround(kp.layer)), 0, pyr.scales + 2);
    const cv::Mat& img = pyr.gauss[static_cast<std::size_t>(kp.octave)][static_cast<std::size_t>(layer)];
    const double cx = kp.x / unit, cy = kp.y / unit;
    const double sigma_oct = kp.scale / unit;
    const double hist_width = kDescScale * sigma_oct;
    const int radius = static_cast<int>(std::lround(hist_width * std::numbers::sqrt2 * (d + 1) * 0.5));
    const int ic = static_cast<int>(std::lround(cx)), ir = static_cast<int>(std::lround(cy));
    if (ic - radius < 1 || ir - radius < 1 || ic + radius >= img.cols - 1 || ir + radius >= img.rows - 1) continue;

    const double cos_t = std::cos(kp.orientation) / hist_width;
    const double sin_t = std::sin(kp.orientation) / hist_width;
    const double exp_scale = -1.0 / (d * d * 0.5);
    const double bins_per_rad = n / kTwoPi;
    std::vector<double> hist(static_cast<std::size_t>((d + 2) * (d + 2) * (n + 2)), 0.0);
    auto at = [&](int r, int c, int o) -> double& {
      return hist[static_cast<std::size_t>(((r + 1) * (d + 2) + (c + 1)) * (n + 2) + o)];
    };
    for (int i = -radius; i <= radius; ++i) {
      for (int j = -radius; j <= radius; ++j) {
        const double c_rot = j * cos_t - i * sin_t;
        const double r_rot = j * sin_t + i * cos_t;
        const double rbin = r_rot + d / 2.0 - 0.5;
        const double cbin = c_rot + d / 2.0 - 0.5;
        if (rbin <= -1 || rbin >= d || cbin <= -1 || cbin >= d) continue;
        const int y = ir + i, x = ic + j;
        const double dx = px(img, y, x + 1) - px(img, y, x - 1);
        const double dy = px(img, y - 1, x) - px(img, y + 1, x);
        double angle = std::atan2(dy, dx) - kp.orientation;
        while (angle < 0) angle += kTwoPi;
        while (angle >= kTwoPi) angle -= kTwoPi;
        const double mag = std::hypot(dx, dy) * std::exp((c_rot * c_rot + r_rot * r_rot) * exp_scale);
        const double obin = angle * bins_per_rad;

        const int r0 = static_cast<int>(std::floor(rbin));
        const int c0 = static_cast<int>(std::floor(cbin));
        const int o0 = static_cast<int>(std::floor(obin));
        const double fr = rbin - r0, fc = cbin - c0, fo = obin - o0;
        for (int a = 0; a <= 1; ++a) {
          const double wr = a ? fr : 1 - fr;
          for (int b = 0; b <= 1; ++b) {
            const double wc = b ? fc : 1 - fc;
            for (int e = 0; e <= 1; ++e) {
              const double wo = e ? fo : 1 - fo;
              at(r0 + a, c0 + b, (o0 + e) % n) += mag * wr * wc * wo;
            }
          }
        }
      }
    }
    std::array<double, 128> v{};
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c)
        for (int o = 0; o < n; ++o) v[static_cast<std::size_t>((r * d + c) * n + o)] = at(r, c, o);
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm <= 0) continue;
    for (double& x : v) x = std::min(x / norm, kDescClamp);
    norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    Descriptor desc;
    desc.keypoint = idx;
    for (std::size_t k = 0; k < v.size(); ++k) desc.vector[k] = static_cast<float>(v[k] / norm);
    out.push_back(desc);
  }
  return out;
}

Raster rescale(const Raster& gray, const FeatureParams& params, double& factor) {
  factor = 1.0;
  const int longest = std::max(gray.width, gray.height);
  double to = longest;
  if (params.max_dim > 0 && longest > params.max_dim) to = params.max_dim;
  else if (longest < params.upscale_below) to = 2.0 * longest;
  if (to == longest) return gray;
  factor = longest / to;
  const int w = std::max(1, static_cast<int>(std::lround(gray.width / factor)));
  const int h = std::max(1, static_cast<int>(std::lround(gray.height / factor)));
  cv::Mat src(gray.height, gray.width, CV_8UC1, const_cast<std::uint8_t*>(gray.data.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(w, h), 0, 0, factor > 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
  Raster out(w, h, 1);
  for (int y = 0; y < h; ++y) std::copy_n(dst.ptr<std::uint8_t>(y), w, out.data.begin() + static_cast<std::ptrdiff_t>(y) * w);
  factor = static_cast<double>(gray.width) / w;
  return out;
}

double distance(const Descriptor& a, const Descriptor& b) {
  float s = 0;
  for (std::size_t k = 0; k < 128; ++k) {
    const float t = a.vector[k] - b.vector[k];
    s += t * t;
  }
  return std::sqrt(static_cast<double>(s));
}

}  // namespace

std::vector<Keypoint> detect_keypoints(const Raster& gray, const FeatureParams& params) {
  return detect(build_pyramid(gray, params), params);
}

std::vector<Descriptor> compute_descriptors(const Raster& gray, const std::vector<Keypoint>& kps,
                                            const FeatureParams& params) {
  return describe(build_pyramid(gray, params), kps);
}

MatchResult match_descriptors(const std::vector<Descriptor>& a, const std::vector<Descriptor>& b, double ratio) {
  MatchResult res;
  if (a.empty() || b.empty()) return res;
  std::vector<MatchPair> cand;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
    std::size_t best = 0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double dist = distance(a[i], b[j]);
      if (dist < d1) {
        d2 = d1;
        d1 = dist;
        best = j;
      } else if (dist < d2) {
        d2 = dist;
      }
    }
    if (d1 < ratio * d2) cand.push_back({i, best, d1});
  }
  std::stable_sort(cand.begin(), cand.end(), [](const MatchPair& x, const MatchPair& y) {
    return std::tie(x.distance, x.a, x.b) < std::tie(y.distance, y.a, y.b);
  });
  std::vector<char> used_b(b.size(), 0);
  for (const auto& m : cand) {
    if (used_b[m.b]) continue;
    used_b[m.b] = 1;
    res.pairs.push_back(m);
  }
  res.score = static_cast<double>(res.pairs.size()) / static_cast<double>(std::min(a.size(), b.size()));
  return res;
}

ImageFeatures extract_features(const Raster& gray, const FeatureParams& params) {
  if (gray.width < 32 || gray.height < 32) throw ValidationError("image smaller than 32x32");
  double factor = 1.0;
  const Raster work = rescale(gray.channels == 1 ? gray : to_gray(gray), params, factor);
  const Pyramid pyr = build_pyramid(work, params);
  ImageFeatures f;
  f.keypoints = detect(pyr, params);
  f.descriptors = describe(pyr, f.keypoints);
  if (factor != 1.0) {
    for (auto& kp : f.keypoints) {
      kp.x *= factor;
      kp.y *= factor;
      kp.scale *= factor;
    }
  }
  return f;
}

double image_similarity(const ImageFeatures& a, const ImageFeatures& b, const FeatureParams& params) {
  return match_descriptors(a.descriptors, b.descriptors, params.ratio).score;
}

double image_similarity(const Raster& a, const Raster& b, const FeatureParams& params) {
  return image_similarity(extract_features(a, params), extract_features(b, params), params);
}

}  // namespace cforge
