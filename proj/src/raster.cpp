#include "cforge/raster.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <filesystem>

#include "cforge/error.hpp"

namespace cforge {

namespace {

Raster from_mat(const cv::Mat& input) {
  cv::Mat mat = input;
  if (mat.depth() == CV_16U) {
    mat.convertTo(mat, CV_8U, 1.0 / 257.0);
  } else if (mat.depth() != CV_8U) {
    throw ValidationError("unsupported sample depth");
  }
  Raster out;
  out.width = mat.cols;
  out.height = mat.rows;
  const int ch = mat.channels();
  if (ch == 1) {
    out.channels = 1;
    out.data.resize(static_cast<std::size_t>(mat.cols) * mat.rows);
    for (int y = 0; y < mat.rows; ++y) {
      const auto* row = mat.ptr<std::uint8_t>(y);
      std::copy(row, row + mat.cols, out.data.begin() + static_cast<std::ptrdiff_t>(y) * mat.cols);
    }
    return out;
  }
  if (ch != 3 && ch != 4) throw ValidationError("unsupported channel count " + std::to_string(ch));
  out.channels = 3;
  out.data.resize(static_cast<std::size_t>(mat.cols) * mat.rows * 3);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < mat.cols; ++x) {
      // OpenCV stores BGR(A).
      out.at(x, y, 0) = row[x * ch + 2];
      out.at(x, y, 1) = row[x * ch + 1];
      out.at(x, y, 2) = row[x * ch + 0];
    }
  }
  return out;
}

cv::Mat to_mat(const Raster& image) {
  if (image.channels == 1) {
    cv::Mat m(image.height, image.width, CV_8UC1);
    for (int y = 0; y < image.height; ++y)
      std::copy_n(image.data.begin() + static_cast<std::ptrdiff_t>(y) * image.width, image.width,
                  m.ptr<std::uint8_t>(y));
    return m;
  }
  cv::Mat m(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width; ++x) {
      row[x * 3 + 0] = image.at(x, y, 2);
      row[x * 3 + 1] = image.at(x, y, 1);
      row[x * 3 + 2] = image.at(x, y, 0);
    }
  }
  return m;
}

}  // namespace

Raster to_gray(const Raster& image) {
  if (image.channels == 1) return image;
  Raster gray(image.width, image.height, 1);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const unsigned r = image.at(x, y, 0);
      const unsigned g = image.at(x, y, 1);
      const unsigned b = image.at(x, y, 2);
      gray.at(x, y) = static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
    }
  }
  return gray;
}

Raster crop(const Raster& image, const Box& box) {
  const Box b = intersect(box, image.bounds());
  Raster out(b.w, b.h, image.channels);
  for (int y = 0; y < b.h; ++y) {
    const auto src = (static_cast<std::size_t>(b.y + y) * image.width + b.x) * image.channels;
    std::copy_n(image.data.begin() + static_cast<std::ptrdiff_t>(src),
                static_cast<std::size_t>(b.w) * image.channels,
                out.data.begin() + static_cast<std::ptrdiff_t>(y) * b.w * image.channels);
  }
  return out;
}

std::vector<Raster> read_image_pages(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw ValidationError("missing file: " + path);
  std::vector<cv::Mat> mats;
  bool ok = false;
  try {
    ok = cv::imreadmulti(path, mats, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw ValidationError("unreadable image " + path + ": " + e.what());
  }
  if (!ok || mats.empty()) throw ValidationError("unreadable image: " + path);
  std::vector<Raster> pages;
  pages.reserve(mats.size());
  for (const auto& m : mats) pages.push_back(from_mat(m));
  return pages;
}

void write_png(const std::string& path, const Raster& image) {
  if (!cv::imwrite(path, to_mat(image))) throw StageError("cannot write " + path);
}

Raster read_png(const std::string& path) {
  auto pages = read_image_pages(path);
  return std::move(pages.front());
}

void write_tiff_pages(const std::string& path, const std::vector<Raster>& pages) {
  std::vector<cv::Mat> mats;
  for (const auto& p : pages) mats.push_back(to_mat(p));
  if (!cv::imwritemulti(path, mats)) throw StageError("cannot write " + path);
}

}  // namespace cforge
