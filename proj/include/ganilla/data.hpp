#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ganilla/image_io.hpp"
#include "ganilla/rng.hpp"
#include "ganilla/tensor.hpp"

namespace ganilla {

namespace fs = std::filesystem;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unpaired two-domain dataset: natural images (A) and illustrations (B).
struct DomainPair {
  fs::path root;
  std::vector<fs::path> source_train;
  std::vector<fs::path> target_train;
  std::vector<fs::path> source_test;
  /// Scene class per source image, keyed by path relative to root ("testA/x.png").
  std::map<std::string, int> source_labels;
  std::string target_style_id;

  std::string relative(const fs::path& p) const { return p.lexically_relative(root).generic_string(); }
};

inline bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Sorted, deduplicated image files directly inside `dir`.
inline std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("missing directory: " + dir.string());
  std::set<fs::path> found;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) found.insert(e.path().lexically_normal());
  return {found.begin(), found.end()};
}

/// Parses `filename,class_id` rows (header required).
inline std::map<std::string, int> read_labels_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("filename,class_id", 0) != 0)
    throw DataError(path.string() + ": expected header 'filename,class_id'");
  std::map<std::string, int> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw DataError(path.string() + ":" + std::to_string(lineno) + ": missing comma");
    try {
      std::size_t used = 0;
      const std::string id = line.substr(comma + 1);
      const int cls = std::stoi(id, &used);
      if (used != id.size() || cls < 0) throw std::invalid_argument(id);
      labels[line.substr(0, comma)] = cls;
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad class id");
    }
  }
  return labels;
}

inline void write_labels_csv(const fs::path& path, const std::map<std::string, int>& labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "filename,class_id\n";
  for (const auto& [name, cls] : labels) out << name << ',' << cls << '\n';
}

/// Loads the trainA/ trainB/ testA/ layout. trainA and trainB must hold at
/// least one image; testA must exist but may be empty. Optional labels.csv
/// maps root-relative source paths to scene classes; optional style_id.txt
/// names the target style (default: the root directory name).
inline DomainPair load_unpaired_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("missing dataset root: " + root.string());
  DomainPair d;
  d.root = root.lexically_normal();
  d.source_train = list_images(d.root / "trainA");
  d.target_train = list_images(d.root / "trainB");
  d.source_test = list_images(d.root / "testA");
  if (d.source_train.empty()) throw DataError("no images in " + (d.root / "trainA").string());
  if (d.target_train.empty()) throw DataError("no images in " + (d.root / "trainB").string());

  if (fs::exists(d.root / "labels.csv")) {
    d.source_labels = read_labels_csv(d.root / "labels.csv");
    std::set<std::string> known;
    for (const auto* list : {&d.source_train, &d.source_test})
      for (const auto& p : *list) known.insert(d.relative(p));
    for (const auto& [name, cls] : d.source_labels)
      if (!known.count(name)) throw DataError("labels.csv names unknown source image: " + name);
  }
  if (std::ifstream sid(d.root / "style_id.txt"); sid) std::getline(sid, d.target_style_id);
  if (d.target_style_id.empty()) d.target_style_id = d.root.filename().string();
  if (d.target_style_id.empty()) throw DataError("empty target style id for " + root.string());
  return d;
}

/// Bilinear resize (half-pixel centres, edge clamp) to size x size, mapped
/// from [0,255] to [-1,1]. Returns [1,3,size,size].
inline Tensor<float> preprocess(const RawImage& img, std::size_t size = 256) {
  if (img.height == 0 || img.width == 0) throw DataError("cannot preprocess an empty image");
  if (size == 0) throw DataError("preprocess size must be positive");
  Tensor<float> out({1, 3, size, size});
  auto axis = [size](std::size_t in, std::size_t o, std::size_t& i0, std::size_t& i1, double& f) {
    double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(size) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    i0 = static_cast<std::size_t>(std::floor(src));
    i1 = std::min(i0 + 1, in - 1);
    f = src - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < size; ++y) {
    std::size_t y0, y1;
    double fy;
    axis(img.height, y, y0, y1, fy);
    for (std::size_t x = 0; x < size; ++x) {
      std::size_t x0, x1;
      double fx;
      axis(img.width, x, x0, x1, fx);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) + fx * (img.at(y0, x1, c) - img.at(y0, x0, c));
        const double bot = img.at(y1, x0, c) + fx * (img.at(y1, x1, c) - img.at(y1, x0, c));
        const double v = top + fy * (bot - top);
        out.at(0, c, y, x) = static_cast<float>(v / 127.5 - 1.0);
      }
    }
  }
  return out;
}

inline Tensor<float> load_preprocessed(const fs::path& path, std::size_t size) {
  return preprocess(read_image(path), size);
}

/// Maps a [1,3,H,W] tensor in [-1,1] back to 8-bit pixels.
template <typename T>
RawImage to_raw_image(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(0) != 1 || x.dim(1) != 3) throw ShapeError("to_raw_image expects [1,3,H,W]");
  RawImage img(x.dim(2), x.dim(3));
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t xx = 0; xx < img.width; ++xx)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::round((static_cast<double>(x.at(0, c, y, xx)) + 1.0) * 127.5);
        img.at(y, xx, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
  return img;
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const std::size_t w = x.dim(3), rows = x.size() / w;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < w; ++j) out[r * w + j] = x[r * w + (w - 1 - j)];
  return out;
}

struct Patch {
  Tensor<float> data;  // [1,3,p,p]
  std::size_t top = 0;
  std::size_t left = 0;
};

/// Uniformly placed square crop of a [1,3,H,W] image.
inline Patch random_patch(const Tensor<float>& img, std::size_t patch, Engine& rng) {
  if (img.rank() != 4 || img.dim(0) != 1) throw ShapeError("random_patch expects [1,3,H,W]");
  if (patch == 0 || patch > img.dim(2) || patch > img.dim(3))
    throw ShapeError("patch " + std::to_string(patch) + " does not fit image " + shape_str(img.shape()));
  Patch p;
  p.top = uniform_index(rng, img.dim(2) - patch + 1);
  p.left = uniform_index(rng, img.dim(3) - patch + 1);
  p.data = Tensor<float>({1, img.dim(1), patch, patch});
  for (std::size_t c = 0; c < img.dim(1); ++c)
    for (std::size_t y = 0; y < patch; ++y)
      for (std::size_t x = 0; x < patch; ++x) p.data.at(0, c, y, x) = img.at(0, c, p.top + y, p.left + x);
  return p;
}

}  // namespace ganilla
