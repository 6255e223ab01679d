#pragma once

// YOLO-text annotations ("class cx cy w h", normalized) and the on-disk
// dataset layout DIR/images/<stem>.png + DIR/labels/<stem>.txt.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "uodkit/eval/metrics.hpp"
#include "uodkit/fgiou/assigner.hpp"
#include "uodkit/io/image_io.hpp"

namespace uodkit {

/// Parses YOLO text lines into corner-form pixel boxes for a W x H image.
/// `source` names the input in error messages.
inline std::vector<GroundTruthBox> parse_labels(std::istream& in, const std::string& source, std::size_t width,
                                                std::size_t height) {
  std::vector<GroundTruthBox> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    long cls = -1;
    double cx, cy, w, h;
    std::string extra;
    if (!(ls >> cls >> cx >> cy >> w >> h) || (ls >> extra))
      throw IoError(source + ":" + std::to_string(lineno) + ": malformed annotation line '" + line + "'");
    const bool in_range = cls >= 0 && cx >= 0 && cx <= 1 && cy >= 0 && cy <= 1 && w > 0 && w <= 1 && h > 0 && h <= 1;
    if (!in_range) throw IoError(source + ":" + std::to_string(lineno) + ": coordinates out of range '" + line + "'");
    const double W = static_cast<double>(width), H = static_cast<double>(height);
    out.push_back({Box::from_center(cx * W, cy * H, w * W, h * H), static_cast<std::size_t>(cls)});
  }
  return out;
}

inline std::vector<GroundTruthBox> read_label_file(const std::filesystem::path& path, std::size_t width,
                                                   std::size_t height) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_labels(in, path.string(), width, height);
}

inline void write_label_file(const std::filesystem::path& path, const std::vector<GroundTruthBox>& objects,
                             std::size_t width, std::size_t height) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  char buf[160];
  for (const auto& o : objects) {
    std::snprintf(buf, sizeof buf, "%zu %.17g %.17g %.17g %.17g\n", o.class_id, o.box.cx() / W, o.box.cy() / H,
                  o.box.width() / W, o.box.height() / H);
    out << buf;
  }
}

struct LabeledImage {
  std::string stem;
  ImageF32 image;
  std::vector<GroundTruthBox> objects;
};

/// Stems of DIR/images/*.png (or .ppm), sorted.
inline std::vector<std::filesystem::path> dataset_images(const std::filesystem::path& dir) {
  const auto img_dir = dir / "images";
  if (!std::filesystem::is_directory(img_dir)) throw IoError("missing directory " + img_dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(img_dir))
    if (e.is_regular_file() && (detail::has_ext(e.path(), ".png") || detail::has_ext(e.path(), ".ppm")))
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

/// Loads every image with its label file. A missing label file is an error;
/// an empty one means no objects.
inline std::vector<LabeledImage> read_dataset(const std::filesystem::path& dir) {
  std::vector<LabeledImage> out;
  for (const auto& p : dataset_images(dir)) {
    LabeledImage li;
    li.stem = p.stem().string();
    li.image = read_image(p);
    li.objects = read_label_file(dir / "labels" / (li.stem + ".txt"), li.image.width, li.image.height);
    out.push_back(std::move(li));
  }
  return out;
}

inline void write_dataset(const std::filesystem::path& dir, const std::vector<LabeledImage>& items) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "labels");
  for (const auto& li : items) {
    write_image(dir / "images" / (li.stem + ".png"), li.image);
    write_label_file(dir / "labels" / (li.stem + ".txt"), li.objects, li.image.width, li.image.height);
  }
}

struct AnnotationSet {
  std::vector<std::string> image_ids;  // index = GroundTruth::image_id
  std::vector<GroundTruth> gts;

  int index_of(const std::string& id) const {
    const auto it = std::find(image_ids.begin(), image_ids.end(), id);
    return it == image_ids.end() ? -1 : static_cast<int>(it - image_ids.begin());
  }
};

/// All ground truths under DIR, with image ids taken from file stems.
inline AnnotationSet read_annotations(const std::filesystem::path& dir) {
  AnnotationSet set;
  for (const auto& li : read_dataset(dir)) {
    const int id = static_cast<int>(set.image_ids.size());
    set.image_ids.push_back(li.stem);
    for (const auto& o : li.objects) set.gts.push_back({id, static_cast<int>(o.class_id), o.box});
  }
  return set;
}

}  // namespace uodkit
