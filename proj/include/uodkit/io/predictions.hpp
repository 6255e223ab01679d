#pragma once

// Detection records as JSON lines: {"image_id", "class_id", "score", "box": [x1,y1,x2,y2]}.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uodkit/fgiou/box.hpp"
#include "uodkit/io/image_io.hpp"

namespace uodkit {

struct PredictionRecord {
  std::string image_id;
  int class_id = 0;
  double score = 0.0;
  Box box;

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

/// Canonical order: image id ascending, then score descending; stable otherwise.
inline void sort_records(std::vector<PredictionRecord>& recs) {
  std::stable_sort(recs.begin(), recs.end(), [](const PredictionRecord& a, const PredictionRecord& b) {
    if (a.image_id != b.image_id) return a.image_id < b.image_id;
    return a.score > b.score;
  });
}

inline void write_predictions(const std::filesystem::path& path, std::vector<PredictionRecord> recs) {
  sort_records(recs);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : recs) {
    nlohmann::json j{{"image_id", r.image_id},
                     {"class_id", r.class_id},
                     {"score", r.score},
                     {"box", {r.box.x1, r.box.y1, r.box.x2, r.box.y2}}};
    out << j.dump() << '\n';
  }
}

inline std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PredictionRecord r;
      r.image_id = j.at("image_id").get<std::string>();
      r.class_id = j.at("class_id").get<int>();
      r.score = j.at("score").get<double>();
      const auto& b = j.at("box");
      if (!b.is_array() || b.size() != 4) throw IoError("box must have 4 numbers");
      r.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      if (!(r.score >= 0.0 && r.score <= 1.0)) throw IoError("score outside [0,1]");
      if (!r.box.valid()) throw IoError("box has x2 < x1 or y2 < y1");
      out.push_back(r);
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace uodkit
