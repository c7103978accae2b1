#include "htengine/json_io.hpp"

namespace hte {

Json rational_to_json(const Rational& c) { return Json(c.str()); }

Rational rational_from_json(const Json& j) {
  if (j.is_number_integer()) return Rational(static_cast<long long>(j.get<long long>()));
  if (j.is_string()) return Rational::parse(j.get<std::string>());
  throw InvalidInput("scalar: expected integer or \"p/q\" string, got " + j.dump());
}

Json space_to_json(const GradedSpace& v) {
  Json degrees = Json::object();
  for (int deg : v.degrees()) {
    degrees[std::to_string(deg)] = v.labels(deg);
  }
  Json j;
  j["degrees"] = std::move(degrees);
  j["window"] = Json::array({v.window_lo(), v.window_hi()});
  return j;
}

GradedSpace space_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("degrees") || !j["degrees"].is_object()) {
    throw InvalidInput("GradedSpace: expected {\"degrees\": {...}}");
  }
  std::map<int, std::vector<std::string>> comps;
  for (const auto& [key, val] : j["degrees"].items()) {
    int deg = 0;
    try {
      deg = std::stoi(key);
    } catch (const std::exception&) {
      throw InvalidInput("GradedSpace: bad degree key '" + key + "'");
    }
    if (!val.is_array()) throw InvalidInput("GradedSpace: labels must be an array");
    std::vector<std::string> labels;
    for (const auto& l : val) {
      if (!l.is_string()) throw InvalidInput("GradedSpace: labels must be strings");
      labels.push_back(l.get<std::string>());
    }
    comps[deg] = std::move(labels);
  }
  if (j.contains("window")) {
    const auto& w = j["window"];
    if (!w.is_array() || w.size() != 2) {
      throw InvalidInput("GradedSpace: window must be [lo, hi]");
    }
    return GradedSpace(std::move(comps), w[0].get<int>(), w[1].get<int>());
  }
  return GradedSpace::infer(std::move(comps));
}

Json map_to_json(const GradedMap& f) {
  Json blocks = Json::object();
  for (const auto& [deg, m] : f.blocks()) {
    Json rows = Json::array();
    bool nonzero = false;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      Json row = Json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (!m(r, c).is_zero()) nonzero = true;
        row.push_back(m(r, c).str());
      }
      rows.push_back(std::move(row));
    }
    if (nonzero) blocks[std::to_string(deg)] = std::move(rows);
  }
  Json j;
  j["shift"] = f.shift();
  j["blocks"] = std::move(blocks);
  return j;
}

GradedMap map_from_json(const Json& j, SpacePtr source, SpacePtr target) {
  if (!j.is_object() || !j.contains("shift")) {
    throw InvalidInput("GradedMap: expected {\"shift\": d, \"blocks\": {...}}");
  }
  const int shift = j["shift"].get<int>();
  GradedMap f(std::move(source), std::move(target), shift);
  if (!j.contains("blocks")) return f;
  if (!j["blocks"].is_object()) throw InvalidInput("GradedMap: blocks must be an object");
  for (const auto& [key, rows] : j["blocks"].items()) {
    int deg = 0;
    try {
      deg = std::stoi(key);
    } catch (const std::exception&) {
      throw InvalidInput("GradedMap: bad block degree key '" + key + "'");
    }
    if (!rows.is_array()) throw InvalidInput("GradedMap: block must be an array of rows");
    const int nrows = static_cast<int>(rows.size());
    int ncols = 0;
    if (nrows > 0) {
      if (!rows[0].is_array()) throw InvalidInput("GradedMap: block row must be an array");
      ncols = static_cast<int>(rows[0].size());
    }
    Mat m = zero_mat(nrows, ncols);
    for (int r = 0; r < nrows; ++r) {
      const auto& row = rows[r];
      if (!row.is_array() || static_cast<int>(row.size()) != ncols) {
        throw InvalidInput("GradedMap: ragged block");
      }
      for (int c = 0; c < ncols; ++c) m(r, c) = rational_from_json(row[c]);
    }
    f = f.with_block(deg, std::move(m));
  }
  return f;
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace hte
