#ifndef EVOMEASURE_SERIALIZATION_HPP
#define EVOMEASURE_SERIALIZATION_HPP

#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "evomeasure/errors.hpp"
#include "evomeasure/measure.hpp"

namespace evomeasure {

using nlohmann::json;

/// %.17g: enough digits for a lossless double round trip.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline double parse_double(std::string_view field) {
  std::string s(field);
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw ConfigError("malformed number '" + s + "'");
  return x;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// StrategySpace <-> JSON

/// Accepted forms:
///   {"type":"grid","lo":[..],"hi":[..],"cells":[..]}
///   {"type":"atoms","points":[[..],..],"volumes":[..]}    (volumes optional)
///   {"dim":d,"points":[[..],..],"cell_volumes":[..],"bounds":{"lo":[..],"hi":[..]}}
inline SpacePtr space_from_json(const json& j) {
  try {
    const std::string type = j.value("type", std::string(j.contains("cell_volumes") ? "explicit" : ""));
    if (type == "grid") {
      const auto lo = j.at("lo").get<std::vector<double>>();
      const auto hi = j.at("hi").get<std::vector<double>>();
      // 128 cells in 1-D and 32 x 32 in 2-D unless given
      const auto cells = j.contains("cells") ? j.at("cells").get<std::vector<std::size_t>>()
                                             : std::vector<std::size_t>(lo.size(), lo.size() == 1 ? 128 : 32);
      if (lo.size() != hi.size() || lo.size() != cells.size())
        throw ConfigError("space: lo/hi/cells must have equal length");
      if (lo.size() == 1) return StrategySpace::grid_1d(lo[0], hi[0], cells[0]);
      if (lo.size() == 2) return StrategySpace::grid_2d(lo[0], hi[0], cells[0], lo[1], hi[1], cells[1]);
      throw ConfigError("space: grid dimension must be 1 or 2");
    }
    if (type == "atoms") {
      return StrategySpace::atoms(j.at("points").get<std::vector<std::vector<double>>>(),
                                  j.value("volumes", std::vector<double>{}));
    }
    if (type == "explicit") {
      if (j.contains("grid")) return space_from_json(j.at("grid"));
      Bounds b{j.at("bounds").at("lo").get<std::vector<double>>(),
               j.at("bounds").at("hi").get<std::vector<double>>()};
      return StrategySpace::atoms(j.at("points").get<std::vector<std::vector<double>>>(),
                                  j.at("cell_volumes").get<std::vector<double>>(), std::move(b));
    }
    throw ConfigError("space: unknown type '" + type + "'");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("space: ") + e.what());
  } catch (const UsageError& e) {
    throw ConfigError(std::string("space: ") + e.what());
  }
}

inline json space_to_json(const StrategySpace& s) {
  json points = json::array();
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto p = s.point(i);
    points.push_back(std::vector<double>(p.begin(), p.end()));
  }
  json j = {{"dim", s.dim()},
            {"points", std::move(points)},
            {"cell_volumes", std::vector<double>(s.cell_volumes().begin(), s.cell_volumes().end())},
            {"bounds", {{"lo", s.bounds().lo}, {"hi", s.bounds().hi}}}};
  if (s.is_grid()) {
    j["grid"] = {{"type", "grid"}, {"lo", s.bounds().lo}, {"hi", s.bounds().hi},
                 {"cells", s.grid_shape()}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// MeasureVec <-> JSON / CSV

inline json measure_to_json(const MeasureVec& m) {
  return {{"space", space_to_json(*m.space())},
          {"weights", std::vector<double>(m.weights().begin(), m.weights().end())}};
}

inline MeasureVec measure_from_json(const json& j) {
  try {
    auto space = space_from_json(j.at("space"));
    return {space, j.at("weights").get<std::vector<double>>()};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("measure: ") + e.what());
  } catch (const UsageError& e) {
    throw ConfigError(std::string("measure: ") + e.what());
  }
}

inline std::string csv_header(std::size_t dim) {
  return dim == 1 ? "index,q1,weight" : "index,q1,q2,weight";
}

/// `index,q1[,q2],weight`, one row per support point.
inline std::string measure_to_csv(const MeasureVec& m) {
  const auto& s = *m.space();
  std::string out = csv_header(s.dim()) + "\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    out += std::to_string(i);
    for (double c : s.point(i)) out += "," + format_double(c);
    out += "," + format_double(m[i]) + "\n";
  }
  return out;
}

/// Parses a measure CSV against a known space; coordinates must match the
/// space's points exactly.
inline MeasureVec measure_from_csv(std::string_view text, const SpacePtr& space) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != csv_header(space->dim()))
    throw ConfigError("measure csv: expected header '" + csv_header(space->dim()) + "'");
  std::vector<double> w(space->size(), 0.0);
  std::vector<char> seen(space->size(), 0);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != space->dim() + 2) throw ConfigError("measure csv: wrong field count: " + line);
    const auto idx = static_cast<std::size_t>(parse_double(f[0]));
    if (idx >= space->size() || seen[idx]) throw ConfigError("measure csv: bad or repeated index");
    auto p = space->point(idx);
    for (std::size_t d = 0; d < space->dim(); ++d)
      if (parse_double(f[1 + d]) != p[d]) throw ConfigError("measure csv: coordinate mismatch at " + line);
    w[idx] = parse_double(f.back());
    seen[idx] = 1;
  }
  return {space, std::move(w)};
}

/// Parses a measure CSV onto a unit-volume atom space built from its rows.
inline MeasureVec measure_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("measure csv: empty input");
  std::size_t dim = 0;
  if (line == csv_header(1)) dim = 1;
  else if (line == csv_header(2)) dim = 2;
  else throw ConfigError("measure csv: unrecognized header '" + line + "'");
  std::vector<std::vector<double>> pts;
  std::vector<double> w;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != dim + 2) throw ConfigError("measure csv: wrong field count: " + line);
    std::vector<double> p;
    for (std::size_t d = 0; d < dim; ++d) p.push_back(parse_double(f[1 + d]));
    pts.push_back(std::move(p));
    w.push_back(parse_double(f.back()));
  }
  try {
    return {StrategySpace::atoms(pts), std::move(w)};
  } catch (const UsageError& e) {
    throw ConfigError(std::string("measure csv: ") + e.what());
  }
}

}  // namespace evomeasure

#endif  // EVOMEASURE_SERIALIZATION_HPP
