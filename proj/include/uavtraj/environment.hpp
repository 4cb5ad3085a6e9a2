#pragma once

// Procedural urban map: buildings from the (alpha, beta, lambda) statistical
// triple, outdoor ground terminals, and exact LoS by segment/box clipping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uavtraj/geometry.hpp"
#include "uavtraj/rng.hpp"

namespace uavtraj {

struct EnvParams {
  double alpha = 0.3;          // built-up land ratio
  double beta = 144.0;         // buildings per km^2
  double lambda = 50.0;        // mean building height (m)
  double side = 1000.0;        // area side D (m)
  double height_min = 10.0;
  double height_max = 50.0;
  double z_min = 75.0;
  double z_max = 125.0;
  int num_gts = 40;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    if (!(side > 0.0)) throw std::invalid_argument("area side must be positive");
    if (!(height_min < height_max)) throw std::invalid_argument("height clip must satisfy h_min < h_max");
    if (!(z_min < z_max)) throw std::invalid_argument("altitude bounds must satisfy z_min < z_max");
    if (num_gts < 1) throw std::invalid_argument("at least one GT is required");
  }

  int building_count() const {
    return static_cast<int>(std::lround(beta * (side / 1000.0) * (side / 1000.0)));
  }
  double building_side() const { return 1000.0 * std::sqrt(alpha / beta); }
};

struct Building {
  double cx = 0.0;
  double cy = 0.0;
  double half_x = 0.0;
  double half_y = 0.0;
  double height = 0.0;

  Box box() const { return {{cx - half_x, cy - half_y, 0.0}, {cx + half_x, cy + half_y, height}}; }

  bool footprint_contains_strictly(double x, double y) const {
    return x > cx - half_x && x < cx + half_x && y > cy - half_y && y < cy + half_y;
  }
};

struct UrbanMap {
  EnvParams params;
  std::uint64_t seed = 0;
  std::uint64_t gt_seed = 0;
  std::vector<Building> buildings;
  std::vector<Vec3> gts;

  double built_fraction() const {
    double area = 0.0;
    for (const auto& b : buildings) area += 4.0 * b.half_x * b.half_y;
    return area / (params.side * params.side);
  }

  bool indoor(double x, double y) const {
    for (const auto& b : buildings)
      if (b.footprint_contains_strictly(x, y)) return true;
    return false;
  }
};

/// Raw (pre-clip) building height: Rayleigh with the given mean.
inline double sample_rayleigh_height(double mean, Rng& rng) {
  const double scale = mean / std::sqrt(std::numbers::pi / 2.0);
  return scale * std::sqrt(-2.0 * std::log1p(-rng.uniform()));
}

/// Buildings on a jittered grid: round(beta * km^2) square footprints of side
/// 1000 sqrt(alpha / beta) m, each inside its own cell of an n x n grid,
/// n = ceil(sqrt(count)). Heights are Rayleigh(mean lambda) clipped to
/// [height_min, height_max]. The GT list is left empty.
inline UrbanMap generate_buildings(const EnvParams& params, std::uint64_t seed) {
  params.validate();
  UrbanMap map;
  map.params = params;
  map.seed = seed;

  const int count = params.building_count();
  if (count == 0) return map;

  const int n = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
  const double spacing = params.side / n;
  const double footprint = params.building_side();
  if (footprint > spacing)
    throw std::invalid_argument("alpha/beta inconsistent: building side " + std::to_string(footprint) +
                                " m exceeds grid spacing " + std::to_string(spacing) + " m");

  Rng layout(derive_seed(seed, "layout"));
  Rng heights(derive_seed(seed, "heights"));

  // Partial Fisher-Yates picks which cells are occupied when count < n^2.
  std::vector<int> cells(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n * n; ++i) cells[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(i) + layout.index(cells.size() - static_cast<std::size_t>(i));
    std::swap(cells[static_cast<std::size_t>(i)], cells[j]);
  }
  std::sort(cells.begin(), cells.begin() + count);

  const double slack = spacing - footprint;
  map.buildings.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int cell = cells[static_cast<std::size_t>(i)];
    const double x0 = (cell % n) * spacing;
    const double y0 = (cell / n) * spacing;
    Building b;
    b.half_x = b.half_y = 0.5 * footprint;
    b.cx = x0 + b.half_x + layout.uniform() * slack;
    b.cy = y0 + b.half_y + layout.uniform() * slack;
    b.height = std::clamp(sample_rayleigh_height(params.lambda, heights), params.height_min, params.height_max);
    map.buildings.push_back(b);
  }
  return map;
}

/// Uniform outdoor GT positions; rejection-samples points that fall strictly
/// inside a footprint.
inline UrbanMap place_gts(UrbanMap map, int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("at least one GT is required");
  Rng rng(derive_seed(seed, "gts"));
  const double side = map.params.side;
  const long max_attempts = 10000L * count;
  long attempts = 0;
  map.gts.clear();
  map.gt_seed = seed;
  map.params.num_gts = count;
  while (static_cast<int>(map.gts.size()) < count) {
    if (++attempts > max_attempts)
      throw std::runtime_error("GT placement failed: no outdoor room after " + std::to_string(max_attempts) +
                               " attempts");
    const double x = rng.uniform(0.0, side);
    const double y = rng.uniform(0.0, side);
    if (map.indoor(x, y)) continue;
    map.gts.push_back({x, y, 0.0});
  }
  return map;
}

/// Map plus GTs in one call, with the GT stream derived from the map seed.
inline UrbanMap generate_map(const EnvParams& params, std::uint64_t seed) {
  return place_gts(generate_buildings(params, seed), params.num_gts, derive_seed(seed, "gt-placement"));
}

inline bool is_los(const Vec3& a, const Vec3& b, const UrbanMap& map) {
  const double low = std::min(a.z, b.z);
  for (const auto& bld : map.buildings) {
    if (low >= bld.height) continue;
    if (segment_crosses_box(a, b, bld.box())) return false;
  }
  return true;
}

// ---- serialization --------------------------------------------------------

inline void to_json(nlohmann::json& j, const EnvParams& p) {
  j = nlohmann::json{{"alpha", p.alpha},           {"beta", p.beta},   {"lambda", p.lambda},
                     {"side", p.side},             {"height_min", p.height_min},
                     {"height_max", p.height_max}, {"z_min", p.z_min}, {"z_max", p.z_max},
                     {"num_gts", p.num_gts}};
}

inline void from_json(const nlohmann::json& j, EnvParams& p) {
  j.at("alpha").get_to(p.alpha);
  j.at("beta").get_to(p.beta);
  j.at("lambda").get_to(p.lambda);
  j.at("side").get_to(p.side);
  j.at("height_min").get_to(p.height_min);
  j.at("height_max").get_to(p.height_max);
  j.at("z_min").get_to(p.z_min);
  j.at("z_max").get_to(p.z_max);
  j.at("num_gts").get_to(p.num_gts);
}

inline nlohmann::json map_to_json(const UrbanMap& map) {
  nlohmann::json buildings = nlohmann::json::array();
  for (const auto& b : map.buildings)
    buildings.push_back({{"cx", b.cx}, {"cy", b.cy}, {"half_x", b.half_x}, {"half_y", b.half_y},
                         {"height", b.height}});
  nlohmann::json gts = nlohmann::json::array();
  for (const auto& g : map.gts) gts.push_back({g.x, g.y});
  return {{"format", "uavtraj-map/1"}, {"params", map.params}, {"seed", map.seed},
          {"gt_seed", map.gt_seed},     {"buildings", buildings}, {"gts", gts}};
}

inline UrbanMap map_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "uavtraj-map/1") throw std::runtime_error("not a uavtraj map file");
  UrbanMap map;
  map.params = j.at("params").get<EnvParams>();
  map.seed = j.at("seed").get<std::uint64_t>();
  map.gt_seed = j.at("gt_seed").get<std::uint64_t>();
  for (const auto& b : j.at("buildings"))
    map.buildings.push_back({b.at("cx").get<double>(), b.at("cy").get<double>(), b.at("half_x").get<double>(),
                             b.at("half_y").get<double>(), b.at("height").get<double>()});
  for (const auto& g : j.at("gts")) map.gts.push_back({g.at(0).get<double>(), g.at(1).get<double>(), 0.0});
  return map;
}

}  // namespace uavtraj
