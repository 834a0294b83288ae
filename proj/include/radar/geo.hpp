#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <unordered_map>
#include <utility>
#include <vector>

namespace radar
{
/// Mean radius of the WGS-84 ellipsoid, used as the sphere radius for all
/// great-circle computations.
inline constexpr double kEarthRadiusM = 6371008.8;

struct GeoPoint
{
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

inline bool valid_coordinates(double lat, double lon)
{
  return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 &&
         lon >= -180.0 && lon <= 180.0;
}

/// Great-circle distance in meters (haversine).
inline double haversine_m(const GeoPoint& a, const GeoPoint& b)
{
  const double phi1 = deg_to_rad(a.lat);
  const double phi2 = deg_to_rad(b.lat);
  const double dphi = phi2 - phi1;
  const double dlambda = deg_to_rad(b.lon - a.lon);
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  if (h > 1.0)
  {
    h = 1.0;
  }
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

/// Epanechnikov profile with compact support: max(0, 1 - u^2) for u = dist/h.
inline double epanechnikov(double distance, double bandwidth)
{
  const double u = distance / bandwidth;
  const double k = 1.0 - u * u;
  return k > 0.0 ? k : 0.0;
}

inline std::array<double, 3> to_unit_vector(const GeoPoint& p)
{
  const double phi = deg_to_rad(p.lat);
  const double lambda = deg_to_rad(p.lon);
  return {std::cos(phi) * std::cos(lambda), std::cos(phi) * std::sin(lambda), std::sin(phi)};
}

/// Uniform grid over Earth-centred coordinates with cell edge `cell_m`.
///
/// Chord length never exceeds arc length, so every pair of points closer than
/// `cell_m` along the surface lands in the same or an adjacent cell. Scanning
/// the 27 surrounding cells is therefore a complete candidate filter for
/// radius queries up to `cell_m`, including near the poles and the
/// antimeridian.
template <typename Handle>
class SpatialGrid
{
public:
  explicit SpatialGrid(double cell_m) : scale_(kEarthRadiusM / cell_m) {}

  void insert(const GeoPoint& p, Handle h) { cells_[key_of(p)].push_back(h); }

  void erase(const GeoPoint& p, const Handle& h)
  {
    auto it = cells_.find(key_of(p));
    if (it == cells_.end())
    {
      return;
    }
    auto& bucket = it->second;
    for (std::size_t i = 0; i < bucket.size(); ++i)
    {
      if (bucket[i] == h)
      {
        bucket[i] = bucket.back();
        bucket.pop_back();
        break;
      }
    }
    if (bucket.empty())
    {
      cells_.erase(it);
    }
  }

  /// Calls fn(handle) for every stored handle in the 3x3x3 block around p.
  template <typename Fn>
  void for_each_near(const GeoPoint& p, Fn&& fn) const
  {
    const CellKey centre = key_of(p);
    for (int dx = -1; dx <= 1; ++dx)
    {
      for (int dy = -1; dy <= 1; ++dy)
      {
        for (int dz = -1; dz <= 1; ++dz)
        {
          auto it = cells_.find(CellKey{centre.x + dx, centre.y + dy, centre.z + dz});
          if (it == cells_.end())
          {
            continue;
          }
          for (const Handle& h : it->second)
          {
            fn(h);
          }
        }
      }
    }
  }

  void clear() { cells_.clear(); }

private:
  struct CellKey
  {
    int64_t x = 0;
    int64_t y = 0;
    int64_t z = 0;
    friend bool operator==(const CellKey&, const CellKey&) = default;
  };

  struct CellHash
  {
    std::size_t operator()(const CellKey& k) const noexcept
    {
      uint64_t h = static_cast<uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
      h ^= static_cast<uint64_t>(k.y) + 0x7F4A7C159E3779B9ULL + (h << 6) + (h >> 2);
      h ^= static_cast<uint64_t>(k.z) + 0x94D049BB133111EBULL + (h << 6) + (h >> 2);
      return static_cast<std::size_t>(h);
    }
  };

  CellKey key_of(const GeoPoint& p) const
  {
    const auto v = to_unit_vector(p);
    return CellKey{static_cast<int64_t>(std::floor(v[0] * scale_)),
                   static_cast<int64_t>(std::floor(v[1] * scale_)),
                   static_cast<int64_t>(std::floor(v[2] * scale_))};
  }

  double scale_;
  std::unordered_map<CellKey, std::vector<Handle>, CellHash> cells_;
};

}  // namespace radar
