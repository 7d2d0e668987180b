#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace iothub {

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline constexpr double kEarthRadiusKm = 6371.0;

bool valid_coordinates(const GeoPoint& p) noexcept;

/// Great-circle distance on a sphere of radius kEarthRadiusKm.
double haversine_km(const GeoPoint& a, const GeoPoint& b) noexcept;

struct City {
    std::string name;
    GeoPoint centroid;
};

/// City centroids used to coarsen exact positions to a city name.
class CityTable {
public:
    CityTable() = default;
    /// Throws Error(config_error) on duplicate names or out-of-range centroids.
    explicit CityTable(std::vector<City> entries);

    /// Parses `name<TAB>lat<TAB>lon` records, one per line. Blank lines and
    /// lines starting with '#' are skipped.
    static CityTable parse(std::istream& in);
    static CityTable load(const std::filesystem::path& path);

    /// Nearest centroid by haversine; ties go to the lexicographically
    /// smallest name. Throws Error(empty_table) on an empty table.
    const std::string& nearest(const GeoPoint& p) const;

    const std::vector<City>& entries() const noexcept { return entries_; }
    bool empty() const noexcept { return entries_.empty(); }

    /// Small built-in table of Nordic city centroids.
    static const CityTable& nordic();

private:
    std::vector<City> entries_;
};

} // namespace iothub
