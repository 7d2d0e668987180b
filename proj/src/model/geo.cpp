#include "iothub/geo.hpp"

#include "iothub/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace iothub {

namespace {

double radians(double deg) noexcept { return deg * std::numbers::pi / 180.0; }

double parse_double(std::string_view text, int line_no) {
    double out = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    if (ec != std::errc{} || ptr != end) {
        throw Error(Errc::config_error,
                    "city table line " + std::to_string(line_no) + ": bad number '" +
                        std::string(text) + "'");
    }
    return out;
}

} // namespace

bool valid_coordinates(const GeoPoint& p) noexcept {
    return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 &&
           p.lon >= -180.0 && p.lon <= 180.0;
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) noexcept {
    const double dlat = radians(b.lat - a.lat);
    const double dlon = radians(b.lon - a.lon);
    const double s = std::sin(dlat / 2.0);
    const double t = std::sin(dlon / 2.0);
    double h = s * s + std::cos(radians(a.lat)) * std::cos(radians(b.lat)) * t * t;
    h = std::min(1.0, std::max(0.0, h));
    return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

CityTable::CityTable(std::vector<City> entries) : entries_(std::move(entries)) {
    std::set<std::string> seen;
    for (const auto& c : entries_) {
        if (c.name.empty()) {
            throw Error(Errc::config_error, "city table: empty city name");
        }
        if (!seen.insert(c.name).second) {
            throw Error(Errc::config_error, "city table: duplicate city '" + c.name + "'",
                        c.name);
        }
        if (!valid_coordinates(c.centroid)) {
            throw Error(Errc::config_error,
                        "city table: centroid out of range for '" + c.name + "'", c.name);
        }
    }
}

CityTable CityTable::parse(std::istream& in) {
    std::vector<City> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos || line.find('\t', tab2 + 1) != std::string::npos) {
            throw Error(Errc::config_error,
                        "city table line " + std::to_string(line_no) + ": expected 3 columns");
        }
        std::string_view view(line);
        City city;
        city.name = std::string(view.substr(0, tab1));
        city.centroid.lat = parse_double(view.substr(tab1 + 1, tab2 - tab1 - 1), line_no);
        city.centroid.lon = parse_double(view.substr(tab2 + 1), line_no);
        entries.push_back(std::move(city));
    }
    return CityTable(std::move(entries));
}

CityTable CityTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::config_error, "cannot open city table " + path.string());
    }
    return parse(in);
}

const std::string& CityTable::nearest(const GeoPoint& p) const {
    if (entries_.empty()) {
        throw Error(Errc::empty_table, "city table is empty");
    }
    const City* best = &entries_.front();
    double best_km = haversine_km(p, best->centroid);
    for (const auto& c : entries_) {
        const double km = haversine_km(p, c.centroid);
        if (km < best_km || (km == best_km && c.name < best->name)) {
            best = &c;
            best_km = km;
        }
    }
    return best->name;
}

const CityTable& CityTable::nordic() {
    static const CityTable table({
        {"Aarhus", {56.1629, 10.2039}},
        {"Copenhagen", {55.6761, 12.5683}},
        {"Espoo", {60.2055, 24.6559}},
        {"Gothenburg", {57.7089, 11.9746}},
        {"Helsinki", {60.1699, 24.9384}},
        {"Oslo", {59.9139, 10.7522}},
        {"Oulu", {65.0121, 25.4651}},
        {"Reykjavik", {64.1466, -21.9426}},
        {"Stockholm", {59.3293, 18.0686}},
        {"Tampere", {61.4978, 23.7610}},
        {"Tallinn", {59.4370, 24.7536}},
        {"Turku", {60.4518, 22.2666}},
        {"Vantaa", {60.2934, 25.0378}},
    });
    return table;
}

} // namespace iothub
