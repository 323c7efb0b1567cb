#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "agbd/error.hpp"
#include "agbd/numeric.hpp"
#include "agbd/point.hpp"

#include "json.hpp"

namespace agbd::geom {

// Rings are stored open: first vertex != last, closure implied.
using Ring = std::vector<Point>;

struct Polygon {
    Ring outer;
    std::vector<Ring> holes;
};

struct Zone {
    std::string id;
    std::string unit_id;  // optional grouping for county-style estimation
    std::vector<Polygon> parts;
};

struct ZoneSet {
    std::vector<Zone> zones;
    Crs crs = Crs::planar;
};

struct Rect {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    bool empty() const { return !(x1 > x0) || !(y1 > y0); }
    bool contains(const Point& p) const {
        return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
    }
};

// Spherical Albers equal-area conic. Angles in degrees, radius in meters.
struct AlbersSpec {
    double phi1 = 29.5;
    double phi2 = 45.5;
    double phi0 = 23.0;
    double lambda0 = -96.0;
    double radius = 6371007.181;
    double false_easting = 0.0;
    double false_northing = 0.0;
};

namespace detail {

constexpr double DEG = 0.017453292519943295;  // pi / 180

struct AlbersDerived {
    double n, c, rho0;
};

inline AlbersDerived albers_derive(const AlbersSpec& s) {
    if (!(s.radius > 0.0)) throw Error("geom", "projection radius must be > 0");
    const double sin1 = std::sin(s.phi1 * DEG);
    const double sin2 = std::sin(s.phi2 * DEG);
    const double n = 0.5 * (sin1 + sin2);
    if (std::abs(n) < 1e-12)
        throw Error("geom", "degenerate cone: standard parallels are opposite latitudes");
    const double cos1 = std::cos(s.phi1 * DEG);
    const double c = cos1 * cos1 + 2.0 * n * sin1;
    const double arg0 = std::max(0.0, c - 2.0 * n * std::sin(s.phi0 * DEG));
    const double rho0 = s.radius * std::sqrt(arg0) / n;
    return {n, c, rho0};
}

}  // namespace detail

// Geographic (lon, lat) degrees -> planar meters.
inline Point albers_forward(const Point& p, const AlbersSpec& spec) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw Error("geom", "non-finite coordinate in projection input");
    if (std::abs(p.y) > 90.0)
        throw Error("geom", "latitude " + format_g9(p.y) + " outside [-90, 90]");
    const auto d = detail::albers_derive(spec);
    // Latitudes beyond the cone's reach collapse onto the apex; the sqrt
    // argument is clamped so poles map to the exact apex point.
    const double arg = std::max(0.0, d.c - 2.0 * d.n * std::sin(p.y * detail::DEG));
    const double rho = spec.radius * std::sqrt(arg) / d.n;
    const double theta = d.n * (p.x - spec.lambda0) * detail::DEG;
    return {rho * std::sin(theta) + spec.false_easting,
            d.rho0 - rho * std::cos(theta) + spec.false_northing};
}

// Planar meters -> geographic (lon, lat) degrees.
inline Point albers_inverse(const Point& p, const AlbersSpec& spec) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw Error("geom", "non-finite coordinate in projection input");
    const auto d = detail::albers_derive(spec);
    double xp = p.x - spec.false_easting;
    double yp = d.rho0 - (p.y - spec.false_northing);
    const double rho = std::hypot(xp, yp);
    double theta = 0.0;
    if (rho > 0.0) theta = (d.n >= 0.0) ? std::atan2(xp, yp) : std::atan2(-xp, -yp);
    const double lon = spec.lambda0 + theta / d.n / detail::DEG;
    const double rn = rho * d.n / spec.radius;
    const double sin_lat = std::clamp((d.c - rn * rn) / (2.0 * d.n), -1.0, 1.0);
    return {lon, std::asin(sin_lat) / detail::DEG};
}

namespace detail {

inline bool on_segment(const Point& p, const Point& a, const Point& b) {
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    if (cross != 0.0) return false;
    return p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) &&
           p.y >= std::min(a.y, b.y) && p.y <= std::max(a.y, b.y);
}

// Even-odd parity of a +x ray; boundary handled by the caller.
inline bool ray_parity(const Point& p, const Ring& ring) {
    bool inside = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = ring[j];
        const Point& b = ring[i];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_int = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (x_int > p.x) inside = !inside;
        }
    }
    return inside;
}

inline bool on_ring_boundary(const Point& p, const Ring& ring) {
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++)
        if (on_segment(p, ring[j], ring[i])) return true;
    return false;
}

}  // namespace detail

// Even-odd ray casting. Points exactly on any edge or vertex (outer or hole
// boundary) count as inside; holes subtract.
inline bool point_in_polygon(const Point& p, const Polygon& poly) {
    if (poly.outer.size() < 3) throw Error("geom", "polygon outer ring has fewer than 3 points");
    if (detail::on_ring_boundary(p, poly.outer)) return true;
    for (const Ring& h : poly.holes)
        if (detail::on_ring_boundary(p, h)) return true;
    if (!detail::ray_parity(p, poly.outer)) return false;
    for (const Ring& h : poly.holes)
        if (detail::ray_parity(p, h)) return false;
    return true;
}

inline bool point_in_zone(const Point& p, const Zone& z) {
    for (const Polygon& part : z.parts)
        if (point_in_polygon(p, part)) return true;
    return false;
}

namespace detail {

// Shoelace relative to the first vertex, so translating a ring leaves the
// result unchanged down to rounding.
inline double ring_area_signed(const Ring& ring) {
    if (ring.size() < 3) throw Error("geom", "ring has fewer than 3 points");
    NeumaierSum acc;
    const double ox = ring[0].x, oy = ring[0].y;
    for (std::size_t i = 1; i + 1 < ring.size(); ++i) {
        const double ax = ring[i].x - ox, ay = ring[i].y - oy;
        const double bx = ring[i + 1].x - ox, by = ring[i + 1].y - oy;
        acc.add(ax * by - bx * ay);
    }
    return 0.5 * acc.value();
}

}  // namespace detail

inline double polygon_area(const Polygon& poly) {
    double a = std::abs(detail::ring_area_signed(poly.outer));
    for (const Ring& h : poly.holes) a -= std::abs(detail::ring_area_signed(h));
    return a;
}

inline double zone_area(const Zone& z) {
    double a = 0.0;
    for (const Polygon& part : z.parts) a += polygon_area(part);
    return a;
}

inline Rect ring_bbox(const Ring& ring) {
    Rect r{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const Point& p : ring) {
        r.x0 = std::min(r.x0, p.x);
        r.y0 = std::min(r.y0, p.y);
        r.x1 = std::max(r.x1, p.x);
        r.y1 = std::max(r.y1, p.y);
    }
    return r;
}

inline Rect zone_bbox(const Zone& z) {
    Rect r{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const Polygon& part : z.parts) {
        const Rect b = ring_bbox(part.outer);
        r.x0 = std::min(r.x0, b.x0);
        r.y0 = std::min(r.y0, b.y0);
        r.x1 = std::max(r.x1, b.x1);
        r.y1 = std::max(r.y1, b.y1);
    }
    return r;
}

// Flat-topped regular hexagons of side s on the standard offset lattice:
// columns 1.5*s apart, odd columns shifted up half a hexagon height. Every
// point of `bounds` is covered; ids are "hex_<row>_<col>" normalized so the
// emitted lattice starts at row 0, col 0.
inline ZoneSet tessellate_hexagons(const Rect& bounds, double target_area) {
    if (!(target_area > 0.0)) throw Error("geom", "hexagon target area must be > 0");
    if (bounds.empty()) throw Error("geom", "tessellation bounds are empty");
    const double s = std::sqrt(2.0 * target_area / (3.0 * std::sqrt(3.0)));
    const double h = std::sqrt(3.0) * s;  // hexagon height, row spacing
    const double col_pitch = 1.5 * s;

    const long col_lo = -1;
    const long col_hi = static_cast<long>(std::ceil((bounds.x1 - bounds.x0) / col_pitch)) + 1;
    const long row_lo = -1;
    const long row_hi = static_cast<long>(std::ceil((bounds.y1 - bounds.y0) / h)) + 1;

    const double off_x[6] = {s, 0.5 * s, -0.5 * s, -s, -0.5 * s, 0.5 * s};
    const double off_y[6] = {0.0, 0.5 * h, 0.5 * h, 0.0, -0.5 * h, -0.5 * h};

    ZoneSet out;
    out.crs = Crs::planar;
    for (long row = row_lo; row <= row_hi; ++row) {
        for (long col = col_lo; col <= col_hi; ++col) {
            const double cx = bounds.x0 + col_pitch * static_cast<double>(col);
            const double cy =
                bounds.y0 + h * (static_cast<double>(row) + ((col & 1) ? 0.5 : 0.0));
            Zone z;
            z.id = "hex_" + std::to_string(row - row_lo) + "_" + std::to_string(col - col_lo);
            Polygon poly;
            poly.outer.reserve(6);
            for (int k = 0; k < 6; ++k) poly.outer.push_back({cx + off_x[k], cy + off_y[k]});
            z.parts.push_back(std::move(poly));
            out.zones.push_back(std::move(z));
        }
    }
    return out;
}

// Uniform-bin candidate lookup over zone bounding boxes. A query returns
// every zone whose bbox covers the point's bin; membership still has to be
// tested. Zone ids decide ties, so candidate order never matters.
class ZoneIndex {
public:
    explicit ZoneIndex(const ZoneSet& zones) : zones_(&zones) {
        const std::size_t n = zones.zones.size();
        if (n == 0) {
            nx_ = ny_ = 1;
            cells_.resize(1);
            return;
        }
        extent_ = zone_bbox(zones.zones[0]);
        bboxes_.reserve(n);
        for (const Zone& z : zones.zones) {
            const Rect b = zone_bbox(z);
            bboxes_.push_back(b);
            extent_.x0 = std::min(extent_.x0, b.x0);
            extent_.y0 = std::min(extent_.y0, b.y0);
            extent_.x1 = std::max(extent_.x1, b.x1);
            extent_.y1 = std::max(extent_.y1, b.y1);
        }
        const std::size_t side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
        nx_ = ny_ = std::clamp<std::size_t>(side, 1, 512);
        cells_.resize(nx_ * ny_);
        const double wx = std::max(extent_.x1 - extent_.x0, 1e-300);
        const double wy = std::max(extent_.y1 - extent_.y0, 1e-300);
        for (std::size_t zi = 0; zi < n; ++zi) {
            const Rect& b = bboxes_[zi];
            const std::size_t cx0 = bin(b.x0, extent_.x0, wx, nx_);
            const std::size_t cx1 = bin(b.x1, extent_.x0, wx, nx_);
            const std::size_t cy0 = bin(b.y0, extent_.y0, wy, ny_);
            const std::size_t cy1 = bin(b.y1, extent_.y0, wy, ny_);
            for (std::size_t cy = cy0; cy <= cy1; ++cy)
                for (std::size_t cx = cx0; cx <= cx1; ++cx)
                    cells_[cy * nx_ + cx].push_back(zi);
        }
    }

    const std::vector<std::size_t>& candidates(const Point& p) const {
        static const std::vector<std::size_t> none;
        if (zones_->zones.empty()) return none;
        if (p.x < extent_.x0 || p.x > extent_.x1 || p.y < extent_.y0 || p.y > extent_.y1)
            return none;
        const double wx = std::max(extent_.x1 - extent_.x0, 1e-300);
        const double wy = std::max(extent_.y1 - extent_.y0, 1e-300);
        return cells_[bin(p.y, extent_.y0, wy, ny_) * nx_ + bin(p.x, extent_.x0, wx, nx_)];
    }

    // The single containing zone under the tie rule: lexicographically
    // smallest id among all zones whose geometry contains the point.
    std::optional<std::size_t> assign(const Point& p) const {
        std::optional<std::size_t> best;
        for (std::size_t zi : candidates(p)) {
            if (!bboxes_[zi].contains(p)) continue;
            if (!point_in_zone(p, zones_->zones[zi])) continue;
            if (!best || zones_->zones[zi].id < zones_->zones[*best].id) best = zi;
        }
        return best;
    }

private:
    static std::size_t bin(double v, double lo, double width, std::size_t n) {
        const double f = (v - lo) / width * static_cast<double>(n);
        if (f <= 0.0) return 0;
        const std::size_t i = static_cast<std::size_t>(f);
        return std::min(i, n - 1);
    }

    const ZoneSet* zones_;
    std::vector<Rect> bboxes_;
    Rect extent_;
    std::size_t nx_ = 1, ny_ = 1;
    std::vector<std::vector<std::size_t>> cells_;
};

namespace detail {

inline Ring ring_from_geojson(const nlohmann::json& coords, const std::string& zone_id) {
    if (!coords.is_array() || coords.size() < 3)
        throw Error("geom", "zone '" + zone_id + "': ring with fewer than 3 positions");
    Ring ring;
    ring.reserve(coords.size());
    for (const auto& pos : coords) {
        if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number())
            throw Error("geom", "zone '" + zone_id + "': malformed coordinate position");
        ring.push_back({pos[0].get<double>(), pos[1].get<double>()});
    }
    // GeoJSON closes rings explicitly; storage keeps them open.
    if (ring.size() >= 3 && ring.front().x == ring.back().x && ring.front().y == ring.back().y)
        ring.pop_back();
    for (std::size_t i = 1; i < ring.size(); ++i)
        if (ring[i].x == ring[i - 1].x && ring[i].y == ring[i - 1].y)
            throw Error("geom", "zone '" + zone_id + "': repeated consecutive point in ring");
    if (ring.size() < 3)
        throw Error("geom", "zone '" + zone_id + "': ring with fewer than 3 distinct positions");
    return ring;
}

inline Polygon polygon_from_geojson(const nlohmann::json& rings, const std::string& zone_id) {
    if (!rings.is_array() || rings.empty())
        throw Error("geom", "zone '" + zone_id + "': polygon without rings");
    Polygon poly;
    poly.outer = ring_from_geojson(rings[0], zone_id);
    for (std::size_t i = 1; i < rings.size(); ++i)
        poly.holes.push_back(ring_from_geojson(rings[i], zone_id));
    return poly;
}

}  // namespace detail

// GeoJSON FeatureCollection of Polygon/MultiPolygon features. Required
// feature property: zone_id (string, unique). Optional: unit_id (string).
// The foreign member "crs_tag" ("geographic" or "planar") names the CRS;
// absent means planar.
inline ZoneSet read_zones(std::istream& in) {
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw Error("geom", "zones file is not valid JSON");
    if (!doc.is_object() || doc.value("type", "") != std::string("FeatureCollection"))
        throw Error("geom", "zones file is not a GeoJSON FeatureCollection");

    ZoneSet out;
    const std::string crs_tag = doc.value("crs_tag", "planar");
    if (crs_tag == "geographic") out.crs = Crs::geographic;
    else if (crs_tag == "planar") out.crs = Crs::planar;
    else throw Error("geom", "unknown crs_tag '" + crs_tag + "' (expected 'geographic' or 'planar')");

    if (!doc.contains("features") || !doc["features"].is_array())
        throw Error("geom", "zones file has no features array");
    for (const auto& feature : doc["features"]) {
        if (!feature.is_object() || feature.value("type", "") != std::string("Feature"))
            throw Error("geom", "non-Feature entry in features array");
        const auto& props = feature.contains("properties") ? feature["properties"] : nlohmann::json();
        if (!props.is_object() || !props.contains("zone_id") || !props["zone_id"].is_string())
            throw Error("geom", "feature missing string property 'zone_id'");
        Zone z;
        z.id = props["zone_id"].get<std::string>();
        if (props.contains("unit_id")) {
            if (!props["unit_id"].is_string())
                throw Error("geom", "zone '" + z.id + "': unit_id must be a string");
            z.unit_id = props["unit_id"].get<std::string>();
        }
        if (!feature.contains("geometry") || !feature["geometry"].is_object())
            throw Error("geom", "zone '" + z.id + "': missing geometry");
        const auto& geometry = feature["geometry"];
        const std::string gtype = geometry.value("type", "");
        const auto& coords = geometry.contains("coordinates") ? geometry["coordinates"] : nlohmann::json();
        if (gtype == "Polygon") {
            z.parts.push_back(detail::polygon_from_geojson(coords, z.id));
        } else if (gtype == "MultiPolygon") {
            if (!coords.is_array() || coords.empty())
                throw Error("geom", "zone '" + z.id + "': empty MultiPolygon");
            for (const auto& rings : coords)
                z.parts.push_back(detail::polygon_from_geojson(rings, z.id));
        } else {
            throw Error("geom", "zone '" + z.id + "': unsupported geometry type '" + gtype + "'");
        }
        out.zones.push_back(std::move(z));
    }

    std::vector<std::string> ids;
    ids.reserve(out.zones.size());
    for (const Zone& z : out.zones) ids.push_back(z.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw Error("geom", "duplicate zone_id '" +
                                *std::adjacent_find(ids.begin(), ids.end()) + "'");
    return out;
}

inline nlohmann::json zones_to_geojson(const ZoneSet& zones) {
    nlohmann::json features = nlohmann::json::array();
    for (const Zone& z : zones.zones) {
        nlohmann::json polys = nlohmann::json::array();
        for (const Polygon& part : z.parts) {
            nlohmann::json rings = nlohmann::json::array();
            auto emit = [&](const Ring& ring) {
                nlohmann::json r = nlohmann::json::array();
                for (const Point& p : ring) r.push_back({p.x, p.y});
                r.push_back({ring.front().x, ring.front().y});
                rings.push_back(std::move(r));
            };
            emit(part.outer);
            for (const Ring& h : part.holes) emit(h);
            polys.push_back(std::move(rings));
        }
        nlohmann::json props = {{"zone_id", z.id}};
        if (!z.unit_id.empty()) props["unit_id"] = z.unit_id;
        nlohmann::json geometry;
        if (polys.size() == 1) geometry = {{"type", "Polygon"}, {"coordinates", polys[0]}};
        else geometry = {{"type", "MultiPolygon"}, {"coordinates", polys}};
        features.push_back({{"type", "Feature"}, {"properties", props}, {"geometry", geometry}});
    }
    return {{"type", "FeatureCollection"},
            {"crs_tag", zones.crs == Crs::geographic ? "geographic" : "planar"},
            {"features", features}};
}

inline void write_zones(const ZoneSet& zones, std::ostream& out) {
    out << zones_to_geojson(zones).dump(2) << '\n';
}

}  // namespace agbd::geom
