#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "agbd/geom.hpp"
#include "agbd/rng.hpp"

using agbd::Crs;
using agbd::Rng;
using namespace agbd::geom;

namespace {

constexpr double PI = 3.14159265358979323846;
constexpr double RAD = PI / 180.0;

// Independent area oracle: long double shoelace relative to the first vertex.
long double shoelace_abs(const Ring& ring) {
    long double acc = 0.0L;
    const long double ox = ring[0].x, oy = ring[0].y;
    for (std::size_t i = 1; i + 1 < ring.size(); ++i) {
        const long double ax = ring[i].x - ox, ay = ring[i].y - oy;
        const long double bx = ring[i + 1].x - ox, by = ring[i + 1].y - oy;
        acc += ax * by - bx * ay;
    }
    return std::abs(acc) * 0.5L;
}

std::array<double, 3> unit_vec(double lon_deg, double lat_deg) {
    const double lon = lon_deg * RAD, lat = lat_deg * RAD;
    return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

Point lonlat_of(const std::array<double, 3>& v) {
    return {std::atan2(v[1], v[0]) / RAD, std::asin(std::clamp(v[2], -1.0, 1.0)) / RAD};
}

std::array<double, 3> slerp(const std::array<double, 3>& a, const std::array<double, 3>& b,
                            double t) {
    const double dot = std::clamp(a[0] * b[0] + a[1] * b[1] + a[2] * b[2], -1.0, 1.0);
    const double omega = std::acos(dot);
    if (omega < 1e-12) return a;
    const double wa = std::sin((1.0 - t) * omega) / std::sin(omega);
    const double wb = std::sin(t * omega) / std::sin(omega);
    return {wa * a[0] + wb * b[0], wa * a[1] + wb * b[1], wa * a[2] + wb * b[2]};
}

// Spherical excess of a geodesic triangle on the unit sphere.
double spherical_excess(const std::array<double, 3>& a, const std::array<double, 3>& b,
                        const std::array<double, 3>& c) {
    const double det = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) +
                       a[2] * (b[0] * c[1] - b[1] * c[0]);
    const double ab = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    const double bc = b[0] * c[0] + b[1] * c[1] + b[2] * c[2];
    const double ca = c[0] * a[0] + c[1] * a[1] + c[2] * a[2];
    return 2.0 * std::atan2(std::abs(det), 1.0 + ab + bc + ca);
}

Ring project_ring(const std::vector<Point>& lonlat, const AlbersSpec& spec) {
    Ring out;
    out.reserve(lonlat.size());
    for (const Point& p : lonlat) out.push_back(albers_forward(p, spec));
    return out;
}

// Independent membership oracle: winding by summed signed angles.
bool winding_inside(const Point& p, const Ring& ring) {
    double total = 0.0;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double a1 = std::atan2(ring[j].y - p.y, ring[j].x - p.x);
        const double a2 = std::atan2(ring[i].y - p.y, ring[i].x - p.x);
        double d = a2 - a1;
        while (d > PI) d -= 2.0 * PI;
        while (d < -PI) d += 2.0 * PI;
        total += d;
    }
    return std::abs(total) > PI;
}

double dist_to_segment(const Point& p, const Point& a, const Point& b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double wx = p.x - a.x, wy = p.y - a.y;
    const double len2 = vx * vx + vy * vy;
    const double t = len2 > 0.0 ? std::clamp((wx * vx + wy * vy) / len2, 0.0, 1.0) : 0.0;
    return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

double dist_to_ring(const Point& p, const Ring& ring) {
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++)
        best = std::min(best, dist_to_segment(p, ring[j], ring[i]));
    return best;
}

// Simple star-shaped polygon around (cx, cy) with jittered spokes.
Ring star_polygon(const Rng& rng, std::size_t idx, int k, double cx, double cy, double r_min,
                  double r_max) {
    Ring ring;
    ring.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const double base = 2.0 * PI * i / k;
        const double jitter =
            0.8 * (2.0 * PI / k) * rng.uniform(idx, static_cast<std::uint64_t>(2 * i));
        const double ang = base + jitter;
        const double r =
            r_min + (r_max - r_min) * rng.uniform(idx, static_cast<std::uint64_t>(2 * i + 1));
        ring.push_back({cx + r * std::cos(ang), cy + r * std::sin(ang)});
    }
    return ring;
}

Ring square(double x0, double y0, double x1, double y1) {
    return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

Zone square_zone(const std::string& id, double x0, double y0, double x1, double y1) {
    Zone z;
    z.id = id;
    Polygon poly;
    poly.outer = square(x0, y0, x1, y1);
    z.parts.push_back(std::move(poly));
    return z;
}

std::optional<std::size_t> brute_assign(const ZoneSet& zs, const Point& p) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < zs.zones.size(); ++i) {
        if (!point_in_zone(p, zs.zones[i])) continue;
        if (!best || zs.zones[i].id < zs.zones[*best].id) best = i;
    }
    return best;
}

}  // namespace

TEST_CASE("projection preserves latitude-longitude box areas") {
    const AlbersSpec spec;
    const double lon0 = -100.0, lon1 = -95.0, lat0 = 35.0, lat1 = 39.0;
    const double expected =
        spec.radius * spec.radius * (lon1 - lon0) * RAD * (std::sin(lat1 * RAD) - std::sin(lat0 * RAD));

    const int k = 512;
    std::vector<Point> boundary;
    for (int i = 0; i < k; ++i) boundary.push_back({lon0 + (lon1 - lon0) * i / k, lat0});
    for (int i = 0; i < k; ++i) boundary.push_back({lon1, lat0 + (lat1 - lat0) * i / k});
    for (int i = 0; i < k; ++i) boundary.push_back({lon1 - (lon1 - lon0) * i / k, lat1});
    for (int i = 0; i < k; ++i) boundary.push_back({lon0, lat1 - (lat1 - lat0) * i / k});

    const Ring projected = project_ring(boundary, spec);
    const double planar = static_cast<double>(shoelace_abs(projected));
    CHECK_THAT(planar, Catch::Matchers::WithinRel(expected, 1e-6));

    Polygon poly;
    poly.outer = projected;
    CHECK_THAT(polygon_area(poly), Catch::Matchers::WithinRel(planar, 1e-9));
}

TEST_CASE("projection preserves geodesic triangle areas") {
    const AlbersSpec spec;
    const std::array<std::array<Point, 3>, 3> triangles = {{
        {{{-110.0, 30.0}, {-90.0, 45.0}, {-80.0, 28.0}}},
        {{{-120.0, 40.0}, {-100.0, 50.0}, {-105.0, 32.0}}},
        {{{-95.0, 25.0}, {-85.0, 38.0}, {-104.0, 41.0}}},
    }};
    for (const auto& tri : triangles) {
        const auto a = unit_vec(tri[0].x, tri[0].y);
        const auto b = unit_vec(tri[1].x, tri[1].y);
        const auto c = unit_vec(tri[2].x, tri[2].y);
        const double expected = spherical_excess(a, b, c) * spec.radius * spec.radius;

        const int k = 2048;
        std::vector<Point> boundary;
        for (int i = 0; i < k; ++i) boundary.push_back(lonlat_of(slerp(a, b, double(i) / k)));
        for (int i = 0; i < k; ++i) boundary.push_back(lonlat_of(slerp(b, c, double(i) / k)));
        for (int i = 0; i < k; ++i) boundary.push_back(lonlat_of(slerp(c, a, double(i) / k)));
        const double planar = static_cast<double>(shoelace_abs(project_ring(boundary, spec)));
        CHECK_THAT(planar, Catch::Matchers::WithinRel(expected, 1e-6));
    }
}

TEST_CASE("projection origin maps to the false origin") {
    AlbersSpec spec;
    const Point at_origin = albers_forward({spec.lambda0, spec.phi0}, spec);
    CHECK_THAT(at_origin.x, Catch::Matchers::WithinAbs(0.0, 1e-9));
    CHECK_THAT(at_origin.y, Catch::Matchers::WithinAbs(0.0, 1e-9));

    spec.false_easting = 2.0e6;
    spec.false_northing = -5.0e5;
    const Point shifted = albers_forward({spec.lambda0, spec.phi0}, spec);
    CHECK_THAT(shifted.x, Catch::Matchers::WithinAbs(2.0e6, 1e-9));
    CHECK_THAT(shifted.y, Catch::Matchers::WithinAbs(-5.0e5, 1e-9));
}

TEST_CASE("parallel scale is unity on both standard parallels") {
    const AlbersSpec spec;
    const double d_lon = 1e-4;
    for (double lat : {29.5, 45.5}) {
        const Point east = albers_forward({-96.0 + d_lon, lat}, spec);
        const Point west = albers_forward({-96.0 - d_lon, lat}, spec);
        const double planar = std::hypot(east.x - west.x, east.y - west.y);
        const double ground = spec.radius * std::cos(lat * RAD) * (2.0 * d_lon * RAD);
        CHECK_THAT(planar / ground, Catch::Matchers::WithinAbs(1.0, 1e-6));
    }
}

TEST_CASE("parallel and meridian scales are reciprocal everywhere") {
    const AlbersSpec spec;
    const double d = 1e-4;
    for (double lat : {25.0, 33.0, 41.0, 49.0}) {
        for (double lon : {-120.0, -96.0, -75.0}) {
            const Point east = albers_forward({lon + d, lat}, spec);
            const Point west = albers_forward({lon - d, lat}, spec);
            const Point north = albers_forward({lon, lat + d}, spec);
            const Point south = albers_forward({lon, lat - d}, spec);
            const double k = std::hypot(east.x - west.x, east.y - west.y) /
                             (spec.radius * std::cos(lat * RAD) * 2.0 * d * RAD);
            const double h =
                std::hypot(north.x - south.x, north.y - south.y) / (spec.radius * 2.0 * d * RAD);
            CHECK_THAT(k * h, Catch::Matchers::WithinAbs(1.0, 1e-5));
        }
    }
}

TEST_CASE("projection is symmetric about the central meridian") {
    const AlbersSpec spec;
    for (double d_lon : {2.0, 11.0, 25.0}) {
        for (double lat : {28.0, 40.0, 47.0}) {
            const Point east = albers_forward({spec.lambda0 + d_lon, lat}, spec);
            const Point west = albers_forward({spec.lambda0 - d_lon, lat}, spec);
            CHECK_THAT(east.x, Catch::Matchers::WithinAbs(-west.x, 1e-6));
            CHECK_THAT(east.y, Catch::Matchers::WithinAbs(west.y, 1e-6));
        }
    }
}

TEST_CASE("inverse projection undoes the forward projection") {
    const AlbersSpec spec;
    const Rng rng(7, Rng::hash_string("test.albers_roundtrip"));
    for (std::size_t i = 0; i < 500; ++i) {
        const double lon = -130.0 + 70.0 * rng.uniform(i, 0);
        const double lat = 10.0 + 50.0 * rng.uniform(i, 1);
        const Point back = albers_inverse(albers_forward({lon, lat}, spec), spec);
        CHECK_THAT(back.x, Catch::Matchers::WithinAbs(lon, 1e-9));
        CHECK_THAT(back.y, Catch::Matchers::WithinAbs(lat, 1e-9));
    }
}

TEST_CASE("cone apex collapses the pole to a single point") {
    AlbersSpec spec;
    spec.phi1 = 45.0;
    spec.phi2 = 90.0;
    const Point a = albers_forward({-96.0, 90.0}, spec);
    const Point b = albers_forward({-50.0, 90.0}, spec);
    CHECK_THAT(a.x, Catch::Matchers::WithinAbs(b.x, 0.5));
    CHECK_THAT(a.y, Catch::Matchers::WithinAbs(b.y, 0.5));
}

TEST_CASE("projection rejects bad specs and coordinates") {
    AlbersSpec opposite;
    opposite.phi1 = -30.0;
    opposite.phi2 = 30.0;
    REQUIRE_THROWS_WITH(albers_forward({-96.0, 40.0}, opposite),
                        Catch::Matchers::ContainsSubstring("degenerate cone"));

    AlbersSpec no_radius;
    no_radius.radius = 0.0;
    REQUIRE_THROWS_WITH(albers_forward({-96.0, 40.0}, no_radius),
                        Catch::Matchers::ContainsSubstring("radius must be > 0"));

    const AlbersSpec spec;
    REQUIRE_THROWS_WITH(albers_forward({-96.0, 91.0}, spec),
                        Catch::Matchers::ContainsSubstring("outside [-90, 90]"));
    REQUIRE_THROWS_WITH(albers_forward({std::nan(""), 40.0}, spec),
                        Catch::Matchers::ContainsSubstring("non-finite"));
}

TEST_CASE("polygon area matches hand-computed shapes") {
    Polygon unit;
    unit.outer = square(0, 0, 1, 1);
    CHECK(polygon_area(unit) == 1.0);

    Polygon reversed;
    reversed.outer = {{0, 0}, {0, 1}, {1, 1}, {1, 0}};
    CHECK(polygon_area(reversed) == 1.0);

    Polygon tri;
    tri.outer = {{0, 0}, {2, 0}, {0, 3}};
    CHECK(polygon_area(tri) == 3.0);

    Polygon holed;
    holed.outer = square(0, 0, 2, 2);
    holed.holes.push_back(square(0.5, 0.5, 1.5, 1.5));
    CHECK(polygon_area(holed) == 3.0);

    Polygon degenerate;
    degenerate.outer = {{0, 0}, {1, 1}};
    REQUIRE_THROWS_WITH(polygon_area(degenerate),
                        Catch::Matchers::ContainsSubstring("fewer than 3"));
}

TEST_CASE("polygon area is stable under large translations") {
    const Rng rng(15, Rng::hash_string("test.area_translation"));
    for (std::size_t i = 0; i < 50; ++i) {
        Polygon base;
        base.outer = star_polygon(rng, i, 9, 0.0, 0.0, 0.5, 2.0);
        Polygon moved = base;
        for (Point& p : moved.outer) {
            p.x += 1.0e7;
            p.y += 1.0e7;
        }
        CHECK_THAT(polygon_area(moved), Catch::Matchers::WithinRel(polygon_area(base), 1e-9));
    }
}

TEST_CASE("boundary points count as inside, holes as outside") {
    Polygon holed;
    holed.outer = square(0, 0, 4, 4);
    holed.holes.push_back(square(1, 1, 3, 3));

    CHECK(point_in_polygon({2.0, 0.5}, holed));    // between outer and hole
    CHECK_FALSE(point_in_polygon({2.0, 2.0}, holed));  // inside the hole
    CHECK(point_in_polygon({0.0, 2.0}, holed));    // outer edge
    CHECK(point_in_polygon({0.0, 0.0}, holed));    // outer corner
    CHECK(point_in_polygon({1.0, 2.0}, holed));    // hole edge
    CHECK(point_in_polygon({1.0, 1.0}, holed));    // hole corner
    CHECK_FALSE(point_in_polygon({5.0, 5.0}, holed));
    CHECK_FALSE(point_in_polygon({-0.001, 2.0}, holed));
}

TEST_CASE("membership agrees with a winding-number oracle") {
    const Rng rng(23, Rng::hash_string("test.pip_oracle"));
    std::size_t compared = 0;
    for (std::size_t poly_i = 0; poly_i < 40; ++poly_i) {
        Polygon poly;
        poly.outer = star_polygon(rng, poly_i, 5 + static_cast<int>(poly_i % 8), 0.0, 0.0, 0.6, 2.0);
        for (std::size_t pt_i = 0; pt_i < 250; ++pt_i) {
            const Point p{-2.5 + 5.0 * rng.uniform(1000 + poly_i, 2 * pt_i),
                          -2.5 + 5.0 * rng.uniform(1000 + poly_i, 2 * pt_i + 1)};
            if (dist_to_ring(p, poly.outer) < 1e-7) continue;  // boundary rules differ
            CHECK(point_in_polygon(p, poly) == winding_inside(p, poly.outer));
            ++compared;
        }
    }
    CHECK(compared > 9000);
}

TEST_CASE("membership with holes agrees with the oracle") {
    Polygon poly;
    poly.outer = square(0, 0, 10, 10);
    poly.holes.push_back(square(2, 2, 4, 4));
    poly.holes.push_back(square(6, 5, 9, 8));
    const Rng rng(29, Rng::hash_string("test.pip_holes"));
    for (std::size_t i = 0; i < 2000; ++i) {
        const Point p{-1.0 + 12.0 * rng.uniform(i, 0), -1.0 + 12.0 * rng.uniform(i, 1)};
        double margin = dist_to_ring(p, poly.outer);
        for (const Ring& h : poly.holes) margin = std::min(margin, dist_to_ring(p, h));
        if (margin < 1e-7) continue;
        bool expect = winding_inside(p, poly.outer);
        for (const Ring& h : poly.holes) expect = expect && !winding_inside(p, h);
        CHECK(point_in_polygon(p, poly) == expect);
    }
}

TEST_CASE("hexagon side and area follow the target area") {
    const double target = 6.4e8;  // 64,000 ha in m^2
    const ZoneSet zs = tessellate_hexagons({0, 0, 1.0e5, 1.0e5}, target);
    REQUIRE(zs.zones.size() > 4);
    const double expected_side = std::sqrt(2.0 * target / (3.0 * std::sqrt(3.0)));
    CHECK_THAT(expected_side, Catch::Matchers::WithinAbs(15695.1, 0.1));

    for (const Zone& z : zs.zones) {
        const Ring& ring = z.parts.at(0).outer;
        REQUIRE(ring.size() == 6);
        for (std::size_t i = 0; i < 6; ++i) {
            const Point& a = ring[i];
            const Point& b = ring[(i + 1) % 6];
            CHECK_THAT(std::hypot(b.x - a.x, b.y - a.y),
                       Catch::Matchers::WithinRel(expected_side, 1e-9));
        }
        CHECK_THAT(zone_area(z), Catch::Matchers::WithinRel(target, 1e-6));
    }
}

TEST_CASE("hexagon areas agree with each other to rounding") {
    const double target = 6.4e8;
    const ZoneSet zs = tessellate_hexagons({0, 0, 2.0e5, 1.5e5}, target);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const Zone& z : zs.zones) {
        const double a = zone_area(z);
        lo = std::min(lo, a);
        hi = std::max(hi, a);
    }
    CHECK((hi - lo) / target < 1e-12);
}

TEST_CASE("hexagon ids are normalized to a zero-based lattice") {
    const ZoneSet zs = tessellate_hexagons({0, 0, 5.0e4, 5.0e4}, 6.4e6);
    long min_row = std::numeric_limits<long>::max(), min_col = min_row;
    for (const Zone& z : zs.zones) {
        long row = 0, col = 0;
        REQUIRE(std::sscanf(z.id.c_str(), "hex_%ld_%ld", &row, &col) == 2);
        REQUIRE(row >= 0);
        REQUIRE(col >= 0);
        min_row = std::min(min_row, row);
        min_col = std::min(min_col, col);
    }
    CHECK(min_row == 0);
    CHECK(min_col == 0);
}

TEST_CASE("tessellation output is deterministic") {
    const ZoneSet a = tessellate_hexagons({10, -20, 4.0e4, 3.0e4}, 1.2e7);
    const ZoneSet b = tessellate_hexagons({10, -20, 4.0e4, 3.0e4}, 1.2e7);
    REQUIRE(a.zones.size() == b.zones.size());
    for (std::size_t i = 0; i < a.zones.size(); ++i) {
        CHECK(a.zones[i].id == b.zones[i].id);
        const Ring& ra = a.zones[i].parts[0].outer;
        const Ring& rb = b.zones[i].parts[0].outer;
        REQUIRE(ra.size() == rb.size());
        for (std::size_t k = 0; k < ra.size(); ++k) {
            CHECK(ra[k].x == rb[k].x);
            CHECK(ra[k].y == rb[k].y);
        }
    }
}

TEST_CASE("every point in bounds lands in exactly one hexagon") {
    const Rect bounds{0, 0, 2.0e4, 1.5e4};
    const ZoneSet zs = tessellate_hexagons(bounds, 6.4e6);
    const ZoneIndex index(zs);
    const Rng rng(31, Rng::hash_string("test.hex_cover"));
    for (std::size_t i = 0; i < 2000; ++i) {
        const Point p{bounds.x0 + (bounds.x1 - bounds.x0) * rng.uniform(i, 0),
                      bounds.y0 + (bounds.y1 - bounds.y0) * rng.uniform(i, 1)};
        const auto zi = index.assign(p);
        REQUIRE(zi.has_value());
        CHECK(point_in_zone(p, zs.zones[*zi]));
        // independent confirmation away from hexagon edges
        const Ring& ring = zs.zones[*zi].parts[0].outer;
        if (dist_to_ring(p, ring) > 1e-6) CHECK(winding_inside(p, ring));
    }
}

TEST_CASE("tessellation validates its inputs") {
    REQUIRE_THROWS_WITH(tessellate_hexagons({0, 0, 10, 10}, 0.0),
                        Catch::Matchers::ContainsSubstring("target area must be > 0"));
    REQUIRE_THROWS_WITH(tessellate_hexagons({5, 5, 5, 5}, 100.0),
                        Catch::Matchers::ContainsSubstring("bounds are empty"));
}

TEST_CASE("shared boundaries resolve to the smallest zone id") {
    ZoneSet zs;
    zs.zones.push_back(square_zone("b", 1, 0, 2, 1));
    zs.zones.push_back(square_zone("a", 0, 0, 1, 1));
    zs.zones.push_back(square_zone("d", 1, 1, 2, 2));
    zs.zones.push_back(square_zone("c", 0, 1, 1, 2));
    const ZoneIndex index(zs);

    auto id_of = [&](const Point& p) { return zs.zones[*index.assign(p)].id; };
    CHECK(id_of({1.0, 0.5}) == "a");   // edge shared by a and b
    CHECK(id_of({0.5, 1.0}) == "a");   // edge shared by a and c
    CHECK(id_of({1.0, 1.0}) == "a");   // corner shared by all four
    CHECK(id_of({1.0, 1.5}) == "c");   // edge shared by c and d
    CHECK(id_of({1.5, 0.5}) == "b");   // interior of b
    CHECK_FALSE(index.assign({3.0, 3.0}).has_value());
}

TEST_CASE("indexed assignment matches a full scan") {
    const Rng rng(37, Rng::hash_string("test.index_oracle"));
    ZoneSet zs;
    for (std::size_t i = 0; i < 40; ++i) {
        Zone z;
        z.id = "z" + std::to_string(100 + (i * 17) % 97);  // unordered, some overlap in space
        Polygon poly;
        poly.outer = star_polygon(rng, i, 7, 10.0 * rng.uniform(i, 50), 10.0 * rng.uniform(i, 51),
                                  0.8, 2.5);
        z.parts.push_back(std::move(poly));
        zs.zones.push_back(std::move(z));
    }
    const ZoneIndex index(zs);
    for (std::size_t i = 0; i < 400; ++i) {
        const Point p{-3.0 + 16.0 * rng.uniform(5000 + i, 0), -3.0 + 16.0 * rng.uniform(5000 + i, 1)};
        CHECK(index.assign(p) == brute_assign(zs, p));
    }
}

TEST_CASE("geojson zones survive a write and read round trip") {
    ZoneSet zs;
    zs.crs = Crs::geographic;
    Zone holed = square_zone("alpha", -100, 40, -99, 41);
    holed.parts[0].holes.push_back(square(-99.8, 40.2, -99.5, 40.5));
    holed.unit_id = "unit_7";
    zs.zones.push_back(holed);
    Zone multi;
    multi.id = "beta";
    Polygon p1, p2;
    p1.outer = square(-98, 40, -97, 41);
    p2.outer = {{-96.5, 40.25}, {-96.0, 40.125}, {-96.25, 40.75}};
    multi.parts = {p1, p2};
    zs.zones.push_back(multi);

    std::ostringstream out;
    write_zones(zs, out);
    std::istringstream in(out.str());
    const ZoneSet back = read_zones(in);

    REQUIRE(back.crs == Crs::geographic);
    REQUIRE(back.zones.size() == 2);
    CHECK(back.zones[0].id == "alpha");
    CHECK(back.zones[0].unit_id == "unit_7");
    REQUIRE(back.zones[0].parts.size() == 1);
    REQUIRE(back.zones[0].parts[0].holes.size() == 1);
    CHECK(back.zones[1].id == "beta");
    CHECK(back.zones[1].unit_id.empty());
    REQUIRE(back.zones[1].parts.size() == 2);
    for (std::size_t zi = 0; zi < zs.zones.size(); ++zi)
        for (std::size_t pi = 0; pi < zs.zones[zi].parts.size(); ++pi) {
            const Ring& orig = zs.zones[zi].parts[pi].outer;
            const Ring& got = back.zones[zi].parts[pi].outer;
            REQUIRE(got.size() == orig.size());
            for (std::size_t k = 0; k < orig.size(); ++k) {
                CHECK(got[k].x == orig[k].x);
                CHECK(got[k].y == orig[k].y);
            }
        }
}

TEST_CASE("geojson rings are emitted closed") {
    ZoneSet zs;
    zs.zones.push_back(square_zone("only", 0, 0, 1, 1));
    const nlohmann::json doc = zones_to_geojson(zs);
    const auto& ring = doc["features"][0]["geometry"]["coordinates"][0];
    REQUIRE(ring.size() == 5);
    CHECK(ring.front() == ring.back());
    CHECK(doc["crs_tag"] == "planar");
}

TEST_CASE("geojson reader rejects malformed collections") {
    auto read_str = [](const std::string& s) {
        std::istringstream in(s);
        return read_zones(in);
    };
    REQUIRE_THROWS_WITH(read_str("not json at all"),
                        Catch::Matchers::ContainsSubstring("not valid JSON"));
    REQUIRE_THROWS_WITH(read_str(R"({"type": "Feature"})"),
                        Catch::Matchers::ContainsSubstring("FeatureCollection"));
    REQUIRE_THROWS_WITH(read_str(R"({"type": "FeatureCollection", "crs_tag": "mercator",
                                     "features": []})"),
                        Catch::Matchers::ContainsSubstring("unknown crs_tag 'mercator'"));
    REQUIRE_THROWS_WITH(read_str(R"({"type": "FeatureCollection"})"),
                        Catch::Matchers::ContainsSubstring("no features array"));

    const std::string skeleton_pre = R"({"type": "FeatureCollection", "features": [)";
    auto feature = [](const std::string& props, const std::string& geom) {
        return R"({"type": "Feature", "properties": )" + props + R"(, "geometry": )" + geom + "}";
    };
    const std::string unit_square =
        R"({"type": "Polygon", "coordinates": [[[0,0],[1,0],[1,1],[0,1],[0,0]]]})";

    REQUIRE_THROWS_WITH(read_str(skeleton_pre + feature("{}", unit_square) + "]}"),
                        Catch::Matchers::ContainsSubstring("missing string property 'zone_id'"));
    REQUIRE_THROWS_WITH(
        read_str(skeleton_pre + feature(R"({"zone_id": "x", "unit_id": 3})", unit_square) + "]}"),
        Catch::Matchers::ContainsSubstring("unit_id must be a string"));
    REQUIRE_THROWS_WITH(
        read_str(skeleton_pre + feature(R"({"zone_id": "x"})",
                                        R"({"type": "Point", "coordinates": [0, 0]})") +
                 "]}"),
        Catch::Matchers::ContainsSubstring("unsupported geometry type 'Point'"));
    REQUIRE_THROWS_WITH(
        read_str(skeleton_pre +
                 feature(R"({"zone_id": "x"})",
                         R"({"type": "Polygon", "coordinates": [[[0,0],[0,0],[1,1],[0,1]]]})") +
                 "]}"),
        Catch::Matchers::ContainsSubstring("repeated consecutive point"));
    REQUIRE_THROWS_WITH(
        read_str(skeleton_pre +
                 feature(R"({"zone_id": "x"})",
                         R"({"type": "Polygon", "coordinates": [[[0,0],[1,0],[0,0]]]})") +
                 "]}"),
        Catch::Matchers::ContainsSubstring("fewer than 3 distinct"));
    REQUIRE_THROWS_WITH(
        read_str(skeleton_pre + feature(R"({"zone_id": "dup"})", unit_square) + "," +
                 feature(R"({"zone_id": "dup"})", unit_square) + "]}"),
        Catch::Matchers::ContainsSubstring("duplicate zone_id 'dup'"));
}

TEST_CASE("zone bounding boxes cover every part") {
    Zone multi;
    multi.id = "m";
    Polygon p1, p2;
    p1.outer = square(0, 0, 1, 1);
    p2.outer = square(5, -3, 6, 2);
    multi.parts = {p1, p2};
    const Rect b = zone_bbox(multi);
    CHECK(b.x0 == 0.0);
    CHECK(b.y0 == -3.0);
    CHECK(b.x1 == 6.0);
    CHECK(b.y1 == 2.0);
    CHECK(point_in_zone({5.5, 1.5}, multi));
    CHECK_FALSE(point_in_zone({3.0, 0.5}, multi));
}
