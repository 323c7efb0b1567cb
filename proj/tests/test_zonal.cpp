#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "agbd/geom.hpp"
#include "agbd/grid.hpp"
#include "agbd/rng.hpp"
#include "agbd/zonal.hpp"

using agbd::Crs;
using agbd::Rng;
using agbd::geom::AlbersSpec;
using agbd::geom::Point;
using agbd::geom::Polygon;
using agbd::geom::Zone;
using agbd::geom::ZoneSet;
using agbd::grid::Raster;
using namespace agbd::zonal;

namespace {

bool same_bits(double a, double b) {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

Zone square_zone(const std::string& id, double x0, double y0, double x1, double y1) {
    Zone z;
    z.id = id;
    Polygon poly;
    poly.outer = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
    z.parts.push_back(std::move(poly));
    return z;
}

// Same statistic definitions, recomputed the slow way: brute-force zone scan
// per pixel with the min-id tie rule, long double accumulators.
std::vector<ZonalStat> brute_stats(const Raster& r, const ZoneSet& zones,
                                   const std::optional<AlbersSpec>& projection) {
    std::vector<ZonalStat> out;
    std::map<std::string, std::size_t> slot;
    for (const Zone& z : zones.zones)
        if (slot.try_emplace(z.id, out.size()).second) {
            out.emplace_back();
            out.back().zone_id = z.id;
        }

    std::vector<int> assignment(r.values.size(), -1);
    for (std::size_t row = 0; row < r.transform.n_rows; ++row)
        for (std::size_t col = 0; col < r.transform.n_cols; ++col) {
            const std::size_t i = row * r.transform.n_cols + col;
            if (r.is_nodata(r.values[i])) continue;
            Point p = agbd::grid::pixel_center(r.transform, row, col);
            if (projection) p = agbd::geom::albers_forward(p, *projection);
            const Zone* best = nullptr;
            for (const Zone& z : zones.zones)
                if (agbd::geom::point_in_zone(p, z) && (!best || z.id < best->id)) best = &z;
            if (best) assignment[i] = static_cast<int>(slot.at(best->id));
        }

    std::vector<long double> sums(out.size(), 0.0L);
    for (std::size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] >= 0) {
            sums[assignment[i]] += r.values[i];
            ++out[assignment[i]].n_pixels;
        }
    for (std::size_t s = 0; s < out.size(); ++s) {
        out[s].sum = static_cast<double>(sums[s]);
        if (out[s].n_pixels >= 1) out[s].mean = out[s].sum / static_cast<double>(out[s].n_pixels);
    }
    std::vector<long double> devs(out.size(), 0.0L);
    for (std::size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] >= 0) {
            const long double d = r.values[i] - out[assignment[i]].mean;
            devs[assignment[i]] += d * d;
        }
    for (std::size_t s = 0; s < out.size(); ++s)
        if (out[s].n_pixels >= 2)
            out[s].var_of_mean = static_cast<double>(
                devs[s] / (out[s].n_pixels - 1) / out[s].n_pixels);
    return out;
}

struct Instance {
    Raster raster;
    ZoneSet zones;
    std::optional<AlbersSpec> projection;
};

Instance random_instance(std::uint64_t seed, bool integer_values, bool geographic) {
    const Rng rng(seed, Rng::hash_string("test.zonal_instance"));
    Instance inst;
    const std::size_t rows = 20 + static_cast<std::size_t>(rng.below(41, 0));
    const std::size_t cols = 20 + static_cast<std::size_t>(rng.below(41, 1));

    double x_ll = 0.0, y_ll = 0.0, cell = 30.0;
    AlbersSpec proj;
    if (geographic) {
        inst.projection = proj;
        inst.raster.crs = Crs::geographic;
        x_ll = -95.0;
        y_ll = 38.0;
        cell = 0.0005;
    }
    inst.raster.transform = {x_ll, y_ll, cell, rows, cols};
    inst.raster.values.resize(rows * cols);
    for (std::size_t i = 0; i < inst.raster.values.size(); ++i) {
        if (rng.uniform(i, 2) < 0.15) inst.raster.values[i] = inst.raster.nodata;
        else if (integer_values)
            inst.raster.values[i] = static_cast<double>(rng.below(400, i));
        else
            inst.raster.values[i] = 400.0 * rng.uniform(i, 3);
    }

    // planar extent covered by the zones, in the raster's target plane
    Point lo{x_ll, y_ll};
    Point hi{x_ll + cell * cols, y_ll + cell * rows};
    if (geographic) {
        lo = agbd::geom::albers_forward(lo, proj);
        hi = agbd::geom::albers_forward(hi, proj);
    }
    const double w = hi.x - lo.x, h = hi.y - lo.y;
    const std::size_t n_zones = 3 + static_cast<std::size_t>(rng.below(6, 4));
    for (std::size_t zi = 0; zi < n_zones; ++zi) {
        // overlapping random rectangles, some beyond the raster edge
        const double x0 = lo.x - 0.2 * w + 1.0 * w * rng.uniform(1000 + zi, 0);
        const double y0 = lo.y - 0.2 * h + 1.0 * h * rng.uniform(1000 + zi, 1);
        const double x1 = x0 + (0.15 + 0.45 * rng.uniform(1000 + zi, 2)) * w;
        const double y1 = y0 + (0.15 + 0.45 * rng.uniform(1000 + zi, 3)) * h;
        inst.zones.zones.push_back(
            square_zone("z" + std::to_string((zi * 7) % n_zones), x0, y0, x1, y1));
    }
    // ids must be unique; rewrite with distinct suffixes but unordered
    for (std::size_t zi = 0; zi < inst.zones.zones.size(); ++zi)
        inst.zones.zones[zi].id = "z" + std::to_string((zi * 7 + 3) % 100);
    return inst;
}

const std::string grid_2x2 =
    "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n"
    "1 2\n3 4\n";

Raster parse(const std::string& text) {
    std::istringstream in(text);
    return agbd::grid::read_ascii_grid(in);
}

}  // namespace

TEST_CASE("two-by-two hand case splits by column") {
    const Raster r = parse(grid_2x2);
    ZoneSet zones;
    zones.zones.push_back(square_zone("A", 0, 0, 10, 20));
    zones.zones.push_back(square_zone("B", 10, 0, 20, 20));
    const auto stats = zonal_stats(r, zones, std::nullopt);
    REQUIRE(stats.size() == 2);
    CHECK(stats[0].zone_id == "A");
    CHECK(stats[0].n_pixels == 2);
    CHECK(stats[0].sum == 4.0);
    CHECK(stats[0].mean == 2.0);
    CHECK(stats[0].var_of_mean == 1.0);  // s2 = 2, n = 2
    CHECK(stats[1].zone_id == "B");
    CHECK(stats[1].n_pixels == 2);
    CHECK(stats[1].sum == 6.0);
    CHECK(stats[1].mean == 3.0);
    CHECK(stats[1].var_of_mean == 1.0);
}

TEST_CASE("nodata pixels never contribute") {
    Raster r = parse(grid_2x2);
    r.values[2] = r.nodata;  // the value 3, in zone A
    ZoneSet zones;
    zones.zones.push_back(square_zone("A", 0, 0, 10, 20));
    zones.zones.push_back(square_zone("B", 10, 0, 20, 20));
    const auto stats = zonal_stats(r, zones, std::nullopt);
    CHECK(stats[0].n_pixels == 1);
    CHECK(stats[0].sum == 1.0);
    CHECK(stats[0].mean == 1.0);
    CHECK(std::isnan(stats[0].var_of_mean));  // undefined below two pixels
    CHECK(stats[1].n_pixels == 2);
}

TEST_CASE("zones without pixels report empty statistics") {
    const Raster r = parse(grid_2x2);
    ZoneSet zones;
    zones.zones.push_back(square_zone("far", 500, 500, 600, 600));
    const auto stats = zonal_stats(r, zones, std::nullopt);
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].n_pixels == 0);
    CHECK(stats[0].sum == 0.0);
    CHECK(std::isnan(stats[0].mean));
    CHECK(std::isnan(stats[0].var_of_mean));
}

TEST_CASE("statistics match a brute-force recomputation") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const bool integer_values = seed % 2 == 0;
        const bool geographic = seed % 3 == 0;
        const Instance inst = random_instance(seed, integer_values, geographic);
        const auto fast = zonal_stats(inst.raster, inst.zones, inst.projection);
        const auto slow = brute_stats(inst.raster, inst.zones, inst.projection);
        REQUIRE(fast.size() == slow.size());
        std::size_t assigned = 0;
        for (std::size_t s = 0; s < fast.size(); ++s) {
            INFO("seed " << seed << " zone " << slow[s].zone_id);
            REQUIRE(fast[s].zone_id == slow[s].zone_id);
            REQUIRE(fast[s].n_pixels == slow[s].n_pixels);
            assigned += fast[s].n_pixels;
            if (integer_values) {
                CHECK(fast[s].sum == slow[s].sum);
                if (fast[s].n_pixels > 0) CHECK(fast[s].mean == slow[s].mean);
            } else {
                CHECK_THAT(fast[s].sum,
                           Catch::Matchers::WithinRel(slow[s].sum, 1e-9) ||
                               Catch::Matchers::WithinAbs(slow[s].sum, 1e-9));
                if (fast[s].n_pixels > 0)
                    CHECK_THAT(fast[s].mean, Catch::Matchers::WithinRel(slow[s].mean, 1e-9));
            }
            if (fast[s].n_pixels >= 2)
                CHECK_THAT(fast[s].var_of_mean,
                           Catch::Matchers::WithinRel(slow[s].var_of_mean, 1e-9) ||
                               Catch::Matchers::WithinAbs(slow[s].var_of_mean, 1e-12));
            else
                CHECK(std::isnan(fast[s].var_of_mean));
        }
        // conservation: assigned plus outside-all-zones equals valid pixels
        std::size_t outside = 0;
        const agbd::geom::ZoneIndex index(inst.zones);
        for (std::size_t row = 0; row < inst.raster.transform.n_rows; ++row)
            for (std::size_t col = 0; col < inst.raster.transform.n_cols; ++col) {
                const double v = inst.raster.at(row, col);
                if (inst.raster.is_nodata(v)) continue;
                Point p = agbd::grid::pixel_center(inst.raster.transform, row, col);
                if (inst.projection) p = agbd::geom::albers_forward(p, *inst.projection);
                if (!index.assign(p)) ++outside;
            }
        const std::size_t valid = inst.raster.values.size() - inst.raster.nodata_count();
        CHECK(assigned + outside == valid);
    }
}

TEST_CASE("results are identical for any worker count") {
    const Instance inst = random_instance(99, false, false);
    const auto one = zonal_stats(inst.raster, inst.zones, inst.projection, 1);
    const auto four = zonal_stats(inst.raster, inst.zones, inst.projection, 4);
    const auto eight = zonal_stats(inst.raster, inst.zones, inst.projection, 8);
    REQUIRE(one.size() == four.size());
    REQUIRE(one.size() == eight.size());
    for (std::size_t s = 0; s < one.size(); ++s) {
        for (const auto* other : {&four, &eight}) {
            CHECK((*other)[s].zone_id == one[s].zone_id);
            CHECK((*other)[s].n_pixels == one[s].n_pixels);
            CHECK(same_bits((*other)[s].sum, one[s].sum));
            CHECK(same_bits((*other)[s].mean, one[s].mean));
            CHECK(same_bits((*other)[s].var_of_mean, one[s].var_of_mean));
        }
    }
}

TEST_CASE("translating raster and zones together changes nothing") {
    const Instance inst = random_instance(7, true, false);
    Instance moved = inst;
    const double dx = 1.25e6, dy = -3.5e5;
    moved.raster.transform.x_ll += dx;
    moved.raster.transform.y_ll += dy;
    for (Zone& z : moved.zones.zones)
        for (Polygon& part : z.parts)
            for (Point& p : part.outer) {
                p.x += dx;
                p.y += dy;
            }
    const auto base = zonal_stats(inst.raster, inst.zones, std::nullopt);
    const auto shifted = zonal_stats(moved.raster, moved.zones, std::nullopt);
    REQUIRE(base.size() == shifted.size());
    for (std::size_t s = 0; s < base.size(); ++s) {
        CHECK(shifted[s].n_pixels == base[s].n_pixels);
        CHECK(shifted[s].sum == base[s].sum);
    }
}

TEST_CASE("unit keying pools zones that share a unit") {
    const Raster r = parse(grid_2x2);
    ZoneSet zones;
    zones.zones.push_back(square_zone("A", 0, 0, 10, 20));
    zones.zones.push_back(square_zone("B", 10, 0, 20, 20));
    zones.zones[0].unit_id = "county";
    zones.zones[1].unit_id = "county";
    const auto stats = zonal_stats_by_unit(r, zones, std::nullopt);
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].zone_id == "county");
    CHECK(stats[0].n_pixels == 4);
    CHECK(stats[0].sum == 10.0);
    CHECK(stats[0].mean == 2.5);
}

TEST_CASE("crs combinations are validated") {
    const Raster planar = parse(grid_2x2);
    ZoneSet zones;
    zones.zones.push_back(square_zone("A", 0, 0, 10, 20));
    REQUIRE_THROWS_WITH(zonal_stats(planar, zones, AlbersSpec{}),
                        Catch::Matchers::ContainsSubstring("must not specify a projection"));
    Raster geographic = planar;
    geographic.crs = Crs::geographic;
    REQUIRE_THROWS_WITH(zonal_stats(geographic, zones, std::nullopt),
                        Catch::Matchers::ContainsSubstring("requires a projection"));
    ZoneSet geo_zones = zones;
    geo_zones.crs = Crs::geographic;
    REQUIRE_THROWS_WITH(zonal_stats(planar, geo_zones, std::nullopt),
                        Catch::Matchers::ContainsSubstring("zone set must be planar"));
}

TEST_CASE("pixel count threshold matches hand arithmetic") {
    const FilterThreshold th = pixel_count_threshold({100, 100, 100, 40});
    CHECK(th.n_bar == 85.0);
    CHECK(th.sigma_n == 30.0);  // sum of squared deviations 2700, s2 = 900
    CHECK(th.t_n == 55.0);

    const FilterThreshold pop = pixel_count_threshold({100, 100, 100, 40}, true);
    CHECK_THAT(pop.sigma_n, Catch::Matchers::WithinRel(std::sqrt(675.0), 1e-12));

    const FilterThreshold single = pixel_count_threshold({7});
    CHECK(single.n_bar == 7.0);
    CHECK(single.sigma_n == 0.0);
    CHECK(single.t_n == 7.0);

    REQUIRE_THROWS_WITH(pixel_count_threshold({}),
                        Catch::Matchers::ContainsSubstring("no pixel counts"));
}

TEST_CASE("threshold filtering excludes strictly-below counts") {
    std::vector<ZonalStat> stats(4);
    const std::size_t counts[4] = {100, 100, 100, 40};
    for (std::size_t i = 0; i < 4; ++i) {
        stats[i].zone_id = "z" + std::to_string(i);
        stats[i].n_pixels = counts[i];
    }
    const FilterResult res = filter_zones(stats, pixel_count_threshold({100, 100, 100, 40}));
    REQUIRE(res.retained.size() == 3);
    REQUIRE(res.excluded_ids == std::vector<std::string>{"z3"});

    // a count exactly at the threshold is retained
    FilterThreshold at{55.0, 0, 0};
    stats[3].n_pixels = 55;
    CHECK(filter_zones(stats, at).retained.size() == 4);
    stats[3].n_pixels = 54;
    CHECK(filter_zones(stats, at).retained.size() == 3);
}

TEST_CASE("raising the threshold never adds a retained zone") {
    const Rng rng(55, Rng::hash_string("test.filter_monotone"));
    for (std::size_t trial = 0; trial < 100; ++trial) {
        std::vector<ZonalStat> stats(1 + rng.below(30, trial, 0));
        for (std::size_t i = 0; i < stats.size(); ++i) {
            stats[i].zone_id = "z" + std::to_string(i);
            stats[i].n_pixels = rng.below(5000, trial, 10 + i);
        }
        const double t1 = 5000.0 * rng.uniform(trial, 1);
        const double t2 = t1 + 2500.0 * rng.uniform(trial, 2);
        const FilterResult lo = filter_zones(stats, {t1, 0, 0});
        const FilterResult hi = filter_zones(stats, {t2, 0, 0});
        std::set<std::string> lo_ids, hi_ids;
        for (const auto& s : lo.retained) lo_ids.insert(s.zone_id);
        for (const auto& s : hi.retained) hi_ids.insert(s.zone_id);
        for (const auto& id : hi_ids) CHECK(lo_ids.count(id) == 1);
        CHECK(lo.retained.size() + lo.excluded_ids.size() == stats.size());
    }
}
