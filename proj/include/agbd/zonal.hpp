#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "agbd/error.hpp"
#include "agbd/geom.hpp"
#include "agbd/grid.hpp"
#include "agbd/numeric.hpp"
#include "agbd/parallel.hpp"

namespace agbd::zonal {

struct ZonalStat {
    std::string zone_id;
    std::size_t n_pixels = 0;
    double mean = std::numeric_limits<double>::quiet_NaN();
    double var_of_mean = std::numeric_limits<double>::quiet_NaN();
    double sum = 0.0;
};

struct FilterThreshold {
    double t_n = 0.0;
    double n_bar = 0.0;
    double sigma_n = 0.0;
};

struct FilterResult {
    std::vector<ZonalStat> retained;
    std::vector<std::string> excluded_ids;
};

namespace detail {

// Stage 1: per-pixel zone assignment (parallel, writes disjoint slots).
// Stages 2 and 3: serial row-major compensated accumulation, so the result
// never depends on the worker schedule.
inline std::vector<std::int32_t> assign_pixels(const grid::Raster& r, const geom::ZoneIndex& index,
                                               const std::optional<geom::AlbersSpec>& projection,
                                               unsigned workers) {
    const std::size_t total = r.size();
    std::vector<std::int32_t> assignment(total, -1);
    parallel_chunks(total, 8192, workers, [&](std::size_t begin, std::size_t end) {
        const std::size_t n_cols = r.transform.n_cols;
        for (std::size_t i = begin; i < end; ++i) {
            if (r.is_nodata(r.values[i])) continue;
            geom::Point p = grid::pixel_center(r.transform, i / n_cols, i % n_cols);
            if (projection) p = geom::albers_forward(p, *projection);
            const auto zi = index.assign(p);
            if (zi) assignment[i] = static_cast<std::int32_t>(*zi);
        }
    });
    return assignment;
}

}  // namespace detail

// Per-key pixel statistics: a pixel belongs to the zone containing its
// (optionally projected) center, nodata excluded. `key_of_zone` maps a zone
// index to the output key (zone id, or unit id for grouped estimation).
// Output rows follow first-appearance order of keys over the zone list.
template <typename KeyFn>
std::vector<ZonalStat> zonal_stats_keyed(const grid::Raster& r, const geom::ZoneSet& zones,
                                         const std::optional<geom::AlbersSpec>& projection,
                                         KeyFn&& key_of_zone, unsigned workers = 0) {
    if (zones.crs != Crs::planar) throw Error("zonal", "zone set must be planar");
    if (r.crs == Crs::geographic && !projection)
        throw Error("zonal", "geographic raster requires a projection");
    if (r.crs == Crs::planar && projection)
        throw Error("zonal", "planar raster must not specify a projection");

    std::vector<ZonalStat> out;
    std::vector<std::size_t> slot_of_zone(zones.zones.size());
    std::map<std::string, std::size_t> slot_by_key;
    for (std::size_t zi = 0; zi < zones.zones.size(); ++zi) {
        std::string key = key_of_zone(zones.zones[zi]);
        auto [it, fresh] = slot_by_key.try_emplace(std::move(key), out.size());
        if (fresh) {
            out.emplace_back();
            out.back().zone_id = it->first;
        }
        slot_of_zone[zi] = it->second;
    }

    const geom::ZoneIndex index(zones);
    const std::vector<std::int32_t> assignment =
        detail::assign_pixels(r, index, projection, workers);

    std::vector<NeumaierSum> sums(out.size());
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] < 0) continue;
        const std::size_t slot = slot_of_zone[static_cast<std::size_t>(assignment[i])];
        sums[slot].add(r.values[i]);
        ++out[slot].n_pixels;
    }
    for (std::size_t s = 0; s < out.size(); ++s) {
        out[s].sum = sums[s].value();
        if (out[s].n_pixels >= 1) out[s].mean = out[s].sum / static_cast<double>(out[s].n_pixels);
    }

    std::vector<NeumaierSum> devs(out.size());
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i] < 0) continue;
        const std::size_t slot = slot_of_zone[static_cast<std::size_t>(assignment[i])];
        const double d = r.values[i] - out[slot].mean;
        devs[slot].add(d * d);
    }
    for (std::size_t s = 0; s < out.size(); ++s) {
        const std::size_t n = out[s].n_pixels;
        if (n >= 2) {
            const double s2 = std::max(0.0, devs[s].value() / static_cast<double>(n - 1));
            out[s].var_of_mean = s2 / static_cast<double>(n);
        }
    }
    return out;
}

inline std::vector<ZonalStat> zonal_stats(const grid::Raster& r, const geom::ZoneSet& zones,
                                          const std::optional<geom::AlbersSpec>& projection,
                                          unsigned workers = 0) {
    return zonal_stats_keyed(r, zones, projection,
                             [](const geom::Zone& z) { return z.id; }, workers);
}

// Same kernel keyed by unit_id (zone_id when absent), for county-style
// zones grouped into estimation units.
inline std::vector<ZonalStat> zonal_stats_by_unit(const grid::Raster& r,
                                                  const geom::ZoneSet& zones,
                                                  const std::optional<geom::AlbersSpec>& projection,
                                                  unsigned workers = 0) {
    return zonal_stats_keyed(
        r, zones, projection,
        [](const geom::Zone& z) { return z.unit_id.empty() ? z.id : z.unit_id; }, workers);
}

// T_n = mean(counts) - sd(counts). Sample sd (n-1 denominator) by default;
// population sd behind the flag. A single count has sd 0.
inline FilterThreshold pixel_count_threshold(const std::vector<std::size_t>& counts,
                                             bool population_sigma = false) {
    if (counts.empty()) throw Error("zonal", "no pixel counts to derive a threshold from");
    NeumaierSum sum;
    for (std::size_t c : counts) sum.add(static_cast<double>(c));
    FilterThreshold th;
    th.n_bar = sum.value() / static_cast<double>(counts.size());
    if (counts.size() == 1) {
        th.sigma_n = 0.0;
    } else {
        NeumaierSum ss;
        for (std::size_t c : counts) {
            const double d = static_cast<double>(c) - th.n_bar;
            ss.add(d * d);
        }
        const double denom =
            static_cast<double>(population_sigma ? counts.size() : counts.size() - 1);
        th.sigma_n = std::sqrt(std::max(0.0, ss.value() / denom));
    }
    th.t_n = th.n_bar - th.sigma_n;
    return th;
}

// Zones with pixel counts strictly below t_n are excluded.
inline FilterResult filter_zones(const std::vector<ZonalStat>& stats,
                                 const FilterThreshold& threshold) {
    FilterResult out;
    for (const ZonalStat& s : stats) {
        if (static_cast<double>(s.n_pixels) < threshold.t_n) out.excluded_ids.push_back(s.zone_id);
        else out.retained.push_back(s);
    }
    return out;
}

}  // namespace agbd::zonal
