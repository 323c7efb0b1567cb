#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "agbd/design.hpp"
#include "agbd/error.hpp"
#include "agbd/geom.hpp"
#include "agbd/grid.hpp"
#include "agbd/parallel.hpp"
#include "agbd/rng.hpp"
#include "agbd/zonal.hpp"

namespace agbd::synth {

enum class FieldModel { constant, gradient, lumpy };

struct SynthConfig {
    std::uint64_t seed = 42;
    std::size_t n_rows = 100;
    std::size_t n_cols = 100;
    double cell = 30.0;  // meters
    double x_ll = 0.0;
    double y_ll = 0.0;

    FieldModel model = FieldModel::lumpy;
    double base = 40.0;               // Mg/ha floor of the field
    double gradient_x = 0.0;          // Mg/ha per meter, gradient model
    double gradient_y = 0.0;
    std::size_t bump_count = 40;      // lumpy model
    double bump_amp_min = 20.0;
    double bump_amp_max = 120.0;
    double bump_width_min = 500.0;    // meters
    double bump_width_max = 3000.0;

    double pixel_noise_sd = 0.0;      // Mg/ha
    double plot_density = 1.0 / 2400.0;  // plots per hectare
    double plot_noise_sd = 0.0;
    int measure_year = 2020;
    double stratum_threshold = 10.0;  // truth below this is non-forest

    double fuzz_min = 800.0;          // meters
    double fuzz_max = 1500.0;
    double swap_fraction = 0.2;
};

struct Bump {
    double cx = 0.0, cy = 0.0, amp = 0.0, width = 1.0;
};

// Closed-form landscape truth, evaluable at any planar point.
class TruthField {
public:
    TruthField(double base, double gx, double gy, double x0, double y0, std::vector<Bump> bumps)
        : base_(base), gx_(gx), gy_(gy), x0_(x0), y0_(y0), bumps_(std::move(bumps)) {}

    double value(double x, double y) const {
        double v = base_ + gx_ * (x - x0_) + gy_ * (y - y0_);
        for (const Bump& b : bumps_) {
            const double dx = x - b.cx, dy = y - b.cy;
            v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.width * b.width));
        }
        return v < 0.0 ? 0.0 : v;
    }

    const std::vector<Bump>& bumps() const { return bumps_; }

private:
    double base_, gx_, gy_, x0_, y0_;
    std::vector<Bump> bumps_;
};

namespace detail {

inline void check_config(const SynthConfig& cfg) {
    if (cfg.n_rows < 1 || cfg.n_cols < 1) throw Error("synth", "grid must be at least 1x1");
    if (!(cfg.cell > 0.0)) throw Error("synth", "cell size must be > 0");
    if (cfg.pixel_noise_sd < 0.0 || cfg.plot_noise_sd < 0.0)
        throw Error("synth", "noise sd must be >= 0");
    if (cfg.swap_fraction < 0.0 || cfg.swap_fraction > 1.0)
        throw Error("synth", "swap fraction outside [0, 1]");
    if (cfg.fuzz_min > cfg.fuzz_max) throw Error("synth", "fuzz radius range inverted");
}

inline TruthField make_truth(const SynthConfig& cfg) {
    std::vector<Bump> bumps;
    if (cfg.model == FieldModel::lumpy) {
        const double width_x = static_cast<double>(cfg.n_cols) * cfg.cell;
        const double width_y = static_cast<double>(cfg.n_rows) * cfg.cell;
        const Rng rng(cfg.seed, Rng::hash_string("synth.bumps"));
        bumps.reserve(cfg.bump_count);
        for (std::size_t k = 0; k < cfg.bump_count; ++k) {
            Bump b;
            b.cx = cfg.x_ll + rng.uniform(k, 0) * width_x;
            b.cy = cfg.y_ll + rng.uniform(k, 1) * width_y;
            b.amp = rng.uniform_range(cfg.bump_amp_min, cfg.bump_amp_max, k, 2);
            b.width = rng.uniform_range(cfg.bump_width_min, cfg.bump_width_max, k, 3);
            bumps.push_back(b);
        }
    }
    const double gx = cfg.model == FieldModel::gradient ? cfg.gradient_x : 0.0;
    const double gy = cfg.model == FieldModel::gradient ? cfg.gradient_y : 0.0;
    return TruthField(cfg.base, gx, gy, cfg.x_ll, cfg.y_ll, std::move(bumps));
}

}  // namespace detail

// Truth plus i.i.d. pixel noise, clamped at 0. Bitwise-deterministic per
// seed, independent of worker count.
inline std::pair<grid::Raster, TruthField> generate_field(const SynthConfig& cfg,
                                                          unsigned workers = 0) {
    detail::check_config(cfg);
    TruthField truth = detail::make_truth(cfg);

    grid::Raster r;
    r.crs = Crs::planar;
    r.transform = {cfg.x_ll, cfg.y_ll, cfg.cell, cfg.n_rows, cfg.n_cols};
    r.values.resize(cfg.n_rows * cfg.n_cols);
    const Rng noise(cfg.seed, Rng::hash_string("synth.field_noise"));
    const bool noisy = cfg.pixel_noise_sd > 0.0;
    parallel_chunks(r.values.size(), 8192, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const geom::Point c =
                grid::pixel_center(r.transform, i / cfg.n_cols, i % cfg.n_cols);
            double v = truth.value(c.x, c.y);
            if (noisy) v += cfg.pixel_noise_sd * noise.normal(i);
            r.values[i] = v < 0.0 ? 0.0 : v;
        }
    });
    return {std::move(r), std::move(truth)};
}

// Uniform plot locations over the grid extent; Poisson-distributed count at
// plot_density per hectare. Records carry geographic coordinates obtained by
// inverting the projection; unit_id is left empty for later assignment.
inline std::vector<design::PlotRecord> sample_plots(const TruthField& truth,
                                                    const SynthConfig& cfg,
                                                    const geom::AlbersSpec& projection) {
    detail::check_config(cfg);
    if (!(cfg.plot_density > 0.0)) throw Error("synth", "plot density must be > 0");
    const double width_x = static_cast<double>(cfg.n_cols) * cfg.cell;
    const double width_y = static_cast<double>(cfg.n_rows) * cfg.cell;
    const double area_ha = width_x * width_y / 1e4;
    const double lambda = cfg.plot_density * area_ha;
    if (lambda > 5e7) throw Error("synth", "plot density implies more than 5e7 plots");

    const Rng counter(cfg.seed, Rng::hash_string("synth.plot_count"));
    const std::uint64_t n_plots = counter.poisson(lambda, 0);

    const Rng rng(cfg.seed, Rng::hash_string("synth.plots"));
    std::vector<design::PlotRecord> out;
    out.reserve(n_plots);
    for (std::uint64_t i = 0; i < n_plots; ++i) {
        const double x = cfg.x_ll + rng.uniform(i, 0) * width_x;
        const double y = cfg.y_ll + rng.uniform(i, 1) * width_y;
        const double t = truth.value(x, y);
        double v = t;
        if (cfg.plot_noise_sd > 0.0) v += cfg.plot_noise_sd * rng.normal(i, 2);
        const geom::Point geo = geom::albers_inverse({x, y}, projection);
        design::PlotRecord p;
        p.plot_id = "plot_" + std::to_string(i);
        p.lon = geo.x;
        p.lat = geo.y;
        p.measure_year = cfg.measure_year;
        p.agbd = v < 0.0 ? 0.0 : v;
        p.stratum_id = t < cfg.stratum_threshold ? "nonforest" : "forest";
        out.push_back(std::move(p));
    }
    return out;
}

// Per-unit area weights of the two strata, judged by the truth value at
// pixel centers (the same membership rule the zonal kernel uses).
inline design::WeightTable stratum_weights(const TruthField& truth, const SynthConfig& cfg,
                                           const geom::ZoneSet& zones) {
    const grid::GridTransform t{cfg.x_ll, cfg.y_ll, cfg.cell, cfg.n_rows, cfg.n_cols};
    const geom::ZoneIndex index(zones);
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // unit -> (forest, total)
    for (std::size_t i = 0; i < cfg.n_rows * cfg.n_cols; ++i) {
        const geom::Point c = grid::pixel_center(t, i / cfg.n_cols, i % cfg.n_cols);
        const auto zi = index.assign(c);
        if (!zi) continue;
        const geom::Zone& z = zones.zones[*zi];
        auto& [forest, total] = counts[z.unit_id.empty() ? z.id : z.unit_id];
        if (truth.value(c.x, c.y) >= cfg.stratum_threshold) ++forest;
        ++total;
    }
    design::WeightTable out;
    for (const auto& [unit, fc] : counts) {
        const double wf =
            static_cast<double>(fc.first) / static_cast<double>(fc.second);
        out[unit]["forest"] = wf;
        out[unit]["nonforest"] = 1.0 - wf;
    }
    return out;
}

// FIA-style privacy perturbation. Fuzzing displaces each plot in the
// projected plane by a uniform angle and a length uniform in
// [fuzz_min, fuzz_max]; a zero-length range skips fuzzing entirely so the
// records stay bitwise identical. Swapping then exchanges coordinates
// between floor(swap_fraction*n/2) disjoint plot pairs within each unit.
inline std::vector<design::PlotRecord> fuzz_and_swap(const std::vector<design::PlotRecord>& plots,
                                                     const SynthConfig& cfg,
                                                     const geom::AlbersSpec& projection) {
    detail::check_config(cfg);
    std::vector<design::PlotRecord> out = plots;

    if (cfg.fuzz_max > 0.0) {
        const Rng rng(cfg.seed, Rng::hash_string("synth.fuzz"));
        for (std::size_t i = 0; i < out.size(); ++i) {
            const geom::Point planar = geom::albers_forward({out[i].lon, out[i].lat}, projection);
            const double angle = rng.uniform_range(0.0, 6.283185307179586, i, 0);
            const double len = rng.uniform_range(cfg.fuzz_min, cfg.fuzz_max, i, 1);
            const geom::Point moved{planar.x + len * std::cos(angle),
                                    planar.y + len * std::sin(angle)};
            const geom::Point geo = geom::albers_inverse(moved, projection);
            out[i].lon = geo.x;
            out[i].lat = geo.y;
        }
    }

    if (cfg.swap_fraction > 0.0) {
        std::map<std::string, std::vector<std::size_t>> by_unit;
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (out[i].unit_id.empty())
                throw Error("synth", "plot '" + out[i].plot_id + "' has no unit_id; swapping needs units");
            by_unit[out[i].unit_id].push_back(i);
        }
        for (const auto& [unit, members] : by_unit) {
            const std::size_t n_pairs = static_cast<std::size_t>(
                std::floor(cfg.swap_fraction * static_cast<double>(members.size()) / 2.0));
            if (n_pairs == 0) continue;
            std::vector<std::size_t> order = members;
            const Rng rng(cfg.seed, Rng::hash_string("synth.swap:" + unit));
            for (std::size_t j = order.size() - 1; j > 0; --j)
                std::swap(order[j], order[rng.below(j + 1, j)]);
            for (std::size_t k = 0; k < n_pairs; ++k) {
                design::PlotRecord& a = out[order[2 * k]];
                design::PlotRecord& b = out[order[2 * k + 1]];
                std::swap(a.lon, b.lon);
                std::swap(a.lat, b.lat);
            }
        }
    }
    return out;
}

// Fraction of plots whose containing zone changed between two versions of
// the same plot list (out-of-all-zones counts as its own bucket).
inline double crossing_fraction(const std::vector<design::PlotRecord>& before,
                                const std::vector<design::PlotRecord>& after,
                                const geom::ZoneSet& zones, const geom::AlbersSpec& projection) {
    if (before.size() != after.size())
        throw Error("synth", "plot lists differ in length");
    if (before.empty()) return 0.0;
    const geom::ZoneIndex index(zones);
    auto zone_of = [&](const design::PlotRecord& p) -> long {
        const auto zi = index.assign(geom::albers_forward({p.lon, p.lat}, projection));
        return zi ? static_cast<long>(*zi) : -1;
    };
    std::size_t crossed = 0;
    for (std::size_t i = 0; i < before.size(); ++i)
        if (zone_of(before[i]) != zone_of(after[i])) ++crossed;
    return static_cast<double>(crossed) / static_cast<double>(before.size());
}

// Exact pixel-center average of the truth per zone: the closed-form field
// rendered to the grid and pushed through the zonal kernel, so membership
// and accumulation order match the real pipeline by construction.
inline std::vector<zonal::ZonalStat> true_zone_means(const TruthField& truth,
                                                     const grid::GridTransform& transform,
                                                     const geom::ZoneSet& zones) {
    grid::Raster r;
    r.crs = Crs::planar;
    r.transform = transform;
    r.values.resize(transform.n_rows * transform.n_cols);
    for (std::size_t i = 0; i < r.values.size(); ++i) {
        const geom::Point c = grid::pixel_center(transform, i / transform.n_cols, i % transform.n_cols);
        r.values[i] = truth.value(c.x, c.y);
    }
    return zonal::zonal_stats(r, zones, std::nullopt);
}

}  // namespace agbd::synth
