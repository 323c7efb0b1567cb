#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "agbd/agreement.hpp"
#include "agbd/csv.hpp"
#include "agbd/design.hpp"
#include "agbd/error.hpp"
#include "agbd/geom.hpp"
#include "agbd/grid.hpp"
#include "agbd/numeric.hpp"
#include "agbd/parallel.hpp"
#include "agbd/rng.hpp"
#include "agbd/synth.hpp"
#include "agbd/zonal.hpp"

#include "json.hpp"

namespace agbd::pipeline {

enum class FilterMode { auto_threshold, fixed, off };
enum class PlotAssignment { geometry, attribute };

struct RunConfig {
    std::string raster;
    std::string inundation;
    std::string zones;
    std::string plots;
    std::string weights;
    std::string pred_var_override;
    std::string output_dir;

    std::string raster_crs = "planar";
    geom::AlbersSpec projection;
    double mask_threshold = 0.5;
    FilterMode filter_mode = FilterMode::auto_threshold;
    double filter_fixed_t = 0.0;
    std::string filter_group = "none";    // none | unit_id
    std::string filter_sigma = "sample";  // sample | population
    std::string variance_estimator = "simple";
    PlotAssignment plot_assignment = PlotAssignment::geometry;
    bool has_year_window = false;
    int year_min = 1900;
    int year_max = 2100;
    std::size_t window = 10;
    double bin_width = 50.0;
    double agreement_c = 2.0;
    std::uint64_t seed = 0;
};

namespace detail {

// Edit distance with adjacent transpositions, for near-miss key hints.
inline std::size_t edit_distance(const std::string& a, const std::string& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
    for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t sub = a[i - 1] == b[j - 1] ? 0 : 1;
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + sub});
            if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1])
                d[i][j] = std::min(d[i][j], d[i - 2][j - 2] + 1);
        }
    }
    return d[n][m];
}

inline const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys = {
        "raster",          "inundation",      "zones",
        "plots",           "weights",         "pred_var_override",
        "output_dir",      "raster_crs",      "proj_phi1",
        "proj_phi2",       "proj_phi0",       "proj_lambda0",
        "proj_radius",     "proj_false_easting", "proj_false_northing",
        "mask_threshold",  "filter_mode",     "filter_fixed_t",
        "filter_group",    "filter_sigma",    "variance_estimator",
        "plot_assignment", "year_min",        "year_max",
        "window",          "bin_width",       "agreement_c",
        "seed"};
    return keys;
}

inline std::string require_string(const nlohmann::json& doc, const std::string& key) {
    if (!doc.at(key).is_string()) throw Error("cli", "key '" + key + "': expected string");
    return doc.at(key).get<std::string>();
}

inline double require_number(const nlohmann::json& doc, const std::string& key) {
    if (!doc.at(key).is_number()) throw Error("cli", "key '" + key + "': expected number");
    return doc.at(key).get<double>();
}

inline long require_integer(const nlohmann::json& doc, const std::string& key) {
    if (!doc.at(key).is_number_integer()) throw Error("cli", "key '" + key + "': expected integer");
    return doc.at(key).get<long>();
}

inline std::string resolve_path(const std::string& p, const std::string& base_dir) {
    namespace fs = std::filesystem;
    if (p.empty() || base_dir.empty()) return p;
    fs::path path(p);
    if (path.is_absolute()) return p;
    return (fs::path(base_dir) / path).lexically_normal().string();
}

}  // namespace detail

// Strict JSON config: unknown keys are rejected (with a nearest-key hint),
// defaults fill the rest. Relative paths resolve against base_dir.
inline RunConfig parse_config(std::istream& in, const std::string& base_dir = "") {
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw Error("cli", "config is not valid JSON");
    if (!doc.is_object()) throw Error("cli", "config must be a JSON object");

    for (const auto& [key, value] : doc.items()) {
        const auto& known = detail::known_config_keys();
        if (std::find(known.begin(), known.end(), key) != known.end()) continue;
        std::string msg = "unknown key '" + key + "'";
        std::size_t best = 3;
        std::string suggestion;
        for (const std::string& k : known) {
            const std::size_t d = detail::edit_distance(key, k);
            if (d < best) {
                best = d;
                suggestion = k;
            }
        }
        if (!suggestion.empty()) msg += "; did you mean '" + suggestion + "'?";
        throw Error("cli", msg);
    }
    for (const char* key : {"raster", "zones", "plots", "output_dir"})
        if (!doc.contains(key)) throw Error("cli", std::string("missing required key '") + key + "'");

    RunConfig cfg;
    cfg.raster = detail::resolve_path(detail::require_string(doc, "raster"), base_dir);
    cfg.zones = detail::resolve_path(detail::require_string(doc, "zones"), base_dir);
    cfg.plots = detail::resolve_path(detail::require_string(doc, "plots"), base_dir);
    cfg.output_dir = detail::resolve_path(detail::require_string(doc, "output_dir"), base_dir);
    if (doc.contains("inundation"))
        cfg.inundation = detail::resolve_path(detail::require_string(doc, "inundation"), base_dir);
    if (doc.contains("weights"))
        cfg.weights = detail::resolve_path(detail::require_string(doc, "weights"), base_dir);
    if (doc.contains("pred_var_override"))
        cfg.pred_var_override =
            detail::resolve_path(detail::require_string(doc, "pred_var_override"), base_dir);

    if (doc.contains("raster_crs")) {
        cfg.raster_crs = detail::require_string(doc, "raster_crs");
        if (cfg.raster_crs != "planar" && cfg.raster_crs != "geographic")
            throw Error("cli", "raster_crs must be 'planar' or 'geographic'");
    }
    if (doc.contains("proj_phi1")) cfg.projection.phi1 = detail::require_number(doc, "proj_phi1");
    if (doc.contains("proj_phi2")) cfg.projection.phi2 = detail::require_number(doc, "proj_phi2");
    if (doc.contains("proj_phi0")) cfg.projection.phi0 = detail::require_number(doc, "proj_phi0");
    if (doc.contains("proj_lambda0"))
        cfg.projection.lambda0 = detail::require_number(doc, "proj_lambda0");
    if (doc.contains("proj_radius")) {
        cfg.projection.radius = detail::require_number(doc, "proj_radius");
        if (!(cfg.projection.radius > 0.0)) throw Error("cli", "proj_radius must be > 0");
    }
    if (doc.contains("proj_false_easting"))
        cfg.projection.false_easting = detail::require_number(doc, "proj_false_easting");
    if (doc.contains("proj_false_northing"))
        cfg.projection.false_northing = detail::require_number(doc, "proj_false_northing");

    if (doc.contains("mask_threshold")) {
        cfg.mask_threshold = detail::require_number(doc, "mask_threshold");
        if (cfg.mask_threshold < 0.0 || cfg.mask_threshold > 1.0)
            throw Error("cli", "mask_threshold must be in [0, 1]");
    }
    if (doc.contains("filter_mode")) {
        const std::string mode = detail::require_string(doc, "filter_mode");
        if (mode == "auto") cfg.filter_mode = FilterMode::auto_threshold;
        else if (mode == "fixed") cfg.filter_mode = FilterMode::fixed;
        else if (mode == "off") cfg.filter_mode = FilterMode::off;
        else throw Error("cli", "filter_mode must be 'auto', 'fixed', or 'off'");
    }
    if (cfg.filter_mode == FilterMode::fixed) {
        if (!doc.contains("filter_fixed_t"))
            throw Error("cli", "filter_mode 'fixed' requires filter_fixed_t");
        cfg.filter_fixed_t = detail::require_number(doc, "filter_fixed_t");
    } else if (doc.contains("filter_fixed_t")) {
        throw Error("cli", "filter_fixed_t only applies when filter_mode is 'fixed'");
    }
    if (doc.contains("filter_group")) {
        cfg.filter_group = detail::require_string(doc, "filter_group");
        if (cfg.filter_group != "none" && cfg.filter_group != "unit_id")
            throw Error("cli", "filter_group must be 'none' or 'unit_id'");
    }
    if (doc.contains("filter_sigma")) {
        cfg.filter_sigma = detail::require_string(doc, "filter_sigma");
        if (cfg.filter_sigma != "sample" && cfg.filter_sigma != "population")
            throw Error("cli", "filter_sigma must be 'sample' or 'population'");
    }
    if (doc.contains("variance_estimator")) {
        cfg.variance_estimator = detail::require_string(doc, "variance_estimator");
        if (cfg.variance_estimator != "simple")
            throw Error("cli", "variance_estimator '" + cfg.variance_estimator +
                                   "' is not implemented; 'simple' is the only choice");
    }
    if (doc.contains("plot_assignment")) {
        const std::string mode = detail::require_string(doc, "plot_assignment");
        if (mode == "geometry") cfg.plot_assignment = PlotAssignment::geometry;
        else if (mode == "attribute") cfg.plot_assignment = PlotAssignment::attribute;
        else throw Error("cli", "plot_assignment must be 'geometry' or 'attribute'");
    }
    if (doc.contains("year_min") || doc.contains("year_max")) {
        cfg.has_year_window = true;
        if (doc.contains("year_min")) cfg.year_min = static_cast<int>(detail::require_integer(doc, "year_min"));
        if (doc.contains("year_max")) cfg.year_max = static_cast<int>(detail::require_integer(doc, "year_max"));
        if (cfg.year_min > cfg.year_max) throw Error("cli", "year_min exceeds year_max");
    }
    if (doc.contains("window")) {
        const long w = detail::require_integer(doc, "window");
        if (w < 1) throw Error("cli", "window must be >= 1");
        cfg.window = static_cast<std::size_t>(w);
    }
    if (doc.contains("bin_width")) {
        cfg.bin_width = detail::require_number(doc, "bin_width");
        if (!(cfg.bin_width > 0.0)) throw Error("cli", "bin_width must be > 0");
    }
    if (doc.contains("agreement_c")) {
        cfg.agreement_c = detail::require_number(doc, "agreement_c");
        if (!(cfg.agreement_c > 0.0)) throw Error("cli", "agreement_c must be > 0");
    }
    if (doc.contains("seed")) {
        const long s = detail::require_integer(doc, "seed");
        if (s < 0) throw Error("cli", "seed must be >= 0");
        cfg.seed = static_cast<std::uint64_t>(s);
    }
    return cfg;
}

inline nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["raster"] = cfg.raster;
    if (!cfg.inundation.empty()) j["inundation"] = cfg.inundation;
    j["zones"] = cfg.zones;
    j["plots"] = cfg.plots;
    if (!cfg.weights.empty()) j["weights"] = cfg.weights;
    if (!cfg.pred_var_override.empty()) j["pred_var_override"] = cfg.pred_var_override;
    j["output_dir"] = cfg.output_dir;
    j["raster_crs"] = cfg.raster_crs;
    j["proj_phi1"] = cfg.projection.phi1;
    j["proj_phi2"] = cfg.projection.phi2;
    j["proj_phi0"] = cfg.projection.phi0;
    j["proj_lambda0"] = cfg.projection.lambda0;
    j["proj_radius"] = cfg.projection.radius;
    j["proj_false_easting"] = cfg.projection.false_easting;
    j["proj_false_northing"] = cfg.projection.false_northing;
    j["mask_threshold"] = cfg.mask_threshold;
    j["filter_mode"] = cfg.filter_mode == FilterMode::auto_threshold
                           ? "auto"
                           : (cfg.filter_mode == FilterMode::fixed ? "fixed" : "off");
    if (cfg.filter_mode == FilterMode::fixed) j["filter_fixed_t"] = cfg.filter_fixed_t;
    j["filter_group"] = cfg.filter_group;
    j["filter_sigma"] = cfg.filter_sigma;
    j["variance_estimator"] = cfg.variance_estimator;
    j["plot_assignment"] =
        cfg.plot_assignment == PlotAssignment::geometry ? "geometry" : "attribute";
    if (cfg.has_year_window) {
        j["year_min"] = cfg.year_min;
        j["year_max"] = cfg.year_max;
    }
    j["window"] = cfg.window;
    j["bin_width"] = cfg.bin_width;
    j["agreement_c"] = cfg.agreement_c;
    j["seed"] = cfg.seed;
    return j;
}

namespace detail {

inline geom::ZoneSet project_zones(const geom::ZoneSet& zones, const geom::AlbersSpec& spec) {
    geom::ZoneSet out = zones;
    out.crs = Crs::planar;
    for (geom::Zone& z : out.zones)
        for (geom::Polygon& part : z.parts) {
            for (geom::Point& p : part.outer) p = geom::albers_forward(p, spec);
            for (geom::Ring& h : part.holes)
                for (geom::Point& p : h) p = geom::albers_forward(p, spec);
        }
    return out;
}

inline std::string csv_bool(bool b) { return b ? "1" : "0"; }

inline std::string timestamp_utc() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string hash_hex(const std::string& s) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(Rng::hash_string(s)));
    return buf;
}

struct FilterOutcome {
    std::vector<zonal::ZonalStat> retained;
    std::vector<std::string> excluded_ids;
    std::map<std::string, zonal::FilterThreshold> thresholds;  // group -> threshold
};

inline FilterOutcome apply_filter(const RunConfig& cfg,
                                  const std::vector<zonal::ZonalStat>& stats,
                                  const std::map<std::string, std::string>& group_of_zone) {
    FilterOutcome out;
    if (cfg.filter_mode == FilterMode::off) {
        out.retained = stats;
        return out;
    }
    std::map<std::string, std::vector<zonal::ZonalStat>> groups;
    for (const zonal::ZonalStat& s : stats) {
        std::string key;
        if (cfg.filter_group == "unit_id") {
            auto it = group_of_zone.find(s.zone_id);
            if (it != group_of_zone.end()) key = it->second;
        }
        groups[key].push_back(s);
    }
    for (const auto& [key, members] : groups) {
        zonal::FilterThreshold th;
        if (cfg.filter_mode == FilterMode::fixed) {
            th.t_n = cfg.filter_fixed_t;
            th.n_bar = cfg.filter_fixed_t;
        } else {
            std::vector<std::size_t> counts;
            counts.reserve(members.size());
            for (const auto& s : members) counts.push_back(s.n_pixels);
            th = zonal::pixel_count_threshold(counts, cfg.filter_sigma == "population");
        }
        out.thresholds[key] = th;
        zonal::FilterResult fr = zonal::filter_zones(members, th);
        for (auto& s : fr.retained) out.retained.push_back(std::move(s));
        for (auto& id : fr.excluded_ids) out.excluded_ids.push_back(std::move(id));
    }
    // Group iteration reorders rows; restore the input zone order.
    std::map<std::string, std::size_t> rank;
    for (std::size_t i = 0; i < stats.size(); ++i) rank[stats[i].zone_id] = i;
    std::sort(out.retained.begin(), out.retained.end(),
              [&](const auto& a, const auto& b) { return rank.at(a.zone_id) < rank.at(b.zone_id); });
    std::sort(out.excluded_ids.begin(), out.excluded_ids.end(),
              [&](const auto& a, const auto& b) { return rank.at(a) < rank.at(b); });
    return out;
}

}  // namespace detail

struct ValidateResult {
    nlohmann::json report;
    nlohmann::json manifest;
};

// The full pipeline: mask, aggregate both sides, filter, pair, score, emit.
// All outputs land in cfg.output_dir; nothing is written until every number
// has been computed, so a failing stage leaves no partial outputs.
inline ValidateResult run_validate(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    const struct {
        const char* key;
        const std::string& path;
    } required_paths[] = {{"raster", cfg.raster},
                          {"zones", cfg.zones},
                          {"plots", cfg.plots},
                          {"inundation", cfg.inundation},
                          {"weights", cfg.weights},
                          {"pred_var_override", cfg.pred_var_override}};
    for (const auto& rp : required_paths)
        if (!rp.path.empty() && !fs::exists(rp.path))
            throw Error("cli", std::string(rp.key) + " path does not exist: '" + rp.path + "'");

    const unsigned workers = resolve_threads();
    const Crs raster_crs = cfg.raster_crs == "geographic" ? Crs::geographic : Crs::planar;

    grid::Raster raster = grid::read_grid_file(cfg.raster, raster_crs);
    if (!cfg.inundation.empty()) {
        const grid::Raster freq = grid::read_grid_file(cfg.inundation, raster_crs);
        raster = grid::apply_inundation_mask(raster, freq, cfg.mask_threshold);
    }

    nlohmann::json zones_doc;
    {
        std::ifstream zf(cfg.zones);
        if (!zf) throw Error("cli", "cannot open zones file '" + cfg.zones + "'");
        std::stringstream buffer;
        buffer << zf.rdbuf();
        zones_doc = nlohmann::json::parse(buffer.str(), nullptr, false);
        if (zones_doc.is_discarded()) throw Error("geom", "zones file is not valid JSON");
    }
    geom::ZoneSet zones;
    {
        std::ifstream zf(cfg.zones);
        zones = geom::read_zones(zf);
    }
    if (zones.crs == Crs::geographic) zones = detail::project_zones(zones, cfg.projection);
    if (zones.zones.empty()) throw Error("cli", "zone set is empty");

    std::vector<design::PlotRecord> plots;
    {
        std::ifstream pf(cfg.plots);
        if (!pf) throw Error("cli", "cannot open plots file '" + cfg.plots + "'");
        plots = design::load_plots(pf);
    }
    const std::size_t plots_total = plots.size();
    if (cfg.has_year_window) plots = design::filter_by_year(plots, cfg.year_min, cfg.year_max);

    design::WeightTable weights;
    if (!cfg.weights.empty()) {
        std::ifstream wf(cfg.weights);
        if (!wf) throw Error("cli", "cannot open weights file '" + cfg.weights + "'");
        weights = design::load_weights(wf);
    }

    const std::optional<geom::AlbersSpec> proj_opt =
        raster_crs == Crs::geographic ? std::optional<geom::AlbersSpec>(cfg.projection)
                                      : std::nullopt;

    // Zone-level stats feed the pixel-count filter.
    const std::vector<zonal::ZonalStat> zone_stats =
        zonal::zonal_stats(raster, zones, proj_opt, workers);

    std::map<std::string, std::string> unit_of_zone;
    bool grouped_units = false;
    for (const geom::Zone& z : zones.zones) {
        unit_of_zone[z.id] = z.unit_id.empty() ? z.id : z.unit_id;
        if (!z.unit_id.empty()) grouped_units = true;
    }

    const detail::FilterOutcome filtered = detail::apply_filter(cfg, zone_stats, unit_of_zone);

    std::set<std::string> retained_zone_ids;
    for (const auto& s : filtered.retained) retained_zone_ids.insert(s.zone_id);
    geom::ZoneSet retained_zones;
    retained_zones.crs = zones.crs;
    for (const geom::Zone& z : zones.zones)
        if (retained_zone_ids.count(z.id)) retained_zones.zones.push_back(z);

    // Unit-level prediction stats: reuse the zone rows when units and zones
    // coincide, otherwise rerun the kernel keyed by unit.
    std::vector<zonal::ZonalStat> unit_stats;
    if (grouped_units)
        unit_stats = zonal::zonal_stats_by_unit(raster, retained_zones, proj_opt, workers);
    else
        unit_stats = filtered.retained;

    if (!cfg.pred_var_override.empty()) {
        std::ifstream vf(cfg.pred_var_override);
        if (!vf) throw Error("cli", "cannot open pred_var_override file");
        const CsvTable table = read_csv(vf, "cli");
        const int id_col = table.column("zone_id");
        const int var_col = table.column("var_of_mean");
        if (id_col < 0 || var_col < 0)
            throw Error("cli", "pred_var_override needs columns zone_id,var_of_mean");
        std::map<std::string, double> by_unit;
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            double v = 0.0;
            if (!try_parse_double(table.rows[i][var_col], v) || v < 0.0)
                throw Error("cli", "pred_var_override row " + std::to_string(i + 2) +
                                       ": var_of_mean must be a number >= 0");
            by_unit[table.rows[i][id_col]] = v;
        }
        for (auto& s : unit_stats) {
            auto it = by_unit.find(s.zone_id);
            if (it != by_unit.end()) s.var_of_mean = it->second;
        }
    }

    // Reference side: group plots by unit, then estimate per unit.
    std::map<std::string, std::vector<std::size_t>> plot_groups;
    if (cfg.plot_assignment == PlotAssignment::geometry) {
        plot_groups = design::assign_plots_to_zones(plots, retained_zones, cfg.projection);
    } else {
        for (std::size_t i = 0; i < plots.size(); ++i)
            plot_groups[plots[i].unit_id.empty() ? design::UNASSIGNED_KEY : plots[i].unit_id]
                .push_back(i);
    }

    std::map<std::string, design::DesignEstimate> ref_estimates;
    std::size_t plots_used = 0;
    for (const auto& [unit, indices] : plot_groups) {
        if (unit == design::UNASSIGNED_KEY) continue;
        std::vector<double> values;
        std::map<std::string, std::vector<double>> by_stratum;
        values.reserve(indices.size());
        for (std::size_t i : indices) {
            values.push_back(plots[i].agbd);
            by_stratum[plots[i].stratum_id].push_back(plots[i].agbd);
        }
        std::optional<design::DesignEstimate> est;
        const auto wit = weights.find(unit);
        if (wit != weights.end()) {
            try {
                est = design::post_stratified_estimate(by_stratum, wit->second, unit);
            } catch (const Error&) {
                est.reset();  // thin strata: fall back to the unstratified estimate
            }
        }
        if (!est && values.size() >= 2) {
            const auto [mean, var] = design::srs_estimate(values);
            design::DesignEstimate e;
            e.unit_id = unit;
            e.mean = mean;
            e.var_of_mean = var;
            e.n_plots = values.size();
            e.method = design::Method::srs;
            est = e;
        }
        if (est) {
            ref_estimates[unit] = *est;
            plots_used += indices.size();
        }
    }

    // Pair the two sides; a unit needs >= 2 pixels and >= 2 plots.
    std::vector<agreement::PairedUnit> paired;
    std::set<std::string> used_units;
    for (const zonal::ZonalStat& s : unit_stats) {
        if (s.n_pixels < 2) continue;
        const auto it = ref_estimates.find(s.zone_id);
        if (it == ref_estimates.end()) continue;
        agreement::PairedUnit u;
        u.unit_id = s.zone_id;
        u.pred_mean = s.mean;
        u.pred_var = s.var_of_mean;
        u.ref_mean = it->second.mean;
        u.ref_var = it->second.var_of_mean;
        paired.push_back(u);
        used_units.insert(s.zone_id);
    }
    if (paired.size() < 3)
        throw Error("cli", "only " + std::to_string(paired.size()) +
                               " unit(s) have both map and plot estimates; need >= 3");

    const agreement::AgreementSummary summary = agreement::summarize(paired, cfg.agreement_c);

    // Distribution outputs.
    const std::vector<double> raster_sample =
        grid::subsample_windows(raster, cfg.window, cfg.seed);
    std::vector<double> plot_values;
    plot_values.reserve(plots.size());
    for (const auto& p : plots) plot_values.push_back(p.agbd);
    const std::vector<agreement::HistBin> hist_raster =
        agreement::histogram(raster_sample, cfg.bin_width);
    const std::vector<agreement::HistBin> hist_plots =
        agreement::histogram(plot_values, cfg.bin_width);

    std::vector<double> pred_sample, ref_sample;
    for (const auto& u : paired) {
        pred_sample.push_back(u.pred_mean);
        ref_sample.push_back(u.ref_mean);
    }
    const std::vector<agreement::QqPoint> qq = agreement::qq_pairs(pred_sample, ref_sample, 101);

    // Reconcile zone counts.
    std::size_t zones_retained = 0, zones_without = 0;
    const std::set<std::string> excluded(filtered.excluded_ids.begin(),
                                         filtered.excluded_ids.end());
    for (const geom::Zone& z : zones.zones) {
        if (excluded.count(z.id)) continue;
        if (used_units.count(unit_of_zone[z.id])) ++zones_retained;
        else ++zones_without;
    }

    nlohmann::json report;
    report["n_units"] = paired.size();
    report["n_filtered"] = filtered.excluded_ids.size();
    report["slope"] = summary.fit.slope;
    report["slope_ci95"] = {summary.fit.slope_ci95[0], summary.fit.slope_ci95[1]};
    report["intercept"] = summary.fit.intercept;
    report["intercept_ci95"] = {summary.fit.intercept_ci95[0], summary.fit.intercept_ci95[1]};
    report["r2"] = summary.fit.r2;
    report["pearson_r"] = summary.pearson;
    report["rmse"] = summary.rmse;
    report["d_r"] = summary.d_r;
    report["p_slope"] = summary.fit.p_slope;
    report["p_intercept"] = summary.fit.p_intercept;

    nlohmann::json manifest;
    manifest["config_hash"] = detail::hash_hex(config_to_json(cfg).dump());
    manifest["seed"] = cfg.seed;
    manifest["workers"] = workers;
    manifest["timestamp"] = detail::timestamp_utc();
    manifest["counts"] = {{"zones_in", zones.zones.size()},
                          {"zones_retained", zones_retained},
                          {"zones_filtered", filtered.excluded_ids.size()},
                          {"zones_without_plots", zones_without},
                          {"plots_total", plots_total},
                          {"plots_used", plots_used},
                          {"n_units", paired.size()}};
    nlohmann::json thresholds = nlohmann::json::object();
    for (const auto& [group, th] : filtered.thresholds)
        thresholds[group.empty() ? "all" : group] = {
            {"t_n", th.t_n}, {"n_bar", th.n_bar}, {"sigma_n", th.sigma_n}};
    manifest["filter"] = {{"mode", cfg.filter_mode == FilterMode::auto_threshold
                                       ? "auto"
                                       : (cfg.filter_mode == FilterMode::fixed ? "fixed" : "off")},
                          {"thresholds", thresholds}};

    // Choropleth: the input zones document echoed with t and diff.
    for (auto& feature : zones_doc["features"]) {
        if (!feature.contains("properties") || !feature["properties"].is_object()) continue;
        const auto zid = feature["properties"].value("zone_id", std::string());
        const auto uit = unit_of_zone.find(zid);
        if (uit == unit_of_zone.end()) continue;
        for (const auto& cmp : summary.units) {
            if (cmp.unit.unit_id != uit->second) continue;
            feature["properties"]["t"] = cmp.t;
            feature["properties"]["diff"] = cmp.unit.pred_mean - cmp.unit.ref_mean;
            break;
        }
    }

    // Everything is computed; now write.
    fs::create_directories(cfg.output_dir);
    std::vector<std::string> written;
    auto open_out = [&](const char* name) {
        const std::string path = (fs::path(cfg.output_dir) / name).string();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cli", std::string("cannot write '") + path + "'");
        written.push_back(path);
        return out;
    };
    try {
        {
            auto out = open_out("report.json");
            out << report.dump(2) << '\n';
        }
        {
            auto out = open_out("units.csv");
            out << "unit_id,pred_mean,ref_mean,pred_var,ref_var,t,significant\n";
            for (const auto& cmp : summary.units)
                out << cmp.unit.unit_id << ',' << format_g9(cmp.unit.pred_mean) << ','
                    << format_g9(cmp.unit.ref_mean) << ',' << format_g9(cmp.unit.pred_var) << ','
                    << format_g9(cmp.unit.ref_var) << ',' << format_g9(cmp.t) << ','
                    << detail::csv_bool(cmp.significant) << '\n';
        }
        {
            auto out = open_out("qq.csv");
            out << "p,q_pred,q_ref\n";
            for (const auto& q : qq)
                out << format_g9(q.p) << ',' << format_g9(q.q_a) << ',' << format_g9(q.q_b)
                    << '\n';
        }
        {
            auto out = open_out("histograms.csv");
            out << "bin_lo,bin_hi,count,source\n";
            for (const auto& b : hist_raster)
                out << format_g9(b.lo) << ',' << format_g9(b.lo + cfg.bin_width) << ','
                    << b.count << ",raster\n";
            for (const auto& b : hist_plots)
                out << format_g9(b.lo) << ',' << format_g9(b.lo + cfg.bin_width) << ','
                    << b.count << ",plots\n";
        }
        {
            auto out = open_out("t_map.geojson");
            out << zones_doc.dump(2) << '\n';
        }
        {
            auto out = open_out("manifest.json");
            out << manifest.dump(2) << '\n';
        }
    } catch (...) {
        for (const std::string& path : written) {
            std::error_code ec;
            fs::remove(path, ec);
        }
        throw;
    }
    return {report, manifest};
}

inline void write_zonal_csv(const std::vector<zonal::ZonalStat>& stats, std::ostream& out) {
    out << "zone_id,n_pixels,mean,var_of_mean,sum\n";
    for (const auto& s : stats)
        out << s.zone_id << ',' << s.n_pixels << ',' << format_g9(s.mean) << ','
            << format_g9(s.var_of_mean) << ',' << format_g9(s.sum) << '\n';
}

inline const char* method_name(design::Method m) {
    return m == design::Method::srs ? "SRS" : "POST_STRATIFIED";
}

// Strict per-unit estimation from a plots file: post-stratified wherever the
// weight table names the unit (errors propagate), simple random sampling
// otherwise.
inline std::vector<design::DesignEstimate> estimate_units(
    const std::vector<design::PlotRecord>& plots, const design::WeightTable& weights) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < plots.size(); ++i) {
        if (plots[i].unit_id.empty())
            throw Error("design", "plot '" + plots[i].plot_id + "' has no unit_id");
        groups[plots[i].unit_id].push_back(i);
    }
    std::vector<design::DesignEstimate> out;
    for (const auto& [unit, indices] : groups) {
        const auto wit = weights.find(unit);
        if (wit != weights.end()) {
            std::map<std::string, std::vector<double>> by_stratum;
            for (std::size_t i : indices) by_stratum[plots[i].stratum_id].push_back(plots[i].agbd);
            out.push_back(design::post_stratified_estimate(by_stratum, wit->second, unit));
        } else {
            std::vector<double> values;
            values.reserve(indices.size());
            for (std::size_t i : indices) values.push_back(plots[i].agbd);
            const auto [mean, var] = design::srs_estimate(values);
            design::DesignEstimate e;
            e.unit_id = unit;
            e.mean = mean;
            e.var_of_mean = var;
            e.n_plots = values.size();
            e.method = design::Method::srs;
            out.push_back(e);
        }
    }
    return out;
}

struct SynthOutputs {
    std::string raster_path, plots_path, weights_path, zones_path, truth_path;
};

// Generate the full synthetic bundle into a directory: raster, perturbed
// plots (with their true unit labels), stratum weights, hexagon zones, and
// the per-zone truth table.
inline SynthOutputs run_synth(const synth::SynthConfig& cfg, double zone_area_ha,
                              const geom::AlbersSpec& projection, const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (!(zone_area_ha > 0.0)) throw Error("synth", "zone area must be > 0");
    fs::create_directories(out_dir);

    auto [raster, truth] = synth::generate_field(cfg);
    const geom::Rect bounds{cfg.x_ll, cfg.y_ll,
                            cfg.x_ll + static_cast<double>(cfg.n_cols) * cfg.cell,
                            cfg.y_ll + static_cast<double>(cfg.n_rows) * cfg.cell};
    const geom::ZoneSet zones = geom::tessellate_hexagons(bounds, zone_area_ha * 1e4);

    std::vector<design::PlotRecord> plots = synth::sample_plots(truth, cfg, projection);
    const auto groups = design::assign_plots_to_zones(plots, zones, projection);
    for (const auto& [unit, indices] : groups) {
        if (unit == design::UNASSIGNED_KEY) continue;
        for (std::size_t i : indices) plots[i].unit_id = unit;
    }
    plots = synth::fuzz_and_swap(plots, cfg, projection);

    const design::WeightTable weights = synth::stratum_weights(truth, cfg, zones);
    const std::vector<zonal::ZonalStat> truth_means =
        synth::true_zone_means(truth, raster.transform, zones);

    SynthOutputs out;
    out.raster_path = (fs::path(out_dir) / "raster.asc").string();
    out.plots_path = (fs::path(out_dir) / "plots.csv").string();
    out.weights_path = (fs::path(out_dir) / "weights.csv").string();
    out.zones_path = (fs::path(out_dir) / "zones.geojson").string();
    out.truth_path = (fs::path(out_dir) / "truth.csv").string();

    grid::write_grid_file(raster, out.raster_path);
    {
        std::ofstream f(out.plots_path, std::ios::binary);
        if (!f) throw Error("synth", "cannot write plots file");
        f << "plot_id,lon,lat,measure_year,agbd_mg_ha,stratum_id,unit_id\n";
        for (const auto& p : plots)
            f << p.plot_id << ',' << format_g17(p.lon) << ',' << format_g17(p.lat) << ','
              << p.measure_year << ',' << format_g9(p.agbd) << ',' << p.stratum_id << ','
              << p.unit_id << '\n';
    }
    {
        std::ofstream f(out.weights_path, std::ios::binary);
        if (!f) throw Error("synth", "cannot write weights file");
        f << "unit_id,stratum_id,weight\n";
        for (const auto& [unit, strata] : weights)
            for (const auto& [stratum, w] : strata)
                f << unit << ',' << stratum << ',' << format_g17(w) << '\n';
    }
    {
        std::ofstream f(out.zones_path, std::ios::binary);
        if (!f) throw Error("synth", "cannot write zones file");
        geom::write_zones(zones, f);
    }
    {
        std::ofstream f(out.truth_path, std::ios::binary);
        if (!f) throw Error("synth", "cannot write truth file");
        f << "zone_id,true_mean\n";
        for (const auto& s : truth_means)
            if (s.n_pixels > 0) f << s.zone_id << ',' << format_g9(s.mean) << '\n';
    }
    return out;
}

}  // namespace agbd::pipeline
