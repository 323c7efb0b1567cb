#pragma once

#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "agbd/csv.hpp"
#include "agbd/error.hpp"
#include "agbd/geom.hpp"
#include "agbd/numeric.hpp"

namespace agbd::design {

struct PlotRecord {
    std::string plot_id;
    double lon = 0.0;
    double lat = 0.0;
    int measure_year = 0;
    double agbd = 0.0;  // Mg/ha
    std::string stratum_id;
    std::string unit_id;
};

enum class Method { srs, post_stratified };

struct DesignEstimate {
    std::string unit_id;
    double mean = 0.0;
    double var_of_mean = 0.0;
    std::size_t n_plots = 0;
    Method method = Method::srs;
};

// unit_id -> stratum_id -> weight (fraction of unit area).
using WeightTable = std::map<std::string, std::map<std::string, double>>;

inline constexpr const char* UNASSIGNED_KEY = "_unassigned";

// CSV columns: plot_id,lon,lat,measure_year,agbd_mg_ha,stratum_id,unit_id.
// Extra columns are ignored; rows are numbered with the header as row 1.
inline std::vector<PlotRecord> load_plots(std::istream& in) {
    const CsvTable table = read_csv(in, "design");
    struct Col {
        const char* name;
        int idx;
    };
    Col cols[] = {{"plot_id", -1},   {"lon", -1},        {"lat", -1},    {"measure_year", -1},
                  {"agbd_mg_ha", -1}, {"stratum_id", -1}, {"unit_id", -1}};
    for (Col& c : cols) {
        c.idx = table.column(c.name);
        if (c.idx < 0) throw Error("design", std::string("missing column '") + c.name + "'");
    }

    std::vector<PlotRecord> out;
    out.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const std::string row_label = "row " + std::to_string(i + 2);
        PlotRecord p;
        p.plot_id = row[cols[0].idx];
        if (!try_parse_double(row[cols[1].idx], p.lon) || !std::isfinite(p.lon))
            throw Error("design", row_label + ": lon not numeric");
        if (!try_parse_double(row[cols[2].idx], p.lat) || !std::isfinite(p.lat))
            throw Error("design", row_label + ": lat not numeric");
        long year = 0;
        if (!try_parse_long(row[cols[3].idx], year))
            throw Error("design", row_label + ": measure_year not an integer");
        if (year < 1900 || year > 2100)
            throw Error("design", row_label + ": measure_year " + std::to_string(year) +
                                      " outside [1900, 2100]");
        p.measure_year = static_cast<int>(year);
        if (!try_parse_double(row[cols[4].idx], p.agbd))
            throw Error("design", row_label + ": agbd not numeric");
        if (!std::isfinite(p.agbd) || p.agbd < 0.0)
            throw Error("design", row_label + ": agbd must be a finite value >= 0");
        p.stratum_id = row[cols[5].idx];
        p.unit_id = row[cols[6].idx];
        out.push_back(std::move(p));
    }
    return out;
}

// CSV columns: unit_id,stratum_id,weight. Weights within each unit must be
// >= 0 and sum to 1 within 1e-9.
inline WeightTable load_weights(std::istream& in) {
    const CsvTable table = read_csv(in, "design");
    const int unit_col = table.column("unit_id");
    const int stratum_col = table.column("stratum_id");
    const int weight_col = table.column("weight");
    if (unit_col < 0) throw Error("design", "missing column 'unit_id'");
    if (stratum_col < 0) throw Error("design", "missing column 'stratum_id'");
    if (weight_col < 0) throw Error("design", "missing column 'weight'");

    WeightTable out;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const std::string row_label = "row " + std::to_string(i + 2);
        double w = 0.0;
        if (!try_parse_double(row[weight_col], w))
            throw Error("design", row_label + ": weight not numeric");
        if (!std::isfinite(w) || w < 0.0)
            throw Error("design", row_label + ": weight must be >= 0");
        auto [it, fresh] = out[row[unit_col]].emplace(row[stratum_col], w);
        if (!fresh)
            throw Error("design", row_label + ": duplicate stratum '" + row[stratum_col] +
                                      "' for unit '" + row[unit_col] + "'");
    }
    for (const auto& [unit, strata] : out) {
        NeumaierSum sum;
        for (const auto& [stratum, w] : strata) sum.add(w);
        if (std::abs(sum.value() - 1.0) > 1e-9)
            throw Error("design", "weights for unit '" + unit + "' sum to " +
                                      format_g17(sum.value()) + ", expected 1");
    }
    return out;
}

namespace detail {

inline double mean_of(const std::vector<double>& values) {
    NeumaierSum sum;
    for (double v : values) sum.add(v);
    return sum.value() / static_cast<double>(values.size());
}

// Two-pass sample variance, n-1 denominator.
inline double sample_variance(const std::vector<double>& values, double mean) {
    NeumaierSum ss;
    for (double v : values) {
        const double d = v - mean;
        ss.add(d * d);
    }
    const double v = ss.value() / static_cast<double>(values.size() - 1);
    return v < 0.0 ? 0.0 : v;
}

}  // namespace detail

// Simple-random-sample mean and variance of the mean (s^2/n).
inline std::pair<double, double> srs_estimate(const std::vector<double>& values) {
    if (values.empty()) throw Error("design", "no plot values to estimate from");
    if (values.size() == 1) throw Error("design", "variance undefined for a single plot");
    const double mean = detail::mean_of(values);
    const double s2 = detail::sample_variance(values, mean);
    return {mean, s2 / static_cast<double>(values.size())};
}

// Post-stratified mean and variance: sum over strata of W_h*ybar_h and
// W_h^2*s_h^2/n_h. Every stratum with positive weight needs >= 2 plots;
// plots in a stratum absent from the weight table are an error.
inline DesignEstimate post_stratified_estimate(
    const std::map<std::string, std::vector<double>>& groups,
    const std::map<std::string, double>& weights, const std::string& unit_id = "") {
    NeumaierSum weight_sum;
    for (const auto& [stratum, w] : weights) weight_sum.add(w);
    if (std::abs(weight_sum.value() - 1.0) > 1e-9)
        throw Error("design", "stratum weights sum to " + format_g17(weight_sum.value()) +
                                  ", expected 1");
    for (const auto& [stratum, values] : groups)
        if (!weights.count(stratum))
            throw Error("design", "plots reference unknown stratum '" + stratum + "'");

    DesignEstimate est;
    est.unit_id = unit_id;
    est.method = Method::post_stratified;
    NeumaierSum mean_acc, var_acc;
    for (const auto& [stratum, w] : weights) {
        auto it = groups.find(stratum);
        const std::size_t n_h = (it == groups.end()) ? 0 : it->second.size();
        est.n_plots += n_h;
        if (w == 0.0) continue;
        if (n_h < 2)
            throw Error("design", "stratum '" + stratum + "' has weight " + format_g9(w) +
                                      " but only " + std::to_string(n_h) + " plot(s), need >= 2");
        const double ybar = detail::mean_of(it->second);
        const double s2 = detail::sample_variance(it->second, ybar);
        mean_acc.add(w * ybar);
        var_acc.add(w * w * s2 / static_cast<double>(n_h));
    }
    est.mean = mean_acc.value();
    est.var_of_mean = std::max(0.0, var_acc.value());
    return est;
}

inline std::vector<PlotRecord> filter_by_year(const std::vector<PlotRecord>& plots, int y_min,
                                              int y_max) {
    if (y_min > y_max) throw Error("design", "year window lower bound exceeds upper bound");
    std::vector<PlotRecord> out;
    for (const PlotRecord& p : plots)
        if (p.measure_year >= y_min && p.measure_year <= y_max) out.push_back(p);
    return out;
}

// Projects each plot and groups it by containing zone. The group key is the
// zone's unit_id when present, the zone_id otherwise; plots outside every
// zone land under "_unassigned". Values are indices into `plots`, in input
// order.
inline std::map<std::string, std::vector<std::size_t>> assign_plots_to_zones(
    const std::vector<PlotRecord>& plots, const geom::ZoneSet& zones,
    const geom::AlbersSpec& projection) {
    if (zones.crs != Crs::planar)
        throw Error("design", "zone set must be planar for plot assignment");
    const geom::ZoneIndex index(zones);
    std::map<std::string, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < plots.size(); ++i) {
        const geom::Point planar = geom::albers_forward({plots[i].lon, plots[i].lat}, projection);
        const auto zi = index.assign(planar);
        if (!zi) {
            out[UNASSIGNED_KEY].push_back(i);
            continue;
        }
        const geom::Zone& z = zones.zones[*zi];
        out[z.unit_id.empty() ? z.id : z.unit_id].push_back(i);
    }
    return out;
}

}  // namespace agbd::design
