#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "agbd/pipeline.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace {

constexpr const char* VERSION = "agbd-validate 0.1.0";

struct ProjFlags {
    agbd::geom::AlbersSpec spec;

    void attach(CLI::App* cmd) {
        cmd->add_option("--proj-phi1", spec.phi1, "First standard parallel (degrees)");
        cmd->add_option("--proj-phi2", spec.phi2, "Second standard parallel (degrees)");
        cmd->add_option("--proj-phi0", spec.phi0, "Latitude of origin (degrees)");
        cmd->add_option("--proj-lambda0", spec.lambda0, "Central meridian (degrees)");
        cmd->add_option("--proj-radius", spec.radius, "Sphere radius (meters)");
        cmd->add_option("--proj-false-easting", spec.false_easting, "False easting (meters)");
        cmd->add_option("--proj-false-northing", spec.false_northing, "False northing (meters)");
    }
};

std::string absolute_path(const std::string& p) {
    return std::filesystem::absolute(p).lexically_normal().string();
}

int run_validate_cmd(const std::string& config_path, CLI::App* cmd,
                     const std::vector<std::pair<std::string, std::string>>& string_overrides,
                     const std::vector<std::pair<std::string, double>>& number_overrides,
                     const std::vector<std::pair<std::string, long>>& integer_overrides,
                     const std::vector<std::string>& path_keys) {
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "error: cannot open config '" << config_path << "'\n";
        return 1;
    }
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        std::cerr << "error: cli: config is not a JSON object\n";
        return 1;
    }

    auto flag_of = [](const std::string& key) {
        std::string f = "--" + key;
        for (char& c : f)
            if (c == '_') c = '-';
        return f;
    };
    for (const auto& [key, value] : string_overrides)
        if (cmd->count(flag_of(key))) {
            const bool is_path =
                std::find(path_keys.begin(), path_keys.end(), key) != path_keys.end();
            doc[key] = is_path ? absolute_path(value) : value;
        }
    for (const auto& [key, value] : number_overrides)
        if (cmd->count(flag_of(key))) doc[key] = value;
    for (const auto& [key, value] : integer_overrides)
        if (cmd->count(flag_of(key))) doc[key] = value;

    const std::string base_dir =
        std::filesystem::absolute(config_path).parent_path().string();
    std::istringstream merged(doc.dump());
    const agbd::pipeline::RunConfig cfg = agbd::pipeline::parse_config(merged, base_dir);
    const agbd::pipeline::ValidateResult result = agbd::pipeline::run_validate(cfg);

    std::cout << "validated " << result.report["n_units"].get<std::size_t>() << " units ("
              << result.report["n_filtered"].get<std::size_t>() << " zones filtered)\n"
              << "slope " << agbd::format_g9(result.report["slope"].get<double>()) << ", r2 "
              << agbd::format_g9(result.report["r2"].get<double>()) << ", rmse "
              << agbd::format_g9(result.report["rmse"].get<double>()) << ", d_r "
              << agbd::format_g9(result.report["d_r"].get<double>()) << '\n'
              << "outputs in " << cfg.output_dir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AGBD raster validation against ground-plot inventories"};
    app.require_subcommand(1);
    app.set_version_flag("--version", VERSION);

    // validate
    auto* validate = app.add_subcommand("validate", "Run the full validation pipeline");
    std::string config_path;
    validate->add_option("--config", config_path, "JSON run configuration")->required();

    std::vector<std::pair<std::string, std::string>> string_overrides = {
        {"raster", ""},       {"inundation", ""},       {"zones", ""},
        {"plots", ""},        {"weights", ""},          {"pred_var_override", ""},
        {"output_dir", ""},   {"raster_crs", ""},       {"filter_mode", ""},
        {"filter_group", ""}, {"filter_sigma", ""},     {"variance_estimator", ""},
        {"plot_assignment", ""}};
    std::vector<std::pair<std::string, double>> number_overrides = {
        {"proj_phi1", 0},          {"proj_phi2", 0},      {"proj_phi0", 0},
        {"proj_lambda0", 0},       {"proj_radius", 0},    {"proj_false_easting", 0},
        {"proj_false_northing", 0}, {"mask_threshold", 0}, {"filter_fixed_t", 0},
        {"bin_width", 0},          {"agreement_c", 0}};
    std::vector<std::pair<std::string, long>> integer_overrides = {
        {"year_min", 0}, {"year_max", 0}, {"window", 0}, {"seed", 0}};
    const std::vector<std::string> path_keys = {"raster",  "inundation",        "zones",
                                                "plots",   "weights",           "output_dir",
                                                "pred_var_override"};
    auto flag_of = [](const std::string& key) {
        std::string f = "--" + key;
        for (char& c : f)
            if (c == '_') c = '-';
        return f;
    };
    for (auto& [key, value] : string_overrides)
        validate->add_option(flag_of(key), value, "Override config key '" + key + "'");
    for (auto& [key, value] : number_overrides)
        validate->add_option(flag_of(key), value, "Override config key '" + key + "'");
    for (auto& [key, value] : integer_overrides)
        validate->add_option(flag_of(key), value, "Override config key '" + key + "'");

    // tessellate
    auto* tessellate = app.add_subcommand("tessellate", "Cover a rectangle with equal-area hexagons");
    double area_ha = 64000.0;
    agbd::geom::Rect bounds;
    std::string tess_out;
    tessellate->add_option("--area-ha", area_ha, "Hexagon area in hectares")->required();
    tessellate->add_option("--x0", bounds.x0, "Bounds lower-left x (meters)")->required();
    tessellate->add_option("--y0", bounds.y0, "Bounds lower-left y (meters)")->required();
    tessellate->add_option("--x1", bounds.x1, "Bounds upper-right x (meters)")->required();
    tessellate->add_option("--y1", bounds.y1, "Bounds upper-right y (meters)")->required();
    tessellate->add_option("--out", tess_out, "Output GeoJSON path")->required();

    // zonal
    auto* zonal_cmd = app.add_subcommand("zonal", "Per-zone raster statistics");
    std::string zonal_raster, zonal_zones, zonal_out, zonal_crs = "planar";
    ProjFlags zonal_proj;
    zonal_cmd->add_option("--raster", zonal_raster, "Input raster")->required();
    zonal_cmd->add_option("--zones", zonal_zones, "Zones GeoJSON")->required();
    zonal_cmd->add_option("--out", zonal_out, "Output CSV path")->required();
    zonal_cmd->add_option("--raster-crs", zonal_crs, "Raster CRS: planar or geographic");
    zonal_proj.attach(zonal_cmd);

    // estimate
    auto* estimate = app.add_subcommand("estimate", "Design-based per-unit plot estimates");
    std::string est_plots, est_weights, est_out;
    estimate->add_option("--plots", est_plots, "Plots CSV")->required();
    estimate->add_option("--weights", est_weights, "Stratum weights CSV (optional)");
    estimate->add_option("--out", est_out, "Output CSV path")->required();

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic landscape bundle");
    agbd::synth::SynthConfig synth_cfg;
    std::string synth_model = "lumpy", synth_out_dir;
    double synth_zone_area_ha = 64000.0;
    ProjFlags synth_proj;
    synth_cmd->add_option("--seed", synth_cfg.seed, "Random seed");
    synth_cmd->add_option("--rows", synth_cfg.n_rows, "Grid rows");
    synth_cmd->add_option("--cols", synth_cfg.n_cols, "Grid columns");
    synth_cmd->add_option("--cell", synth_cfg.cell, "Cell size (meters)");
    synth_cmd->add_option("--x-ll", synth_cfg.x_ll, "Grid lower-left x (meters)");
    synth_cmd->add_option("--y-ll", synth_cfg.y_ll, "Grid lower-left y (meters)");
    synth_cmd->add_option("--model", synth_model, "Field model: constant, gradient, or lumpy");
    synth_cmd->add_option("--base", synth_cfg.base, "Base field value (Mg/ha)");
    synth_cmd->add_option("--gradient-x", synth_cfg.gradient_x, "Gradient per meter in x");
    synth_cmd->add_option("--gradient-y", synth_cfg.gradient_y, "Gradient per meter in y");
    synth_cmd->add_option("--bump-count", synth_cfg.bump_count, "Gaussian bump count");
    synth_cmd->add_option("--bump-amp-min", synth_cfg.bump_amp_min, "Min bump amplitude");
    synth_cmd->add_option("--bump-amp-max", synth_cfg.bump_amp_max, "Max bump amplitude");
    synth_cmd->add_option("--bump-width-min", synth_cfg.bump_width_min, "Min bump width (m)");
    synth_cmd->add_option("--bump-width-max", synth_cfg.bump_width_max, "Max bump width (m)");
    synth_cmd->add_option("--pixel-noise-sd", synth_cfg.pixel_noise_sd, "Pixel noise sd");
    synth_cmd->add_option("--plot-density", synth_cfg.plot_density, "Plots per hectare");
    synth_cmd->add_option("--plot-noise-sd", synth_cfg.plot_noise_sd, "Plot noise sd");
    synth_cmd->add_option("--measure-year", synth_cfg.measure_year, "Plot measurement year");
    synth_cmd->add_option("--stratum-threshold", synth_cfg.stratum_threshold,
                          "Forest/non-forest split on the truth value");
    synth_cmd->add_option("--fuzz-min", synth_cfg.fuzz_min, "Min fuzz displacement (m)");
    synth_cmd->add_option("--fuzz-max", synth_cfg.fuzz_max, "Max fuzz displacement (m)");
    synth_cmd->add_option("--swap-fraction", synth_cfg.swap_fraction, "Swapped plot fraction");
    synth_cmd->add_option("--zone-area-ha", synth_zone_area_ha, "Hexagon zone area (hectares)");
    synth_cmd->add_option("--out-dir", synth_out_dir, "Output directory")->required();
    synth_proj.attach(synth_cmd);

    // version
    auto* version = app.add_subcommand("version", "Print the tool version");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (validate->parsed())
            return run_validate_cmd(config_path, validate, string_overrides, number_overrides,
                                    integer_overrides, path_keys);
        if (tessellate->parsed()) {
            const agbd::geom::ZoneSet zones = agbd::geom::tessellate_hexagons(bounds, area_ha * 1e4);
            std::ofstream out(tess_out, std::ios::binary);
            if (!out) throw agbd::Error("cli", "cannot write '" + tess_out + "'");
            agbd::geom::write_zones(zones, out);
            std::cout << zones.zones.size() << " hexagons -> " << tess_out << '\n';
            return 0;
        }
        if (zonal_cmd->parsed()) {
            if (zonal_crs != "planar" && zonal_crs != "geographic")
                throw agbd::Error("cli", "raster_crs must be 'planar' or 'geographic'");
            const agbd::Crs crs =
                zonal_crs == "geographic" ? agbd::Crs::geographic : agbd::Crs::planar;
            const agbd::grid::Raster raster = agbd::grid::read_grid_file(zonal_raster, crs);
            std::ifstream zf(zonal_zones);
            if (!zf) throw agbd::Error("cli", "cannot open zones file '" + zonal_zones + "'");
            agbd::geom::ZoneSet zones = agbd::geom::read_zones(zf);
            const std::optional<agbd::geom::AlbersSpec> proj =
                crs == agbd::Crs::geographic
                    ? std::optional<agbd::geom::AlbersSpec>(zonal_proj.spec)
                    : std::nullopt;
            const auto stats = agbd::zonal::zonal_stats(raster, zones, proj);
            std::ofstream out(zonal_out, std::ios::binary);
            if (!out) throw agbd::Error("cli", "cannot write '" + zonal_out + "'");
            agbd::pipeline::write_zonal_csv(stats, out);
            std::cout << stats.size() << " zones -> " << zonal_out << '\n';
            return 0;
        }
        if (estimate->parsed()) {
            std::ifstream pf(est_plots);
            if (!pf) throw agbd::Error("cli", "cannot open plots file '" + est_plots + "'");
            const auto plots = agbd::design::load_plots(pf);
            agbd::design::WeightTable weights;
            if (!est_weights.empty()) {
                std::ifstream wf(est_weights);
                if (!wf) throw agbd::Error("cli", "cannot open weights file '" + est_weights + "'");
                weights = agbd::design::load_weights(wf);
            }
            const auto estimates = agbd::pipeline::estimate_units(plots, weights);
            std::ofstream out(est_out, std::ios::binary);
            if (!out) throw agbd::Error("cli", "cannot write '" + est_out + "'");
            out << "unit_id,mean,var_of_mean,n_plots,method\n";
            for (const auto& e : estimates)
                out << e.unit_id << ',' << agbd::format_g9(e.mean) << ','
                    << agbd::format_g9(e.var_of_mean) << ',' << e.n_plots << ','
                    << agbd::pipeline::method_name(e.method) << '\n';
            std::cout << estimates.size() << " units -> " << est_out << '\n';
            return 0;
        }
        if (synth_cmd->parsed()) {
            if (synth_model == "constant") synth_cfg.model = agbd::synth::FieldModel::constant;
            else if (synth_model == "gradient") synth_cfg.model = agbd::synth::FieldModel::gradient;
            else if (synth_model == "lumpy") synth_cfg.model = agbd::synth::FieldModel::lumpy;
            else throw agbd::Error("cli", "model must be 'constant', 'gradient', or 'lumpy'");
            const auto outputs = agbd::pipeline::run_synth(synth_cfg, synth_zone_area_ha,
                                                           synth_proj.spec, synth_out_dir);
            std::cout << "wrote " << outputs.raster_path << '\n'
                      << "wrote " << outputs.plots_path << '\n'
                      << "wrote " << outputs.weights_path << '\n'
                      << "wrote " << outputs.zones_path << '\n'
                      << "wrote " << outputs.truth_path << '\n';
            return 0;
        }
        if (version->parsed()) {
            std::cout << VERSION << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
