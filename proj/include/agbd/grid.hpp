#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "agbd/csv.hpp"
#include "agbd/error.hpp"
#include "agbd/numeric.hpp"
#include "agbd/point.hpp"
#include "agbd/rng.hpp"

#include "json.hpp"

namespace agbd::grid {

// Square-cell georeferencing of a row-major raster. Row 0 is the TOP
// (northernmost) row, matching ASCII-grid file order; (x_ll, y_ll) is the
// lower-left corner of the grid extent.
struct GridTransform {
    double x_ll = 0.0;
    double y_ll = 0.0;
    double cell = 1.0;
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;

    bool operator==(const GridTransform&) const = default;
};

struct Raster {
    GridTransform transform;
    std::vector<double> values;  // row-major, top row first
    double nodata = -9999.0;
    Crs crs = Crs::planar;

    std::size_t size() const { return transform.n_rows * transform.n_cols; }

    double at(std::size_t row, std::size_t col) const {
        return values[row * transform.n_cols + col];
    }

    // Missing cells are matched by exact sentinel equality, never by
    // arithmetic comparison.
    bool is_nodata(double v) const { return v == nodata; }

    std::size_t nodata_count() const {
        return static_cast<std::size_t>(std::count(values.begin(), values.end(), nodata));
    }
};

// Planar (or geographic) coordinates of a cell center.
inline geom::Point pixel_center(const GridTransform& t, std::size_t row, std::size_t col) {
    if (row >= t.n_rows || col >= t.n_cols)
        throw Error("grid", "pixel index (" + std::to_string(row) + ", " + std::to_string(col) +
                                ") outside " + std::to_string(t.n_rows) + "x" +
                                std::to_string(t.n_cols) + " grid");
    return {t.x_ll + (static_cast<double>(col) + 0.5) * t.cell,
            t.y_ll + (static_cast<double>(t.n_rows - row) - 0.5) * t.cell};
}

namespace detail {

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline double header_value(std::istream& in, const char* keyword, int line_no) {
    std::string line;
    if (!std::getline(in, line))
        throw Error("grid", "line " + std::to_string(line_no) + ": missing '" +
                                std::string(keyword) + "' header line");
    std::istringstream ls(line);
    std::string word, value_token, extra;
    if (!(ls >> word >> value_token) || (ls >> extra))
        throw Error("grid", "line " + std::to_string(line_no) + ": malformed header line '" +
                                line + "'");
    if (lower(word) != lower(keyword))
        throw Error("grid", "line " + std::to_string(line_no) + ": expected '" +
                                std::string(keyword) + "', got '" + word + "'");
    double v = 0.0;
    if (!try_parse_double(value_token, v))
        throw Error("grid", "line " + std::to_string(line_no) + ": non-numeric value '" +
                                value_token + "' for '" + std::string(keyword) + "'");
    return v;
}

inline void check_cell_value(double v, double nodata, std::size_t row_1based) {
    if (!std::isfinite(v))
        throw Error("grid", "row " + std::to_string(row_1based) + ": non-finite cell value");
    if (v != nodata && v < 0.0)
        throw Error("grid", "row " + std::to_string(row_1based) + ": negative value " +
                                format_g9(v) + " (AGBD is a density, must be >= 0)");
}

}  // namespace detail

// ESRI ASCII Grid reader. The stream must start with the six header lines
// ncols, nrows, xllcorner, yllcorner, cellsize, NODATA_value (keywords
// case-insensitive, fixed order), followed by n_rows lines of n_cols
// whitespace-separated cell values, top row first. NaN and negative
// non-nodata cells are rejected; the sentinel is the single missing-value
// representation.
inline Raster read_ascii_grid(std::istream& in, Crs crs = Crs::planar) {
    Raster r;
    r.crs = crs;

    const double ncols_v = detail::header_value(in, "ncols", 1);
    const double nrows_v = detail::header_value(in, "nrows", 2);
    if (ncols_v < 1 || nrows_v < 1 || ncols_v != std::floor(ncols_v) || nrows_v != std::floor(nrows_v))
        throw Error("grid", "line 1: ncols/nrows must be positive integers");
    r.transform.n_cols = static_cast<std::size_t>(ncols_v);
    r.transform.n_rows = static_cast<std::size_t>(nrows_v);
    r.transform.x_ll = detail::header_value(in, "xllcorner", 3);
    r.transform.y_ll = detail::header_value(in, "yllcorner", 4);
    r.transform.cell = detail::header_value(in, "cellsize", 5);
    if (!(r.transform.cell > 0.0)) throw Error("grid", "line 5: cellsize must be > 0");
    r.nodata = detail::header_value(in, "NODATA_value", 6);

    r.values.reserve(r.size());
    std::string line;
    std::size_t row = 0;
    int line_no = 6;
    while (row < r.transform.n_rows) {
        if (!std::getline(in, line))
            throw Error("grid", "row " + std::to_string(row + 1) + ": expected " +
                                    std::to_string(r.transform.n_cols) + " values, got 0 (stream ended)");
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;  // blank line

        std::size_t count = 0;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (p != end) {
            while (p != end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
            if (p == end) break;
            const char* tok = p;
            while (p != end && *p != ' ' && *p != '\t' && *p != '\r') ++p;
            double v = 0.0;
            if (!try_parse_double({tok, static_cast<std::size_t>(p - tok)}, v))
                throw Error("grid", "line " + std::to_string(line_no) + ": non-numeric token '" +
                                        std::string(tok, p) + "'");
            detail::check_cell_value(v, r.nodata, row + 1);
            if (count >= r.transform.n_cols) ++count;  // overflow detected below
            else {
                r.values.push_back(v);
                ++count;
            }
        }
        if (count != r.transform.n_cols)
            throw Error("grid", "row " + std::to_string(row + 1) + ": expected " +
                                    std::to_string(r.transform.n_cols) + " values, got " +
                                    std::to_string(count));
        ++row;
    }
    return r;
}

inline void write_ascii_grid(const Raster& r, std::ostream& out) {
    out << "ncols " << r.transform.n_cols << '\n';
    out << "nrows " << r.transform.n_rows << '\n';
    out << "xllcorner " << format_g9(r.transform.x_ll) << '\n';
    out << "yllcorner " << format_g9(r.transform.y_ll) << '\n';
    out << "cellsize " << format_g9(r.transform.cell) << '\n';
    out << "NODATA_value " << format_g9(r.nodata) << '\n';
    for (std::size_t row = 0; row < r.transform.n_rows; ++row) {
        for (std::size_t col = 0; col < r.transform.n_cols; ++col) {
            if (col) out << ' ';
            out << format_g9(r.at(row, col));
        }
        out << '\n';
    }
}

// Binary sibling for large tests: one line of JSON carrying the same six
// header fields, then n_rows x n_cols little-endian IEEE float32 values in
// row-major order. Lossy relative to the double-precision in-memory raster.
inline void write_binary_grid(const Raster& r, std::ostream& out) {
    nlohmann::json header = {
        {"ncols", r.transform.n_cols},     {"nrows", r.transform.n_rows},
        {"xllcorner", r.transform.x_ll},   {"yllcorner", r.transform.y_ll},
        {"cellsize", r.transform.cell},    {"nodata_value", r.nodata},
    };
    out << header.dump() << '\n';
    std::vector<float> buf(r.values.begin(), r.values.end());
    if constexpr (std::endian::native == std::endian::big) {
        for (float& f : buf) {
            auto u = std::bit_cast<std::uint32_t>(f);
            u = ((u & 0xffu) << 24) | ((u & 0xff00u) << 8) | ((u >> 8) & 0xff00u) | (u >> 24);
            f = std::bit_cast<float>(u);
        }
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

inline Raster read_binary_grid(std::istream& in, Crs crs = Crs::planar) {
    std::string header_line;
    if (!std::getline(in, header_line)) throw Error("grid", "binary grid: missing JSON header line");
    nlohmann::json header = nlohmann::json::parse(header_line, nullptr, false);
    if (header.is_discarded() || !header.is_object())
        throw Error("grid", "binary grid: malformed JSON header");
    for (const char* key : {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"})
        if (!header.contains(key) || !header[key].is_number())
            throw Error("grid", std::string("binary grid: header missing numeric '") + key + "'");

    Raster r;
    r.crs = crs;
    r.transform.n_cols = header["ncols"].get<std::size_t>();
    r.transform.n_rows = header["nrows"].get<std::size_t>();
    r.transform.x_ll = header["xllcorner"].get<double>();
    r.transform.y_ll = header["yllcorner"].get<double>();
    r.transform.cell = header["cellsize"].get<double>();
    r.nodata = header["nodata_value"].get<double>();
    if (r.transform.n_rows < 1 || r.transform.n_cols < 1 || !(r.transform.cell > 0.0))
        throw Error("grid", "binary grid: invalid dimensions in header");

    const float nodata_f = static_cast<float>(r.nodata);
    std::vector<float> buf(r.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != buf.size() * sizeof(float))
        throw Error("grid", "binary grid: truncated value block");
    if constexpr (std::endian::native == std::endian::big) {
        for (float& f : buf) {
            auto u = std::bit_cast<std::uint32_t>(f);
            u = ((u & 0xffu) << 24) | ((u & 0xff00u) << 8) | ((u >> 8) & 0xff00u) | (u >> 24);
            f = std::bit_cast<float>(u);
        }
    }
    r.values.resize(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        // Map the float-precision sentinel back onto the header sentinel so
        // exact-match nodata semantics survive the narrowing.
        r.values[i] = (buf[i] == nodata_f) ? r.nodata : static_cast<double>(buf[i]);
        const std::size_t row_1based = i / r.transform.n_cols + 1;
        detail::check_cell_value(r.values[i], r.nodata, row_1based);
    }
    return r;
}

inline Raster read_grid_file(const std::string& path, Crs crs = Crs::planar) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("grid", "cannot open raster file '" + path + "'");
    const bool binary = path.size() > 4 && path.compare(path.size() - 4, 4, ".bin") == 0;
    return binary ? read_binary_grid(in, crs) : read_ascii_grid(in, crs);
}

inline void write_grid_file(const Raster& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("grid", "cannot open '" + path + "' for writing");
    const bool binary = path.size() > 4 && path.compare(path.size() - 4, 4, ".bin") == 0;
    if (binary) write_binary_grid(r, out);
    else write_ascii_grid(r, out);
}

// Water masking: cells whose inundation frequency strictly exceeds the
// threshold become nodata. Frequencies must share the AGBD grid exactly and
// lie in [0, 1] (or be nodata, which leaves the AGBD cell untouched).
// Idempotent; never un-masks.
inline Raster apply_inundation_mask(const Raster& agbd, const Raster& freq, double threshold = 0.5) {
    if (!(agbd.transform == freq.transform))
        throw Error("grid", "transform mismatch between AGBD and inundation rasters");
    Raster out = agbd;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const double f = freq.values[i];
        if (freq.is_nodata(f)) continue;
        if (f < 0.0 || f > 1.0)
            throw Error("grid", "inundation frequency " + format_g9(f) + " outside [0, 1] at cell " +
                                    std::to_string(i));
        if (f > threshold) out.values[i] = out.nodata;
    }
    return out;
}

// One uniformly random valid cell per window x window block, blocks anchored
// at (row 0, col 0) with ragged edge blocks included, emitted in row-major
// block order. All-nodata blocks emit nothing. Deterministic per seed.
inline std::vector<double> subsample_windows(const Raster& r, std::size_t window,
                                             std::uint64_t seed) {
    if (window < 1) throw Error("grid", "subsample window must be >= 1");
    std::vector<double> out;
    if (r.size() == 0) return out;
    const std::size_t block_rows = (r.transform.n_rows + window - 1) / window;
    const std::size_t block_cols = (r.transform.n_cols + window - 1) / window;
    const Rng rng(seed, Rng::hash_string("grid.subsample_windows"));

    std::vector<double> valid;
    for (std::size_t br = 0; br < block_rows; ++br) {
        for (std::size_t bc = 0; bc < block_cols; ++bc) {
            valid.clear();
            const std::size_t row_end = std::min(r.transform.n_rows, (br + 1) * window);
            const std::size_t col_end = std::min(r.transform.n_cols, (bc + 1) * window);
            for (std::size_t row = br * window; row < row_end; ++row)
                for (std::size_t col = bc * window; col < col_end; ++col) {
                    const double v = r.at(row, col);
                    if (!r.is_nodata(v)) valid.push_back(v);
                }
            if (valid.empty()) continue;
            const std::uint64_t block_index = br * block_cols + bc;
            out.push_back(valid[rng.below(valid.size(), block_index)]);
        }
    }
    return out;
}

}  // namespace agbd::grid
