#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fpsolve/errors.hpp"
#include "fpsolve/grid.hpp"
#include "fpsolve/mlp.hpp"
#include "fpsolve/sampler.hpp"

namespace fpsolve {
namespace csv {

/// Shortest round-trip decimal for a double (full 64-bit precision).
inline std::string format(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // LF line endings everywhere
    if (!out) throw config_error("cannot open '" + path + "' for writing");
    return out;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open '" + path + "' for reading");
    return in;
}

/// Key/value metadata written as '#'-prefixed comment lines.
using Metadata = std::vector<std::pair<std::string, std::string>>;

inline void write_metadata(std::ofstream& out, const Metadata& meta) {
    for (const auto& [k, v] : meta) out << "# " << k << "," << v << "\n";
}

/// One row per point, columns x1..xn then the density value. Missing values
/// are written as empty fields.
inline void write_reference(const std::string& path, const ReferenceSet& ref,
                            const Metadata& meta) {
    ref.check();
    auto out = open_out(path);
    write_metadata(out, meta);
    const int n = ref.points.empty() ? 0 : static_cast<int>(ref.points.front().size());
    for (int i = 0; i < n; ++i) out << "x" << (i + 1) << ",";
    out << "value\n";
    for (std::size_t j = 0; j < ref.points.size(); ++j) {
        for (int i = 0; i < n; ++i) out << format(ref.points[j][i]) << ",";
        if (ref.has_densities() && !is_missing(ref.densities[j])) out << format(ref.densities[j]);
        out << "\n";
    }
}

inline ReferenceSet read_reference(const std::string& path) {
    auto in = open_in(path);
    ReferenceSet ref;
    std::string line;
    int columns = -1;
    bool any_value = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (columns < 0) {
            // header row: count fields, last one is "value"
            columns = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        // a trailing empty value field is dropped by getline: restore it
        while (static_cast<int>(fields.size()) < columns) fields.push_back("");
        if (static_cast<int>(fields.size()) != columns)
            throw config_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(columns) + " fields");
        const int n = columns - 1;
        Vec x(n);
        for (int i = 0; i < n; ++i) {
            try {
                x[i] = std::stod(fields[i]);
            } catch (const std::exception&) {
                throw config_error(path + ":" + std::to_string(line_no) + ": bad number '" +
                                   fields[i] + "'");
            }
        }
        ref.points.push_back(std::move(x));
        if (fields[n].empty()) {
            ref.densities.push_back(missing_density());
        } else {
            ref.densities.push_back(std::stod(fields[n]));
            any_value = true;
        }
    }
    if (!any_value) ref.densities.clear();  // a pure point file
    return ref;
}

/// Grid field as one row per node (row-major), columns x1..xn,value, with the
/// grid geometry in the metadata comments.
inline void write_grid(const std::string& path, const DensityField& field, Metadata meta) {
    const GridSpec& g = field.grid;
    meta.emplace_back("n", std::to_string(g.dim()));
    meta.emplace_back("points_per_axis", std::to_string(g.points_per_axis()));
    for (int i = 0; i < g.dim(); ++i) {
        meta.emplace_back("axis" + std::to_string(i + 1),
                          format(g.domain().lower(i)) + "," + format(g.domain().upper(i)));
    }
    auto out = open_out(path);
    write_metadata(out, meta);
    for (int i = 0; i < g.dim(); ++i) out << "x" << (i + 1) << ",";
    out << "value\n";
    MultiIndexRange all(g.dim(), 0, g.points_per_axis());
    all.for_each([&](const std::vector<int>& idx) {
        const Vec x = g.node(idx);
        for (int i = 0; i < g.dim(); ++i) out << format(x[i]) << ",";
        out << format(field.values[g.flat_index(idx)]) << "\n";
    });
}

/// Two-column curve (e.g. h,Q or h,ratio or iter,L1,L2).
inline void write_rows(const std::string& path, const Metadata& meta,
                       const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& rows) {
    auto out = open_out(path);
    write_metadata(out, meta);
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format(row[i]);
        out << "\n";
    }
}

/// Network checkpoint: layer sizes, the rescaling factor, then per layer the
/// weight matrix row by row and the bias vector.
inline void write_checkpoint(const std::string& path, const MlpParams& p, double target_scale) {
    auto out = open_out(path);
    out << "# fpsolve mlp checkpoint\n";
    out << "layers";
    for (int s : p.layer_sizes) out << "," << s;
    out << "\n";
    out << "target_scale," << format(target_scale) << "\n";
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
        out << "W," << l << "\n";
        for (Eigen::Index r = 0; r < p.weights[l].rows(); ++r) {
            for (Eigen::Index c = 0; c < p.weights[l].cols(); ++c)
                out << (c ? "," : "") << format(p.weights[l](r, c));
            out << "\n";
        }
        out << "b," << l << "\n";
        for (Eigen::Index r = 0; r < p.biases[l].size(); ++r)
            out << (r ? "," : "") << format(p.biases[l][r]);
        out << "\n";
    }
}

inline std::pair<MlpParams, double> read_checkpoint(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    auto next_data_line = [&](std::string& out_line) {
        while (std::getline(in, out_line)) {
            if (!out_line.empty() && out_line[0] != '#') return true;
        }
        return false;
    };
    auto split = [](const std::string& s) {
        std::vector<std::string> fields;
        std::stringstream ss(s);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        return fields;
    };

    if (!next_data_line(line)) throw config_error(path + ": missing layers line");
    auto fields = split(line);
    if (fields.empty() || fields[0] != "layers") throw config_error(path + ": expected 'layers'");
    MlpParams p;
    for (std::size_t i = 1; i < fields.size(); ++i) p.layer_sizes.push_back(std::stoi(fields[i]));
    if (p.layer_sizes.size() < 2) throw config_error(path + ": bad layer sizes");

    if (!next_data_line(line)) throw config_error(path + ": missing target_scale");
    fields = split(line);
    if (fields.size() != 2 || fields[0] != "target_scale")
        throw config_error(path + ": expected 'target_scale'");
    const double scale = std::stod(fields[1]);

    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
        if (!next_data_line(line) || split(line) != std::vector<std::string>{"W", std::to_string(l)})
            throw config_error(path + ": expected 'W," + std::to_string(l) + "'");
        Mat w(p.layer_sizes[l + 1], p.layer_sizes[l]);
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            if (!next_data_line(line)) throw config_error(path + ": truncated weight matrix");
            auto row = split(line);
            if (static_cast<Eigen::Index>(row.size()) != w.cols())
                throw config_error(path + ": weight row has wrong width");
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = std::stod(row[c]);
        }
        p.weights.push_back(std::move(w));
        if (!next_data_line(line) || split(line) != std::vector<std::string>{"b", std::to_string(l)})
            throw config_error(path + ": expected 'b," + std::to_string(l) + "'");
        if (!next_data_line(line)) throw config_error(path + ": truncated bias vector");
        auto row = split(line);
        if (static_cast<Eigen::Index>(row.size()) != p.layer_sizes[l + 1])
            throw config_error(path + ": bias row has wrong width");
        Vec b(row.size());
        for (std::size_t i = 0; i < row.size(); ++i) b[i] = std::stod(row[i]);
        p.biases.push_back(std::move(b));
    }
    return {std::move(p), scale};
}

}  // namespace csv
}  // namespace fpsolve
