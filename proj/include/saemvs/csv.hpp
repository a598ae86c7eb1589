#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "saemvs/errors.hpp"
#include "saemvs/observations.hpp"

namespace saemvs {

/// Shortest-faithful decimal rendering, stable across runs.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open '" + path + "' for writing");
        path_ = path;
    }
    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << csv_escape(fields[i]);
        }
        out_ << "\r\n";
        if (!out_) throw IoError("write failed on '" + path_ + "'");
    }

private:
    std::ofstream out_;
    std::string path_;
};

/// RFC-4180-style reader: quoted fields, embedded commas/newlines, CRLF or LF.
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    auto end_field = [&] {
        row.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        if (field_started || !row.empty()) {
            end_field();
            rows.push_back(std::move(row));
            row.clear();
        }
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
            field_started = true;
        } else if (c == '\n') {
            end_row();
        } else if (c != '\r') {
            field += c;
            field_started = true;
        }
    }
    end_row();
    if (quoted) throw IoError("unterminated quoted field in '" + path + "'");
    return rows;
}

inline double parse_double(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IoError("cannot parse '" + s + "' as a number (" + context + ")");
    }
}

/// Longitudinal dataset: CSV with columns (individual_id, time, response);
/// individuals are kept in order of first appearance.
struct LoadedObservations {
    ObservationSet obs;
    std::vector<std::string> ids;
};

inline LoadedObservations load_observations(const std::string& path) {
    auto rows = read_csv(path);
    if (rows.size() < 2) throw IoError("dataset '" + path + "' has no data rows");
    const auto& header = rows[0];
    if (header.size() < 3 || header[0] != "individual_id" || header[1] != "time" ||
        header[2] != "response")
        throw IoError("dataset '" + path + "' must start with header individual_id,time,response");

    LoadedObservations out;
    std::map<std::string, std::size_t> index;
    std::vector<std::vector<double>> times, values;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() < 3)
            throw IoError("dataset '" + path + "' row " + std::to_string(r + 1) + " is short");
        const std::string& id = rows[r][0];
        auto [it, inserted] = index.try_emplace(id, out.ids.size());
        if (inserted) {
            out.ids.push_back(id);
            times.emplace_back();
            values.emplace_back();
        }
        times[it->second].push_back(parse_double(rows[r][1], "time"));
        values[it->second].push_back(parse_double(rows[r][2], "response"));
    }
    for (std::size_t i = 0; i < out.ids.size(); ++i) {
        out.obs.t.push_back(Eigen::Map<const Eigen::VectorXd>(times[i].data(),
                                                              static_cast<Eigen::Index>(times[i].size())));
        out.obs.y.push_back(Eigen::Map<const Eigen::VectorXd>(values[i].data(),
                                                              static_cast<Eigen::Index>(values[i].size())));
    }
    out.obs.validate();
    return out;
}

/// Covariates: one row per individual in dataset order, header = names.
/// Columns listed in `forced_names` form the forced block, in list order.
struct LoadedCovariates {
    Eigen::MatrixXd V;        // selectable, raw scale
    Eigen::MatrixXd forced;   // forced block, raw scale
    std::vector<std::string> names;
    std::vector<std::string> forced_names;
};

inline LoadedCovariates load_covariates(const std::string& path,
                                        const std::vector<std::string>& forced_names) {
    auto rows = read_csv(path);
    if (rows.size() < 2) throw IoError("covariate file '" + path + "' has no data rows");
    const auto& header = rows[0];
    const int n = static_cast<int>(rows.size()) - 1;
    const int width = static_cast<int>(header.size());

    std::vector<int> forced_col(forced_names.size(), -1);
    std::vector<bool> is_forced(static_cast<std::size_t>(width), false);
    for (std::size_t f = 0; f < forced_names.size(); ++f) {
        for (int c = 0; c < width; ++c)
            if (header[static_cast<std::size_t>(c)] == forced_names[f]) {
                forced_col[f] = c;
                is_forced[static_cast<std::size_t>(c)] = true;
                break;
            }
        if (forced_col[f] < 0)
            throw ConfigError("forced covariate '" + forced_names[f] + "' not found in '" + path +
                              "'");
    }

    LoadedCovariates out;
    out.forced_names = forced_names;
    std::vector<int> select_col;
    for (int c = 0; c < width; ++c)
        if (!is_forced[static_cast<std::size_t>(c)]) {
            select_col.push_back(c);
            out.names.push_back(header[static_cast<std::size_t>(c)]);
        }

    out.V.resize(n, static_cast<int>(select_col.size()));
    out.forced.resize(n, static_cast<int>(forced_col.size()));
    for (int i = 0; i < n; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i) + 1];
        if (static_cast<int>(row.size()) != width)
            throw IoError("covariate file '" + path + "' row " + std::to_string(i + 2) +
                          " has " + std::to_string(row.size()) + " fields, expected " +
                          std::to_string(width));
        for (std::size_t j = 0; j < select_col.size(); ++j)
            out.V(i, static_cast<int>(j)) =
                parse_double(row[static_cast<std::size_t>(select_col[j])], "covariate");
        for (std::size_t f = 0; f < forced_col.size(); ++f)
            out.forced(i, static_cast<int>(f)) =
                parse_double(row[static_cast<std::size_t>(forced_col[f])], "forced covariate");
    }
    return out;
}

} // namespace saemvs
