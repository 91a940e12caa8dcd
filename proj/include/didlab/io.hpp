#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "didlab/types.hpp"

namespace didlab {

// Shortest decimal form that parses back to the identical double (up to 17
// significant digits), so CSV round trips are lossless.
inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::invalid_argument("bad numeric field '" + s + "'");
    return v;
}

inline long parse_long(const std::string& s) {
    long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::invalid_argument("bad integer field '" + s + "'");
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline constexpr const char* kPanelCsvHeader = "unit,time,group,post,x,y";

inline std::string panel_to_csv(const PanelDataset& data) {
    std::string out = kPanelCsvHeader;
    out += "\n";
    for (const PanelRow& r : data.rows()) {
        out += std::to_string(r.unit_id);
        out += ",";
        out += std::to_string(r.time);
        out += ",";
        out += std::to_string(r.group);
        out += ",";
        out += std::to_string(r.post);
        out += ",";
        out += format_double(r.covariate);
        out += ",";
        out += format_double(r.outcome);
        out += "\n";
    }
    return out;
}

// Parses a panel CSV. The scenario id is not part of the wire format; the
// returned dataset carries a spec with sizes and first_post_time inferred
// from the data (first post time = smallest time with post = 1).
inline PanelDataset panel_from_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty panel CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kPanelCsvHeader)
        throw std::invalid_argument("panel CSV must start with header '" +
                                    std::string(kPanelCsvHeader) + "'");
    std::vector<PanelRow> rows;
    int max_time = 0;
    int first_post = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 6) throw std::invalid_argument("panel CSV row needs 6 fields: " + line);
        PanelRow r;
        r.unit_id = static_cast<int>(parse_long(f[0]));
        r.time = static_cast<int>(parse_long(f[1]));
        r.group = static_cast<int>(parse_long(f[2]));
        r.post = static_cast<int>(parse_long(f[3]));
        r.covariate = parse_double(f[4]);
        r.outcome = parse_double(f[5]);
        if (r.group != 0 && r.group != 1) throw std::invalid_argument("group must be 0/1");
        if (r.post != 0 && r.post != 1) throw std::invalid_argument("post must be 0/1");
        max_time = std::max(max_time, r.time);
        if (r.post == 1 && (first_post == 0 || r.time < first_post)) first_post = r.time;
        rows.push_back(r);
    }
    if (rows.empty()) throw std::invalid_argument("panel CSV has no data rows");
    if (first_post == 0) throw std::invalid_argument("panel CSV has no post-period rows");
    ScenarioSpec spec;
    spec.n_times = max_time;
    spec.first_post_time = first_post;
    spec.n_units = static_cast<int>(rows.size()) / max_time;
    return PanelDataset(std::move(rows), spec);
}

inline PanelDataset load_panel_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return panel_from_csv(in);
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

} // namespace didlab
