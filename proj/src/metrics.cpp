#include "profl/metrics.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "profl/errors.hpp"

namespace profl {

const char* const kMetricsHeader =
    "round,stage,step,train_loss,test_accuracy,em,freeze,peak_memory_bytes,participation,"
    "uploaded_scalars,downloaded_scalars,flops";

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw ValueError("format_double: value does not fit");
    return std::string(buf, ptr);
}

std::string csv_row(const RoundRecord& r) {
    std::string out;
    out += std::to_string(r.round);
    out += ',';
    out += r.stage;
    out += ',';
    out += std::to_string(r.step);
    out += ',';
    out += format_double(r.train_loss);
    out += ',';
    out += format_double(r.test_accuracy);
    out += ',';
    if (r.em.has_value()) out += format_double(*r.em);
    out += ',';
    out += std::to_string(r.freeze);
    out += ',';
    out += std::to_string(r.peak_memory_bytes);
    out += ',';
    out += format_double(r.participation);
    out += ',';
    out += std::to_string(r.uploaded_scalars);
    out += ',';
    out += std::to_string(r.downloaded_scalars);
    out += ',';
    out += std::to_string(r.flops);
    return out;
}

void write_metrics_csv(const std::string& path, const std::vector<RoundRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write metrics file '" + path + "'");
    out << kMetricsHeader << '\n';
    for (const RoundRecord& r : records) out << csv_row(r) << '\n';
    if (!out) throw IoError("short write to metrics file '" + path + "'");
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::uint64_t field_u64(const std::string& v, const char* name) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw FormatError(std::string("metrics: bad ") + name + " value '" + v + "'");
    }
    return out;
}

double field_double(const std::string& v, const char* name) {
    try {
        std::size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return out;
    } catch (const std::exception&) {
        throw FormatError(std::string("metrics: bad ") + name + " value '" + v + "'");
    }
}

}  // namespace

std::vector<RoundRecord> read_metrics_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open metrics file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw FormatError("metrics: empty file '" + path + "'");
    if (line == std::string(kMetricsHeader) + "\r") line.pop_back();
    if (line != kMetricsHeader) throw FormatError("metrics: unexpected header in '" + path + "'");

    std::vector<RoundRecord> records;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f = split_fields(line);
        if (f.size() != 12) {
            throw FormatError("metrics: expected 12 fields, got " + std::to_string(f.size()));
        }
        RoundRecord r;
        r.round = field_u64(f[0], "round");
        r.stage = f[1];
        r.step = field_u64(f[2], "step");
        r.train_loss = field_double(f[3], "train_loss");
        r.test_accuracy = field_double(f[4], "test_accuracy");
        if (!f[5].empty()) r.em = field_double(f[5], "em");
        r.freeze = static_cast<int>(field_u64(f[6], "freeze"));
        r.peak_memory_bytes = field_u64(f[7], "peak_memory_bytes");
        r.participation = field_double(f[8], "participation");
        r.uploaded_scalars = field_u64(f[9], "uploaded_scalars");
        r.downloaded_scalars = field_u64(f[10], "downloaded_scalars");
        r.flops = field_u64(f[11], "flops");
        records.push_back(std::move(r));
    }
    return records;
}

nlohmann::json summarize(const std::vector<RoundRecord>& records, RunMode mode) {
    nlohmann::json j;
    j["mode"] = mode_name(mode);
    j["na"] = false;
    j["rounds"] = records.size();
    j["final_accuracy"] = records.empty() ? 0.0 : records.back().test_accuracy;
    j["final_train_loss"] = records.empty() ? 0.0 : records.back().train_loss;

    std::uint64_t up = 0, down = 0, flops = 0;
    for (const RoundRecord& r : records) {
        up += r.uploaded_scalars;
        down += r.downloaded_scalars;
        flops += r.flops;
    }
    j["total_uploaded_scalars"] = up;
    j["total_downloaded_scalars"] = down;
    j["total_flops"] = flops;

    nlohmann::json phases = nlohmann::json::array();
    for (std::size_t i = 0; i < records.size();) {
        const std::string& stage = records[i].stage;
        const std::size_t step = records[i].step;
        std::uint64_t peak = 0;
        double participation = 0.0;
        std::size_t rounds = 0;
        int freeze = 0;
        while (i < records.size() && records[i].stage == stage && records[i].step == step) {
            peak = std::max(peak, records[i].peak_memory_bytes);
            participation = std::max(participation, records[i].participation);
            freeze = records[i].freeze;
            ++rounds;
            ++i;
        }
        phases.push_back({{"stage", stage},
                          {"step", step},
                          {"rounds", rounds},
                          {"peak_memory_bytes", peak},
                          {"participation", participation},
                          {"freeze", freeze}});
    }
    j["phases"] = std::move(phases);
    return j;
}

nlohmann::json na_summary(RunMode mode, const std::string& reason) {
    nlohmann::json j;
    j["mode"] = mode_name(mode);
    j["na"] = true;
    j["reason"] = reason;
    j["rounds"] = 0;
    j["phases"] = nlohmann::json::array();
    return j;
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write json file '" + path + "'");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("short write to json file '" + path + "'");
}

namespace {

CompareRow load_compare_row(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open summary file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("summary '" + path + "' is not valid json: " + e.what());
    }

    CompareRow row;
    row.file = path;
    try {
        row.mode = j.at("mode").get<std::string>();
        row.na = j.at("na").get<bool>();
        if (!row.na) {
            row.final_accuracy = j.at("final_accuracy").get<double>();
            row.uploaded_scalars = j.at("total_uploaded_scalars").get<std::uint64_t>();
            row.downloaded_scalars = j.at("total_downloaded_scalars").get<std::uint64_t>();
            row.flops = j.at("total_flops").get<std::uint64_t>();
            bool first = true;
            for (const auto& phase : j.at("phases")) {
                row.peak_memory_bytes = std::max(
                    row.peak_memory_bytes, phase.at("peak_memory_bytes").get<std::uint64_t>());
                const double p = phase.at("participation").get<double>();
                row.participation = first ? p : std::min(row.participation, p);
                first = false;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("summary '" + path + "' does not match the expected schema: " +
                          e.what());
    }
    return row;
}

void append_csv_value(std::string& csv, const std::string& v, bool last = false) {
    csv += v;
    csv += last ? '\n' : ',';
}

}  // namespace

Comparison compare_summaries(const std::vector<std::string>& paths) {
    if (paths.size() < 2) throw ValueError("compare: need at least two summary files");

    Comparison cmp;
    for (const std::string& p : paths) cmp.rows.push_back(load_compare_row(p));
    const CompareRow& base = cmp.rows.front();

    std::ostringstream table;
    char line[512];
    std::snprintf(line, sizeof(line), "%-10s %-3s %12s %16s %14s %16s %18s %16s  %s\n", "mode",
                  "na", "final_acc", "peak_mem_bytes", "participation", "uploaded", "downloaded",
                  "flops", "file");
    table << line;
    for (const CompareRow& r : cmp.rows) {
        std::snprintf(line, sizeof(line), "%-10s %-3s %12.4f %16llu %14.4f %16llu %18llu %16llu  %s\n",
                      r.mode.c_str(), r.na ? "yes" : "no", r.final_accuracy,
                      static_cast<unsigned long long>(r.peak_memory_bytes), r.participation,
                      static_cast<unsigned long long>(r.uploaded_scalars),
                      static_cast<unsigned long long>(r.downloaded_scalars),
                      static_cast<unsigned long long>(r.flops), r.file.c_str());
        table << line;
    }
    table << "\ndeltas against " << base.file << ":\n";
    for (std::size_t i = 1; i < cmp.rows.size(); ++i) {
        const CompareRow& r = cmp.rows[i];
        std::snprintf(line, sizeof(line),
                      "%-10s     %+12.4f %+16.0f %+14.4f %+16.0f %+18.0f %+16.0f  %s\n",
                      r.mode.c_str(), r.final_accuracy - base.final_accuracy,
                      static_cast<double>(r.peak_memory_bytes) -
                          static_cast<double>(base.peak_memory_bytes),
                      r.participation - base.participation,
                      static_cast<double>(r.uploaded_scalars) -
                          static_cast<double>(base.uploaded_scalars),
                      static_cast<double>(r.downloaded_scalars) -
                          static_cast<double>(base.downloaded_scalars),
                      static_cast<double>(r.flops) - static_cast<double>(base.flops),
                      r.file.c_str());
        table << line;
    }
    cmp.table = table.str();

    std::string csv =
        "file,mode,na,final_accuracy,peak_memory_bytes,participation,uploaded_scalars,"
        "downloaded_scalars,flops,d_final_accuracy,d_peak_memory_bytes,d_participation,"
        "d_uploaded_scalars,d_downloaded_scalars,d_flops\n";
    for (const CompareRow& r : cmp.rows) {
        append_csv_value(csv, r.file);
        append_csv_value(csv, r.mode);
        append_csv_value(csv, r.na ? "true" : "false");
        append_csv_value(csv, format_double(r.final_accuracy));
        append_csv_value(csv, std::to_string(r.peak_memory_bytes));
        append_csv_value(csv, format_double(r.participation));
        append_csv_value(csv, std::to_string(r.uploaded_scalars));
        append_csv_value(csv, std::to_string(r.downloaded_scalars));
        append_csv_value(csv, std::to_string(r.flops));
        append_csv_value(csv, format_double(r.final_accuracy - base.final_accuracy));
        append_csv_value(csv, format_double(static_cast<double>(r.peak_memory_bytes) -
                                            static_cast<double>(base.peak_memory_bytes)));
        append_csv_value(csv, format_double(r.participation - base.participation));
        append_csv_value(csv, format_double(static_cast<double>(r.uploaded_scalars) -
                                            static_cast<double>(base.uploaded_scalars)));
        append_csv_value(csv, format_double(static_cast<double>(r.downloaded_scalars) -
                                            static_cast<double>(base.downloaded_scalars)));
        append_csv_value(csv, format_double(static_cast<double>(r.flops) -
                                            static_cast<double>(base.flops)),
                         true);
    }
    cmp.csv = std::move(csv);
    return cmp;
}

}  // namespace profl
