#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "profl/federation.hpp"

namespace profl {

// Fixed, versioned column set; everything downstream parses against this.
extern const char* const kMetricsHeader;

// Shortest decimal form that round-trips the exact double.
std::string format_double(double v);

std::string csv_row(const RoundRecord& r);

void write_metrics_csv(const std::string& path, const std::vector<RoundRecord>& records);
std::vector<RoundRecord> read_metrics_csv(const std::string& path);

// Summary of one run; every number here can be recomputed from the CSV rows.
nlohmann::json summarize(const std::vector<RoundRecord>& records, RunMode mode);
nlohmann::json na_summary(RunMode mode, const std::string& reason);
void write_json(const std::string& path, const nlohmann::json& j);

struct CompareRow {
    std::string file;
    std::string mode;
    bool na = false;
    double final_accuracy = 0.0;
    std::uint64_t peak_memory_bytes = 0;
    double participation = 0.0;  // lowest phase participation of the run
    std::uint64_t uploaded_scalars = 0;
    std::uint64_t downloaded_scalars = 0;
    std::uint64_t flops = 0;
};

struct Comparison {
    std::vector<CompareRow> rows;
    std::string table;  // human-readable, deltas against the first row
    std::string csv;
};

// Reads summary JSON files (at least two) and lines them up against the
// first. Unreadable file -> IoError; summaries missing fields -> FormatError.
Comparison compare_summaries(const std::vector<std::string>& paths);

}  // namespace profl
