#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "edgellm/metrics.hpp"

namespace edgellm {

/// Column order of records.csv. started_at is last so replay comparisons can
/// drop it and diff the rest byte-for-byte.
inline constexpr std::string_view kRecordsCsvHeader =
    "model,conversation_id,turn_index,repetition,prompt_tokens,generated_tokens,"
    "prefill_ms,decode_ms,total_ms,prefill_tps,decode_tps,finish_reason,started_at";

/// One CSV row (no trailing newline). Empty throughput cells mean "no sample".
std::string record_to_csv_row(const RunRecord& r);

void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records);

/// Reads a records.csv. Throws DatasetSyntax with the line number on bad
/// rows, including rows whose throughput does not match their timing.
std::vector<RunRecord> read_records_csv(std::istream& in);
std::vector<RunRecord> read_records_csv_file(const std::string& path);

/// RFC 4180 quoting of a single cell.
std::string csv_escape(std::string_view cell);
std::vector<std::string> csv_split_row(std::string_view line);

}  // namespace edgellm
