#pragma once

#include <filesystem>
#include <iosfwd>
#include <string_view>

#include "stimulheat/metrics.hpp"
#include "stimulheat/protocol.hpp"

namespace stimulheat {

inline constexpr std::string_view kTraceHeader =
    "time_s,t_abs_c,t_emit_c,t_skin_c,current_a,heat_w,setpoint,mode,saturated,battery_pct";

enum class TraceFormat { Csv, Jsonl };

/// Numbers are printed in their shortest round-trip form, so reading a
/// written trace gives back the same doubles.
void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const TraceRecord& record);
void write_csv(std::ostream& out, const Trace& trace);

void write_jsonl_row(std::ostream& out, const TraceRecord& record);
void write_jsonl(std::ostream& out, const Trace& trace);

/// Columns are matched by header name; extra columns are ignored. Throws
/// TraceError naming the missing column or the offending line.
[[nodiscard]] Trace read_csv(std::istream& in);
[[nodiscard]] Trace read_jsonl(std::istream& in);

/// Picks the format from the extension (.jsonl, anything else is CSV).
/// File errors are reported with the path.
void save_trace(const std::filesystem::path& path, const Trace& trace, TraceFormat format);
[[nodiscard]] Trace load_trace(const std::filesystem::path& path);
[[nodiscard]] TraceFormat format_for(const std::filesystem::path& path);

/// Converts a telemetry frame into a trace row, undoing the fixed-point scaling.
[[nodiscard]] TraceRecord from_telemetry(const protocol::Telemetry& telemetry);

}  // namespace stimulheat
