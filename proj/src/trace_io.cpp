#include "stimulheat/trace_io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

namespace stimulheat {

namespace {

constexpr std::array<std::string_view, 10> kColumns = {
    "time_s", "t_abs_c", "t_emit_c", "t_skin_c", "current_a",
    "heat_w", "setpoint", "mode", "saturated", "battery_pct"};

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

double parse_double(std::string_view text, std::size_t line, std::string_view column) {
  text = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw TraceError(fmt::format("line {}: column {} is not a number: '{}'", line, column, text));
  }
  return value;
}

ControlMode parse_mode_field(std::string_view text, std::size_t line) {
  const auto mode = parse_mode(trim(text));
  if (!mode) throw TraceError(fmt::format("line {}: unknown mode '{}'", line, text));
  return *mode;
}

bool parse_flag(std::string_view text, std::size_t line) {
  text = trim(text);
  if (text == "0") return false;
  if (text == "1") return true;
  throw TraceError(fmt::format("line {}: saturated must be 0 or 1, got '{}'", line, text));
}

nlohmann::ordered_json to_json(const TraceRecord& r) {
  nlohmann::ordered_json j;
  j["time_s"] = r.time_s;
  j["t_abs_c"] = r.t_abs_c;
  j["t_emit_c"] = r.t_emit_c;
  j["t_skin_c"] = r.t_skin_c;
  j["current_a"] = r.current_a;
  j["heat_w"] = r.heat_w;
  j["setpoint"] = r.setpoint;
  j["mode"] = to_string(r.mode);
  j["saturated"] = r.saturated ? 1 : 0;
  j["battery_pct"] = r.battery_pct;
  return j;
}

}  // namespace

void write_csv_header(std::ostream& out) { out << kTraceHeader << '\n'; }

void write_csv_row(std::ostream& out, const TraceRecord& r) {
  fmt::print(out, "{},{},{},{},{},{},{},{},{},{}\n", r.time_s, r.t_abs_c, r.t_emit_c, r.t_skin_c,
             r.current_a, r.heat_w, r.setpoint, to_string(r.mode), r.saturated ? 1 : 0, r.battery_pct);
}

void write_csv(std::ostream& out, const Trace& trace) {
  write_csv_header(out);
  for (const TraceRecord& r : trace) write_csv_row(out, r);
}

void write_jsonl_row(std::ostream& out, const TraceRecord& record) {
  out << to_json(record).dump() << '\n';
}

void write_jsonl(std::ostream& out, const Trace& trace) {
  for (const TraceRecord& r : trace) write_jsonl_row(out, r);
}

Trace read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw TraceError("trace is empty");

  std::array<std::size_t, kColumns.size()> index{};
  const auto header = split(line);
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    std::size_t found = header.size();
    for (std::size_t h = 0; h < header.size(); ++h) {
      if (trim(header[h]) == kColumns[c]) found = h;
    }
    if (found == header.size()) throw TraceError(fmt::format("missing column '{}'", kColumns[c]));
    index[c] = found;
  }

  Trace trace;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) {
      throw TraceError(fmt::format("line {}: expected {} fields, got {}", line_no, header.size(), f.size()));
    }
    auto num = [&](std::size_t c) { return parse_double(f[index[c]], line_no, kColumns[c]); };
    TraceRecord r;
    r.time_s = num(0);
    r.t_abs_c = num(1);
    r.t_emit_c = num(2);
    r.t_skin_c = num(3);
    r.current_a = num(4);
    r.heat_w = num(5);
    r.setpoint = num(6);
    r.mode = parse_mode_field(f[index[7]], line_no);
    r.saturated = parse_flag(f[index[8]], line_no);
    r.battery_pct = num(9);
    trace.push_back(r);
  }
  return trace;
}

Trace read_jsonl(std::istream& in) {
  Trace trace;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      for (auto column : kColumns) {
        if (!j.contains(column)) throw TraceError(fmt::format("line {}: missing column '{}'", line_no, column));
      }
      TraceRecord r;
      r.time_s = j.at("time_s").get<double>();
      r.t_abs_c = j.at("t_abs_c").get<double>();
      r.t_emit_c = j.at("t_emit_c").get<double>();
      r.t_skin_c = j.at("t_skin_c").get<double>();
      r.current_a = j.at("current_a").get<double>();
      r.heat_w = j.at("heat_w").get<double>();
      r.setpoint = j.at("setpoint").get<double>();
      r.mode = parse_mode_field(j.at("mode").get<std::string>(), line_no);
      r.saturated = j.at("saturated").get<int>() != 0;
      r.battery_pct = j.at("battery_pct").get<double>();
      trace.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw TraceError(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  return trace;
}

TraceFormat format_for(const std::filesystem::path& path) {
  return path.extension() == ".jsonl" ? TraceFormat::Jsonl : TraceFormat::Csv;
}

void save_trace(const std::filesystem::path& path, const Trace& trace, TraceFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  if (format == TraceFormat::Jsonl) {
    write_jsonl(out, trace);
  } else {
    write_csv(out, trace);
  }
  out.flush();
  if (!out) throw std::runtime_error(fmt::format("write to '{}' failed", path.string()));
}

Trace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  try {
    return format_for(path) == TraceFormat::Jsonl ? read_jsonl(in) : read_csv(in);
  } catch (const TraceError& e) {
    throw TraceError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

TraceRecord from_telemetry(const protocol::Telemetry& t) {
  TraceRecord r;
  r.time_s = t.timestamp_ms / 1000.0;
  r.t_abs_c = t.t_abs_cc / protocol::kCentiPerDegree;
  r.t_emit_c = t.t_emit_cc / protocol::kCentiPerDegree;
  r.t_skin_c = t.t_contact_cc / protocol::kCentiPerDegree;
  r.current_a = t.current_ma / protocol::kMilliampsPerAmp;
  r.heat_w = t.heat_mw / protocol::kMilliwattsPerWatt;
  r.mode = static_cast<ControlMode>(t.mode);
  switch (r.mode) {
    case ControlMode::HeatFlow: r.setpoint = t.setpoint_raw / protocol::kMilliwattsPerWatt; break;
    case ControlMode::Temperature: r.setpoint = t.setpoint_raw / protocol::kCentiPerDegree; break;
    case ControlMode::Off: r.setpoint = 0.0; break;
  }
  r.saturated = (t.flags & protocol::flags::kSaturated) != 0;
  r.compliance_limited = (t.flags & protocol::flags::kComplianceLimited) != 0;
  r.enabled = (t.flags & protocol::flags::kEnabled) != 0;
  r.battery_pct = t.battery_pct;
  return r;
}

}  // namespace stimulheat
