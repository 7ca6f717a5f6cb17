#include "stimulheat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stimulheat {

namespace {

constexpr double kTimeEps = 1e-9;

void check_monotone(const Trace& trace) {
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (!(trace[i].time_s > trace[i - 1].time_s)) {
      throw TraceError("trace time is not strictly increasing at row " + std::to_string(i));
    }
  }
}

double channel(const TraceRecord& r, ControlMode mode) {
  return mode == ControlMode::HeatFlow ? r.heat_w : r.t_abs_c;
}

std::size_t first_at_or_after(const Trace& trace, double t) {
  auto it = std::lower_bound(trace.begin(), trace.end(), t - kTimeEps,
                             [](const TraceRecord& r, double v) { return r.time_s < v; });
  return static_cast<std::size_t>(it - trace.begin());
}

void fill_end_times(std::vector<StepEvent>& events, const Trace& trace) {
  const double period = trace.size() > 1 ? trace[1].time_s - trace[0].time_s : 0.0;
  const double trace_end = trace.empty() ? 0.0 : trace.back().time_s + period;
  for (std::size_t i = 0; i < events.size(); ++i) {
    events[i].end_s = i + 1 < events.size() ? events[i + 1].time_s : trace_end;
  }
}

}  // namespace

double StepMetrics::step_size() const { return event.to - event.from; }

double StepMetrics::normalized_error() const {
  const double size = std::abs(step_size());
  return size > 0.0 ? steady_state_error / size : 0.0;
}

double fit_slope(const std::vector<double>& t, const std::vector<double>& y) {
  const auto n = static_cast<double>(t.size());
  if (t.size() < 2) return 0.0;
  double mt = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sxy += (t[i] - mt) * (y[i] - my);
    sxx += (t[i] - mt) * (t[i] - mt);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

std::vector<StepEvent> events_from_trace(const Trace& trace) {
  check_monotone(trace);
  std::vector<StepEvent> events;
  if (trace.empty()) return events;
  const double baseline = trace.front().setpoint;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const auto& prev = trace[i - 1];
    const auto& cur = trace[i];
    if (cur.mode == prev.mode && cur.setpoint == prev.setpoint) continue;
    StepEvent e;
    e.index = i;
    e.time_s = cur.time_s;
    e.mode = cur.mode;
    e.from = cur.mode == prev.mode ? prev.setpoint : cur.setpoint;
    e.to = cur.setpoint;
    e.stimulus = cur.setpoint != baseline;
    events.push_back(e);
  }
  fill_end_times(events, trace);
  return events;
}

std::vector<StepEvent> events_from_scenario(const Trace& trace, const Scenario& scenario) {
  check_monotone(trace);
  std::vector<StepEvent> events;
  if (trace.empty()) return events;
  const double origin = trace.front().time_s;
  double t = origin;
  for (std::size_t h = 0; h < scenario.holds.size(); ++h) {
    const Hold& hold = scenario.holds[h];
    if (h > 0) {
      const Hold& prev = scenario.holds[h - 1];
      if (hold.mode != prev.mode || hold.setpoint != prev.setpoint) {
        const std::size_t index = first_at_or_after(trace, t);
        if (index >= trace.size()) throw TraceError("scenario extends beyond the trace");
        StepEvent e;
        e.index = index;
        e.time_s = trace[index].time_s;
        e.mode = hold.mode;
        e.from = hold.mode == prev.mode ? prev.setpoint : hold.setpoint;
        e.to = hold.setpoint;
        e.stimulus = hold.stimulus;
        events.push_back(e);
      }
    }
    t += hold.duration_s;
  }
  fill_end_times(events, trace);
  return events;
}

std::vector<StepMetrics> compute_metrics(const Trace& trace, const std::vector<StepEvent>& events) {
  check_monotone(trace);
  std::vector<StepMetrics> out;
  out.reserve(events.size());

  for (const StepEvent& e : events) {
    if (e.index >= trace.size()) throw TraceError("step event outside the trace");
    const std::size_t end = first_at_or_after(trace, e.end_s);
    if (end <= e.index) throw TraceError("step event has no samples");

    StepMetrics m;
    m.event = e;
    const double step = e.to - e.from;
    const double dir = step >= 0.0 ? 1.0 : -1.0;
    // Positive heat cools the contact face.
    const double t_dir = e.mode == ControlMode::HeatFlow ? -dir : dir;

    // Response time to 90 % of the commanded step.
    const double threshold = e.from + 0.9 * step;
    m.response_time_s = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = e.index; i < end; ++i) {
      if (dir * (channel(trace[i], e.mode) - threshold) >= 0.0) {
        m.reached = true;
        m.response_time_s = trace[i].time_s - e.time_s;
        break;
      }
    }

    // Best sustained slope of the contact temperature along the step.
    double best = 0.0;
    std::vector<double> ts;
    std::vector<double> ys;
    std::size_t hi = e.index;
    for (std::size_t lo = e.index; lo < end; ++lo) {
      const double window_end = trace[lo].time_s + kSlewWindowS;
      while (hi < end && trace[hi].time_s <= window_end + kTimeEps) ++hi;
      if (hi - lo < 2) break;
      ts.clear();
      ys.clear();
      for (std::size_t i = lo; i < hi; ++i) {
        ts.push_back(trace[i].time_s);
        ys.push_back(trace[i].t_abs_c);
      }
      best = std::max(best, t_dir * fit_slope(ts, ys));
      if (hi == end) break;
    }
    m.slew_c_per_s = best;

    // Steady-state error over the final second.
    const double tail_start = e.end_s - kSteadyWindowS;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = e.index; i < end; ++i) {
      if (trace[i].time_s + kTimeEps < tail_start) continue;
      sum += std::abs(channel(trace[i], e.mode) - e.to);
      ++count;
    }
    m.steady_state_error = count > 0 ? sum / static_cast<double>(count) : 0.0;

    double excursion = 0.0;
    for (std::size_t i = e.index; i < end; ++i) {
      excursion = std::max(excursion, dir * (channel(trace[i], e.mode) - e.to));
    }
    m.overshoot_pct = std::abs(step) > 0.0 ? 100.0 * excursion / std::abs(step) : 0.0;
    out.push_back(m);
  }
  return out;
}

}  // namespace stimulheat
