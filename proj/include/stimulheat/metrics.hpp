#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "stimulheat/device.hpp"

namespace stimulheat {

/// Raised for traces that cannot be analysed (missing columns, time not
/// strictly increasing, events outside the trace).
class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A setpoint change inside a trace.
struct StepEvent {
  std::size_t index = 0;  // first row carrying the new setpoint
  double time_s = 0.0;
  double end_s = 0.0;     // next change, or the end of the trace
  ControlMode mode = ControlMode::HeatFlow;
  double from = 0.0;
  double to = 0.0;
  bool stimulus = false;
};

inline constexpr double kSlewWindowS = 0.5;
inline constexpr double kSteadyWindowS = 1.0;

struct StepMetrics {
  StepEvent event;
  bool reached = false;
  double response_time_s = 0.0;     // to 90 % of the commanded step; NaN if not reached
  double slew_c_per_s = 0.0;        // best 0.5 s linear-fit slope of t_abs, along the step
  double steady_state_error = 0.0;  // mean |channel - setpoint| over the last 1 s
  double overshoot_pct = 0.0;

  [[nodiscard]] double step_size() const;
  /// steady_state_error / |step|, or 0 for zero-size steps.
  [[nodiscard]] double normalized_error() const;
};

/// Finds every change of (mode, setpoint). Events whose target differs from
/// the trace's opening setpoint are marked as stimuli.
[[nodiscard]] std::vector<StepEvent> events_from_trace(const Trace& trace);

/// Like events_from_trace, but takes stimulus flags from the script that
/// produced the trace.
[[nodiscard]] std::vector<StepEvent> events_from_scenario(const Trace& trace, const Scenario& scenario);

/// Heat steps are measured on heat_w, temperature steps on t_abs_c.
[[nodiscard]] std::vector<StepMetrics> compute_metrics(const Trace& trace,
                                                       const std::vector<StepEvent>& events);

/// Least-squares slope of y over t.
[[nodiscard]] double fit_slope(const std::vector<double>& t, const std::vector<double>& y);

}  // namespace stimulheat
