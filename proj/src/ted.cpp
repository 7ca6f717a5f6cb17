#include "stimulheat/ted.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace stimulheat {

void TedParams::validate() const {
  if (!(seebeck_alpha > 0.0) || !(resistance_ohm > 0.0) || !(theta_m > 0.0)) {
    throw std::invalid_argument("TedParams: alpha, R and theta_m must be > 0");
  }
}

void ThermalNetworkParams::validate() const {
  for (double v : {c_abs, c_emit, c_skin, r_contact, r_body, r_sink}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("ThermalNetworkParams: capacitances and resistances must be > 0");
    }
  }
  auto in_range = [](double t) { return t >= 273.15 && t <= 323.15; };
  if (!in_range(t_core) || !in_range(t_ambient)) {
    throw std::invalid_argument("ThermalNetworkParams: t_core and t_ambient must lie in [273.15, 323.15] K");
  }
  if (emit_hold_k && !in_range(*emit_hold_k)) {
    throw std::invalid_argument("ThermalNetworkParams: emit_hold_k must lie in [273.15, 323.15] K");
  }
}

double ThermalNetworkParams::core_for_skin_equilibrium(double skin_k, const TedParams& ted) const {
  // Unpowered, the skin loses heat through the module to the sink side.
  const double path = emit_hold_k ? r_contact + ted.theta_m : r_contact + ted.theta_m + r_sink;
  const double sink_k = emit_hold_k.value_or(t_ambient);
  const double loss = (skin_k - sink_k) / path;
  return skin_k + loss * r_body;
}

bool PlantState::in_envelope() const {
  for (double t : {t_abs, t_emit, t_skin}) {
    if (!std::isfinite(t) || t < kEnvelopeMinK || t > kEnvelopeMaxK) return false;
  }
  return std::isfinite(sim_time);
}

double heat_flow_absorbed(const TedParams& ted, double t_abs, double t_emit, double current) {
  return -0.5 * ted.resistance_ohm * current * current + ted.seebeck_alpha * t_abs * current +
         (t_abs - t_emit) / ted.theta_m;
}

double electrical_power(const TedParams& ted, double t_abs, double t_emit, double current) {
  return current * current * ted.resistance_ohm + ted.seebeck_alpha * (t_emit - t_abs) * current;
}

double heat_flow_emitted(const TedParams& ted, double t_abs, double t_emit, double current) {
  return heat_flow_absorbed(ted, t_abs, t_emit, current) +
         electrical_power(ted, t_abs, t_emit, current);
}

double terminal_voltage(const TedParams& ted, double t_abs, double t_emit, double current) {
  return current * ted.resistance_ohm + ted.seebeck_alpha * (t_emit - t_abs);
}

double max_cooling_current(const TedParams& ted, double t_abs, double i_max) {
  const double vertex = ted.seebeck_alpha * t_abs / ted.resistance_ohm;
  return std::clamp(vertex, -i_max, i_max);
}

double max_cooling_heat(const TedParams& ted, double t_abs, double t_emit, double i_max) {
  return heat_flow_absorbed(ted, t_abs, t_emit, max_cooling_current(ted, t_abs, i_max));
}

namespace {

using Temps = std::array<double, 3>;  // abs, emit, skin

Temps derivatives(const Temps& t, const ThermalNetworkParams& net, const TedParams& ted,
                  double current) {
  const double t_abs = t[0];
  const double t_emit = t[1];
  const double t_skin = t[2];
  const double contact = (t_skin - t_abs) / net.r_contact;
  const double q1 = heat_flow_absorbed(ted, t_abs, t_emit, current);

  Temps d{};
  d[0] = (-q1 + contact) / net.c_abs;
  d[1] = net.emit_hold_k
             ? 0.0
             : (heat_flow_emitted(ted, t_abs, t_emit, current) + (net.t_ambient - t_emit) / net.r_sink) /
                   net.c_emit;
  d[2] = ((net.t_core - t_skin) / net.r_body - contact) / net.c_skin;
  return d;
}

Temps axpy(const Temps& x, double a, const Temps& y) {
  return {x[0] + a * y[0], x[1] + a * y[1], x[2] + a * y[2]};
}

}  // namespace

PlantState plant_step(const PlantState& state, const ThermalNetworkParams& net, const TedParams& ted,
                      double current, double dt) {
  if (!(dt > 0.0) || dt > kMaxPlantDt) {
    throw std::invalid_argument("plant_step: dt must lie in (0, 0.01] s, got " + std::to_string(dt));
  }
  if (!state.in_envelope()) {
    throw std::domain_error("plant_step: state outside the [250, 400] K sanity envelope");
  }

  Temps y{state.t_abs, net.emit_hold_k.value_or(state.t_emit), state.t_skin};
  const Temps k1 = derivatives(y, net, ted, current);
  const Temps k2 = derivatives(axpy(y, dt / 2, k1), net, ted, current);
  const Temps k3 = derivatives(axpy(y, dt / 2, k2), net, ted, current);
  const Temps k4 = derivatives(axpy(y, dt, k3), net, ted, current);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }

  PlantState next{y[0], y[1], y[2], state.sim_time + dt};
  if (!next.in_envelope()) {
    throw std::domain_error("plant_step: state left the [250, 400] K sanity envelope");
  }
  return next;
}

}  // namespace stimulheat
