#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "../support/random.hpp"
#include "stimulheat/device.hpp"
#include "stimulheat/ted.hpp"

using namespace stimulheat;
using Catch::Approx;

namespace {

const TedParams kTed{};  // 0.028 V/K, 5.8 ohm, 12 K/W

}  // namespace

TEST_CASE("absorbed heat examples") {
  CHECK(heat_flow_absorbed(kTed, 305.0, 305.0, 0.0) == 0.0);
  CHECK(heat_flow_absorbed(kTed, 305.0, 305.0, 0.6) == Approx(4.080).epsilon(1e-12));
  CHECK(heat_flow_absorbed(kTed, 300.0, 310.0, 0.0) == Approx(-10.0 / 12.0).epsilon(1e-12));
  // Negative current heats the skin side.
  CHECK(heat_flow_absorbed(kTed, 305.0, 305.0, -0.6) < 0.0);
}

TEST_CASE("electrical power examples") {
  CHECK(electrical_power(kTed, 300.0, 320.0, 0.0) == 0.0);
  CHECK(electrical_power(kTed, 305.0, 305.0, 0.6) == Approx(2.088).epsilon(1e-12));
  CHECK(electrical_power(kTed, 300.0, 310.0, 0.6) == Approx(2.256).epsilon(1e-12));
}

TEST_CASE("emitted heat examples") {
  CHECK(heat_flow_emitted(kTed, 305.0, 305.0, 0.0) == 0.0);
  CHECK(heat_flow_emitted(kTed, 305.0, 305.0, 0.6) == Approx(6.168).epsilon(1e-12));
  CHECK(heat_flow_emitted(kTed, 300.0, 310.0, 0.0) == Approx(-10.0 / 12.0).epsilon(1e-12));
}

TEST_CASE("terminal voltage at full current") {
  CHECK(terminal_voltage(kTed, 305.0, 305.0, 0.6) == Approx(3.48).epsilon(1e-12));
  CHECK(terminal_voltage(kTed, 300.0, 315.0, 0.6) == Approx(3.90).epsilon(1e-12));
}

TEST_CASE("max cooling heat") {
  // Vertex at 1.472 A lies outside the range: value at the bound.
  CHECK(max_cooling_current(kTed, 305.0, 0.6) == 0.6);
  CHECK(max_cooling_heat(kTed, 305.0, 305.0, 0.6) == Approx(4.080).epsilon(1e-12));
  const double alpha_t = 0.028 * 305.0;
  CHECK(max_cooling_heat(kTed, 305.0, 305.0, 1e6) == Approx(alpha_t * alpha_t / (2 * 5.8)).epsilon(1e-12));
  CHECK(max_cooling_heat(kTed, 305.0, 305.0, 1e6) == Approx(6.2872).margin(1e-4));
  CHECK(max_cooling_heat(kTed, 305.0, 305.0, 0.0) == 0.0);
}

TEST_CASE("max cooling heat matches a dense scan") {
  testing::Gen gen(11);
  for (int n = 0; n < 200; ++n) {
    const TedParams ted = gen.ted();
    const double ta = gen.uniform(280.0, 320.0);
    const double te = gen.uniform(280.0, 330.0);
    const double i_max = gen.uniform(0.05, 3.0);
    double best = -1e300;
    for (int k = -2000; k <= 2000; ++k) best = std::max(best, heat_flow_absorbed(ted, ta, te, i_max * k / 2000.0));
    const double got = max_cooling_heat(ted, ta, te, i_max);
    CHECK(got >= best - 1e-12);
    CHECK(got - best < 1e-4);
  }
}

TEST_CASE("absorbed heat is concave in current") {
  testing::Gen gen(12);
  for (int n = 0; n < 2000; ++n) {
    const TedParams ted = gen.ted();
    const double ta = gen.uniform(260.0, 340.0);
    const double te = gen.uniform(260.0, 340.0);
    const double a = gen.uniform(-2.0, 2.0);
    const double b = gen.uniform(-2.0, 2.0);
    const double l = gen.uniform(0.0, 1.0);
    const double mid = heat_flow_absorbed(ted, ta, te, l * a + (1 - l) * b);
    const double chord = l * heat_flow_absorbed(ted, ta, te, a) + (1 - l) * heat_flow_absorbed(ted, ta, te, b);
    CHECK(mid >= chord - 1e-12 * (1.0 + std::abs(chord)));
  }
}

TEST_CASE("energy balance closes") {
  testing::Gen gen(13);
  for (int n = 0; n < 5000; ++n) {
    const TedParams ted = gen.ted();
    const double ta = gen.uniform(260.0, 340.0);
    const double te = gen.uniform(260.0, 340.0);
    const double i = gen.uniform(-1.0, 1.0);
    const double p = electrical_power(ted, ta, te, i);
    const double diff = heat_flow_emitted(ted, ta, te, i) - heat_flow_absorbed(ted, ta, te, i);
    const double scale = std::max({std::abs(p), std::abs(heat_flow_absorbed(ted, ta, te, i)), 1e-300});
    CHECK(std::abs(diff - p) <= 1e-12 * scale);
  }
}

TEST_CASE("parameter validation") {
  CHECK_NOTHROW(TedParams{}.validate());
  CHECK_THROWS_AS((TedParams{0.0, 5.8, 12.0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((TedParams{0.028, -1.0, 12.0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((TedParams{0.028, 5.8, 0.0}.validate()), std::invalid_argument);

  ThermalNetworkParams net;
  CHECK_NOTHROW(net.validate());
  net.c_emit = 0.0;
  CHECK_THROWS_AS(net.validate(), std::invalid_argument);
  net = {};
  net.t_ambient = 330.0;
  CHECK_THROWS_AS(net.validate(), std::invalid_argument);
}

TEST_CASE("plant step rejects bad input") {
  const ThermalNetworkParams net;
  const PlantState s;
  CHECK_THROWS_AS(plant_step(s, net, kTed, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(plant_step(s, net, kTed, 0.0, -1e-3), std::invalid_argument);
  CHECK_THROWS_AS(plant_step(s, net, kTed, 0.0, 0.02), std::invalid_argument);
  PlantState hot = s;
  hot.t_emit = 401.0;
  CHECK_THROWS_AS(plant_step(hot, net, kTed, 0.0, 1e-3), std::domain_error);
  PlantState nan = s;
  nan.t_abs = std::nan("");
  CHECK_THROWS_AS(plant_step(nan, net, kTed, 0.0, 1e-3), std::domain_error);
}

TEST_CASE("uniform equilibrium is a fixed point") {
  ThermalNetworkParams net;
  net.t_core = net.t_ambient = 305.0;
  PlantState s{305.0, 305.0, 305.0, 0.0};
  for (int k = 0; k < 1000; ++k) {
    const PlantState next = plant_step(s, net, kTed, 0.0, 1e-3);
    CHECK(std::abs(next.t_abs - 305.0) <= 1e-12);
    CHECK(std::abs(next.t_emit - 305.0) <= 1e-12);
    CHECK(std::abs(next.t_skin - 305.0) <= 1e-12);
    s = next;
  }
  CHECK(s.sim_time == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("one cooling step moves the faces apart") {
  ThermalNetworkParams net;
  net.t_core = net.t_ambient = 305.0;
  const PlantState s{305.0, 305.0, 305.0, 0.0};
  const PlantState next = plant_step(s, net, kTed, 0.6, 1e-3);
  CHECK(next.t_abs < 305.0);
  CHECK(next.t_emit > 305.0);
  CHECK(next.sim_time == 1e-3);
}

TEST_CASE("sustained full current saturates the hot side") {
  const ThermalNetworkParams net;
  PlantState s = resting_state(net, kTed);
  double prev_emit = s.t_emit;
  double prev_q = heat_flow_absorbed(kTed, s.t_abs, s.t_emit, 0.6);
  for (int k = 1; k <= 300000; ++k) {
    s = plant_step(s, net, kTed, 0.6, 1e-3);
    if (k % 100 != 0) continue;
    const double q = heat_flow_absorbed(kTed, s.t_abs, s.t_emit, 0.6);
    REQUIRE(s.t_emit > prev_emit);
    REQUIRE(q < prev_q);
    prev_emit = s.t_emit;
    prev_q = q;
  }
}

TEST_CASE("resting state puts the skin at 31 C") {
  const ThermalNetworkParams net;
  const PlantState rest = resting_state(net, kTed);
  CHECK(to_celsius(rest.t_skin) == Approx(31.0).margin(1e-9));
  // Steady: a minute of unpowered stepping does not move it.
  PlantState s = rest;
  for (int k = 0; k < 60000; ++k) s = plant_step(s, net, kTed, 0.0, 1e-3);
  CHECK(std::abs(s.t_abs - rest.t_abs) < 1e-9);
  CHECK(std::abs(s.t_emit - rest.t_emit) < 1e-9);
  CHECK(std::abs(s.t_skin - rest.t_skin) < 1e-9);
}

TEST_CASE("core temperature solves for the requested skin equilibrium") {
  ThermalNetworkParams net;
  net.t_core = net.core_for_skin_equilibrium(to_kelvin(33.0), kTed);
  CHECK(to_celsius(resting_state(net, kTed).t_skin) == Approx(33.0).margin(1e-9));
}

TEST_CASE("halving dt changes the state by at most 1e-6 K after 10 s") {
  const ThermalNetworkParams net;
  for (double current : {-0.6, -0.25, 0.0, 0.3, 0.6}) {
    PlantState coarse = resting_state(net, kTed);
    PlantState fine = coarse;
    for (int k = 0; k < 10000; ++k) coarse = plant_step(coarse, net, kTed, current, 1e-3);
    for (int k = 0; k < 20000; ++k) fine = plant_step(fine, net, kTed, current, 5e-4);
    CHECK(std::abs(coarse.t_abs - fine.t_abs) <= 1e-6);
    CHECK(std::abs(coarse.t_emit - fine.t_emit) <= 1e-6);
    CHECK(std::abs(coarse.t_skin - fine.t_skin) <= 1e-6);
  }
  // The largest allowed step still converges.
  PlantState coarse = resting_state(net, kTed);
  PlantState fine = coarse;
  for (int k = 0; k < 1000; ++k) coarse = plant_step(coarse, net, kTed, 0.6, 1e-2);
  for (int k = 0; k < 2000; ++k) fine = plant_step(fine, net, kTed, 0.6, 5e-3);
  CHECK(std::abs(coarse.t_abs - fine.t_abs) <= 1e-6);
}

TEST_CASE("unpowered network obeys the maximum principle") {
  testing::Gen gen(14);
  for (int n = 0; n < 40; ++n) {
    ThermalNetworkParams net;
    net.t_core = gen.uniform(290.0, 315.0);
    net.t_ambient = gen.uniform(280.0, 310.0);
    PlantState s{gen.uniform(270.0, 330.0), gen.uniform(270.0, 330.0), gen.uniform(270.0, 330.0), 0.0};
    const double hi = std::max({s.t_abs, s.t_emit, s.t_skin, net.t_core, net.t_ambient});
    const double lo = std::min({s.t_abs, s.t_emit, s.t_skin, net.t_core, net.t_ambient});
    for (int k = 0; k < 5000; ++k) {
      s = plant_step(s, net, kTed, 0.0, 1e-3);
      REQUIRE(std::max({s.t_abs, s.t_emit, s.t_skin}) <= hi + 1e-12);
      REQUIRE(std::min({s.t_abs, s.t_emit, s.t_skin}) >= lo - 1e-12);
    }
  }
}

TEST_CASE("held emitted face stays put") {
  ThermalNetworkParams net;
  net.emit_hold_k = to_kelvin(30.0);
  PlantState s = resting_state(net, kTed);
  CHECK(s.t_emit == to_kelvin(30.0));
  for (int k = 0; k < 5000; ++k) s = plant_step(s, net, kTed, 0.6, 1e-3);
  CHECK(s.t_emit == to_kelvin(30.0));
  CHECK(s.t_abs < to_kelvin(30.0));
}
