#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "../support/random.hpp"
#include "stimulheat/driver.hpp"

using namespace stimulheat;
using Catch::Approx;

namespace {

const DriverParams kDrv{};
const TedParams kTed{};

}  // namespace

TEST_CASE("quantization examples") {
  const auto zero = quantize({0.0, false}, kDrv);
  CHECK(zero.code == 0);
  CHECK(zero.current == 0.0);

  const auto full = quantize({0.6, false}, kDrv);
  CHECK(full.code == 255);
  CHECK(full.current == 0.6);
  CHECK(full.polarity == Polarity::Forward);

  // 0.3 * 255 / 0.6 = 127.5 rounds half up.
  const auto half = quantize({-0.3, false}, kDrv);
  CHECK(half.code == 128);
  CHECK(half.current == Approx(-0.30118).margin(5e-6));
  CHECK(half.polarity == Polarity::Reverse);

  CHECK(quantize({0.5, true}, kDrv).saturated);
  // Requests past full scale clip to it.
  CHECK(quantize({0.9, false}, kDrv).code == 255);
}

TEST_CASE("quantization error is at most half an LSB") {
  testing::Gen gen(31);
  for (int bits : {1, 4, 8, 12, 16}) {
    DriverParams drv;
    drv.dac_bits = bits;
    drv.i_max = gen.uniform(0.1, 2.0);
    // 2^bits codes span [0, i_max], so one LSB is i_max / (2^bits - 1).
    const double bound = drv.i_max / (std::pow(2.0, bits) - 1.0) / 2.0 * (1.0 + 1e-9);
    for (int n = 0; n < 2000; ++n) {
      const double req = gen.uniform(-drv.i_max, drv.i_max);
      const auto out = quantize({req, false}, drv);
      REQUIRE(std::abs(out.current - req) <= bound);
      REQUIRE(std::abs(out.current) <= drv.i_max);
      REQUIRE(out.code <= drv.full_scale_code());
      if (out.current != 0.0) REQUIRE((out.current < 0.0) == (out.polarity == Polarity::Reverse));
    }
  }
}

TEST_CASE("quantization is idempotent") {
  testing::Gen gen(32);
  for (int n = 0; n < 5000; ++n) {
    const double req = gen.uniform(-0.6, 0.6);
    const auto once = quantize({req, false}, kDrv);
    const auto twice = quantize({once.current, false}, kDrv);
    REQUIRE(twice.current == once.current);
    REQUIRE(twice.code == once.code);
  }
}

TEST_CASE("compliance examples") {
  const auto zero = compliance_check(quantize({0.0, false}, kDrv), kTed, 305.0, 320.0, kDrv);
  CHECK(zero.current == 0.0);
  CHECK_FALSE(zero.compliance_limited);

  const auto fits = compliance_check(quantize({0.6, false}, kDrv), kTed, 305.0, 305.0, kDrv);
  CHECK(fits.current == 0.6);
  CHECK_FALSE(fits.compliance_limited);

  // 3.48 V + 0.42 V > 3.7 V: back off to (3.7 - 0.42) / 5.8.
  const auto cut = compliance_check(quantize({0.6, false}, kDrv), kTed, 305.0, 320.0, kDrv);
  CHECK(cut.current == Approx(0.5655).margin(1e-4));
  CHECK(cut.current == Approx((3.7 - 0.028 * 15.0) / 5.8).epsilon(1e-12));
  CHECK(cut.compliance_limited);
  CHECK(std::abs(terminal_voltage(kTed, 305.0, 320.0, cut.current)) <= 3.7 + 1e-12);

  // Reverse drive across the same gradient is helped by the Seebeck voltage.
  const auto rev = compliance_check(quantize({-0.6, false}, kDrv), kTed, 305.0, 320.0, kDrv);
  CHECK(rev.current == -0.6);
}

TEST_CASE("compliance never raises the current") {
  testing::Gen gen(33);
  for (int n = 0; n < 5000; ++n) {
    const double ta = gen.uniform(270.0, 330.0);
    const double te = gen.uniform(270.0, 370.0);
    const auto in = quantize({gen.uniform(-0.6, 0.6), false}, kDrv);
    const auto out = compliance_check(in, kTed, ta, te, kDrv);
    REQUIRE(std::abs(out.current) <= std::abs(in.current));
    REQUIRE((out.current == 0.0 || (out.current < 0.0) == (in.current < 0.0)));
    if (out.current != 0.0) REQUIRE(std::abs(terminal_voltage(kTed, ta, te, out.current)) <= 3.7 + 1e-12);
  }
}

TEST_CASE("driver parameter validation") {
  CHECK_NOTHROW(DriverParams{}.validate());
  CHECK_THROWS_AS((DriverParams{0, 0.6, 3.7}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((DriverParams{17, 0.6, 3.7}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((DriverParams{8, 0.0, 3.7}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((DriverParams{8, 0.6, -1.0}.validate()), std::invalid_argument);
}
