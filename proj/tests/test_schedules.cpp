#include <doctest.h>

#include <cmath>

#include "chord/schedules.hpp"

using namespace chord;

TEST_CASE("decay 0.9 -> 0.05 over 200 steps hits the published anchors") {
  const MuSchedule s = parse_schedule("decay:0.9:0.05:200:linear");
  CHECK(mu_at(s, 0) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(mu_at(s, 100) == doctest::Approx(0.475).epsilon(1e-12));
  CHECK(mu_at(s, 200) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(mu_at(s, 100000) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("cosine decay shares the endpoints and stays between them") {
  const MuSchedule s = parse_schedule("decay:0.9:0.05:200:cosine");
  CHECK(mu_at(s, 0) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(mu_at(s, 200) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(mu_at(s, 100) == doctest::Approx(0.475).epsilon(1e-12));  // cosine midpoint
  for (long t = 0; t <= 200; t += 7) {
    const double v = mu_at(s, t);
    CHECK(v <= 0.9 + 1e-12);
    CHECK(v >= 0.05 - 1e-12);
  }
}

TEST_CASE("binary flips exactly at the switch step") {
  const MuSchedule s = parse_schedule("binary:300:1:0");
  CHECK(mu_at(s, 0) == 1.0);
  CHECK(mu_at(s, 299) == 1.0);
  CHECK(mu_at(s, 300) == 0.0);
  CHECK(mu_at(s, 301) == 0.0);
}

TEST_CASE("constants hold at every step") {
  for (double v : {0.02, 0.1, 0.5}) {
    const MuSchedule s = parse_schedule("constant:" + std::to_string(v));
    for (long t : {0L, 1L, 999L, 1000000L}) {
      CHECK(mu_at(s, t) == doctest::Approx(v).epsilon(1e-12));
    }
  }
}

TEST_CASE("periodic duty cycle alternates as specified") {
  const MuSchedule s = parse_schedule("periodic:10:0.5:1.0:0.0");
  for (long t = 0; t < 30; ++t) {
    const double want = (t % 10 < 5) ? 1.0 : 0.0;
    CHECK(mu_at(s, t) == want);
  }
}

TEST_CASE("schedules round trip through the formatter") {
  for (const char* spec : {"constant:0.1", "binary:300:1:0", "periodic:10:0.5:1:0",
                           "decay:0.9:0.05:200:linear", "decay:0.9:0.05:200:cosine"}) {
    const MuSchedule s = parse_schedule(spec);
    const MuSchedule again = parse_schedule(format_schedule(s));
    for (long t : {0L, 5L, 99L, 100L, 200L, 5000L}) {
      CHECK(mu_at(s, t) == mu_at(again, t));
    }
  }
}

TEST_CASE("malformed specs fail with a position") {
  for (const char* bad : {"decay:0.9:0.05:200", "decay:0.9:0.05:200:banana", "constant:x",
                          "nope:1", "binary:1:2:0", "constant:1.5", "decay:0.05:0.9:200:linear",
                          "periodic:0:0.5:1:0"}) {
    CHECK_THROWS_AS(parse_schedule(bad), ConfigError);
  }
  try {
    parse_schedule("decay:0.9:oops:200:linear");
    CHECK(false);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("position 10") != std::string::npos);
  }
}

TEST_CASE("decay is monotone non-increasing and every kind stays in [0,1]") {
  const MuSchedule decay_lin = parse_schedule("decay:0.8:0.1:333:linear");
  const MuSchedule decay_cos = parse_schedule("decay:0.8:0.1:333:cosine");
  double prev_lin = 1.0, prev_cos = 1.0;
  for (long t = 0; t <= 1000; ++t) {
    const double a = mu_at(decay_lin, t);
    const double b = mu_at(decay_cos, t);
    CHECK(a <= prev_lin + 1e-15);
    CHECK(b <= prev_cos + 1e-15);
    prev_lin = a;
    prev_cos = b;
  }
  for (const char* spec : {"constant:0.37", "binary:123:0.9:0.2", "periodic:7:0.3:0.8:0.1",
                           "decay:1:0:1000:cosine"}) {
    const MuSchedule s = parse_schedule(spec);
    for (long t = 0; t <= 1000000; t += 997) {
      const double v = mu_at(s, t);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("the SFT-then-RL paradigm is exactly a binary schedule") {
  // binary(s, 1, 0) is the step function; decay over one step reproduces it at s = 1
  const MuSchedule binary = parse_schedule("binary:1:1:0");
  const MuSchedule step_decay = parse_schedule("decay:1:0:1:linear");
  for (long t = 0; t < 20; ++t) {
    CHECK(mu_at(binary, t) == mu_at(step_decay, t));
  }
  const MuSchedule sft_then_rl = parse_schedule("binary:300:1:0");
  for (long t = 0; t < 600; ++t) {
    CHECK(mu_at(sft_then_rl, t) == (t < 300 ? 1.0 : 0.0));
  }
}

TEST_CASE("negative steps are rejected") {
  const MuSchedule s = parse_schedule("constant:0.5");
  CHECK_THROWS_AS(mu_at(s, -1), std::invalid_argument);
}
