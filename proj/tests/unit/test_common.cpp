#include "doctest.h"
#include "ultraqueue/common.hpp"
#include "ultraqueue/rng.hpp"

using namespace uq;

TEST_CASE("clock strings round trip, including drain hours past midnight") {
  CHECK(format_hms(0) == "00:00:00");
  CHECK(format_hms(8 * 3600 + 12 * 60 + 30) == "08:12:30");
  CHECK(format_hms(25 * 3600 + 1) == "25:00:01");
  for (Seconds t : {0LL, 59LL, 3600LL, 45296LL, 90061LL}) CHECK(parse_hms(format_hms(t)) == t);
  CHECK_FALSE(parse_hms("8:00"));
  CHECK_FALSE(parse_hms("08:60:00"));
  CHECK_FALSE(parse_hms("ab:cd:ef"));
}

TEST_CASE("calendar helpers") {
  CHECK(weekday_of("2024-01-01") == 0);  // a Monday
  CHECK(weekday_of("2024-01-07") == 6);
  CHECK(day_kind_of("2024-01-06") == DayKind::weekend);
  CHECK(day_kind_of("2024-01-05") == DayKind::weekday);
  CHECK(add_days("2024-02-28", 1) == "2024-02-29");
  CHECK(add_days("2023-02-28", 1) == "2023-03-01");
  CHECK(add_days("2024-12-31", 1) == "2025-01-01");
  CHECK(add_days("2024-01-01", 366) == "2025-01-01");
  CHECK(is_iso_date("2024-02-29"));
  CHECK_FALSE(is_iso_date("2023-02-29"));
  CHECK_FALSE(weekday_of("not-a-date"));
}

TEST_CASE("age buckets are half-open with the last one unbounded") {
  CHECK(age_bucket(0.0) == 0);
  CHECK(age_bucket(0.49) == 0);
  CHECK(age_bucket(0.5) == 1);
  CHECK(age_bucket(5.5) == 2);
  CHECK(age_bucket(70.4) == 8);
  CHECK(age_bucket(70.5) == 9);
  CHECK(age_bucket(104.0) == 9);
}

TEST_CASE("fnv1a64 matches published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("derived seeds separate streams and are reproducible") {
  CHECK(derive_seed(1, {0}) == derive_seed(1, {0}));
  CHECK(derive_seed(1, {0}) != derive_seed(1, {1}));
  CHECK(derive_seed(1, {0, 1}) != derive_seed(1, {1, 0}));
  CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
}

TEST_CASE("rng variates have the right first moments") {
  Rng rng(7);
  const int n = 200000;
  double u = 0, e = 0, z = 0, z2 = 0;
  for (int i = 0; i < n; ++i) {
    u += rng.uniform();
    e += rng.exponential(60.0);
    const double x = rng.normal();
    z += x;
    z2 += x * x;
  }
  CHECK(u / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(e / n == doctest::Approx(60.0).epsilon(0.02));
  CHECK(std::abs(z / n) < 0.01);
  CHECK(z2 / n == doctest::Approx(1.0).epsilon(0.02));

  std::vector<double> w = {0.0, 1.0, 3.0};
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 40000; ++i) ++counts[rng.categorical(w)];
  CHECK(counts[0] == 0);
  CHECK(counts[2] / 40000.0 == doctest::Approx(0.75).epsilon(0.02));
  std::vector<double> zero = {0.0, 0.0};
  CHECK(rng.categorical(zero) == -1);
}

TEST_CASE("csv-adjacent string helpers") {
  CHECK(split("a;b;;c", ';') == std::vector<std::string>{"a", "b", "", "c"});
  CHECK(join({"a", "b"}, ';') == "a;b");
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}
