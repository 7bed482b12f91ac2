#include "ultraqueue/common.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

namespace uq {

std::string to_string(Gender g) { return g == Gender::male ? "male" : "female"; }
std::string to_string(DayKind k) { return k == DayKind::weekday ? "weekday" : "weekend"; }

std::optional<Gender> parse_gender(std::string_view s) {
  if (s == "male" || s == "M" || s == "m") return Gender::male;
  if (s == "female" || s == "F" || s == "f") return Gender::female;
  return std::nullopt;
}

std::optional<DayKind> parse_day_kind(std::string_view s) {
  if (s == "weekday") return DayKind::weekday;
  if (s == "weekend") return DayKind::weekend;
  return std::nullopt;
}

std::string format_hms(Seconds t) {
  if (t < 0) t = 0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld", static_cast<long long>(t / 3600),
                static_cast<long long>((t / 60) % 60), static_cast<long long>(t % 60));
  return buf;
}

namespace {

std::optional<long long> parse_int(std::string_view s) {
  if (s.empty()) return std::nullopt;
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::chrono::sys_days> parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  auto y = parse_int(s.substr(0, 4));
  auto m = parse_int(s.substr(5, 2));
  auto d = parse_int(s.substr(8, 2));
  if (!y || !m || !d) return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{static_cast<int>(*y)},
                                  std::chrono::month{static_cast<unsigned>(*m)},
                                  std::chrono::day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days{ymd};
}

}  // namespace

std::optional<Seconds> parse_hms(std::string_view s) {
  auto parts = split(s, ':');
  if (parts.size() != 3) return std::nullopt;
  auto h = parse_int(parts[0]);
  auto m = parse_int(parts[1]);
  auto sec = parse_int(parts[2]);
  if (!h || !m || !sec || *h < 0 || *m < 0 || *m > 59 || *sec < 0 || *sec > 59) return std::nullopt;
  return *h * 3600 + *m * 60 + *sec;
}

int age_bucket(double age) {
  int b = 0;
  for (int i = 0; i < kAgeBuckets; ++i) {
    if (age >= kAgeLowerBounds[i]) b = i;
  }
  return b;
}

bool is_iso_date(std::string_view day_id) { return parse_date(day_id).has_value(); }

std::optional<int> weekday_of(std::string_view day_id) {
  auto d = parse_date(day_id);
  if (!d) return std::nullopt;
  return static_cast<int>(std::chrono::weekday{*d}.iso_encoding()) - 1;
}

DayKind day_kind_of(std::string_view day_id) {
  auto w = weekday_of(day_id);
  return (w && *w >= 5) ? DayKind::weekend : DayKind::weekday;
}

std::string add_days(std::string_view day_id, int days) {
  auto d = parse_date(day_id);
  if (!d) throw InputError("not an ISO date: " + std::string(day_id));
  std::chrono::year_month_day ymd{*d + std::chrono::days{days}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(sep);
    out += parts[i];
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace uq
