#include "remem/temporal.hpp"

#include <cstdio>

#include "remem/errors.hpp"

namespace remem {

namespace {

constexpr AbsSeconds kSecondsPerDay = 86400;

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

int parse_field(std::string_view s) {
  int v = 0;
  for (char c : s) v = v * 10 + (c - '0');
  return v;
}

[[noreturn]] void malformed(std::string_view text) {
  raise(ErrorCode::MalformedTime,
        "malformed time literal: \"" + std::string(text) + "\"");
}

}  // namespace

Granularity TimeInstant::granularity() const {
  if (second_of_day) return Granularity::Second;
  if (day) return Granularity::Day;
  if (month) return Granularity::Month;
  return Granularity::Year;
}

TimeScope TimeScope::point_of(const TimeInstant& t) {
  TimeScope s;
  s.kind = ScopeKind::Point;
  s.point = t;
  validate_scope(s);
  return s;
}

TimeScope TimeScope::interval_of(std::optional<TimeInstant> start,
                                 std::optional<TimeInstant> end) {
  TimeScope s;
  s.kind = ScopeKind::Interval;
  s.start = std::move(start);
  s.end = std::move(end);
  validate_scope(s);
  return s;
}

bool is_leap_year(int year) {
  return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

int days_in_month(int year, int month) {
  static const int kDays[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month == 2 && is_leap_year(year)) return 29;
  return kDays[month - 1];
}

std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy =
      (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 +
      static_cast<unsigned>(d) - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

TimeInstant parse_instant(std::string_view text) {
  TimeInstant t;
  switch (text.size()) {
    case 4:
      if (!all_digits(text)) malformed(text);
      t.year = parse_field(text);
      break;
    case 7:
      if (text[4] != '-' || !all_digits(text.substr(0, 4)) ||
          !all_digits(text.substr(5, 2)))
        malformed(text);
      t.year = parse_field(text.substr(0, 4));
      t.month = parse_field(text.substr(5, 2));
      break;
    case 10:
      if (text[4] != '-' || text[7] != '-' || !all_digits(text.substr(0, 4)) ||
          !all_digits(text.substr(5, 2)) || !all_digits(text.substr(8, 2)))
        malformed(text);
      t.year = parse_field(text.substr(0, 4));
      t.month = parse_field(text.substr(5, 2));
      t.day = parse_field(text.substr(8, 2));
      break;
    case 19: {
      if (text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
          text[13] != ':' || text[16] != ':' ||
          !all_digits(text.substr(0, 4)) || !all_digits(text.substr(5, 2)) ||
          !all_digits(text.substr(8, 2)) || !all_digits(text.substr(11, 2)) ||
          !all_digits(text.substr(14, 2)) || !all_digits(text.substr(17, 2)))
        malformed(text);
      t.year = parse_field(text.substr(0, 4));
      t.month = parse_field(text.substr(5, 2));
      t.day = parse_field(text.substr(8, 2));
      int hh = parse_field(text.substr(11, 2));
      int mm = parse_field(text.substr(14, 2));
      int ss = parse_field(text.substr(17, 2));
      if (hh > 23 || mm > 59 || ss > 59) {
        raise(ErrorCode::InvalidCalendarDate,
              "time of day out of range: \"" + std::string(text) + "\"");
      }
      t.second_of_day = hh * 3600 + mm * 60 + ss;
      break;
    }
    default:
      malformed(text);
  }
  validate_instant(t);
  return t;
}

std::string render_instant(const TimeInstant& t) {
  char buf[24];
  if (t.second_of_day) {
    int s = *t.second_of_day;
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d", t.year,
                  *t.month, *t.day, s / 3600, (s / 60) % 60, s % 60);
  } else if (t.day) {
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", t.year, *t.month, *t.day);
  } else if (t.month) {
    std::snprintf(buf, sizeof buf, "%04d-%02d", t.year, *t.month);
  } else {
    std::snprintf(buf, sizeof buf, "%04d", t.year);
  }
  return buf;
}

void validate_instant(const TimeInstant& t) {
  if (t.year < 0 || t.year > 9999) {
    raise(ErrorCode::InvalidCalendarDate,
          "year out of supported range: " + std::to_string(t.year));
  }
  if (t.day && !t.month) {
    raise(ErrorCode::MalformedTime, "day given without month");
  }
  if (t.second_of_day && !t.day) {
    raise(ErrorCode::MalformedTime, "time of day given without day");
  }
  if (t.month && (*t.month < 1 || *t.month > 12)) {
    raise(ErrorCode::InvalidCalendarDate,
          "month out of range: " + std::to_string(*t.month));
  }
  if (t.day &&
      (*t.day < 1 || *t.day > days_in_month(t.year, *t.month))) {
    raise(ErrorCode::InvalidCalendarDate,
          "day out of range for " + std::to_string(t.year) + "-" +
              std::to_string(*t.month) + ": " + std::to_string(*t.day));
  }
  if (t.second_of_day && (*t.second_of_day < 0 || *t.second_of_day > 86399)) {
    raise(ErrorCode::InvalidCalendarDate,
          "second of day out of range: " + std::to_string(*t.second_of_day));
  }
}

void validate_scope(const TimeScope& s) {
  if (s.kind == ScopeKind::Point) {
    validate_instant(s.point);
    return;
  }
  if (s.start) validate_instant(*s.start);
  if (s.end) validate_instant(*s.end);
  if (s.start && s.end) {
    if (granule_of(*s.start).earliest > granule_of(*s.end).latest) {
      raise(ErrorCode::InvalidCalendarDate,
            "interval start " + render_instant(*s.start) + " is after end " +
                render_instant(*s.end));
    }
  }
}

GranuleInterval granule_of(const TimeInstant& t) {
  int m0 = t.month.value_or(1);
  int d0 = t.day.value_or(1);
  AbsSeconds lo = days_from_civil(t.year, m0, d0) * kSecondsPerDay +
                  t.second_of_day.value_or(0);
  AbsSeconds hi;
  switch (t.granularity()) {
    case Granularity::Second:
      hi = lo;
      break;
    case Granularity::Day:
      hi = lo + kSecondsPerDay - 1;
      break;
    case Granularity::Month:
      hi = days_from_civil(t.year, *t.month, days_in_month(t.year, *t.month)) *
               kSecondsPerDay +
           kSecondsPerDay - 1;
      break;
    case Granularity::Year:
      hi = days_from_civil(t.year, 12, 31) * kSecondsPerDay + kSecondsPerDay - 1;
      break;
  }
  return {lo, hi};
}

ScopeEnvelope scope_envelope(const TimeScope& s) {
  ScopeEnvelope env;
  if (s.kind == ScopeKind::Point) {
    GranuleInterval g = granule_of(s.point);
    env.earliest = g.earliest;
    env.latest = g.latest;
    return env;
  }
  if (s.start) env.earliest = granule_of(*s.start).earliest;
  if (s.end) env.latest = granule_of(*s.end).latest;
  return env;
}

bool satisfies(const TimeScope& scope, const TemporalConstraint& c) {
  if (c.unconstrained()) return true;
  ScopeEnvelope env = scope_envelope(scope);

  if (c.start_bound) {
    GranuleInterval b = granule_of(*c.start_bound);
    switch (c.start_op) {
      case StartOp::GE:
        if (env.latest && *env.latest < b.earliest) return false;
        break;
      case StartOp::GT:
        if (env.latest && *env.latest <= b.latest) return false;
        break;
      case StartOp::EQ:
        if (!env.earliest) return false;
        if (*env.earliest < b.earliest || *env.earliest > b.latest)
          return false;
        break;
    }
  }
  if (c.end_bound) {
    GranuleInterval b = granule_of(*c.end_bound);
    switch (c.end_op) {
      case EndOp::LE:
        if (env.earliest && *env.earliest > b.latest) return false;
        break;
      case EndOp::LT:
        if (env.earliest && *env.earliest >= b.earliest) return false;
        break;
      case EndOp::EQ:
        if (!env.latest) return false;
        if (*env.latest < b.earliest || *env.latest > b.latest) return false;
        break;
    }
  }
  return true;
}

bool scope_matches(const std::optional<TimeScope>& scope,
                   const TemporalConstraint& c) {
  if (!scope) return c.unconstrained();
  return satisfies(*scope, c);
}

std::optional<AbsSeconds> scope_earliest(const TimeScope& s) {
  return scope_envelope(s).earliest;
}

}  // namespace remem
