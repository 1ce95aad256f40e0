#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace remem {

// Proleptic Gregorian calendar, UTC, no leap seconds. Absolute positions are
// signed seconds since 1970-01-01T00:00:00.
using AbsSeconds = std::int64_t;

enum class Granularity { Year, Month, Day, Second };

// A calendar position at one of four granularities. Finer fields are present
// only when every coarser field is.
struct TimeInstant {
  int year = 0;
  std::optional<int> month;          // 1..12
  std::optional<int> day;            // 1..days_in_month
  std::optional<int> second_of_day;  // 0..86399

  Granularity granularity() const;
  bool operator==(const TimeInstant&) const = default;
};

// Closed interval of absolute seconds covered by an instant's granule.
struct GranuleInterval {
  AbsSeconds earliest = 0;
  AbsSeconds latest = 0;
};

enum class ScopeKind { Point, Interval };

// Temporal scope attached to a gist or fact. Point wraps a single instant
// (whose granule may still span time, e.g. a whole month). Interval carries
// optional start/end instants; an absent side is unbounded.
struct TimeScope {
  ScopeKind kind = ScopeKind::Point;
  TimeInstant point;
  std::optional<TimeInstant> start;
  std::optional<TimeInstant> end;

  static TimeScope point_of(const TimeInstant& t);
  static TimeScope interval_of(std::optional<TimeInstant> start,
                               std::optional<TimeInstant> end);

  bool operator==(const TimeScope&) const = default;
};

// Envelope of a scope in absolute seconds; absent side means unbounded.
struct ScopeEnvelope {
  std::optional<AbsSeconds> earliest;
  std::optional<AbsSeconds> latest;
};

enum class StartOp { GE, GT, EQ };
enum class EndOp { LE, LT, EQ };

// Filter over scopes. Both bounds optional; an item with no scope matches
// only a constraint with no bounds.
struct TemporalConstraint {
  std::optional<TimeInstant> start_bound;
  StartOp start_op = StartOp::GE;
  std::optional<TimeInstant> end_bound;
  EndOp end_op = EndOp::LE;

  bool unconstrained() const { return !start_bound && !end_bound; }
};

// ---- calendar arithmetic ---------------------------------------------------

bool is_leap_year(int year);
int days_in_month(int year, int month);

// Days since 1970-01-01 for a valid proleptic-Gregorian civil date.
std::int64_t days_from_civil(int year, int month, int day);

// ---- parse / render / validate ---------------------------------------------

// Accepts exactly "YYYY", "YYYY-MM", "YYYY-MM-DD", "YYYY-MM-DDThh:mm:ss".
// Shape errors raise MalformedTime; impossible dates raise
// InvalidCalendarDate.
TimeInstant parse_instant(std::string_view text);

std::string render_instant(const TimeInstant& t);

// Checks field ranges and presence hierarchy; throws on violation.
void validate_instant(const TimeInstant& t);

// Interval scopes with both ends present must have
// earliest(start) <= latest(end); throws InvalidCalendarDate otherwise.
void validate_scope(const TimeScope& s);

// ---- interval algebra --------------------------------------------------

// The closed [earliest, latest] span the instant's granule covers.
GranuleInterval granule_of(const TimeInstant& t);

ScopeEnvelope scope_envelope(const TimeScope& s);

// Interval-overlap semantics. With the scope envelope [e, l] (missing sides
// unbounded) and each bound's granule [b0, b1]:
//   start GE: l >= b0      start GT: l > b1      start EQ: e inside [b0, b1]
//   end   LE: e <= b1      end   LT: e < b0      end   EQ: l inside [b0, b1]
bool satisfies(const TimeScope& scope, const TemporalConstraint& c);

// Filter entry point for items whose scope is optional: an untimed item
// matches only an unconstrained filter.
bool scope_matches(const std::optional<TimeScope>& scope,
                   const TemporalConstraint& c);

// Convenience for sort keys: earliest absolute second of a scope, if bounded.
std::optional<AbsSeconds> scope_earliest(const TimeScope& s);

}  // namespace remem
