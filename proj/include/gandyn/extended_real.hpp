#pragma once

#include <cmath>
#include <ostream>

namespace gandyn {

/// A nonnegative quantity that may be +infinity, with the infinity carried as an
/// explicit flag instead of a floating-point sentinel.
class ExtendedReal {
 public:
  constexpr ExtendedReal() = default;
  constexpr explicit ExtendedReal(double value) : value_(value) {}

  static constexpr ExtendedReal infinity() {
    ExtendedReal r;
    r.infinite_ = true;
    return r;
  }

  constexpr bool is_infinite() const { return infinite_; }
  constexpr bool is_finite() const { return !infinite_; }

  // Only meaningful when finite.
  constexpr double value() const { return value_; }

  // Converts to a double, mapping the marker to +inf. For arithmetic at the edges.
  double to_double() const { return infinite_ ? HUGE_VAL : value_; }

  friend constexpr bool operator==(const ExtendedReal& a, const ExtendedReal& b) {
    if (a.infinite_ || b.infinite_) return a.infinite_ == b.infinite_;
    return a.value_ == b.value_;
  }

  friend constexpr bool operator<(const ExtendedReal& a, const ExtendedReal& b) {
    if (a.infinite_) return false;
    if (b.infinite_) return true;
    return a.value_ < b.value_;
  }
  friend constexpr bool operator>(const ExtendedReal& a, const ExtendedReal& b) { return b < a; }
  friend constexpr bool operator<=(const ExtendedReal& a, const ExtendedReal& b) { return !(b < a); }
  friend constexpr bool operator>=(const ExtendedReal& a, const ExtendedReal& b) { return !(a < b); }

 private:
  double value_ = 0.0;
  bool infinite_ = false;
};

inline std::ostream& operator<<(std::ostream& os, const ExtendedReal& x) {
  if (x.is_infinite()) return os << "inf";
  return os << x.value();
}

}  // namespace gandyn
