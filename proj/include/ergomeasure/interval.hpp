#pragma once

#include <mpfr.h>

#include <string>

namespace ergo {

// Closed real interval [lo, hi] with outward rounding at a fixed working precision.
// Every operation returns an interval that contains the exact image of its inputs.
class Iv {
 public:
  explicit Iv(mpfr_prec_t prec);
  Iv(const Iv& other);
  Iv(Iv&& other) noexcept;
  Iv& operator=(const Iv& other);
  Iv& operator=(Iv&& other) noexcept;
  ~Iv();

  mpfr_prec_t prec() const { return prec_; }

  static Iv from_double(double x, mpfr_prec_t prec);                 // exact point
  static Iv from_endpoints(double lo, double hi, mpfr_prec_t prec);  // exact endpoints
  static Iv from_decimal(const std::string& text, mpfr_prec_t prec);
  static Iv pi(mpfr_prec_t prec);

  double lo_down() const;   // lower endpoint rounded toward -inf
  double hi_up() const;     // upper endpoint rounded toward +inf
  double mid() const;       // approximate midpoint
  double width_up() const;  // hi - lo rounded up
  bool is_finite() const;
  bool contains(double x) const;

  friend Iv add(const Iv& a, const Iv& b);
  friend Iv sub(const Iv& a, const Iv& b);
  friend Iv mul(const Iv& a, const Iv& b);
  friend Iv neg(const Iv& a);
  friend Iv sin_iv(const Iv& a);
  friend Iv cos_iv(const Iv& a);
  friend Iv abs_iv(const Iv& a);

 private:
  mpfr_t lo_;
  mpfr_t hi_;
  mpfr_prec_t prec_;
};

Iv add(const Iv& a, const Iv& b);
Iv sub(const Iv& a, const Iv& b);
Iv mul(const Iv& a, const Iv& b);
Iv neg(const Iv& a);
Iv sin_iv(const Iv& a);
Iv cos_iv(const Iv& a);
Iv abs_iv(const Iv& a);

}  // namespace ergo
