#include "ergomeasure/interval.hpp"

#include <algorithm>
#include <cmath>

namespace ergo {

Iv::Iv(mpfr_prec_t prec) : prec_(prec) {
  mpfr_init2(lo_, prec);
  mpfr_init2(hi_, prec);
  mpfr_set_zero(lo_, 1);
  mpfr_set_zero(hi_, 1);
}

Iv::Iv(const Iv& other) : prec_(other.prec_) {
  mpfr_init2(lo_, prec_);
  mpfr_init2(hi_, prec_);
  mpfr_set(lo_, other.lo_, MPFR_RNDD);
  mpfr_set(hi_, other.hi_, MPFR_RNDU);
}

Iv::Iv(Iv&& other) noexcept : prec_(other.prec_) {
  mpfr_init2(lo_, prec_);
  mpfr_init2(hi_, prec_);
  mpfr_swap(lo_, other.lo_);
  mpfr_swap(hi_, other.hi_);
}

Iv& Iv::operator=(const Iv& other) {
  if (this != &other) {
    if (prec_ != other.prec_) {
      mpfr_set_prec(lo_, other.prec_);
      mpfr_set_prec(hi_, other.prec_);
      prec_ = other.prec_;
    }
    mpfr_set(lo_, other.lo_, MPFR_RNDD);
    mpfr_set(hi_, other.hi_, MPFR_RNDU);
  }
  return *this;
}

Iv& Iv::operator=(Iv&& other) noexcept {
  mpfr_swap(lo_, other.lo_);
  mpfr_swap(hi_, other.hi_);
  std::swap(prec_, other.prec_);
  return *this;
}

Iv::~Iv() {
  mpfr_clear(lo_);
  mpfr_clear(hi_);
}

Iv Iv::from_double(double x, mpfr_prec_t prec) {
  Iv r(prec);
  mpfr_set_d(r.lo_, x, MPFR_RNDD);
  mpfr_set_d(r.hi_, x, MPFR_RNDU);
  return r;
}

Iv Iv::from_endpoints(double lo, double hi, mpfr_prec_t prec) {
  Iv r(prec);
  mpfr_set_d(r.lo_, lo, MPFR_RNDD);
  mpfr_set_d(r.hi_, hi, MPFR_RNDU);
  return r;
}

Iv Iv::from_decimal(const std::string& text, mpfr_prec_t prec) {
  Iv r(prec);
  mpfr_set_str(r.lo_, text.c_str(), 10, MPFR_RNDD);
  mpfr_set_str(r.hi_, text.c_str(), 10, MPFR_RNDU);
  return r;
}

Iv Iv::pi(mpfr_prec_t prec) {
  Iv r(prec);
  mpfr_const_pi(r.lo_, MPFR_RNDD);
  mpfr_const_pi(r.hi_, MPFR_RNDU);
  return r;
}

double Iv::lo_down() const { return mpfr_get_d(lo_, MPFR_RNDD); }
double Iv::hi_up() const { return mpfr_get_d(hi_, MPFR_RNDU); }

double Iv::mid() const {
  mpfr_t m;
  mpfr_init2(m, prec_);
  mpfr_add(m, lo_, hi_, MPFR_RNDN);
  mpfr_div_2ui(m, m, 1, MPFR_RNDN);
  double d = mpfr_get_d(m, MPFR_RNDN);
  mpfr_clear(m);
  return d;
}

double Iv::width_up() const {
  mpfr_t w;
  mpfr_init2(w, prec_);
  mpfr_sub(w, hi_, lo_, MPFR_RNDU);
  double d = mpfr_get_d(w, MPFR_RNDU);
  mpfr_clear(w);
  return d;
}

bool Iv::is_finite() const { return mpfr_number_p(lo_) && mpfr_number_p(hi_); }

bool Iv::contains(double x) const {
  return mpfr_cmp_d(lo_, x) <= 0 && mpfr_cmp_d(hi_, x) >= 0;
}

Iv add(const Iv& a, const Iv& b) {
  Iv r(std::max(a.prec_, b.prec_));
  mpfr_add(r.lo_, a.lo_, b.lo_, MPFR_RNDD);
  mpfr_add(r.hi_, a.hi_, b.hi_, MPFR_RNDU);
  return r;
}

Iv sub(const Iv& a, const Iv& b) {
  Iv r(std::max(a.prec_, b.prec_));
  mpfr_sub(r.lo_, a.lo_, b.hi_, MPFR_RNDD);
  mpfr_sub(r.hi_, a.hi_, b.lo_, MPFR_RNDU);
  return r;
}

Iv neg(const Iv& a) {
  Iv r(a.prec_);
  mpfr_neg(r.lo_, a.hi_, MPFR_RNDD);
  mpfr_neg(r.hi_, a.lo_, MPFR_RNDU);
  return r;
}

Iv mul(const Iv& a, const Iv& b) {
  Iv r(std::max(a.prec_, b.prec_));
  mpfr_t t;
  mpfr_init2(t, r.prec_);
  // lo = min of the four products rounded down
  mpfr_mul(r.lo_, a.lo_, b.lo_, MPFR_RNDD);
  mpfr_mul(t, a.lo_, b.hi_, MPFR_RNDD);
  mpfr_min(r.lo_, r.lo_, t, MPFR_RNDD);
  mpfr_mul(t, a.hi_, b.lo_, MPFR_RNDD);
  mpfr_min(r.lo_, r.lo_, t, MPFR_RNDD);
  mpfr_mul(t, a.hi_, b.hi_, MPFR_RNDD);
  mpfr_min(r.lo_, r.lo_, t, MPFR_RNDD);
  // hi = max of the four products rounded up
  mpfr_mul(r.hi_, a.lo_, b.lo_, MPFR_RNDU);
  mpfr_mul(t, a.lo_, b.hi_, MPFR_RNDU);
  mpfr_max(r.hi_, r.hi_, t, MPFR_RNDU);
  mpfr_mul(t, a.hi_, b.lo_, MPFR_RNDU);
  mpfr_max(r.hi_, r.hi_, t, MPFR_RNDU);
  mpfr_mul(t, a.hi_, b.hi_, MPFR_RNDU);
  mpfr_max(r.hi_, r.hi_, t, MPFR_RNDU);
  mpfr_clear(t);
  return r;
}

namespace {

// True if some x = offset + 2*pi*k (k integer) may lie in [lo, hi].
// Conservative: rounding errors can only widen the answer toward "yes".
bool may_contain_mod_2pi(const mpfr_t lo, const mpfr_t hi, double offset_units_of_half_pi,
                         mpfr_prec_t prec) {
  mpfr_t off, q_lo, q_hi, two_pi;
  mpfr_init2(off, prec);
  mpfr_init2(q_lo, prec);
  mpfr_init2(q_hi, prec);
  mpfr_init2(two_pi, prec);

  mpfr_const_pi(off, MPFR_RNDN);
  mpfr_mul_d(off, off, offset_units_of_half_pi / 2.0, MPFR_RNDN);
  mpfr_const_pi(two_pi, MPFR_RNDD);
  mpfr_mul_2ui(two_pi, two_pi, 1, MPFR_RNDD);

  // k range: ceil((lo-off)/2pi) .. floor((hi-off)/2pi), outward-rounded
  mpfr_sub(q_lo, lo, off, MPFR_RNDD);
  mpfr_div(q_lo, q_lo, two_pi, MPFR_RNDD);
  mpfr_sub(q_hi, hi, off, MPFR_RNDU);
  mpfr_div(q_hi, q_hi, two_pi, MPFR_RNDU);
  mpfr_ceil(q_lo, q_lo);
  mpfr_floor(q_hi, q_hi);
  bool yes = mpfr_cmp(q_lo, q_hi) <= 0;

  mpfr_clear(off);
  mpfr_clear(q_lo);
  mpfr_clear(q_hi);
  mpfr_clear(two_pi);
  return yes;
}

}  // namespace

Iv sin_iv(const Iv& a) {
  Iv r(a.prec_);
  if (!a.is_finite()) {
    mpfr_set_inf(r.lo_, -1);
    mpfr_set_inf(r.hi_, 1);
    return r;
  }
  mpfr_t w;
  mpfr_init2(w, a.prec_);
  mpfr_sub(w, a.hi_, a.lo_, MPFR_RNDU);
  bool whole = mpfr_cmp_d(w, 6.3) >= 0;  // width beyond one full period
  mpfr_clear(w);

  if (whole) {
    mpfr_set_si(r.lo_, -1, MPFR_RNDD);
    mpfr_set_si(r.hi_, 1, MPFR_RNDU);
    return r;
  }

  mpfr_t s_lo, s_hi;
  mpfr_init2(s_lo, a.prec_);
  mpfr_init2(s_hi, a.prec_);
  mpfr_sin(s_lo, a.lo_, MPFR_RNDD);
  mpfr_sin(s_hi, a.hi_, MPFR_RNDD);
  mpfr_min(r.lo_, s_lo, s_hi, MPFR_RNDD);
  mpfr_sin(s_lo, a.lo_, MPFR_RNDU);
  mpfr_sin(s_hi, a.hi_, MPFR_RNDU);
  mpfr_max(r.hi_, s_lo, s_hi, MPFR_RNDU);
  mpfr_clear(s_lo);
  mpfr_clear(s_hi);

  if (may_contain_mod_2pi(a.lo_, a.hi_, 1.0, a.prec_))  // pi/2: sin = +1
    mpfr_set_si(r.hi_, 1, MPFR_RNDU);
  if (may_contain_mod_2pi(a.lo_, a.hi_, 3.0, a.prec_))  // 3pi/2: sin = -1
    mpfr_set_si(r.lo_, -1, MPFR_RNDD);
  return r;
}

Iv cos_iv(const Iv& a) {
  // cos(x) = sin(x + pi/2)
  Iv half_pi = Iv::pi(a.prec_);
  mpfr_div_2ui(half_pi.lo_, half_pi.lo_, 1, MPFR_RNDD);
  mpfr_div_2ui(half_pi.hi_, half_pi.hi_, 1, MPFR_RNDU);
  return sin_iv(add(a, half_pi));
}

Iv abs_iv(const Iv& a) {
  Iv r(a.prec_);
  if (mpfr_sgn(a.lo_) >= 0) {
    mpfr_set(r.lo_, a.lo_, MPFR_RNDD);
    mpfr_set(r.hi_, a.hi_, MPFR_RNDU);
  } else if (mpfr_sgn(a.hi_) <= 0) {
    mpfr_neg(r.lo_, a.hi_, MPFR_RNDD);
    mpfr_neg(r.hi_, a.lo_, MPFR_RNDU);
  } else {
    mpfr_set_zero(r.lo_, 1);
    mpfr_neg(r.hi_, a.lo_, MPFR_RNDU);
    mpfr_max(r.hi_, r.hi_, a.hi_, MPFR_RNDU);
  }
  return r;
}

}  // namespace ergo
