#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ergomeasure/torus.hpp"

namespace ergo {

// Expression tree over {x_1..x_d, decimal constants, +, -, *, sin, cos, pi}.
struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { Number, Pi, Var, Add, Sub, Mul, Sin, Cos };
  Kind kind;
  std::string literal;  // Number: the decimal text, kept exact
  int var_index = 0;    // Var: 1-based index
  ExprPtr a, b;
};

// A parsed torus endomorphism with certified evaluation and Lipschitz data.
// Each component expression is understood as reduced mod 1.
struct MapSpec {
  int dim = 1;
  std::vector<ExprPtr> components;
  double lipschitz_bound = 0.0;  // upper bound on the metric Lipschitz constant
  std::string label;
};

// Parse DSL text ("<expr> mod 1" per component, components separated by ';').
// Throws SyntaxError, DimensionMismatch, UnboundedDerivative.
MapSpec parse_map(const std::string& source, int dim);

// Accepts either DSL text or a builtin name: "doubling", "rotation:<alpha>", "sine2:<amp>".
MapSpec resolve_map(const std::string& text_or_name, int dim = 1);

// Normalized textual form; parse(print(m)) reproduces the same tree.
std::string print_map(const MapSpec& spec);

// Certified evaluation: returns a dyadic vector v with torus_dist(f(point), v) <= tol
// componentwise. tol must be a power of two. Throws PrecisionUnreachable past max_bits.
std::vector<double> eval_map(const MapSpec& spec, const std::vector<double>& point, double tol,
                             long max_bits = 4096);

// Upper bound on sup{ d(f(x),f(y)) : d(x,y) <= delta }, clamped to the torus diameter.
double modulus_of_continuity(const MapSpec& spec, double delta);

// Enclosure of { f(x) : x in domain } on the circle for a 1-D map, as a closed arc.
// Outward rounded: the true image set is contained in the returned arc.
Arc image_arc(const MapSpec& spec, const Arc& domain, long prec_bits = 128);

// Plain double evaluation of component 0 (no certificate). For the DSL grammar the
// roundoff is a few ulp; callers needing certified output use eval_map.
double eval_fast(const MapSpec& spec, double x);

// Extended-precision variant for quadrature inner loops whose error budget sits
// below double roundoff.
long double eval_fast_ld(const MapSpec& spec, long double x);

}  // namespace ergo
