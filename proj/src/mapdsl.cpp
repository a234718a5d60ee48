#include "ergomeasure/mapdsl.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "ergomeasure/errors.hpp"
#include "ergomeasure/interval.hpp"

namespace ergo {

namespace {

ExprPtr mk(Expr::Kind k) {
  auto e = std::make_shared<Expr>();
  e->kind = k;
  return e;
}

ExprPtr mk_num(const std::string& text) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Number;
  e->literal = text;
  return e;
}

ExprPtr mk_var(int index) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Var;
  e->var_index = index;
  return e;
}

ExprPtr mk_bin(Expr::Kind k, ExprPtr a, ExprPtr b) {
  auto e = std::make_shared<Expr>();
  e->kind = k;
  e->a = std::move(a);
  e->b = std::move(b);
  return e;
}

ExprPtr mk_un(Expr::Kind k, ExprPtr a) {
  auto e = std::make_shared<Expr>();
  e->kind = k;
  e->a = std::move(a);
  return e;
}

bool is_num(const ExprPtr& e, const char* text) {
  return e->kind == Expr::Kind::Number && e->literal == text;
}

// --- lexer ---------------------------------------------------------------

struct Token {
  enum class Type { Number, Ident, Plus, Minus, Star, LParen, RParen, Semicolon, End };
  Type type;
  std::string text;
  size_t pos;
};

std::vector<Token> lex(const std::string& s) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    size_t start = i;
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      size_t j = i;
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      if (j < s.size() && s[j] == '.') {
        ++j;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      }
      if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
        size_t k = j + 1;
        if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
        if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
          ++k;
          while (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) ++k;
          j = k;
        }
      }
      std::string text = s.substr(i, j - i);
      if (text == ".")
        throw Error(ErrorCode::SyntaxError, "bad number at position " + std::to_string(start));
      out.push_back({Token::Type::Number, text, start});
      i = j;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      size_t j = i;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
      out.push_back({Token::Type::Ident, s.substr(i, j - i), start});
      i = j;
      continue;
    }
    switch (c) {
      case '+': out.push_back({Token::Type::Plus, "+", start}); break;
      case '-': out.push_back({Token::Type::Minus, "-", start}); break;
      case '*': out.push_back({Token::Type::Star, "*", start}); break;
      case '(': out.push_back({Token::Type::LParen, "(", start}); break;
      case ')': out.push_back({Token::Type::RParen, ")", start}); break;
      case ';': out.push_back({Token::Type::Semicolon, ";", start}); break;
      default:
        throw Error(ErrorCode::SyntaxError, std::string("unexpected character '") + c +
                                                "' at position " + std::to_string(start));
    }
    ++i;
  }
  out.push_back({Token::Type::End, "", s.size()});
  return out;
}

// --- parser --------------------------------------------------------------

class Parser {
 public:
  Parser(std::vector<Token> tokens, int dim) : toks_(std::move(tokens)), dim_(dim) {}

  std::vector<ExprPtr> parse_components() {
    std::vector<ExprPtr> comps;
    for (;;) {
      ExprPtr e = parse_expr();
      expect_mod_one();
      comps.push_back(std::move(e));
      if (peek().type == Token::Type::Semicolon) {
        advance();
        continue;
      }
      break;
    }
    if (peek().type != Token::Type::End) fail("expected end of input");
    if (static_cast<int>(comps.size()) != dim_)
      throw Error(ErrorCode::DimensionMismatch,
                  "map has " + std::to_string(comps.size()) + " component(s) but dim = " +
                      std::to_string(dim_));
    return comps;
  }

 private:
  const Token& peek() const { return toks_[idx_]; }
  const Token& advance() { return toks_[idx_++]; }

  [[noreturn]] void fail(const std::string& msg) {
    const Token& t = peek();
    std::string at = t.type == Token::Type::End
                         ? "at end of input"
                         : "at token '" + t.text + "' (position " + std::to_string(t.pos) + ")";
    throw Error(ErrorCode::SyntaxError, msg + " " + at);
  }

  void expect_mod_one() {
    if (peek().type != Token::Type::Ident || peek().text != "mod")
      fail("expected 'mod 1' to close the component");
    advance();
    if (peek().type != Token::Type::Number || peek().text != "1")
      fail("expected literal 1 after 'mod'");
    advance();
  }

  ExprPtr parse_expr() {
    ExprPtr e = parse_term();
    for (;;) {
      if (peek().type == Token::Type::Plus) {
        advance();
        e = mk_bin(Expr::Kind::Add, e, parse_term());
      } else if (peek().type == Token::Type::Minus) {
        advance();
        e = mk_bin(Expr::Kind::Sub, e, parse_term());
      } else {
        return e;
      }
    }
  }

  ExprPtr parse_term() {
    ExprPtr e = parse_factor();
    while (peek().type == Token::Type::Star) {
      advance();
      e = mk_bin(Expr::Kind::Mul, e, parse_factor());
    }
    return e;
  }

  ExprPtr parse_factor() {
    const Token& t = peek();
    switch (t.type) {
      case Token::Type::Number:
        advance();
        return mk_num(t.text);
      case Token::Type::LParen: {
        advance();
        ExprPtr e = parse_expr();
        if (peek().type != Token::Type::RParen) fail("expected ')'");
        advance();
        return e;
      }
      case Token::Type::Ident: {
        if (t.text == "pi") {
          advance();
          return mk(Expr::Kind::Pi);
        }
        if (t.text == "sin" || t.text == "cos") {
          Expr::Kind k = t.text == "sin" ? Expr::Kind::Sin : Expr::Kind::Cos;
          advance();
          if (peek().type != Token::Type::LParen) fail("expected '(' after function name");
          advance();
          ExprPtr arg = parse_expr();
          if (peek().type != Token::Type::RParen) fail("expected ')'");
          advance();
          return mk_un(k, arg);
        }
        if (t.text.size() >= 2 && t.text[0] == 'x') {
          char* end = nullptr;
          long idx = std::strtol(t.text.c_str() + 1, &end, 10);
          if (*end == '\0' && idx >= 1) {
            if (idx > dim_)
              throw Error(ErrorCode::DimensionMismatch,
                          "variable " + t.text + " exceeds dim = " + std::to_string(dim_) +
                              " (position " + std::to_string(t.pos) + ")");
            advance();
            return mk_var(static_cast<int>(idx));
          }
        }
        fail("unknown identifier '" + t.text + "'");
      }
      default:
        fail("expected a number, variable, 'pi', function call, or '('");
    }
  }

  std::vector<Token> toks_;
  int dim_;
  size_t idx_ = 0;
};

// --- printing ------------------------------------------------------------

int precedence(Expr::Kind k) {
  switch (k) {
    case Expr::Kind::Add:
    case Expr::Kind::Sub: return 1;
    case Expr::Kind::Mul: return 2;
    default: return 3;
  }
}

void print_expr(const Expr& e, std::ostream& os) {
  auto child = [&os](const ExprPtr& c, int min_prec) {
    if (precedence(c->kind) < min_prec) {
      os << '(';
      print_expr(*c, os);
      os << ')';
    } else {
      print_expr(*c, os);
    }
  };
  switch (e.kind) {
    case Expr::Kind::Number: os << e.literal; break;
    case Expr::Kind::Pi: os << "pi"; break;
    case Expr::Kind::Var: os << 'x' << e.var_index; break;
    case Expr::Kind::Add:
      child(e.a, 1);
      os << " + ";
      child(e.b, 2);
      break;
    case Expr::Kind::Sub:
      child(e.a, 1);
      os << " - ";
      child(e.b, 2);
      break;
    case Expr::Kind::Mul:
      child(e.a, 2);
      os << '*';
      child(e.b, 3);
      break;
    case Expr::Kind::Sin:
      os << "sin(";
      print_expr(*e.a, os);
      os << ')';
      break;
    case Expr::Kind::Cos:
      os << "cos(";
      print_expr(*e.a, os);
      os << ')';
      break;
  }
}

// --- differentiation -----------------------------------------------------

ExprPtr simplified_add(ExprPtr a, ExprPtr b) {
  if (is_num(a, "0")) return b;
  if (is_num(b, "0")) return a;
  return mk_bin(Expr::Kind::Add, std::move(a), std::move(b));
}

ExprPtr simplified_mul(ExprPtr a, ExprPtr b) {
  if (is_num(a, "0") || is_num(b, "0")) return mk_num("0");
  if (is_num(a, "1")) return b;
  if (is_num(b, "1")) return a;
  return mk_bin(Expr::Kind::Mul, std::move(a), std::move(b));
}

ExprPtr derivative(const ExprPtr& e, int var) {
  switch (e->kind) {
    case Expr::Kind::Number:
    case Expr::Kind::Pi: return mk_num("0");
    case Expr::Kind::Var: return mk_num(e->var_index == var ? "1" : "0");
    case Expr::Kind::Add: return simplified_add(derivative(e->a, var), derivative(e->b, var));
    case Expr::Kind::Sub: {
      ExprPtr da = derivative(e->a, var);
      ExprPtr db = derivative(e->b, var);
      if (is_num(db, "0")) return da;
      return mk_bin(Expr::Kind::Sub, std::move(da), std::move(db));
    }
    case Expr::Kind::Mul:
      return simplified_add(simplified_mul(derivative(e->a, var), e->b),
                            simplified_mul(e->a, derivative(e->b, var)));
    case Expr::Kind::Sin:
      return simplified_mul(mk_un(Expr::Kind::Cos, e->a), derivative(e->a, var));
    case Expr::Kind::Cos:
      return simplified_mul(mk_bin(Expr::Kind::Sub, mk_num("0"), mk_un(Expr::Kind::Sin, e->a)),
                            derivative(e->a, var));
  }
  return mk_num("0");
}

// --- evaluation ----------------------------------------------------------

Iv eval_iv(const Expr& e, const std::vector<Iv>& vars, mpfr_prec_t prec) {
  switch (e.kind) {
    case Expr::Kind::Number: return Iv::from_decimal(e.literal, prec);
    case Expr::Kind::Pi: return Iv::pi(prec);
    case Expr::Kind::Var: return vars[e.var_index - 1];
    case Expr::Kind::Add: return add(eval_iv(*e.a, vars, prec), eval_iv(*e.b, vars, prec));
    case Expr::Kind::Sub: return sub(eval_iv(*e.a, vars, prec), eval_iv(*e.b, vars, prec));
    case Expr::Kind::Mul: return mul(eval_iv(*e.a, vars, prec), eval_iv(*e.b, vars, prec));
    case Expr::Kind::Sin: return sin_iv(eval_iv(*e.a, vars, prec));
    case Expr::Kind::Cos: return cos_iv(eval_iv(*e.a, vars, prec));
  }
  return Iv(prec);
}

double eval_fast_expr(const Expr& e, double x) {
  switch (e.kind) {
    case Expr::Kind::Number: return std::strtod(e.literal.c_str(), nullptr);
    case Expr::Kind::Pi: return M_PI;
    case Expr::Kind::Var: return x;
    case Expr::Kind::Add: return eval_fast_expr(*e.a, x) + eval_fast_expr(*e.b, x);
    case Expr::Kind::Sub: return eval_fast_expr(*e.a, x) - eval_fast_expr(*e.b, x);
    case Expr::Kind::Mul: return eval_fast_expr(*e.a, x) * eval_fast_expr(*e.b, x);
    case Expr::Kind::Sin: return std::sin(eval_fast_expr(*e.a, x));
    case Expr::Kind::Cos: return std::cos(eval_fast_expr(*e.a, x));
  }
  return 0.0;
}

long double eval_fast_expr_ld(const Expr& e, long double x) {
  switch (e.kind) {
    case Expr::Kind::Number: return std::strtold(e.literal.c_str(), nullptr);
    case Expr::Kind::Pi: return 3.141592653589793238462643383279502884L;
    case Expr::Kind::Var: return x;
    case Expr::Kind::Add:
      return eval_fast_expr_ld(*e.a, x) + eval_fast_expr_ld(*e.b, x);
    case Expr::Kind::Sub:
      return eval_fast_expr_ld(*e.a, x) - eval_fast_expr_ld(*e.b, x);
    case Expr::Kind::Mul:
      return eval_fast_expr_ld(*e.a, x) * eval_fast_expr_ld(*e.b, x);
    case Expr::Kind::Sin: return sinl(eval_fast_expr_ld(*e.a, x));
    case Expr::Kind::Cos: return cosl(eval_fast_expr_ld(*e.a, x));
  }
  return 0.0L;
}

// Certified upper bound on the metric Lipschitz constant: max over components of the
// sum over variables of sup |partial derivative| on the unit box.
double lipschitz_from_derivatives(const std::vector<ExprPtr>& comps, int dim) {
  const mpfr_prec_t prec = 128;
  std::vector<Iv> box;
  box.reserve(dim);
  for (int j = 0; j < dim; ++j) box.push_back(Iv::from_endpoints(0.0, 1.0, prec));
  double worst = 0.0;
  for (const auto& comp : comps) {
    double row = 0.0;
    for (int j = 1; j <= dim; ++j) {
      ExprPtr d = derivative(comp, j);
      Iv bound = abs_iv(eval_iv(*d, box, prec));
      if (!bound.is_finite())
        throw Error(ErrorCode::UnboundedDerivative, "derivative bound is not finite");
      row += bound.hi_up();
    }
    worst = std::max(worst, row);
  }
  if (!std::isfinite(worst))
    throw Error(ErrorCode::UnboundedDerivative, "derivative bound is not finite");
  return worst;
}

Arc real_interval_to_arc(const Iv& v) {
  double len = v.width_up();
  if (len >= 1.0) return Arc{0.0, 1.0};
  return Arc{wrap01(v.lo_down()), len};
}

Arc arc_hull(const Arc& a, const Arc& b) {
  if (a.full() || b.full()) return Arc{0.0, 1.0};
  double off_b = wrap01(b.lo - a.lo);
  double span1 = std::max(a.len, off_b + b.len);
  double off_a = wrap01(a.lo - b.lo);
  double span2 = std::max(b.len, off_a + a.len);
  Arc best = span1 <= span2 ? Arc{a.lo, span1} : Arc{b.lo, span2};
  if (best.len >= 1.0) return Arc{0.0, 1.0};
  return best;
}

bool is_power_of_two(double tol) {
  if (!(tol > 0) || !std::isfinite(tol)) return false;
  int e;
  return std::frexp(tol, &e) == 0.5;
}

}  // namespace

MapSpec parse_map(const std::string& source, int dim) {
  if (dim < 1) throw Error(ErrorCode::DimensionMismatch, "dim must be >= 1");
  Parser p(lex(source), dim);
  MapSpec spec;
  spec.dim = dim;
  spec.components = p.parse_components();
  spec.lipschitz_bound = lipschitz_from_derivatives(spec.components, dim);
  spec.label = source;
  return spec;
}

MapSpec resolve_map(const std::string& text_or_name, int dim) {
  auto numeric_tail = [](const std::string& s, size_t at) {
    std::string t = s.substr(at);
    if (t.empty()) throw Error(ErrorCode::SyntaxError, "missing parameter after ':'");
    return t;
  };
  auto signed_term = [](const std::string& head, const std::string& val) {
    // "x1 + v" or "x1 - |v|" so the DSL (which has no unary minus) stays valid
    if (!val.empty() && val[0] == '-') return head + " - " + val.substr(1);
    return head + " + " + val;
  };
  if (text_or_name == "doubling") {
    MapSpec m = parse_map("2*x1 mod 1", 1);
    m.label = "doubling";
    return m;
  }
  if (text_or_name.rfind("rotation:", 0) == 0) {
    std::string alpha = numeric_tail(text_or_name, 9);
    MapSpec m = parse_map(signed_term("x1", alpha) + " mod 1", 1);
    m.label = text_or_name;
    return m;
  }
  if (text_or_name.rfind("sine2:", 0) == 0) {
    std::string amp = numeric_tail(text_or_name, 6);
    MapSpec m = parse_map(signed_term("x1", amp + "*sin(4*pi*x1)") + " mod 1", 1);
    m.label = text_or_name;
    return m;
  }
  return parse_map(text_or_name, dim);
}

std::string print_map(const MapSpec& spec) {
  std::ostringstream os;
  for (size_t i = 0; i < spec.components.size(); ++i) {
    if (i) os << "; ";
    print_expr(*spec.components[i], os);
    os << " mod 1";
  }
  return os.str();
}

std::vector<double> eval_map(const MapSpec& spec, const std::vector<double>& point, double tol,
                             long max_bits) {
  if (static_cast<int>(point.size()) != spec.dim)
    throw Error(ErrorCode::DimensionMismatch, "point dimension does not match map");
  for (double x : point)
    if (!(x >= 0.0 && x < 1.0))
      throw Error(ErrorCode::ConfigError, "point components must lie in [0,1)");
  if (!is_power_of_two(tol))
    throw Error(ErrorCode::PrecisionUnreachable, "tol must be a positive power of two");

  int tol_exp;
  std::frexp(tol, &tol_exp);  // tol = 2^(tol_exp-1)
  long q = -(tol_exp - 1);
  long bits = std::max<long>(24, 2 * std::max<long>(q, 1));

  for (; bits <= max_bits; bits *= 2) {
    std::vector<Iv> vars;
    vars.reserve(spec.dim);
    for (double x : point) vars.push_back(Iv::from_double(x, bits));

    std::vector<double> out(spec.dim);
    bool ok = true;
    for (int i = 0; i < spec.dim && ok; ++i) {
      Iv val = eval_iv(*spec.components[i], vars, bits);
      if (!val.is_finite() || val.width_up() > tol) {
        ok = false;
        break;
      }
      double step = tol / 2.0;
      out[i] = wrap01(std::round(val.mid() / step) * step);
    }
    if (ok) return out;
  }
  throw Error(ErrorCode::PrecisionUnreachable,
              "no enclosure of width <= tol within " + std::to_string(max_bits) + " bits");
}

double modulus_of_continuity(const MapSpec& spec, double delta) {
  if (!(delta > 0)) throw Error(ErrorCode::ConfigError, "delta must be positive");
  return std::min(spec.lipschitz_bound * delta, 0.5);
}

Arc image_arc(const MapSpec& spec, const Arc& domain, long prec_bits) {
  if (spec.dim != 1) throw Error(ErrorCode::DimensionMismatch, "image_arc requires a 1-D map");
  const Expr& f = *spec.components[0];

  auto segment = [&](double a, double b) {
    std::vector<Iv> vars{Iv::from_endpoints(a, b, prec_bits)};
    return real_interval_to_arc(eval_iv(f, vars, prec_bits));
  };

  if (domain.full() || domain.len >= 1.0) return segment(0.0, 1.0);
  double lo = wrap01(domain.lo);
  double hi_raw = lo + domain.len;
  if (hi_raw <= 1.0) return segment(lo, hi_raw);
  return arc_hull(segment(lo, 1.0), segment(0.0, hi_raw - 1.0));
}

double eval_fast(const MapSpec& spec, double x) {
  return wrap01(eval_fast_expr(*spec.components[0], x));
}

long double eval_fast_ld(const MapSpec& spec, long double x) {
  long double v = eval_fast_expr_ld(*spec.components[0], x);
  long double w = v - floorl(v);
  return (w >= 1.0L || w < 0.0L) ? 0.0L : w;
}

}  // namespace ergo
