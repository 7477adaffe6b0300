#include <doctest.h>

#include <cmath>

#include "qfiga/expression.hpp"

using namespace qfiga;

TEST_CASE("expression parsing and evaluation") {
  const double pi = 3.14159265358979323846;
  SUBCASE("planar source term") {
    const Expression e = Expression::parse("-2*pi^2*sin(pi*x)*sin(pi*y)");
    CHECK(e(0.5, 0.5, 0.123) == doctest::Approx(-2.0 * pi * pi).epsilon(1e-14));
    CHECK(e(0.0, 0.5, 0.0) == doctest::Approx(0.0));
  }
  SUBCASE("variables") {
    CHECK(Expression::parse("x")(3, 0, 0) == 3.0);
    CHECK(Expression::parse("y")(3, -2, 0) == -2.0);
    CHECK(Expression::parse("z")(0, 0, 7) == 7.0);
  }
  SUBCASE("shell solution vanishes on coordinate planes") {
    const Expression e = Expression::parse(
        "sin(x)*sin(y)*sin(z)*(x^2+y^2+z^2-121)*(x^2+y^2+z^2-81)");
    CHECK(e(0.0, 3.3, 9.1) == 0.0);
    CHECK(e(2.0, 0.0, 1.0) == 0.0);
    // and on both shell radii
    CHECK(e(11.0, 0.0, 0.0) == doctest::Approx(0.0));
    const double v = e(5.0, 6.0, 7.0);
    const double rho2 = 25.0 + 36.0 + 49.0;
    CHECK(v == doctest::Approx(std::sin(5) * std::sin(6) * std::sin(7) *
                               (rho2 - 121) * (rho2 - 81)));
  }
  SUBCASE("precedence and associativity") {
    CHECK(Expression::parse("2+3*4")(0, 0, 0) == 14.0);
    CHECK(Expression::parse("2*3^2")(0, 0, 0) == 18.0);
    CHECK(Expression::parse("-3^2")(0, 0, 0) == -9.0);       // unary binds after ^
    CHECK(Expression::parse("2^3^2")(0, 0, 0) == 512.0);     // right associative
    CHECK(Expression::parse("2^-1")(0, 0, 0) == 0.5);
    CHECK(Expression::parse("8/4/2")(0, 0, 0) == 1.0);
    CHECK(Expression::parse("1-2-3")(0, 0, 0) == -4.0);
    CHECK(Expression::parse("(1-2)-3")(0, 0, 0) == -4.0);
    CHECK(Expression::parse("sqrt(e^2)")(0, 0, 0) ==
          doctest::Approx(2.71828182845904523536).epsilon(1e-14));
    CHECK(Expression::parse("cos(0)+exp(0)")(0, 0, 0) == 2.0);
  }
  SUBCASE("errors carry offsets and expectations") {
    try {
      Expression::parse("1 + * 2");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.offset == 4);
      CHECK(!e.expected.empty());
    }
    try {
      Expression::parse("sin(x");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.offset == 5);
    }
    CHECK_THROWS_AS(Expression::parse("foo(x)"), ParseError);
    CHECK_THROWS_AS(Expression::parse("1 2"), ParseError);
    CHECK_THROWS_AS(Expression::parse(""), ParseError);
  }
  SUBCASE("parse-print-parse round trip") {
    for (const std::string src :
         {"-2*pi^2*sin(pi*x)*sin(pi*y)", "x+y*z-3/(x+1)", "sqrt(x^2+y^2+z^2)",
          "exp(-x)*cos(2*y)", "1-2-3", "2^3^2", "-x^2"}) {
      const Expression a = Expression::parse(src);
      const Expression b = Expression::parse(a.to_string());
      CHECK(a.equals(b));
      CHECK(a.to_string() == b.to_string());
      CHECK(a(0.3, 0.7, 0.9) == b(0.3, 0.7, 0.9));
    }
  }
}
