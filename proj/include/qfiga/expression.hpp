#pragma once

#include <Eigen/Core>

#include <memory>
#include <stdexcept>
#include <string>

namespace qfiga {

struct ParseError : std::runtime_error {
  ParseError(const std::string& message, std::size_t offset,
             std::string expected_tokens)
      : std::runtime_error(message + " at offset " + std::to_string(offset) +
                           " (expected " + expected_tokens + ")"),
        offset(offset),
        expected(std::move(expected_tokens)) {}
  std::size_t offset;
  std::string expected;
};

/// Scalar expression in x, y, z with +,-,*,/,^, unary minus, parentheses,
/// the constants pi and e, and the functions sin, cos, exp, sqrt.
class Expression {
 public:
  Expression();

  static Expression parse(const std::string& src);

  double operator()(double x, double y, double z) const;
  double operator()(const Eigen::Vector3d& p) const { return (*this)(p[0], p[1], p[2]); }

  /// Canonical fully parenthesized form; parse(to_string()) equals *this.
  std::string to_string() const;

  bool equals(const Expression& other) const;

  struct Node;

 private:
  explicit Expression(std::shared_ptr<const Node> root);
  std::shared_ptr<const Node> root_;
};

}  // namespace qfiga
