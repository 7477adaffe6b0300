#include "qfiga/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <vector>

namespace qfiga {

struct Expression::Node {
  enum class Kind { kNumber, kVariable, kUnaryMinus, kBinary, kCall };
  Kind kind = Kind::kNumber;
  double number = 0.0;
  int variable = 0;   // 0=x 1=y 2=z
  char op = '+';
  std::string func;
  std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;

NodePtr make_number(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::kNumber;
  n->number = v;
  return n;
}

class Parser {
 public:
  explicit Parser(const std::string& src) : src_(src) {}

  NodePtr parse() {
    NodePtr e = expression();
    skip_ws();
    if (pos_ != src_.size()) {
      throw ParseError("trailing input", pos_, "operator or end of input");
    }
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool consume(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }

  NodePtr expression() {
    NodePtr lhs = term();
    while (true) {
      skip_ws();
      if (consume('+')) {
        lhs = binary('+', lhs, term());
      } else if (consume('-')) {
        lhs = binary('-', lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    while (true) {
      skip_ws();
      if (consume('*')) {
        lhs = binary('*', lhs, unary());
      } else if (consume('/')) {
        lhs = binary('/', lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (consume('-')) {
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::kUnaryMinus;
      n->lhs = unary();
      return n;
    }
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    skip_ws();
    if (consume('^')) {
      // right-associative, exponent may carry a sign
      return binary('^', base, unary());
    }
    return base;
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= src_.size()) {
      throw ParseError("unexpected end of input", pos_,
                       "number, name, '(' or '-'");
    }
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = expression();
      if (!consume(')')) throw ParseError("unbalanced parenthesis", pos_, "')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      return number();
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      return name();
    }
    throw ParseError(std::string("unexpected character '") + c + "'", pos_,
                     "number, name, '(' or '-'");
  }

  NodePtr number() {
    const char* begin = src_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) throw ParseError("malformed number", pos_, "digits");
    pos_ += static_cast<std::size_t>(end - begin);
    return make_number(v);
  }

  NodePtr name() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           std::isalnum(static_cast<unsigned char>(src_[pos_]))) {
      ++pos_;
    }
    const std::string id = src_.substr(start, pos_ - start);
    if (id == "pi") return make_number(3.14159265358979323846);
    if (id == "e") return make_number(2.71828182845904523536);
    if (id == "x" || id == "y" || id == "z") {
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::kVariable;
      n->variable = id[0] - 'x';
      return n;
    }
    if (id == "sin" || id == "cos" || id == "exp" || id == "sqrt") {
      if (!consume('(')) throw ParseError("function call needs '('", pos_, "'('");
      NodePtr arg = expression();
      if (!consume(')')) throw ParseError("unbalanced call", pos_, "')'");
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::kCall;
      n->func = id;
      n->lhs = arg;
      return n;
    }
    throw ParseError("unknown name '" + id + "'", start,
                     "x, y, z, pi, e, sin, cos, exp, sqrt");
  }

  NodePtr binary(char op, NodePtr lhs, NodePtr rhs) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::kBinary;
    n->op = op;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return n;
  }

  const std::string& src_;
  std::size_t pos_ = 0;
};

double eval(const Node& n, double x, double y, double z) {
  switch (n.kind) {
    case Node::Kind::kNumber:
      return n.number;
    case Node::Kind::kVariable:
      return n.variable == 0 ? x : (n.variable == 1 ? y : z);
    case Node::Kind::kUnaryMinus:
      return -eval(*n.lhs, x, y, z);
    case Node::Kind::kBinary: {
      const double a = eval(*n.lhs, x, y, z);
      const double b = eval(*n.rhs, x, y, z);
      switch (n.op) {
        case '+': return a + b;
        case '-': return a - b;
        case '*': return a * b;
        case '/': return a / b;
        case '^': return std::pow(a, b);
      }
      return 0.0;
    }
    case Node::Kind::kCall: {
      const double a = eval(*n.lhs, x, y, z);
      if (n.func == "sin") return std::sin(a);
      if (n.func == "cos") return std::cos(a);
      if (n.func == "exp") return std::exp(a);
      return std::sqrt(a);
    }
  }
  return 0.0;
}

void print(const Node& n, std::string& out) {
  switch (n.kind) {
    case Node::Kind::kNumber: {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", n.number);
      out += buf;
      break;
    }
    case Node::Kind::kVariable:
      out += static_cast<char>('x' + n.variable);
      break;
    case Node::Kind::kUnaryMinus:
      out += "(-";
      print(*n.lhs, out);
      out += ")";
      break;
    case Node::Kind::kBinary:
      out += "(";
      print(*n.lhs, out);
      out += n.op;
      print(*n.rhs, out);
      out += ")";
      break;
    case Node::Kind::kCall:
      out += n.func;
      out += "(";
      print(*n.lhs, out);
      out += ")";
      break;
  }
}

bool structurally_equal(const Node& a, const Node& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Node::Kind::kNumber:
      return a.number == b.number;
    case Node::Kind::kVariable:
      return a.variable == b.variable;
    case Node::Kind::kUnaryMinus:
      return structurally_equal(*a.lhs, *b.lhs);
    case Node::Kind::kBinary:
      return a.op == b.op && structurally_equal(*a.lhs, *b.lhs) &&
             structurally_equal(*a.rhs, *b.rhs);
    case Node::Kind::kCall:
      return a.func == b.func && structurally_equal(*a.lhs, *b.lhs);
  }
  return false;
}

}  // namespace

Expression::Expression() : root_(make_number(0.0)) {}
Expression::Expression(std::shared_ptr<const Node> root) : root_(std::move(root)) {}

Expression Expression::parse(const std::string& src) {
  return Expression(Parser(src).parse());
}

double Expression::operator()(double x, double y, double z) const {
  return eval(*root_, x, y, z);
}

std::string Expression::to_string() const {
  std::string out;
  print(*root_, out);
  return out;
}

bool Expression::equals(const Expression& other) const {
  return structurally_equal(*root_, *other.root_);
}

}  // namespace qfiga
