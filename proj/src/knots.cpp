#include "qfiga/knots.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qfiga {

KnotVector::KnotVector(int degree, std::vector<double> knots)
    : degree_(degree), knots_(std::move(knots)) {
  if (degree_ < 1) throw std::invalid_argument("knot vector: degree must be >= 1");
  const int n = static_cast<int>(knots_.size()) - degree_ - 1;
  if (n < degree_ + 1) {
    throw std::invalid_argument("knot vector: too few knots for degree " +
                                std::to_string(degree_));
  }
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (knots_[i] < knots_[i - 1]) {
      throw std::invalid_argument("knot vector: knots must be nondecreasing");
    }
  }
  if (knots_.front() != 0.0 || knots_.back() != 1.0) {
    throw std::invalid_argument("knot vector: domain must be [0,1]");
  }
  for (int i = 0; i <= degree_; ++i) {
    if (knots_[i] != 0.0 || knots_[knots_.size() - 1 - i] != 1.0) {
      throw std::invalid_argument(
          "knot vector: not clamped (end knots must repeat degree+1 times)");
    }
  }
  // interior multiplicities
  std::size_t i = degree_ + 1;
  while (i + degree_ + 1 < knots_.size()) {
    std::size_t j = i;
    while (j + degree_ + 1 < knots_.size() && knots_[j] == knots_[i]) ++j;
    if (static_cast<int>(j - i) > degree_) {
      throw std::invalid_argument("knot vector: interior multiplicity exceeds degree");
    }
    i = j;
  }
  for (std::size_t s = degree_; s + degree_ + 1 < knots_.size() + 0u; ++s) {
    if (s + 1 >= knots_.size()) break;
    if (knots_[s] < knots_[s + 1]) {
      Span sp;
      sp.lo = knots_[s];
      sp.hi = knots_[s + 1];
      sp.first_basis = static_cast<int>(s) - degree_;
      if (sp.first_basis >= 0 && sp.first_basis + degree_ < num_basis()) {
        spans_.push_back(sp);
      }
    }
  }
}

KnotVector KnotVector::bezier(int degree) {
  std::vector<double> k(2 * (degree + 1));
  std::fill(k.begin(), k.begin() + degree + 1, 0.0);
  std::fill(k.begin() + degree + 1, k.end(), 1.0);
  return KnotVector(degree, std::move(k));
}

KnotVector KnotVector::uniform(int degree, int spans) {
  if (spans < 1) throw std::invalid_argument("uniform knot vector: spans >= 1");
  std::vector<double> k;
  k.insert(k.end(), degree + 1, 0.0);
  for (int i = 1; i < spans; ++i) k.push_back(static_cast<double>(i) / spans);
  k.insert(k.end(), degree + 1, 1.0);
  return KnotVector(degree, std::move(k));
}

int KnotVector::find_element(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::domain_error("find_element: parameter outside [0,1]");
  }
  int lo = 0, hi = num_spans() - 1;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (t < spans_[mid].hi)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

namespace {

// Index k with knots[k] <= t < knots[k+1], clamped to the valid basis range.
int find_span_index(int degree, const std::vector<double>& knots, double t) {
  const int n = static_cast<int>(knots.size()) - degree - 2;  // last basis index
  if (t >= knots[n + 1]) return n;
  int lo = degree, hi = n + 1;
  while (lo + 1 < hi) {
    const int mid = (lo + hi) / 2;
    if (t < knots[mid])
      hi = mid;
    else
      lo = mid;
  }
  return lo;
}

void basis_funs(int span, double t, int degree, const std::vector<double>& knots,
                Eigen::VectorXd& out) {
  out.resize(degree + 1);
  out[0] = 1.0;
  std::vector<double> left(degree + 1), right(degree + 1);
  for (int j = 1; j <= degree; ++j) {
    left[j] = t - knots[span + 1 - j];
    right[j] = knots[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    out[j] = saved;
  }
}

}  // namespace

void KnotVector::basis(double t, int& first, Eigen::VectorXd& values) const {
  const int span = find_span_index(degree_, knots_, t);
  first = span - degree_;
  basis_funs(span, t, degree_, knots_, values);
}

void KnotVector::basis_with_derivative(double t, int& first,
                                       Eigen::VectorXd& values,
                                       Eigen::VectorXd& derivs) const {
  const int span = find_span_index(degree_, knots_, t);
  first = span - degree_;
  basis_funs(span, t, degree_, knots_, values);
  derivs = Eigen::VectorXd::Zero(degree_ + 1);
  if (degree_ == 0) return;
  Eigen::VectorXd lower;
  basis_funs(span, t, degree_ - 1, knots_, lower);
  // lower[r] is N_{span-degree+1+r, degree-1}
  for (int r = 0; r <= degree_; ++r) {
    const int i = first + r;
    double d = 0.0;
    if (r >= 1) {
      const double den = knots_[i + degree_] - knots_[i];
      if (den > 0.0) d += degree_ * lower[r - 1] / den;
    }
    if (r <= degree_ - 1) {
      const double den = knots_[i + degree_ + 1] - knots_[i + 1];
      if (den > 0.0) d -= degree_ * lower[r] / den;
    }
    derivs[r] = d;
  }
}

std::vector<double> KnotVector::greville() const {
  std::vector<double> g(num_basis());
  for (int i = 0; i < num_basis(); ++i) {
    double sum = 0.0;
    for (int j = 1; j <= degree_; ++j) sum += knots_[i + j];
    g[i] = sum / degree_;
  }
  return g;
}

std::vector<double> KnotVector::interior_knots() const {
  std::vector<double> out;
  for (std::size_t i = degree_ + 1; i + degree_ + 1 < knots_.size(); ++i) {
    out.push_back(knots_[i]);
  }
  return out;
}

KnotVector KnotVector::bisected(int levels) const {
  if (levels < 0) throw std::domain_error("bisected: levels must be >= 0");
  KnotVector kv = *this;
  for (int l = 0; l < levels; ++l) {
    std::vector<double> mids;
    for (const Span& s : kv.spans()) mids.push_back(0.5 * (s.lo + s.hi));
    std::vector<double> merged = kv.knots_;
    merged.insert(merged.end(), mids.begin(), mids.end());
    std::sort(merged.begin(), merged.end());
    kv = KnotVector(kv.degree_, std::move(merged));
  }
  return kv;
}

Eigen::MatrixXd insertion_matrix(const KnotVector& kv,
                                 const std::vector<double>& new_knots,
                                 KnotVector* refined) {
  const int p = kv.degree();
  std::vector<double> knots = kv.knots();
  Eigen::MatrixXd a =
      Eigen::MatrixXd::Identity(kv.num_basis(), kv.num_basis());
  std::vector<double> sorted = new_knots;
  std::sort(sorted.begin(), sorted.end());
  for (double t : sorted) {
    if (!(t > 0.0 && t < 1.0)) {
      throw std::domain_error("insertion_matrix: knot must lie in (0,1)");
    }
    const int k = find_span_index(p, knots, t);
    const int n = static_cast<int>(a.rows());
    Eigen::MatrixXd step = Eigen::MatrixXd::Zero(n + 1, n);
    for (int i = 0; i <= n; ++i) {
      double alpha;
      if (i <= k - p)
        alpha = 1.0;
      else if (i >= k + 1)
        alpha = 0.0;
      else
        alpha = (t - knots[i]) / (knots[i + p] - knots[i]);
      if (alpha > 0.0) step(i, i) = alpha;
      if (alpha < 1.0 && i >= 1) step(i, i - 1) = 1.0 - alpha;
    }
    a = (step * a).eval();
    knots.insert(knots.begin() + k + 1, t);
  }
  if (refined) *refined = KnotVector(p, knots);
  return a;
}

std::vector<Eigen::MatrixXd> extraction_operators(const KnotVector& kv) {
  const int p = kv.degree();
  // Raise every interior knot to multiplicity p.
  std::vector<double> to_insert;
  std::vector<double> interior = kv.interior_knots();
  for (std::size_t i = 0; i < interior.size();) {
    std::size_t j = i;
    while (j < interior.size() && interior[j] == interior[i]) ++j;
    const int mult = static_cast<int>(j - i);
    for (int r = mult; r < p; ++r) to_insert.push_back(interior[i]);
    i = j;
  }
  const Eigen::MatrixXd a = insertion_matrix(kv, to_insert);
  std::vector<Eigen::MatrixXd> ops;
  ops.reserve(kv.num_spans());
  for (int e = 0; e < kv.num_spans(); ++e) {
    const int first = kv.spans()[e].first_basis;
    Eigen::MatrixXd c(p + 1, p + 1);
    for (int row = 0; row <= p; ++row) {      // local B-spline function
      for (int col = 0; col <= p; ++col) {    // local Bernstein function
        c(row, col) = a(e * p + col, first + row);
      }
    }
    ops.push_back(std::move(c));
  }
  return ops;
}

}  // namespace qfiga
