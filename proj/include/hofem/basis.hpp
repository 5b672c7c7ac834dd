#pragma once

// 1D Gauss-Lobatto nodal bases and Gauss-Legendre quadrature on [0, 1].

#include "hofem/core.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace hofem
{

namespace detail
{

struct LegendreValue
{
   double p;   // P_n(x)
   double dp;  // P_n'(x)
   double ddp; // P_n''(x), only valid for |x| < 1
};

/// Three-term recurrence on [-1, 1].
inline LegendreValue legendre(int n, double x)
{
   double p0 = 1.0, p1 = x;
   if (n == 0) { return {1.0, 0.0, 0.0}; }
   for (int k = 1; k < n; k++)
   {
      const double p2 = ((2 * k + 1) * x * p1 - k * p0) / (k + 1);
      p0 = p1;
      p1 = p2;
   }
   const double one_m_x2 = 1.0 - x * x;
   const double dp = n * (p0 - x * p1) / one_m_x2;
   const double ddp = (2.0 * x * dp - n * (n + 1.0) * p1) / one_m_x2;
   return {p1, dp, ddp};
}

/// Newton iteration kept inside a sign-change bracket [lo, hi]; falls back to
/// bisection whenever the Newton step leaves the bracket. Tolerance 1e-15,
/// at most 100 iterations.
template <typename F>
double safeguarded_newton(F &&f, double lo, double hi)
{
   double flo = f(lo).first;
   double fhi = f(hi).first;
   if (flo * fhi > 0.0)
   {
      throw std::logic_error("safeguarded_newton: bracket has no sign change");
   }
   double x = 0.5 * (lo + hi);
   for (int it = 0; it < 100; it++)
   {
      const auto [fx, dfx] = f(x);
      if (fx == 0.0) { return x; }
      if ((fx < 0.0) == (flo < 0.0)) { lo = x; flo = fx; }
      else { hi = x; }
      double xn = (dfx != 0.0) ? x - fx / dfx : 0.5 * (lo + hi);
      if (!(xn > lo && xn < hi)) { xn = 0.5 * (lo + hi); }
      if (std::abs(xn - x) <= 1e-15) { return xn; }
      x = xn;
   }
   return x;
}

/// Roots of P_n on [-1, 1], ascending, exactly antisymmetric.
inline std::vector<double> legendre_roots(int n)
{
   std::vector<double> x(n);
   const double pi = std::numbers::pi;
   for (int i = 0; i < n / 2; i++)
   {
      // i-th smallest root is cos(theta_k) with k = n - i; Bruns' bounds
      // (k - 1/2) pi / (n + 1/2) < theta_k < k pi / (n + 1/2).
      const int k = n - i;
      const double lo = std::cos(k * pi / (n + 0.5));
      const double hi = std::cos((k - 0.5) * pi / (n + 0.5));
      x[i] = safeguarded_newton([n](double t)
      {
         const auto v = legendre(n, t);
         return std::pair{v.p, v.dp};
      }, lo, hi);
      x[n - 1 - i] = -x[i];
   }
   if (n % 2 == 1) { x[n / 2] = 0.0; }
   return x;
}

} // namespace detail

/// p+1 Gauss-Lobatto points on [0, 1]: endpoints plus the roots of P_p'.
inline std::vector<double> gll_nodes(int p)
{
   require(p >= 1, "gll_nodes: degree must be >= 1");
   std::vector<double> nodes(p + 1);
   nodes[0] = 0.0;
   nodes[p] = 1.0;
   // Interior roots of P_p' interlace the roots of P_p.
   const auto z = detail::legendre_roots(p);
   for (int i = 1; i <= p / 2; i++)
   {
      if (2 * i == p) { nodes[i] = 0.5; continue; }
      const double r = detail::safeguarded_newton([p](double t)
      {
         const auto v = detail::legendre(p, t);
         return std::pair{v.dp, v.ddp};
      }, z[i - 1], z[i]);
      nodes[i] = 0.5 * (1.0 + r);
      nodes[p - i] = 1.0 - nodes[i];
   }
   return nodes;
}

struct QuadratureRule
{
   std::vector<double> points;
   std::vector<double> weights;

   int size() const { return static_cast<int>(points.size()); }
};

/// q-point Gauss-Legendre rule on [0, 1], exact to degree 2q-1.
inline QuadratureRule gauss_quadrature(int q)
{
   require(q >= 1, "gauss_quadrature: point count must be >= 1");
   const auto x = detail::legendre_roots(q);
   QuadratureRule rule;
   rule.points.resize(q);
   rule.weights.resize(q);
   for (int i = 0; i < (q + 1) / 2; i++)
   {
      const double dp = detail::legendre(q, x[i]).dp;
      const double w = 1.0 / ((1.0 - x[i] * x[i]) * dp * dp);
      rule.points[i] = 0.5 * (1.0 + x[i]);
      rule.weights[i] = w;
      if (i != q - 1 - i)
      {
         rule.points[q - 1 - i] = 1.0 - rule.points[i];
         rule.weights[q - 1 - i] = w;
      }
   }
   if (q % 2 == 1) { rule.points[q / 2] = 0.5; }
   return rule;
}

/// w_i = 1 / prod_{j != i} (x_i - x_j)
inline std::vector<double> barycentric_weights(const std::vector<double> &x)
{
   const std::size_t n = x.size();
   std::vector<double> w(n, 1.0);
   for (std::size_t i = 0; i < n; i++)
   {
      for (std::size_t j = 0; j < n; j++)
      {
         if (j != i) { w[i] *= x[i] - x[j]; }
      }
      w[i] = 1.0 / w[i];
   }
   return w;
}

/// Values (and optionally derivatives) of all Lagrange polynomials through
/// `nodes` at `x`, by the barycentric formula.
inline void lagrange_eval(const std::vector<double> &nodes,
                          const std::vector<double> &bw, double x,
                          std::span<double> val, std::span<double> der = {})
{
   const int n = static_cast<int>(nodes.size());
   int hit = -1;
   for (int i = 0; i < n; i++)
   {
      if (x == nodes[i]) { hit = i; break; }
   }
   if (hit >= 0)
   {
      for (int i = 0; i < n; i++) { val[i] = (i == hit) ? 1.0 : 0.0; }
      if (!der.empty())
      {
         // Row `hit` of the differentiation matrix.
         double diag = 0.0;
         for (int i = 0; i < n; i++)
         {
            if (i == hit) { continue; }
            der[i] = (bw[i] / bw[hit]) / (nodes[hit] - nodes[i]);
            diag -= der[i];
         }
         der[hit] = diag;
      }
      return;
   }
   double denom = 0.0;
   for (int i = 0; i < n; i++)
   {
      val[i] = bw[i] / (x - nodes[i]);
      denom += val[i];
   }
   for (int i = 0; i < n; i++) { val[i] /= denom; }
   if (!der.empty())
   {
      double s = 0.0;
      for (int j = 0; j < n; j++) { s += 1.0 / (x - nodes[j]); }
      for (int i = 0; i < n; i++) { der[i] = val[i] * (s - 1.0 / (x - nodes[i])); }
   }
}

/// Tabulated degree-p GLL basis at a set of 1D points: B(k,i) = l_i(x_k),
/// G(k,i) = l_i'(x_k), both row-major npoints x (p+1).
struct Basis1D
{
   int p = 0;
   std::vector<double> nodes;
   std::vector<double> bary;
   std::vector<double> quad_points;
   std::vector<double> quad_weights;
   std::vector<double> B;
   std::vector<double> G;

   int ndof() const { return p + 1; }
   int nq() const { return static_cast<int>(quad_points.size()); }
   double b(int k, int i) const { return B[k * (p + 1) + i]; }
   double g(int k, int i) const { return G[k * (p + 1) + i]; }
};

/// Degree-p basis tabulated at arbitrary points (weights left empty).
inline Basis1D tabulate_at(int p, const std::vector<double> &points)
{
   Basis1D basis;
   basis.p = p;
   basis.nodes = gll_nodes(p);
   basis.bary = barycentric_weights(basis.nodes);
   basis.quad_points = points;
   const int nq = static_cast<int>(points.size());
   basis.B.resize(nq * (p + 1));
   basis.G.resize(nq * (p + 1));
   for (int k = 0; k < nq; k++)
   {
      lagrange_eval(basis.nodes, basis.bary, points[k],
                    std::span(basis.B).subspan(k * (p + 1), p + 1),
                    std::span(basis.G).subspan(k * (p + 1), p + 1));
   }
   return basis;
}

/// Degree-p basis at the q Gauss points.
inline Basis1D tabulate(int p, int q)
{
   require(p >= 1, "tabulate: degree must be >= 1");
   auto rule = gauss_quadrature(q);
   Basis1D basis = tabulate_at(p, rule.points);
   basis.quad_weights = std::move(rule.weights);
   return basis;
}

/// Default quadrature size for bilinear forms of degree p.
inline int default_quad_points(int p) { return p + 2; }

} // namespace hofem
