#pragma once

// Target-matrix mesh optimization for 2D quadrilateral meshes: quality
// metrics mu(T) with T = A W^{-1}, targets W = zeta R Q D_asp, the objective
// F(x) = sum_E int_{E_t} mu(T) + w_sigma sum_{s in S} sigma(x_s)^2, its
// gradient, and a Newton-Krylov solver.

#include "hofem/fespace.hpp"
#include "hofem/solvers.hpp"

#include <numbers>
#include <optional>

namespace hofem
{

/// Row-major 2x2 matrix [a b; c d].
using Mat2 = std::array<double, 4>;

inline double det2(const Mat2 &T) { return T[0] * T[3] - T[1] * T[2]; }
inline double frob2(const Mat2 &T) { return T[0] * T[0] + T[1] * T[1] + T[2] * T[2] + T[3] * T[3]; }
/// Cofactor matrix, d(det T)/dT.
inline Mat2 cofactor2(const Mat2 &T) { return {T[3], -T[2], -T[1], T[0]}; }
inline Mat2 inverse2(const Mat2 &T)
{
   const double d = det2(T);
   return {T[3] / d, -T[1] / d, -T[2] / d, T[0] / d};
}
inline Mat2 mul2(const Mat2 &A, const Mat2 &B)
{
   return {A[0] * B[0] + A[1] * B[2], A[0] * B[1] + A[1] * B[3],
           A[2] * B[0] + A[3] * B[2], A[2] * B[1] + A[3] * B[3]};
}
inline Mat2 transpose2(const Mat2 &A) { return {A[0], A[2], A[1], A[3]}; }

enum class MetricId { Shape, Size, ShapeSize };

struct Metric
{
   MetricId id = MetricId::Shape;
   double gamma = 1.5; // weight of the size term in ShapeSize
};

namespace detail
{

inline double barrier_det(const Mat2 &T)
{
   const double tau = det2(T);
   if (!(tau > 0.0)) { throw BarrierError("tmop: det T <= 0"); }
   return tau;
}

/// |T|^2 - 2 det T, written without cancellation.
inline double shape_numerator(const Mat2 &T)
{
   const double u = T[0] - T[3], v = T[1] + T[2];
   return u * u + v * v;
}

} // namespace detail

inline double metric_eval(const Metric &m, const Mat2 &T)
{
   const double tau = detail::barrier_det(T);
   const double sh = detail::shape_numerator(T) / (2.0 * tau);
   const double sz = 0.5 * (tau - 1.0 / tau) * (tau - 1.0 / tau);
   switch (m.id)
   {
      case MetricId::Shape: return sh;
      case MetricId::Size: return sz;
      case MetricId::ShapeSize: return sh + m.gamma * sz;
   }
   return 0.0;
}

inline Mat2 metric_grad(const Metric &m, const Mat2 &T)
{
   const double tau = detail::barrier_det(T);
   const Mat2 C = cofactor2(T);
   Mat2 g{};
   if (m.id != MetricId::Size)
   {
      // T - C vanishes for scaled rotations, so the minimizer is exact.
      const double f = detail::shape_numerator(T) / (2.0 * tau * tau);
      for (int i = 0; i < 4; i++) { g[i] += (T[i] - C[i]) / tau - f * C[i]; }
   }
   if (m.id != MetricId::Shape)
   {
      const double w = (m.id == MetricId::Size) ? 1.0 : m.gamma;
      const double f = w * (tau - 1.0 / tau) * (1.0 + 1.0 / (tau * tau));
      for (int i = 0; i < 4; i++) { g[i] += f * C[i]; }
   }
   return g;
}

inline double metric_eval(MetricId id, const Mat2 &T) { return metric_eval(Metric{id}, T); }
inline Mat2 metric_grad(MetricId id, const Mat2 &T) { return metric_grad(Metric{id}, T); }

// ---------------------------------------------------------------------------
// Targets

/// zeta * R(rotation) * Q(skew) * D_asp(aspect). `skew` is the angle between
/// the two columns; `aspect` is the ratio of the first to the second.
inline Mat2 target_matrix(double zeta, double rotation, double skew, double aspect)
{
   require(zeta > 0.0, "target: size must be positive");
   require(skew > 0.0 && skew < std::numbers::pi, "target: skew angle must be in (0, pi)");
   require(aspect > 0.0, "target: aspect ratio must be positive");
   const double c = std::cos(rotation), s = std::sin(rotation);
   const Mat2 R{c, -s, s, c};
   // cos(pi/2) is not exactly zero in floating point; keep ideal targets diagonal.
   const bool right = skew == std::numbers::pi / 2;
   const double cs = right ? 0.0 : std::cos(skew), sn = right ? 1.0 : std::sin(skew);
   const double k = 1.0 / std::sqrt(sn);
   const Mat2 Q{k, k * cs, 0.0, k * sn};
   const double ra = std::sqrt(aspect);
   const Mat2 D{ra, 0.0, 0.0, 1.0 / ra};
   Mat2 W = mul2(mul2(R, Q), D);
   for (double &v : W) { v *= zeta; }
   return W;
}

struct TargetSpec
{
   enum class Kind { IdealUniform, IdealEqualSize, GivenMatrix };
   Kind kind = Kind::IdealUniform;
   double size = 1.0;  // h for IdealEqualSize
   double rotation = 0.0;
   double skew = std::numbers::pi / 2;
   double aspect = 1.0;
   std::function<Mat2(const Point &)> given; // W at a physical point
};

struct ResolvedTargets
{
   int ne = 0;
   int nqp = 0;
   std::vector<Mat2> W;
   std::vector<Mat2> Winv;
   std::vector<double> detW;
};

/// W at every point of the q-point Gauss rule of every element.
inline ResolvedTargets resolve_targets(const CartesianMesh &mesh, const TargetSpec &spec, int q)
{
   require(mesh.dim() == 2, "tmop: only 2D meshes are supported");
   const auto gf = geometric_factors(mesh, q);
   ResolvedTargets t;
   t.ne = gf.ne;
   t.nqp = gf.nqp;
   const std::size_t n = static_cast<std::size_t>(gf.ne) * gf.nqp;
   t.W.resize(n);
   t.Winv.resize(n);
   t.detW.resize(n);
   double zeta = spec.size;
   if (spec.kind == TargetSpec::Kind::IdealUniform)
   {
      zeta = std::sqrt(domain_measure(mesh) / mesh.num_elements());
   }
   const Mat2 W0 = (spec.kind == TargetSpec::Kind::GivenMatrix)
      ? Mat2{} : target_matrix(zeta, spec.rotation, spec.skew, spec.aspect);
   for (std::size_t i = 0; i < n; i++)
   {
      Mat2 W = W0;
      if (spec.kind == TargetSpec::Kind::GivenMatrix)
      {
         require(static_cast<bool>(spec.given), "target: GivenMatrix needs a callback");
         W = spec.given({gf.X[2 * i], gf.X[2 * i + 1], 0.0});
      }
      const double d = det2(W);
      require(d > 0.0, "target: singular or reflected target matrix");
      t.W[i] = W;
      t.Winv[i] = inverse2(W);
      t.detW[i] = d;
   }
   return t;
}

// ---------------------------------------------------------------------------
// Fitting

/// Level-set field on a fixed background mesh, evaluated at arbitrary points.
class BackgroundField
{
public:
   BackgroundField(std::shared_ptr<const CartesianMesh> mesh, const ScalarFunction &fn, int order)
      : mesh_(std::move(mesh)), fes_(build_fespace(mesh_, order, Continuity::H1)),
        nodes_(gll_nodes(order)), bary_(barycentric_weights(nodes_))
   {
      values_ = interpolate(*fes_, fn);
      const int ne = mesh_->num_elements();
      const int nloc = mesh_->nodes_per_element();
      bbox_.resize(ne);
      std::vector<double> coords(2 * nloc);
      for (int e = 0; e < ne; e++)
      {
         mesh_->element_coords(e, coords);
         std::array<double, 4> b{1e300, -1e300, 1e300, -1e300};
         for (int l = 0; l < nloc; l++)
         {
            b[0] = std::min(b[0], coords[l]);
            b[1] = std::max(b[1], coords[l]);
            b[2] = std::min(b[2], coords[nloc + l]);
            b[3] = std::max(b[3], coords[nloc + l]);
         }
         bbox_[e] = b;
      }
   }

   const FESpace &fes() const { return *fes_; }
   std::span<const double> values() const { return values_; }

   /// Value and physical gradient at x; `clamped` is set when x lies outside
   /// the background mesh and the nearest element's boundary was used.
   double eval(const Point &x, std::array<double, 2> *grad = nullptr, bool *clamped = nullptr) const
   {
      const double slack = 1e-12;
      int best = -1;
      Point ref{};
      double best_out = 1e300;
      // Candidates whose box contains x first; every element only when x is
      // outside the mesh.
      for (int pass = 0; pass < 2 && best_out > slack; pass++)
      {
         for (int e = 0; e < mesh_->num_elements(); e++)
         {
            const auto &b = bbox_[e];
            const double pad = 1e-9 * std::max(b[1] - b[0], b[3] - b[2]);
            const double dx = std::max({b[0] - pad - x[0], x[0] - b[1] - pad, 0.0});
            const double dy = std::max({b[2] - pad - x[1], x[1] - b[3] - pad, 0.0});
            const double gap = dx + dy;
            if ((pass == 0) != (gap == 0.0)) { continue; }
            const Point r = inverse_map(e, x);
            const double out = std::max({-r[0], r[0] - 1.0, -r[1], r[1] - 1.0, 0.0}) + gap;
            if (out < best_out)
            {
               best_out = out;
               best = e;
               ref = r;
               if (out <= slack) { break; }
            }
         }
      }
      if (clamped) { *clamped = best_out > slack; }
      for (int a = 0; a < 2; a++) { ref[a] = std::clamp(ref[a], 0.0, 1.0); }
      return eval_ref(best, ref, grad);
   }

   /// Value and physical gradient at a reference point of element e.
   double eval_ref(int e, const Point &ref, std::array<double, 2> *grad = nullptr) const
   {
      const int n1 = fes_->order() + 1;
      std::vector<double> v0(n1), d0(n1), v1(n1), d1(n1);
      lagrange_eval(nodes_, bary_, ref[0], v0, d0);
      lagrange_eval(nodes_, bary_, ref[1], v1, d1);
      const auto dofs = fes_->element_dofs(e);
      double s = 0.0, gx = 0.0, gy = 0.0;
      for (int j = 0; j < n1; j++)
      {
         for (int i = 0; i < n1; i++)
         {
            const double u = values_[dofs[j * n1 + i]];
            s += u * v0[i] * v1[j];
            gx += u * d0[i] * v1[j];
            gy += u * v0[i] * d1[j];
         }
      }
      if (grad)
      {
         Point x;
         Mat3 J{};
         mesh_->map(e, ref, x, &J);
         const Mat2 Jinv = inverse2({J[0], J[1], J[3], J[4]});
         // grad_x = J^{-T} grad_ref
         (*grad)[0] = Jinv[0] * gx + Jinv[2] * gy;
         (*grad)[1] = Jinv[1] * gx + Jinv[3] * gy;
      }
      return s;
   }

   /// Newton inverse of the element map (unclamped).
   Point inverse_map(int e, const Point &x) const
   {
      Point r{0.5, 0.5, 0.0};
      for (int it = 0; it < 30; it++)
      {
         Point y;
         Mat3 J{};
         mesh_->map(e, r, y, &J);
         const Mat2 Ji = inverse2({J[0], J[1], J[3], J[4]});
         const double fx = y[0] - x[0], fy = y[1] - x[1];
         const double d0 = Ji[0] * fx + Ji[1] * fy, d1 = Ji[2] * fx + Ji[3] * fy;
         r[0] -= d0;
         r[1] -= d1;
         // Keep far-away iterates bounded; they only need to signal "outside".
         r[0] = std::clamp(r[0], -2.0, 3.0);
         r[1] = std::clamp(r[1], -2.0, 3.0);
         if (std::abs(d0) + std::abs(d1) <= 1e-15) { break; }
      }
      return r;
   }

private:
   std::shared_ptr<const CartesianMesh> mesh_;
   std::shared_ptr<const FESpace> fes_;
   std::vector<double> nodes_;
   std::vector<double> bary_;
   std::vector<double> values_;
   std::vector<std::array<double, 4>> bbox_;
};

struct FittingSpec
{
   ScalarFunction sigma;
   int sigma_order = 2;
   double weight = 1e4;
   std::optional<std::vector<int>> nodes; // S; default: interface_nodes()
};

/// Mesh nodes on faces shared by two elements whose centers have values of
/// opposite sign: one layer of nodes next to the zero level set.
inline std::vector<int> interface_nodes(const CartesianMesh &mesh, const BackgroundField &sigma)
{
   const int ne = mesh.num_elements(), g = mesh.geom_order(), n1 = g + 1;
   std::vector<double> center(ne);
   for (int e = 0; e < ne; e++) { center[e] = sigma.eval_ref(e, {0.5, 0.5, 0.0}); }
   std::vector<char> mark(mesh.num_nodes(), 0);
   for (int e = 0; e < ne; e++)
   {
      const auto ijk = mesh.element_ijk(e);
      for (int a = 0; a < 2; a++)
      {
         if (ijk[a] + 1 >= mesh.count(a)) { continue; }
         auto nb = ijk;
         nb[a]++;
         const int f = mesh.element_index(nb);
         if (!(center[e] * center[f] < 0.0)) { continue; }
         for (int t = 0; t < n1; t++)
         {
            const int local = (a == 0) ? (t * n1 + g) : (g * n1 + t);
            mark[mesh.element_node(e, local)] = 1;
         }
      }
   }
   std::vector<int> out;
   for (int n = 0; n < mesh.num_nodes(); n++) { if (mark[n]) { out.push_back(n); } }
   return out;
}

// ---------------------------------------------------------------------------
// Objective

class TmopProblem
{
public:
   /// Optimizes the nodes of `mesh` (2D, non-periodic). q = 0 selects the
   /// default rule for the geometry order. Boundary node dofs are fixed.
   TmopProblem(std::shared_ptr<const CartesianMesh> mesh, Metric metric, TargetSpec targets,
               int q = 0, std::optional<FittingSpec> fitting = std::nullopt)
      : mesh_(std::move(mesh)), metric_(metric)
   {
      require(mesh_->dim() == 2, "tmop: only 2D meshes are supported");
      for (int a = 0; a < 2; a++) { require(!mesh_->periodic(a), "tmop: periodic meshes are not supported"); }
      const int g = mesh_->geom_order();
      basis_ = tabulate(g, q > 0 ? q : default_quad_points(g));
      weights_ = tensor_weights(basis_.quad_weights, 2);
      targets_ = resolve_targets(*mesh_, targets, basis_.nq());
      nfes_ = build_fespace(mesh_, g, Continuity::H1, 2);
      fixed_ = boundary_dofs(*nfes_);
      fixed_mask_.assign(size(), 0);
      for (int d : fixed_) { fixed_mask_[d] = 1; }
      if (fitting)
      {
         require(fitting->weight >= 0.0, "tmop: fitting weight must be >= 0");
         fit_weight_ = fitting->weight;
         sigma_ = std::make_shared<BackgroundField>(mesh_, fitting->sigma, fitting->sigma_order);
         fit_nodes_ = fitting->nodes ? *fitting->nodes : interface_nodes(*mesh_, *sigma_);
      }
   }

   int size() const { return mesh_->num_nodes() * 2; }
   const CartesianMesh &mesh() const { return *mesh_; }
   std::vector<double> initial_nodes() const { return {mesh_->nodes().begin(), mesh_->nodes().end()}; }
   std::span<const int> fixed_dofs() const { return fixed_; }
   bool is_fixed(int d) const { return fixed_mask_[d] != 0; }
   void set_fixed_dofs(std::vector<int> fixed)
   {
      fixed_mask_.assign(size(), 0);
      for (int d : fixed)
      {
         require(d >= 0 && d < size(), "tmop: fixed dof out of range");
         fixed_mask_[d] = 1;
      }
      std::sort(fixed.begin(), fixed.end());
      fixed_ = std::move(fixed);
   }
   const ResolvedTargets &targets() const { return targets_; }
   const Metric &metric() const { return metric_; }
   bool has_fitting() const { return sigma_ != nullptr; }
   std::span<const int> fitting_nodes() const { return fit_nodes_; }
   const BackgroundField &sigma() const { return *sigma_; }
   double fitting_weight() const { return fit_weight_; }

   /// F(x); throws BarrierError if any element is inverted.
   double objective(std::span<const double> x) const
   {
      require(static_cast<int>(x.size()) == size(), "tmop: node vector length mismatch");
      std::vector<double> fe(mesh_->num_elements());
      parallel_for(mesh_->num_elements(), [&](int e) { fe[e] = element_objective(x, e, nullptr); });
      double F = 0.0;
      for (double v : fe) { F += v; }
      for (int s : fit_nodes_)
      {
         const double v = sigma_->eval({x[2 * s], x[2 * s + 1], 0.0});
         F += fit_weight_ * v * v;
      }
      return F;
   }

   /// dF/dx (all dofs, fixed ones included).
   void gradient(std::span<const double> x, std::span<double> grad) const
   {
      require(static_cast<int>(x.size()) == size() && static_cast<int>(grad.size()) == size(),
              "tmop: node vector length mismatch");
      const int ne = mesh_->num_elements(), nloc = mesh_->nodes_per_element();
      std::vector<double> ge(static_cast<std::size_t>(ne) * nloc * 2);
      parallel_for(ne, [&](int e)
      {
         element_objective(x, e, ge.data() + static_cast<std::size_t>(e) * nloc * 2);
      });
      std::fill(grad.begin(), grad.end(), 0.0);
      for (int e = 0; e < ne; e++)
      {
         for (int l = 0; l < nloc; l++)
         {
            const int n = mesh_->element_node(e, l);
            for (int c = 0; c < 2; c++) { grad[2 * n + c] += ge[(static_cast<std::size_t>(e) * nloc + l) * 2 + c]; }
         }
      }
      for (int s : fit_nodes_)
      {
         std::array<double, 2> gs{};
         const double v = sigma_->eval({x[2 * s], x[2 * s + 1], 0.0}, &gs);
         for (int c = 0; c < 2; c++) { grad[2 * s + c] += 2.0 * fit_weight_ * v * gs[c]; }
      }
   }

   /// Smallest det A over all quadrature points (no barrier check).
   double min_det(std::span<const double> x) const
   {
      double m = 1e300;
      const int nqp = targets_.nqp;
      for (int e = 0; e < mesh_->num_elements(); e++)
      {
         for (int k = 0; k < nqp; k++) { m = std::min(m, det2(jacobian(x, e, k))); }
      }
      return m;
   }

   /// max |sigma(x_s)| over the fitting set, and whether any node was clamped.
   std::pair<double, bool> fitting_error(std::span<const double> x) const
   {
      double m = 0.0;
      bool any = false;
      for (int s : fit_nodes_)
      {
         bool cl = false;
         m = std::max(m, std::abs(sigma_->eval({x[2 * s], x[2 * s + 1], 0.0}, nullptr, &cl)));
         any = any || cl;
      }
      return {m, any};
   }

private:
   /// A = dx/dxi at point k of element e for node vector x.
   Mat2 jacobian(std::span<const double> x, int e, int k) const
   {
      const int n1 = basis_.ndof(), q1 = basis_.nq();
      const int kx = k % q1, ky = k / q1;
      Mat2 A{};
      for (int j = 0; j < n1; j++)
      {
         for (int i = 0; i < n1; i++)
         {
            const int n = mesh_->element_node(e, j * n1 + i);
            const double gx = basis_.g(kx, i) * basis_.b(ky, j);
            const double gy = basis_.b(kx, i) * basis_.g(ky, j);
            for (int c = 0; c < 2; c++)
            {
               A[2 * c + 0] += x[2 * n + c] * gx;
               A[2 * c + 1] += x[2 * n + c] * gy;
            }
         }
      }
      return A;
   }

   /// Element contribution to F; with `ge` non-null also its gradient
   /// w.r.t. the element nodes, laid out [local][component].
   double element_objective(std::span<const double> x, int e, double *ge) const
   {
      const int n1 = basis_.ndof(), q1 = basis_.nq(), nqp = targets_.nqp;
      if (ge) { std::fill(ge, ge + 2 * n1 * n1, 0.0); }
      double F = 0.0;
      for (int k = 0; k < nqp; k++)
      {
         const std::size_t idx = static_cast<std::size_t>(e) * nqp + k;
         const Mat2 A = jacobian(x, e, k);
         if (!(det2(A) > 0.0))
         {
            throw BarrierError("tmop: inverted element " + std::to_string(e));
         }
         const Mat2 T = mul2(A, targets_.Winv[idx]);
         const double wk = weights_[k] * targets_.detW[idx];
         F += wk * metric_eval(metric_, T);
         if (!ge) { continue; }
         // dmu/dA = (dmu/dT) W^{-T}
         const Mat2 P = mul2(metric_grad(metric_, T), transpose2(targets_.Winv[idx]));
         const int kx = k % q1, ky = k / q1;
         for (int j = 0; j < n1; j++)
         {
            for (int i = 0; i < n1; i++)
            {
               const double gx = basis_.g(kx, i) * basis_.b(ky, j);
               const double gy = basis_.b(kx, i) * basis_.g(ky, j);
               double *gl = ge + 2 * (j * n1 + i);
               for (int c = 0; c < 2; c++) { gl[c] += wk * (P[2 * c] * gx + P[2 * c + 1] * gy); }
            }
         }
      }
      return F;
   }

   std::shared_ptr<const CartesianMesh> mesh_;
   Metric metric_;
   Basis1D basis_;
   std::vector<double> weights_;
   ResolvedTargets targets_;
   std::shared_ptr<const FESpace> nfes_;
   std::vector<int> fixed_;
   std::vector<char> fixed_mask_;
   std::shared_ptr<BackgroundField> sigma_;
   std::vector<int> fit_nodes_;
   double fit_weight_ = 0.0;
};

inline double tmop_objective(const TmopProblem &pb, std::span<const double> x)
{
   return pb.objective(x);
}

inline std::vector<double> tmop_gradient(const TmopProblem &pb, std::span<const double> x)
{
   std::vector<double> g(x.size());
   pb.gradient(x, g);
   return g;
}

// ---------------------------------------------------------------------------
// Newton-Krylov

struct TmopIterate
{
   int iter = 0;
   double objective = 0.0;
   double grad_inf = 0.0;
   double step = 0.0;
};

struct TmopReport
{
   int iterations = 0;
   bool converged = false;
   bool line_search_failed = false;
   double objective = 0.0;
   double grad_inf = 0.0;
   double min_det = 0.0; // smallest det A over all accepted iterates
   std::vector<TmopIterate> log;
};

inline constexpr const char *tmop_csv_header = "iter,objective,grad_inf,step";

inline double free_norm_inf(const TmopProblem &pb, std::span<const double> g)
{
   double m = 0.0;
   for (std::size_t i = 0; i < g.size(); i++)
   {
      if (!pb.is_fixed(static_cast<int>(i))) { m = std::max(m, std::abs(g[i])); }
   }
   return m;
}

/// Newton-Krylov minimization of F starting from (and updating) x.
inline TmopReport tmop_newton_solve(const TmopProblem &pb, std::span<double> x, double tol,
                                    int max_iter)
{
   const int n = pb.size();
   require(static_cast<int>(x.size()) == n, "tmop: node vector length mismatch");
   std::vector<double> g(n), d(n), mg(n);
   const auto masked_grad = [&](std::span<const double> y, std::span<double> out)
   {
      pb.gradient(y, out);
      for (int i = 0; i < n; i++) { if (pb.is_fixed(i)) { out[i] = 0.0; } }
   };
   TmopReport rep;
   double F = pb.objective(x);
   rep.min_det = pb.min_det(x);
   masked_grad(x, g);
   double gi = norm_inf(g);
   rep.log.push_back({0, F, gi, 0.0});
   for (int it = 1; gi > tol && it <= max_iter; it++)
   {
      // Hessian action by central differences of the analytic gradient.
      const double xn = norm2(std::span<const double>(x.data(), x.size()));
      std::vector<double> xp(n), xm(n), gp(n), gm(n);
      const LinearOperator H = [&](std::span<const double> v, std::span<double> hv)
      {
         const double vn = norm2(v);
         if (vn == 0.0)
         {
            std::fill(hv.begin(), hv.end(), 0.0);
            return;
         }
         const double eps = 1e-7 * std::max(xn, 1.0) / vn;
         for (int i = 0; i < n; i++)
         {
            xp[i] = x[i] + eps * v[i];
            xm[i] = x[i] - eps * v[i];
         }
         masked_grad(xp, gp);
         masked_grad(xm, gm);
         for (int i = 0; i < n; i++) { hv[i] = pb.is_fixed(i) ? 0.0 : (gp[i] - gm[i]) / (2.0 * eps); }
      };
      for (int i = 0; i < n; i++) { mg[i] = -g[i]; }
      std::fill(d.begin(), d.end(), 0.0);
      IterStats st;
      try
      {
         st = cg(H, mg, d, {}, 1e-2, 50);
      }
      catch (const BarrierError &)
      {
         st.iterations = 0;
         st.breakdown = true;
      }
      // An indefinite FD Hessian can yield an ascent direction.
      const bool newton = !(st.breakdown && st.iterations == 0) && dot(d, mg) > 0.0;
      if (!newton) { d = mg; }
      std::vector<double> xt(n);
      double Ft = F, alpha = 1.0;
      // Backtracking: halve until valid and decreasing.
      const auto search = [&]
      {
         alpha = 1.0;
         for (int h = 0; h <= 30; h++, alpha *= 0.5)
         {
            for (int i = 0; i < n; i++) { xt[i] = x[i] + alpha * d[i]; }
            try
            {
               if (!(pb.min_det(xt) > 0.0)) { continue; }
               Ft = pb.objective(xt);
            }
            catch (const BarrierError &)
            {
               continue;
            }
            if (Ft < F) { return true; }
         }
         return false;
      };
      bool accepted = search();
      if (!accepted && newton)
      {
         d = mg;
         accepted = search();
      }
      if (!accepted)
      {
         rep.line_search_failed = true;
         break;
      }
      std::copy(xt.begin(), xt.end(), x.begin());
      F = Ft;
      rep.min_det = std::min(rep.min_det, pb.min_det(x));
      masked_grad(x, g);
      gi = norm_inf(g);
      rep.iterations = it;
      rep.log.push_back({it, F, gi, alpha});
   }
   rep.objective = F;
   rep.grad_inf = gi;
   rep.converged = gi <= tol;
   return rep;
}

} // namespace hofem
