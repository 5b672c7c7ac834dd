#pragma once

// Krylov and preconditioning stack: CG, Jacobi, Chebyshev smoothing,
// p-multigrid and low-order-refined preconditioning.

#include "hofem/operators.hpp"

#include <memory>
#include <optional>

namespace hofem
{

struct IterStats
{
   int iterations = 0;
   double rel_res = 0.0;
   bool converged = false;
   bool breakdown = false; // p^T A p <= 0 was met
   std::vector<double> history; // relative residual after each iteration
};

/// Preconditioned CG on A x = b starting from x. Convergence is measured in
/// the preconditioned norm sqrt(r^T M r) relative to its initial value. An
/// empty M means no preconditioning.
inline IterStats cg(const LinearOperator &A, std::span<const double> b, std::span<double> x,
                    const LinearOperator &M, double rel_tol, int max_iter)
{
   const std::size_t n = b.size();
   require(x.size() == n, "cg: length mismatch");
   require(max_iter >= 0, "cg: max_iter must be >= 0");
   std::vector<double> r(n), z(n), p(n), Ap(n);
   A(x, Ap);
   for (std::size_t i = 0; i < n; i++) { r[i] = b[i] - Ap[i]; }
   auto precond = [&]
   {
      if (M) { M(r, z); }
      else { std::copy(r.begin(), r.end(), z.begin()); }
   };
   precond();
   double rz = dot(r, z);
   const double rz0 = rz;
   IterStats st;
   if (rz0 <= 0.0)
   {
      st.converged = (rz0 == 0.0);
      return st;
   }
   p = z;
   for (int it = 1; it <= max_iter; it++)
   {
      A(p, Ap);
      const double pAp = dot(p, Ap);
      if (!(pAp > 0.0))
      {
         st.breakdown = true;
         break;
      }
      const double alpha = rz / pAp;
      axpy(alpha, p, x);
      axpy(-alpha, Ap, r);
      precond();
      const double rz_new = dot(r, z);
      st.iterations = it;
      st.rel_res = std::sqrt(std::abs(rz_new) / rz0);
      st.history.push_back(st.rel_res);
      if (st.rel_res <= rel_tol)
      {
         st.converged = true;
         break;
      }
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t i = 0; i < n; i++) { p[i] = z[i] + beta * p[i]; }
   }
   return st;
}

inline LinearOperator jacobi_preconditioner(std::vector<double> diag)
{
   for (double d : diag) { require(d > 0.0, "jacobi: nonpositive diagonal entry"); }
   return [d = std::move(diag)](std::span<const double> r, std::span<double> z)
   {
      for (std::size_t i = 0; i < d.size(); i++) { z[i] = r[i] / d[i]; }
   };
}

/// Lower end of the smoothing interval is lambda_max / chebyshev_alpha_lo.
inline constexpr double chebyshev_alpha_lo = 30.0;
inline constexpr double chebyshev_safety = 1.1;

/// One application of the degree-`order` Chebyshev iteration in D^{-1}A on
/// [lmax/30, lmax] with lmax = 1.1 * lambda_max_est, updating x in place.
inline void chebyshev_smooth(const LinearOperator &A, std::span<const double> diag,
                             double lambda_max_est, int order, std::span<const double> b,
                             std::span<double> x)
{
   require(order >= 1, "chebyshev: order must be >= 1");
   require(lambda_max_est > 0.0, "chebyshev: eigenvalue estimate must be positive");
   const std::size_t n = b.size();
   for (double d : diag) { require(d > 0.0, "chebyshev: nonpositive diagonal entry"); }
   const double lmax = chebyshev_safety * lambda_max_est;
   const double lmin = lmax / chebyshev_alpha_lo;
   const double theta = 0.5 * (lmax + lmin), delta = 0.5 * (lmax - lmin);
   const double sigma = theta / delta;
   std::vector<double> r(n), d(n);
   A(x, r);
   for (std::size_t i = 0; i < n; i++)
   {
      d[i] = (b[i] - r[i]) / (diag[i] * theta);
      x[i] += d[i];
   }
   double rho = 1.0 / sigma;
   for (int k = 2; k <= order; k++)
   {
      A(x, r);
      const double rho_new = 1.0 / (2.0 * sigma - rho);
      const double c1 = rho_new * rho, c2 = 2.0 * rho_new / delta;
      for (std::size_t i = 0; i < n; i++)
      {
         d[i] = c1 * d[i] + c2 * (b[i] - r[i]) / diag[i];
         x[i] += d[i];
      }
      rho = rho_new;
   }
}

/// Power iteration on D^{-1}A from a fixed-seed start vector; returns the
/// generalized Rayleigh quotient v^T A v / v^T D v of the last iterate.
inline double power_method_lmax(const LinearOperator &A, std::span<const double> diag,
                                int iters = 20, std::uint64_t seed = 0x9e3779b97f4a7c15ULL)
{
   const std::size_t n = diag.size();
   auto v = random_vector(n, seed, -1.0, 1.0);
   std::vector<double> w(n);
   double lambda = 0.0;
   for (int it = 0; it <= iters; it++)
   {
      const double nv = norm2(v);
      for (double &x : v) { x /= nv; }
      A(v, w);
      double vdv = 0.0;
      for (std::size_t i = 0; i < n; i++) { vdv += v[i] * diag[i] * v[i]; }
      lambda = dot(v, w) / vdv;
      if (it == iters) { break; }
      for (std::size_t i = 0; i < n; i++) { v[i] = w[i] / diag[i]; }
   }
   return lambda;
}

/// Chebyshev-accelerated Jacobi as a fixed preconditioner (zero initial
/// guess, `sweeps` applications).
inline LinearOperator chebyshev_preconditioner(const LinearOperator &A, std::vector<double> diag,
                                               double lambda_max_est, int order, int sweeps = 1)
{
   return [A, d = std::move(diag), lambda_max_est, order, sweeps](std::span<const double> r,
                                                                  std::span<double> z)
   {
      std::fill(z.begin(), z.end(), 0.0);
      for (int s = 0; s < sweeps; s++) { chebyshev_smooth(A, d, lambda_max_est, order, r, z); }
   };
}

// ---------------------------------------------------------------------------
// p-multigrid

/// Nodal interpolation from the degree-pc space to the degree-pf space on the
/// same mesh, P = diag(1/m_f) G_f^T I_e G_c with m_f the fine multiplicity.
inline CSRSparseMatrix interpolation_matrix(const FESpace &coarse, const FESpace &fine)
{
   require(&coarse.mesh() == &fine.mesh() || coarse.num_elements() == fine.num_elements(),
           "interpolation_matrix: spaces must share the mesh");
   require(coarse.vdim() == fine.vdim(), "interpolation_matrix: vdim mismatch");
   const int dim = fine.dim(), vdim = fine.vdim();
   const int nf1 = fine.order() + 1, nc1 = coarse.order() + 1;
   const int ndf = fine.dofs_per_element(), ndc = coarse.dofs_per_element();
   const Basis1D b = tabulate_at(coarse.order(), gll_nodes(fine.order()));
   std::vector<double> I(static_cast<std::size_t>(ndf) * ndc);
   for (int i = 0; i < ndf; i++)
   {
      const auto fi = unflatten(i, nf1, dim);
      for (int j = 0; j < ndc; j++)
      {
         const auto cj = unflatten(j, nc1, dim);
         double v = 1.0;
         for (int a = 0; a < dim; a++) { v *= b.b(fi[a], cj[a]); }
         I[static_cast<std::size_t>(i) * ndc + j] = v;
      }
   }
   std::vector<double> mult(fine.num_dofs(), 0.0);
   for (int d : fine.l_to_e()) { mult[d] += 1.0; }
   std::vector<int> ti, tj;
   std::vector<double> tv;
   for (int e = 0; e < fine.num_elements(); e++)
   {
      const auto fd = fine.element_dofs(e);
      const auto cd = coarse.element_dofs(e);
      for (int i = 0; i < ndf; i++)
      {
         for (int j = 0; j < ndc; j++)
         {
            const double v = I[static_cast<std::size_t>(i) * ndc + j];
            if (v == 0.0) { continue; }
            for (int c = 0; c < vdim; c++)
            {
               ti.push_back(fd[i] * vdim + c);
               tj.push_back(cd[j] * vdim + c);
               tv.push_back(v / mult[fd[i]]);
            }
         }
      }
   }
   return CSRSparseMatrix::from_triplets(fine.vsize(), coarse.vsize(), ti, tj, tv);
}

inline CSRSparseMatrix transpose(const CSRSparseMatrix &A)
{
   std::vector<int> ti, tj;
   std::vector<double> tv;
   ti.reserve(A.nnz());
   tj.reserve(A.nnz());
   tv.reserve(A.nnz());
   for (int r = 0; r < A.rows; r++)
   {
      for (int k = A.row_ptr[r]; k < A.row_ptr[r + 1]; k++)
      {
         ti.push_back(A.col[k]);
         tj.push_back(r);
         tv.push_back(A.val[k]);
      }
   }
   return CSRSparseMatrix::from_triplets(A.cols, A.rows, ti, tj, tv);
}

/// Degree schedule p, ceil(p/2), ..., 1, coarsest first.
inline std::vector<int> pmg_degrees(int p)
{
   require(p >= 1, "pmg_degrees: degree must be >= 1");
   std::vector<int> d{p};
   while (d.back() > 1) { d.push_back((d.back() + 1) / 2); }
   return {d.rbegin(), d.rend()};
}

struct PMGOptions
{
   int cheb_order = 2;
   int pre_sweeps = 2;
   int post_sweeps = 2;
   int power_iters = 20;
   std::vector<int> degrees; // coarsest first; empty selects pmg_degrees(p)
   InnerSolverFactory coarse_solver = cholesky_solver;
};

struct PMGLevel
{
   std::shared_ptr<const FESpace> fes;
   std::shared_ptr<PAOperator> op;
   std::vector<double> diag;
   double lambda_max = 0.0;
   CSRSparseMatrix P;  // from the next coarser level (empty on level 0)
   CSRSparseMatrix Pt;
};

class PMGHierarchy
{
public:
   /// Rediscretizes (kind, coeff) at every degree of the schedule on the mesh
   /// of `fes`. Essential dofs on each level are the boundary dofs with
   /// attributes `ess_attrs` (empty list: all boundary faces); nullopt means
   /// none.
   PMGHierarchy(std::shared_ptr<const FESpace> fes, FormKind kind, ScalarFunction coeff,
                std::optional<std::vector<int>> ess_attrs, PMGOptions opts = {})
      : opts_(std::move(opts))
   {
      auto degrees = opts_.degrees.empty() ? pmg_degrees(fes->order()) : opts_.degrees;
      require(degrees.size() >= 2, "pmg: hierarchy needs at least two levels");
      require(degrees.back() == fes->order(), "pmg: finest degree must match the space");
      for (std::size_t k = 0; k + 1 < degrees.size(); k++)
      {
         require(degrees[k] >= 1 && degrees[k] < degrees[k + 1], "pmg: degrees must increase");
      }
      for (std::size_t k = 0; k < degrees.size(); k++)
      {
         PMGLevel L;
         L.fes = (k + 1 == degrees.size())
            ? fes : build_fespace(fes->mesh_ptr(), degrees[k], fes->continuity(), fes->vdim());
         L.op = std::make_shared<PAOperator>(L.fes, kind, coeff);
         if (ess_attrs) { L.op->set_essential_dofs(boundary_dofs(*L.fes, *ess_attrs)); }
         if (k > 0)
         {
            const auto &C = levels_.back();
            CSRSparseMatrix P = interpolation_matrix(*C.fes, *L.fes);
            std::vector<int> fine_ess(L.op->essential_dofs().begin(), L.op->essential_dofs().end());
            std::vector<int> coarse_ess(C.op->essential_dofs().begin(), C.op->essential_dofs().end());
            L.P = zero_rows_cols(P, fine_ess, coarse_ess);
            L.Pt = transpose(L.P);
            L.diag = pa_diagonal(*L.op);
            L.lambda_max = power_method_lmax(as_operator(*L.op), L.diag, opts_.power_iters);
         }
         levels_.push_back(std::move(L));
      }
      coarse_solve_ = opts_.coarse_solver(full_assemble(*levels_.front().op));
   }

   int num_levels() const { return static_cast<int>(levels_.size()); }
   const PMGLevel &level(int k) const { return levels_[k]; }
   const PAOperator &fine_operator() const { return *levels_.back().op; }
   const PMGOptions &options() const { return opts_; }

   /// One V-cycle on level k (finest by default), improving x in place.
   void vcycle(std::span<const double> b, std::span<double> x, int k = -1) const
   {
      if (k < 0) { k = num_levels() - 1; }
      if (k == 0)
      {
         coarse_solve_(b, x);
         return;
      }
      const PMGLevel &L = levels_[k];
      const LinearOperator A = as_operator(*L.op);
      for (int s = 0; s < opts_.pre_sweeps; s++)
      {
         chebyshev_smooth(A, L.diag, L.lambda_max, opts_.cheb_order, b, x);
      }
      const std::size_t n = b.size();
      std::vector<double> r(n);
      A(x, r);
      for (std::size_t i = 0; i < n; i++) { r[i] = b[i] - r[i]; }
      std::vector<double> rc(L.Pt.rows), xc(L.Pt.rows, 0.0), corr(n);
      L.Pt.mult(r, rc);
      vcycle(rc, xc, k - 1);
      L.P.mult(xc, corr);
      for (std::size_t i = 0; i < n; i++) { x[i] += corr[i]; }
      for (int s = 0; s < opts_.post_sweeps; s++)
      {
         chebyshev_smooth(A, L.diag, L.lambda_max, opts_.cheb_order, b, x);
      }
   }

   /// Zero initial guess, one V-cycle.
   LinearOperator as_preconditioner() const
   {
      return [this](std::span<const double> r, std::span<double> z)
      {
         std::fill(z.begin(), z.end(), 0.0);
         vcycle(r, z);
      };
   }

private:
   static CSRSparseMatrix zero_rows_cols(const CSRSparseMatrix &A, const std::vector<int> &rows,
                                         const std::vector<int> &cols)
   {
      std::vector<char> rm(A.rows, 0), cm(A.cols, 0);
      for (int r : rows) { rm[r] = 1; }
      for (int c : cols) { cm[c] = 1; }
      CSRSparseMatrix B;
      B.rows = A.rows;
      B.cols = A.cols;
      B.row_ptr.assign(A.rows + 1, 0);
      for (int r = 0; r < A.rows; r++)
      {
         if (!rm[r])
         {
            for (int k = A.row_ptr[r]; k < A.row_ptr[r + 1]; k++)
            {
               if (cm[A.col[k]]) { continue; }
               B.col.push_back(A.col[k]);
               B.val.push_back(A.val[k]);
            }
         }
         B.row_ptr[r + 1] = static_cast<int>(B.val.size());
      }
      return B;
   }

   PMGOptions opts_;
   std::vector<PMGLevel> levels_;
   LinearOperator coarse_solve_;
};

inline void pmg_vcycle(const PMGHierarchy &h, std::span<const double> b, std::span<double> x)
{
   h.vcycle(b, x);
}

// ---------------------------------------------------------------------------
// Low-order-refined preconditioning

class LORPreconditioner
{
public:
   LORPreconditioner(const PAOperator &ho, const InnerSolverFactory &inner)
   {
      const FESpace &hfes = ho.fes();
      require(hfes.continuity() == Continuity::H1, "lor: requires an H1 operator");
      const int p = hfes.order();
      mesh_ = std::make_shared<const CartesianMesh>(lor_refine(hfes.mesh(), p));
      fes_ = build_fespace(mesh_, 1, Continuity::H1, hfes.vdim());
      require(fes_->num_dofs() == hfes.num_dofs(), "lor: dof count mismatch");
      // Both spaces number dofs lexicographically on the same lattice; the
      // bijection is built from lattice coordinates all the same.
      const int dim = hfes.dim();
      perm_.resize(hfes.vsize());
      for (int d = 0; d < hfes.num_dofs(); d++)
      {
         int rem = d, v = 0, stride = 1;
         for (int a = 0; a < dim; a++)
         {
            const int i = rem % hfes.dof_extent(a);
            rem /= hfes.dof_extent(a);
            v += i * stride;
            stride *= fes_->dof_extent(a);
         }
         for (int c = 0; c < hfes.vdim(); c++) { perm_[d * hfes.vdim() + c] = v * hfes.vdim() + c; }
      }
      op_ = std::make_shared<PAOperator>(fes_, ho.kind(), ho.coeff(), 3);
      std::vector<int> ess;
      for (int d : ho.essential_dofs()) { ess.push_back(perm_[d]); }
      std::sort(ess.begin(), ess.end());
      op_->set_essential_dofs(ess);
      A_ = full_assemble(*op_);
      solve_ = inner(A_);
   }

   int size() const { return static_cast<int>(perm_.size()); }
   const CartesianMesh &mesh() const { return *mesh_; }
   const FESpace &fes() const { return *fes_; }
   const CSRSparseMatrix &matrix() const { return A_; }
   /// High-order dof index -> LOR dof index.
   std::span<const int> permutation() const { return perm_; }

   void apply(std::span<const double> r, std::span<double> z) const
   {
      const std::size_t n = perm_.size();
      std::vector<double> rl(n), zl(n);
      for (std::size_t i = 0; i < n; i++) { rl[perm_[i]] = r[i]; }
      solve_(rl, zl);
      for (std::size_t i = 0; i < n; i++) { z[i] = zl[perm_[i]]; }
   }

   LinearOperator as_operator() const
   {
      return [this](std::span<const double> r, std::span<double> z) { apply(r, z); };
   }

private:
   std::shared_ptr<const CartesianMesh> mesh_;
   std::shared_ptr<const FESpace> fes_;
   std::shared_ptr<PAOperator> op_;
   std::vector<int> perm_;
   CSRSparseMatrix A_;
   LinearOperator solve_;
};

inline LORPreconditioner lor_build(const PAOperator &ho,
                                   const InnerSolverFactory &inner = cholesky_solver)
{
   return LORPreconditioner(ho, inner);
}

inline void lor_apply(const LORPreconditioner &P, std::span<const double> r, std::span<double> z)
{
   P.apply(r, z);
}

// ---------------------------------------------------------------------------

inline constexpr const char *solver_csv_header = "solver,p,elements,dofs,iterations,rel_res,seconds";

inline std::string solver_csv_row(const std::string &solver, int p, int elements, int dofs,
                                  const IterStats &st, double seconds)
{
   return solver + "," + std::to_string(p) + "," + std::to_string(elements) + ","
          + std::to_string(dofs) + "," + std::to_string(st.iterations) + "," + fmt17(st.rel_res)
          + "," + fmt17(seconds);
}

} // namespace hofem
