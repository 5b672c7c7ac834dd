#pragma once

// Mass and diffusion forms at four assembly levels:
//   matrix-free (geometry recomputed per apply, mass only),
//   partial assembly (quadrature data only, sum-factorized apply),
//   element assembly (dense element matrices),
//   full assembly (global CSR).
// Every level computes A = G^T B^T D B G (P = identity in serial).

#include "hofem/fespace.hpp"
#include "hofem/sparse.hpp"

namespace hofem
{

enum class FormKind { Mass, Diffusion };

enum class ApplyMode { Partial, MatrixFree };

/// Packed index of entry (i, j) of a symmetric dim x dim matrix
/// (2D: xx xy yy, 3D: xx xy xz yy yz zz).
inline int sym_index(int i, int j, int dim)
{
   if (i > j) { std::swap(i, j); }
   return (dim == 2) ? i + j : (i == 0 ? j : i + j + 1);
}

class PAOperator
{
public:
   /// q = 0 selects the default p+2 points per axis. An empty coefficient
   /// means 1.
   PAOperator(std::shared_ptr<const FESpace> fes, FormKind kind, ScalarFunction coeff = {},
              int q = 0)
      : fes_(std::move(fes)), kind_(kind), coeff_(std::move(coeff))
   {
      require(fes_ != nullptr, "pa_setup: null space");
      const int p = fes_->order();
      basis_ = tabulate(p, q > 0 ? q : default_quad_points(p));
      const int dim = fes_->dim();
      ncomp_ = (kind_ == FormKind::Mass) ? 1 : dim * (dim + 1) / 2;
      const auto gf = geometric_factors(fes_->mesh(), basis_.nq());
      nqp_ = gf.nqp;
      weights_ = gf.weights;
      const int ne = fes_->num_elements();
      qdata_.assign(static_cast<std::size_t>(ne) * ncomp_ * nqp_, 0.0);
      const int dd = dim * dim;
      for (int e = 0; e < ne; e++)
      {
         for (int k = 0; k < nqp_; k++)
         {
            const int idx = gf.index(e, k);
            const double s = gf.weights[k] * gf.detJ[idx] * coefficient(gf.X.data() + idx * dim);
            if (kind_ == FormKind::Mass)
            {
               qdata_[static_cast<std::size_t>(e) * nqp_ + k] = s;
               continue;
            }
            const double *it = gf.invJT.data() + static_cast<std::size_t>(idx) * dd;
            for (int i = 0; i < dim; i++)
            {
               for (int j = i; j < dim; j++)
               {
                  double m = 0.0;
                  for (int a = 0; a < dim; a++) { m += it[a * dim + i] * it[a * dim + j]; }
                  qdata_[(static_cast<std::size_t>(e) * ncomp_ + sym_index(i, j, dim)) * nqp_ + k] = s * m;
               }
            }
         }
      }
      // Elementwise products used by the diagonal kernel.
      const std::size_t nb = basis_.B.size();
      bb_.resize(nb); gg_.resize(nb); bg_.resize(nb);
      for (std::size_t i = 0; i < nb; i++)
      {
         bb_[i] = basis_.B[i] * basis_.B[i];
         gg_[i] = basis_.G[i] * basis_.G[i];
         bg_[i] = basis_.B[i] * basis_.G[i];
      }
   }

   const FESpace &fes() const { return *fes_; }
   std::shared_ptr<const FESpace> fes_ptr() const { return fes_; }
   FormKind kind() const { return kind_; }
   const Basis1D &basis() const { return basis_; }
   const ScalarFunction &coeff() const { return coeff_; }
   int size() const { return fes_->vsize(); }

   /// Quadrature data, [element][component][point]. Mass: w det J c.
   /// Diffusion: packed w det J c J^{-1} J^{-T}.
   std::span<const double> qdata() const { return qdata_; }
   int qdata_components() const { return ncomp_; }
   int points_per_element() const { return nqp_; }

   std::span<const int> essential_dofs() const { return ess_; }
   bool is_essential(int i) const { return !ess_mask_.empty() && ess_mask_[i]; }

   void set_essential_dofs(std::vector<int> ess)
   {
      std::sort(ess.begin(), ess.end());
      ess.erase(std::unique(ess.begin(), ess.end()), ess.end());
      ess_mask_.assign(size(), 0);
      for (int d : ess)
      {
         require(d >= 0 && d < size(), "set_essential_dofs: index out of range");
         ess_mask_[d] = 1;
      }
      ess_ = std::move(ess);
   }

   double coefficient(const double *x) const
   {
      if (!coeff_) { return 1.0; }
      Point p{0.0, 0.0, 0.0};
      for (int c = 0; c < fes_->dim(); c++) { p[c] = x[c]; }
      return coeff_(p);
   }

   /// y_e = A_e x_e for one element and one component, sum-factorized.
   /// `qd` points at the element's quadrature data. Returns multiply-adds.
   std::size_t apply_element(const double *qd, std::span<const double> xe,
                             std::span<double> ye, TensorWork &work,
                             std::vector<double> &qbuf) const
   {
      const int dim = fes_->dim();
      const int n1 = basis_.ndof(), q1 = basis_.nq();
      const double *B = basis_.B.data(), *G = basis_.G.data();
      const std::array<const double *, 3> bmats{B, B, B};
      std::size_t madds = 0;
      if (kind_ == FormKind::Mass)
      {
         qbuf.resize(nqp_);
         madds += tensor_apply(dim, bmats, q1, n1, xe, qbuf, work);
         for (int k = 0; k < nqp_; k++) { qbuf[k] *= qd[k]; }
         madds += nqp_;
         madds += tensor_apply_transpose(dim, bmats, q1, n1, qbuf, ye, work);
         return madds;
      }
      qbuf.resize(2 * dim * nqp_);
      std::span<double> grad(qbuf.data(), dim * nqp_);
      std::span<double> flux(qbuf.data() + dim * nqp_, dim * nqp_);
      for (int j = 0; j < dim; j++)
      {
         auto m = bmats;
         m[j] = G;
         madds += tensor_apply(dim, m, q1, n1, xe, grad.subspan(j * nqp_, nqp_), work);
      }
      for (int k = 0; k < nqp_; k++)
      {
         for (int i = 0; i < dim; i++)
         {
            double s = 0.0;
            for (int j = 0; j < dim; j++) { s += qd[sym_index(i, j, dim) * nqp_ + k] * grad[j * nqp_ + k]; }
            flux[i * nqp_ + k] = s;
         }
      }
      madds += static_cast<std::size_t>(dim) * dim * nqp_;
      for (int i = 0; i < dim; i++)
      {
         auto m = bmats;
         m[i] = G;
         madds += tensor_apply_transpose(dim, m, q1, n1, flux.subspan(i * nqp_, nqp_), ye, work,
                                         i > 0);
      }
      return madds;
   }

   /// Diagonal of the element matrix from the quadrature data.
   void diagonal_element(const double *qd, std::span<double> de, TensorWork &work) const
   {
      const int dim = fes_->dim();
      const int n1 = basis_.ndof(), q1 = basis_.nq();
      if (kind_ == FormKind::Mass)
      {
         const std::array<const double *, 3> m{bb_.data(), bb_.data(), bb_.data()};
         tensor_apply_transpose(dim, m, q1, n1, std::span(qd, nqp_), de, work);
         return;
      }
      // d_i = sum_k sum_{a,b} Q_ab(k) d_a phi_i(k) d_b phi_i(k); each (a,b)
      // term factors into per-axis products of B and G columns.
      bool first = true;
      for (int a = 0; a < dim; a++)
      {
         for (int b = 0; b < dim; b++)
         {
            std::array<const double *, 3> m{};
            for (int ax = 0; ax < dim; ax++)
            {
               const bool ga = (ax == a), gb = (ax == b);
               m[ax] = (ga && gb) ? gg_.data() : (ga || gb) ? bg_.data() : bb_.data();
            }
            tensor_apply_transpose(dim, m, q1, n1,
                                   std::span(qd + sym_index(a, b, dim) * nqp_, nqp_), de,
                                   work, !first);
            first = false;
         }
      }
   }

   /// Recomputes w det J c for one element (matrix-free mass).
   void mass_qdata_on_the_fly(int e, std::span<double> qd, TensorWork &work,
                              std::vector<double> &scratch, const Basis1D &gbasis) const
   {
      const int dim = fes_->dim(), dd = dim * dim;
      std::vector<double> J(nqp_ * dd), detJ(nqp_), invJT(nqp_ * dd), X(nqp_ * dim);
      element_geometry(fes_->mesh(), e, gbasis, J, detJ, invJT, X, work, scratch);
      for (int k = 0; k < nqp_; k++) { qd[k] = weights_[k] * detJ[k] * coefficient(&X[k * dim]); }
   }

private:
   std::shared_ptr<const FESpace> fes_;
   FormKind kind_;
   ScalarFunction coeff_;
   Basis1D basis_;
   int ncomp_ = 1;
   int nqp_ = 0;
   std::vector<double> weights_;
   std::vector<double> qdata_;
   std::vector<double> bb_, gg_, bg_;
   std::vector<int> ess_;
   std::vector<char> ess_mask_;
};

inline PAOperator pa_setup(std::shared_ptr<const FESpace> fes, FormKind kind,
                           ScalarFunction coeff = {}, int q = 0)
{
   return PAOperator(std::move(fes), kind, std::move(coeff), q);
}

/// y = A x ignoring essential dofs.
inline void pa_apply_unconstrained(const PAOperator &op, std::span<const double> x,
                                   std::span<double> y, ApplyMode mode = ApplyMode::Partial)
{
   const FESpace &fes = op.fes();
   require(static_cast<int>(x.size()) == fes.vsize() && static_cast<int>(y.size()) == fes.vsize(),
           "pa_apply: vector length mismatch");
   require(mode == ApplyMode::Partial || op.kind() == FormKind::Mass,
           "pa_apply: matrix-free mode is only provided for the mass form");
   const int nd = fes.dofs_per_element(), vdim = fes.vdim();
   const int nqp = op.points_per_element(), ncomp = op.qdata_components();
   std::vector<double> xe(fes.esize()), ye(fes.esize());
   gather_e(fes, x, xe);
   const Basis1D gbasis = (mode == ApplyMode::MatrixFree)
      ? tabulate(fes.mesh().geom_order(), op.basis().nq()) : Basis1D{};
   parallel_for(fes.num_elements(), [&](int e)
   {
      TensorWork work;
      std::vector<double> qbuf, scratch, qd_local;
      const double *qd = op.qdata().data() + static_cast<std::size_t>(e) * ncomp * nqp;
      if (mode == ApplyMode::MatrixFree)
      {
         qd_local.resize(nqp);
         op.mass_qdata_on_the_fly(e, qd_local, work, scratch, gbasis);
         qd = qd_local.data();
      }
      for (int c = 0; c < vdim; c++)
      {
         const std::size_t o = static_cast<std::size_t>(e * vdim + c) * nd;
         op.apply_element(qd, std::span(xe).subspan(o, nd), std::span(ye).subspan(o, nd), work, qbuf);
      }
   });
   scatter_e_transpose(fes, ye, y);
}

/// y = A x with essential rows/columns replaced by the identity.
inline void pa_apply(const PAOperator &op, std::span<const double> x, std::span<double> y,
                     ApplyMode mode = ApplyMode::Partial)
{
   if (op.essential_dofs().empty())
   {
      pa_apply_unconstrained(op, x, y, mode);
      return;
   }
   std::vector<double> xf(x.begin(), x.end());
   for (int d : op.essential_dofs()) { xf[d] = 0.0; }
   pa_apply_unconstrained(op, xf, y, mode);
   for (int d : op.essential_dofs()) { y[d] = x[d]; }
}

inline LinearOperator as_operator(const PAOperator &op)
{
   return [&op](std::span<const double> x, std::span<double> y) { pa_apply(op, x, y); };
}

/// Exact diagonal of the assembled operator without assembling it.
inline std::vector<double> pa_diagonal(const PAOperator &op)
{
   const FESpace &fes = op.fes();
   const int nd = fes.dofs_per_element(), vdim = fes.vdim();
   const int nqp = op.points_per_element(), ncomp = op.qdata_components();
   std::vector<double> de(fes.esize());
   parallel_for(fes.num_elements(), [&](int e)
   {
      TensorWork work;
      const double *qd = op.qdata().data() + static_cast<std::size_t>(e) * ncomp * nqp;
      std::span<double> d0 = std::span(de).subspan(static_cast<std::size_t>(e) * vdim * nd, nd);
      op.diagonal_element(qd, d0, work);
      for (int c = 1; c < vdim; c++)
      {
         std::copy(d0.begin(), d0.end(), de.begin() + static_cast<std::ptrdiff_t>((e * vdim + c) * nd));
      }
   });
   std::vector<double> diag(fes.vsize());
   scatter_e_transpose(fes, de, diag);
   for (int d : op.essential_dofs()) { diag[d] = 1.0; }
   return diag;
}

/// Multiply-adds of one element apply (one component).
inline std::size_t pa_element_madds(const PAOperator &op)
{
   const int nd = op.fes().dofs_per_element();
   std::vector<double> xe(nd, 1.0), ye(nd), qbuf;
   TensorWork work;
   return op.apply_element(op.qdata().data(), xe, ye, work, qbuf);
}

/// Dense element matrices (scalar block; components are decoupled).
struct ElementMatrices
{
   int ne = 0;
   int nd = 0;
   std::vector<double> data; // [e][i][j]

   std::span<const double> operator[](int e) const
   {
      return std::span(data).subspan(static_cast<std::size_t>(e) * nd * nd,
                                     static_cast<std::size_t>(nd) * nd);
   }
};

/// A_e = B_e^T D_e B_e built from the full tensor-product tabulation (no sum
/// factorization), so it is an independent route to the same operator.
inline ElementMatrices element_assemble(const PAOperator &op)
{
   const FESpace &fes = op.fes();
   const int dim = fes.dim();
   const int n1 = op.basis().ndof(), q1 = op.basis().nq();
   const int nd = fes.dofs_per_element(), nqp = op.points_per_element();
   const int ncomp = op.qdata_components();
   // phi[k*nd + i] and dphi[(a*nqp + k)*nd + i]
   std::vector<double> phi(static_cast<std::size_t>(nqp) * nd);
   std::vector<double> dphi(static_cast<std::size_t>(dim) * nqp * nd);
   for (int k = 0; k < nqp; k++)
   {
      const auto kq = unflatten(k, q1, dim);
      for (int i = 0; i < nd; i++)
      {
         const auto ii = unflatten(i, n1, dim);
         double v = 1.0;
         for (int ax = 0; ax < dim; ax++) { v *= op.basis().b(kq[ax], ii[ax]); }
         phi[k * nd + i] = v;
         for (int a = 0; a < dim; a++)
         {
            double g = 1.0;
            for (int ax = 0; ax < dim; ax++)
            {
               g *= (ax == a) ? op.basis().g(kq[ax], ii[ax]) : op.basis().b(kq[ax], ii[ax]);
            }
            dphi[(static_cast<std::size_t>(a) * nqp + k) * nd + i] = g;
         }
      }
   }
   ElementMatrices em;
   em.ne = fes.num_elements();
   em.nd = nd;
   em.data.assign(static_cast<std::size_t>(em.ne) * nd * nd, 0.0);
   parallel_for(em.ne, [&](int e)
   {
      const double *qd = op.qdata().data() + static_cast<std::size_t>(e) * ncomp * nqp;
      double *A = em.data.data() + static_cast<std::size_t>(e) * nd * nd;
      if (op.kind() == FormKind::Mass)
      {
         for (int k = 0; k < nqp; k++)
         {
            const double *pk = &phi[k * nd];
            for (int i = 0; i < nd; i++)
            {
               const double s = qd[k] * pk[i];
               for (int j = 0; j < nd; j++) { A[i * nd + j] += s * pk[j]; }
            }
         }
         return;
      }
      std::vector<double> w(nd);
      for (int k = 0; k < nqp; k++)
      {
         for (int a = 0; a < dim; a++)
         {
            // w_j = sum_b Q_ab d_b phi_j
            std::fill(w.begin(), w.end(), 0.0);
            for (int b = 0; b < dim; b++)
            {
               const double q = qd[sym_index(a, b, dim) * nqp + k];
               const double *db = &dphi[(static_cast<std::size_t>(b) * nqp + k) * nd];
               for (int j = 0; j < nd; j++) { w[j] += q * db[j]; }
            }
            const double *da = &dphi[(static_cast<std::size_t>(a) * nqp + k) * nd];
            for (int i = 0; i < nd; i++)
            {
               for (int j = 0; j < nd; j++) { A[i * nd + j] += da[i] * w[j]; }
            }
         }
      }
   });
   return em;
}

/// y = G^T (blockdiag A_e) G x with the essential-dof identity convention.
inline void ea_apply(const PAOperator &op, const ElementMatrices &em,
                     std::span<const double> x, std::span<double> y)
{
   const FESpace &fes = op.fes();
   const int nd = em.nd, vdim = fes.vdim();
   std::vector<double> xf(x.begin(), x.end());
   for (int d : op.essential_dofs()) { xf[d] = 0.0; }
   std::vector<double> xe(fes.esize()), ye(fes.esize());
   gather_e(fes, xf, xe);
   parallel_for(em.ne, [&](int e)
   {
      const auto A = em[e];
      for (int c = 0; c < vdim; c++)
      {
         const std::size_t o = static_cast<std::size_t>(e * vdim + c) * nd;
         for (int i = 0; i < nd; i++)
         {
            double s = 0.0;
            for (int j = 0; j < nd; j++) { s += A[i * nd + j] * xe[o + j]; }
            ye[o + i] = s;
         }
      }
   });
   scatter_e_transpose(fes, ye, y);
   for (int d : op.essential_dofs()) { y[d] = x[d]; }
}

/// Global CSR matrix. With `eliminate`, essential rows/columns are replaced
/// by the identity (use eliminate_bc on the unconstrained matrix for the
/// right-hand side).
inline CSRSparseMatrix full_assemble(const PAOperator &op, bool eliminate = true)
{
   const FESpace &fes = op.fes();
   const auto em = element_assemble(op);
   const int nd = em.nd, vdim = fes.vdim();
   std::vector<int> ti, tj;
   std::vector<double> tv;
   const std::size_t nt = static_cast<std::size_t>(em.ne) * vdim * nd * nd;
   ti.reserve(nt); tj.reserve(nt); tv.reserve(nt);
   for (int e = 0; e < em.ne; e++)
   {
      const auto A = em[e];
      const auto dofs = fes.element_dofs(e);
      for (int c = 0; c < vdim; c++)
      {
         for (int i = 0; i < nd; i++)
         {
            for (int j = 0; j < nd; j++)
            {
               ti.push_back(dofs[i] * vdim + c);
               tj.push_back(dofs[j] * vdim + c);
               tv.push_back(A[i * nd + j]);
            }
         }
      }
   }
   auto M = CSRSparseMatrix::from_triplets(fes.vsize(), fes.vsize(), ti, tj, tv);
   if (eliminate && !op.essential_dofs().empty())
   {
      return eliminate_rows_cols(M, op.essential_dofs());
   }
   return M;
}

namespace detail
{

inline void eliminate_bc_impl(const LinearOperator &apply_unconstrained,
                              std::span<const int> ess, std::span<const double> x_bc,
                              std::span<double> b)
{
   const std::size_t n = b.size();
   require(x_bc.size() == n, "eliminate_bc: x_bc length mismatch");
   std::vector<double> w(n, 0.0), Aw(n);
   for (int d : ess)
   {
      require(d >= 0 && static_cast<std::size_t>(d) < n, "eliminate_bc: index out of range");
      w[d] = x_bc[d];
   }
   apply_unconstrained(w, Aw);
   for (std::size_t i = 0; i < n; i++) { b[i] -= Aw[i]; }
   for (int d : ess) { b[d] = x_bc[d]; }
}

} // namespace detail

/// b <- b - A x_bc (x_bc restricted to ess), then b[ess] = x_bc.
inline void eliminate_bc(const PAOperator &op, std::span<const int> ess,
                         std::span<const double> x_bc, std::span<double> b)
{
   detail::eliminate_bc_impl([&op](std::span<const double> x, std::span<double> y)
   {
      pa_apply_unconstrained(op, x, y);
   }, ess, x_bc, b);
}

/// Same on an assembled matrix; `A` must be the unconstrained matrix.
inline void eliminate_bc(const CSRSparseMatrix &A, std::span<const int> ess,
                         std::span<const double> x_bc, std::span<double> b)
{
   detail::eliminate_bc_impl(A.as_operator(), ess, x_bc, b);
}

/// b_i = int f phi_i over the domain (scalar H1/L2 space).
inline std::vector<double> assemble_rhs(const FESpace &fes, const ScalarFunction &f, int q = 0)
{
   require(fes.vdim() == 1, "assemble_rhs: scalar space required");
   const int dim = fes.dim(), p = fes.order(), nd = fes.dofs_per_element();
   const Basis1D basis = tabulate(p, q > 0 ? q : default_quad_points(p));
   const auto gf = geometric_factors(fes.mesh(), basis.nq());
   const std::array<const double *, 3> bmats{basis.B.data(), basis.B.data(), basis.B.data()};
   std::vector<double> be(fes.esize());
   parallel_for(fes.num_elements(), [&](int e)
   {
      TensorWork work;
      std::vector<double> fq(gf.nqp);
      for (int k = 0; k < gf.nqp; k++)
      {
         const int idx = gf.index(e, k);
         Point x{0.0, 0.0, 0.0};
         for (int c = 0; c < dim; c++) { x[c] = gf.X[idx * dim + c]; }
         fq[k] = gf.weights[k] * gf.detJ[idx] * f(x);
      }
      tensor_apply_transpose(dim, bmats, basis.nq(), basis.ndof(), fq,
                             std::span(be).subspan(static_cast<std::size_t>(e) * nd, nd), work);
   });
   std::vector<double> b(fes.vsize());
   scatter_e_transpose(fes, be, b);
   return b;
}

/// ||u_h - u||_{L2} for a scalar field; q = 0 selects p+3 points.
inline double l2_error(const FESpace &fes, std::span<const double> u, const ScalarFunction &exact,
                       int q = 0)
{
   require(fes.vdim() == 1, "l2_error: scalar space required");
   const int dim = fes.dim(), p = fes.order(), nd = fes.dofs_per_element();
   const Basis1D basis = tabulate(p, q > 0 ? q : p + 3);
   const auto gf = geometric_factors(fes.mesh(), basis.nq());
   const std::array<const double *, 3> bmats{basis.B.data(), basis.B.data(), basis.B.data()};
   std::vector<double> ue(fes.esize());
   gather_e(fes, u, ue);
   std::vector<double> err(fes.num_elements(), 0.0);
   parallel_for(fes.num_elements(), [&](int e)
   {
      TensorWork work;
      std::vector<double> uq(gf.nqp);
      tensor_apply(dim, bmats, basis.nq(), basis.ndof(),
                   std::span<const double>(ue).subspan(static_cast<std::size_t>(e) * nd, nd), uq, work);
      double s = 0.0;
      for (int k = 0; k < gf.nqp; k++)
      {
         const int idx = gf.index(e, k);
         Point x{0.0, 0.0, 0.0};
         for (int c = 0; c < dim; c++) { x[c] = gf.X[idx * dim + c]; }
         const double d = uq[k] - exact(x);
         s += gf.weights[k] * gf.detJ[idx] * d * d;
      }
      err[e] = s;
   });
   double total = 0.0;
   for (double s : err) { total += s; }
   return std::sqrt(total);
}

} // namespace hofem
