#pragma once

// Discontinuous Galerkin integrator for first-order hyperbolic systems
// du/dt + div F(u) = 0 on periodic 2D quadrilateral meshes: weak divergence
// per element, Rusanov flux on faces, SSP-RK3 in time.

#include "hofem/fespace.hpp"

#include <Eigen/Dense>

#include <string_view>

namespace hofem
{

/// A system of m conservation laws in 2D. Flux layout: F[c * 2 + j] is the
/// flux of component c along axis j.
class ConservationLaw
{
public:
   virtual ~ConservationLaw() = default;
   virtual int num_components() const = 0;
   virtual std::string name() const = 0;
   virtual bool admissible(std::span<const double>) const { return true; }
   /// Throws InadmissibleStateError naming `where` unless u is admissible.
   void check(std::span<const double> u, std::string_view where) const
   {
      if (!admissible(u))
      {
         std::string vals;
         for (double v : u) { vals += (vals.empty() ? "" : ", ") + fmt17(v); }
         throw InadmissibleStateError(name() + ": inadmissible state (" + vals + ") at "
                                      + std::string(where));
      }
   }
   virtual void flux(std::span<const double> u, std::span<double> F) const = 0;
   /// Largest signal speed along the unit normal n.
   virtual double max_speed(std::span<const double> u, const std::array<double, 2> &n) const = 0;
};

class LinearAdvection : public ConservationLaw
{
public:
   explicit LinearAdvection(std::array<double, 2> b) : b_(b) {}
   int num_components() const override { return 1; }
   std::string name() const override { return "advection"; }
   const std::array<double, 2> &velocity() const { return b_; }
   void flux(std::span<const double> u, std::span<double> F) const override
   {
      F[0] = b_[0] * u[0];
      F[1] = b_[1] * u[0];
   }
   double max_speed(std::span<const double>, const std::array<double, 2> &n) const override
   {
      return std::abs(b_[0] * n[0] + b_[1] * n[1]);
   }

private:
   std::array<double, 2> b_;
};

/// State (h, hu, hv), flat bottom.
class ShallowWater : public ConservationLaw
{
public:
   explicit ShallowWater(double gravity = 9.81) : g_(gravity)
   {
      require(gravity > 0.0, "ShallowWater: gravity must be positive");
   }
   int num_components() const override { return 3; }
   std::string name() const override { return "shallow_water"; }
   double gravity() const { return g_; }
   bool admissible(std::span<const double> u) const override { return u[0] > 0.0; }
   void flux(std::span<const double> u, std::span<double> F) const override
   {
      const double h = u[0], vx = u[1] / h, vy = u[2] / h, p = 0.5 * g_ * h * h;
      F[0] = u[1];
      F[1] = u[2];
      F[2] = u[1] * vx + p;
      F[3] = u[1] * vy;
      F[4] = u[2] * vx;
      F[5] = u[2] * vy + p;
   }
   double max_speed(std::span<const double> u, const std::array<double, 2> &n) const override
   {
      const double h = u[0];
      return std::abs((u[1] * n[0] + u[2] * n[1]) / h) + std::sqrt(g_ * h);
   }

private:
   double g_;
};

/// Local Lax-Friedrichs flux through a face with unit normal n pointing from
/// the minus to the plus state.
inline void rusanov_flux(const ConservationLaw &law, const std::array<double, 2> &n,
                         std::span<const double> um, std::span<const double> up,
                         std::span<double> out)
{
   const int m = law.num_components();
   law.check(um, "face (minus side)");
   law.check(up, "face (plus side)");
   std::array<double, 16> Fm{}, Fp{};
   require(m <= 8, "rusanov_flux: at most 8 components");
   law.flux(um, std::span(Fm).first(2 * m));
   law.flux(up, std::span(Fp).first(2 * m));
   const double lam = std::max(law.max_speed(um, n), law.max_speed(up, n));
   for (int c = 0; c < m; c++)
   {
      const double avg = 0.5 * ((Fm[2 * c] + Fp[2 * c]) * n[0] + (Fm[2 * c + 1] + Fp[2 * c + 1]) * n[1]);
      out[c] = avg - 0.5 * lam * (up[c] - um[c]);
   }
}

/// One interior or periodic face: element `minus` at its xi_axis = 1 side
/// against element `plus` at its xi_axis = 0 side.
struct DGFace
{
   int minus = 0;
   int plus = 0;
   int axis = 0;
};

/// DG discretization state: the L2 space (vdim = m), the solution L-vector,
/// volume quadrature data, face geometry and per-element mass factors.
class DGState
{
public:
   DGState(std::shared_ptr<const CartesianMesh> mesh, int p, int m, int q = 0)
   {
      require(mesh != nullptr && mesh->dim() == 2, "DGState: 2D mesh required");
      require(mesh->periodic(0) && mesh->periodic(1), "DGState: mesh must be periodic in x and y");
      require(m >= 1 && m <= 8, "DGState: 1 to 8 components");
      fes_ = build_fespace(std::move(mesh), p, Continuity::L2, m);
      q_ = q > 0 ? q : default_quad_points(p);
      basis_ = tabulate(p, q_);
      u.assign(fes_->vsize(), 0.0);
      setup_volume();
      setup_faces();
   }

   std::vector<double> u;

   const FESpace &fes() const { return *fes_; }
   const CartesianMesh &mesh() const { return fes_->mesh(); }
   int order() const { return fes_->order(); }
   int components() const { return fes_->vdim(); }
   int quad_points() const { return q_; }
   const Basis1D &basis() const { return basis_; }
   std::span<const DGFace> faces() const { return faces_; }
   std::span<const double> face_normals() const { return fnormal_; }
   std::span<const double> face_weights() const { return fweight_; }
   /// w_k det J_k per element and point.
   std::span<const double> volume_weights() const { return wdet_; }
   double element_width(int e) const { return width_[e]; }

   /// Nodal interpolation of fn into u.
   void project(const VectorFunction &fn) { u = interpolate(*fes_, fn); }

   /// y = M x, block diagonal, same block for every component.
   void mass_apply(std::span<const double> x, std::span<double> y) const
   {
      for_each_block(x, y, [&](int e, const Eigen::VectorXd &in, Eigen::VectorXd &out)
      {
         out = mass_[e] * in;
      });
   }

   /// y = M^{-1} x by the per-element Cholesky factors.
   void mass_solve(std::span<const double> x, std::span<double> y) const
   {
      for_each_block(x, y, [&](int e, const Eigen::VectorXd &in, Eigen::VectorXd &out)
      {
         out = llt_[e].solve(in);
      });
   }

   /// Integral of each component over the domain.
   std::vector<double> integrals(std::span<const double> x) const
   {
      const int m = components(), nd = fes_->dofs_per_element(), nqp = nqp_;
      std::vector<double> out(m, 0.0), vals(nqp);
      TensorWork work;
      std::vector<double> ue(nd);
      for (int e = 0; e < fes_->num_elements(); e++)
      {
         for (int c = 0; c < m; c++)
         {
            for (int i = 0; i < nd; i++) { ue[i] = x[(static_cast<std::size_t>(e) * nd + i) * m + c]; }
            eval_qp(ue, vals, work);
            for (int k = 0; k < nqp; k++) { out[c] += wdet_[e * nqp + k] * vals[k]; }
         }
      }
      return out;
   }

   /// sqrt(sum_c int u_c^2), or of u - exact when `exact` is given.
   double l2_norm(std::span<const double> x, const VectorFunction &exact = {}) const
   {
      const int m = components(), nd = fes_->dofs_per_element(), nqp = nqp_;
      std::vector<double> vals(static_cast<std::size_t>(m) * nqp), ue(nd), ex(m);
      TensorWork work;
      double s = 0.0;
      for (int e = 0; e < fes_->num_elements(); e++)
      {
         for (int c = 0; c < m; c++)
         {
            for (int i = 0; i < nd; i++) { ue[i] = x[(static_cast<std::size_t>(e) * nd + i) * m + c]; }
            eval_qp(ue, std::span(vals).subspan(static_cast<std::size_t>(c) * nqp, nqp), work);
         }
         for (int k = 0; k < nqp; k++)
         {
            const std::size_t gk = static_cast<std::size_t>(e) * nqp + k;
            if (exact) { exact({X_[2 * gk], X_[2 * gk + 1], 0.0}, ex); }
            for (int c = 0; c < m; c++)
            {
               const double d = vals[static_cast<std::size_t>(c) * nqp + k] - (exact ? ex[c] : 0.0);
               s += wdet_[gk] * d * d;
            }
         }
      }
      return std::sqrt(s);
   }

   /// Volume qdata: per element and point, w det J (J^{-T}) row-major.
   std::span<const double> volume_qdata() const { return qd_; }

   /// Values of one component's element block at the volume points.
   void eval_qp(std::span<const double> ue, std::span<double> vals, TensorWork &work) const
   {
      const std::array<const double *, 3> bb{basis_.B.data(), basis_.B.data(), nullptr};
      tensor_apply(2, bb, q_, basis_.ndof(), ue, vals, work);
   }

private:
   template <typename Fn>
   void for_each_block(std::span<const double> x, std::span<double> y, Fn &&fn) const
   {
      const int m = components(), nd = fes_->dofs_per_element();
      require(static_cast<int>(x.size()) == fes_->vsize() && static_cast<int>(y.size()) == fes_->vsize(),
              "DGState: vector length mismatch");
      parallel_for(fes_->num_elements(), [&](int e)
      {
         Eigen::VectorXd in(nd), out(nd);
         for (int c = 0; c < m; c++)
         {
            for (int i = 0; i < nd; i++) { in[i] = x[(static_cast<std::size_t>(e) * nd + i) * m + c]; }
            fn(e, in, out);
            for (int i = 0; i < nd; i++) { y[(static_cast<std::size_t>(e) * nd + i) * m + c] = out[i]; }
         }
      });
   }

   void setup_volume()
   {
      const auto &mesh = fes_->mesh();
      const int ne = mesh.num_elements(), nd = fes_->dofs_per_element();
      const auto gf = geometric_factors(mesh, q_);
      nqp_ = gf.nqp;
      wdet_.resize(static_cast<std::size_t>(ne) * nqp_);
      qd_.resize(static_cast<std::size_t>(ne) * nqp_ * 4);
      X_ = gf.X;
      for (std::size_t i = 0; i < wdet_.size(); i++)
      {
         wdet_[i] = gf.weights[i % nqp_] * gf.detJ[i];
         for (int r = 0; r < 4; r++) { qd_[4 * i + r] = wdet_[i] * gf.invJT[4 * i + r]; }
      }
      // Element mass matrices B^T diag(w det J) B from the tensor tabulation.
      Eigen::MatrixXd Bq(nqp_, nd);
      for (int k = 0; k < nqp_; k++)
      {
         for (int i = 0; i < nd; i++)
         {
            Bq(k, i) = basis_.b(k % q_, i % (order() + 1)) * basis_.b(k / q_, i / (order() + 1));
         }
      }
      mass_.resize(ne);
      llt_.resize(ne);
      width_.resize(ne);
      for (int e = 0; e < ne; e++)
      {
         const Eigen::Map<const Eigen::VectorXd> w(wdet_.data() + static_cast<std::size_t>(e) * nqp_, nqp_);
         mass_[e] = Bq.transpose() * w.asDiagonal() * Bq;
         llt_[e].compute(mass_[e]);
         require(llt_[e].info() == Eigen::Success, "DGState: element mass matrix not SPD");
         double wmin = 1e300;
         for (int a = 0; a < 2; a++)
         {
            Point lo{0.5, 0.5, 0.0}, hi{0.5, 0.5, 0.0};
            lo[a] = 0.0;
            hi[a] = 1.0;
            const Point xl = mesh.map(e, lo), xh = mesh.map(e, hi);
            wmin = std::min(wmin, std::hypot(xh[0] - xl[0], xh[1] - xl[1]));
         }
         width_[e] = wmin;
      }
   }

   void setup_faces()
   {
      const auto &mesh = fes_->mesh();
      const int ne = mesh.num_elements();
      const auto rule = gauss_quadrature(q_);
      faces_.clear();
      for (int e = 0; e < ne; e++)
      {
         for (int a = 0; a < 2; a++)
         {
            auto nb = mesh.element_ijk(e);
            nb[a] = (nb[a] + 1) % mesh.count(a);
            faces_.push_back({e, mesh.element_index(nb), a});
         }
      }
      // Scaled normal det J J^{-T} e_a on the minus element's xi_a = 1 side.
      const std::size_t nf = faces_.size();
      fnormal_.resize(nf * q_ * 2);
      fweight_.resize(nf * q_);
      for (std::size_t f = 0; f < nf; f++)
      {
         const auto &F = faces_[f];
         for (int k = 0; k < q_; k++)
         {
            Point ref{0.0, 0.0, 0.0}, x;
            ref[F.axis] = 1.0;
            ref[1 - F.axis] = rule.points[k];
            Mat3 J;
            mesh.map(F.minus, ref, x, &J);
            const double dj = det(J, 2);
            const Mat3 it = inverse_transpose(J, 2);
            const double Nx = dj * it[0 * 3 + F.axis], Ny = dj * it[1 * 3 + F.axis];
            const double len = std::hypot(Nx, Ny);
            fnormal_[(f * q_ + k) * 2] = Nx / len;
            fnormal_[(f * q_ + k) * 2 + 1] = Ny / len;
            fweight_[f * q_ + k] = rule.weights[k] * len;
         }
      }
   }

   std::shared_ptr<const FESpace> fes_;
   int q_ = 0;
   int nqp_ = 0;
   Basis1D basis_;
   std::vector<double> wdet_, qd_, X_;
   std::vector<Eigen::MatrixXd> mass_;
   std::vector<Eigen::LLT<Eigen::MatrixXd>> llt_;
   std::vector<double> width_;
   std::vector<DGFace> faces_;
   std::vector<double> fnormal_, fweight_;
};

/// Unscaled weak form: sum_E int F(u):grad v - sum_faces int Fhat [[v]].
inline void dg_weak_form(const ConservationLaw &law, const DGState &s, std::span<const double> x,
                         std::span<double> out)
{
   const int m = law.num_components();
   require(m == s.components(), "dg_residual: law and state component counts differ");
   const FESpace &fes = s.fes();
   const Basis1D &b = s.basis();
   const int p1 = b.ndof(), q = b.nq(), nqp = q * q, nd = fes.dofs_per_element();
   const int ne = fes.num_elements();
   const auto qd = s.volume_qdata();
   const auto faces = s.faces();
   const auto fn = s.face_normals();
   const auto fw = s.face_weights();
   const auto at = [&](int e, int i, int c) { return (static_cast<std::size_t>(e) * nd + i) * m + c; };

   // Face traces are GLL face nodes, so each trace is a 1D interpolation.
   const auto face_node = [&](int axis, int side, int t)
   {
      return axis == 0 ? t * p1 + side * (p1 - 1) : side * (p1 - 1) * p1 + t;
   };

   // Flux times weight at every face point, [face][point][component].
   std::vector<double> fflux(faces.size() * q * m);
   parallel_for(static_cast<int>(faces.size()), [&](int f)
   {
      const auto &F = faces[f];
      std::array<double, 8> um{}, up{}, fh{};
      for (int k = 0; k < q; k++)
      {
         um.fill(0.0);
         up.fill(0.0);
         for (int t = 0; t < p1; t++)
         {
            const double bt = b.b(k, t);
            for (int c = 0; c < m; c++)
            {
               um[c] += bt * x[at(F.minus, face_node(F.axis, 1, t), c)];
               up[c] += bt * x[at(F.plus, face_node(F.axis, 0, t), c)];
            }
         }
         const std::array<double, 2> n{fn[(static_cast<std::size_t>(f) * q + k) * 2],
                                       fn[(static_cast<std::size_t>(f) * q + k) * 2 + 1]};
         if (!law.admissible(std::span(um).first(m)) || !law.admissible(std::span(up).first(m)))
         {
            const bool minus_bad = !law.admissible(std::span(um).first(m));
            law.check(std::span(minus_bad ? um : up).first(m),
                      "face " + std::to_string(f) + ", element " + std::to_string(minus_bad ? F.minus : F.plus));
         }
         rusanov_flux(law, n, std::span(um).first(m), std::span(up).first(m), std::span(fh).first(m));
         for (int c = 0; c < m; c++)
         {
            fflux[(static_cast<std::size_t>(f) * q + k) * m + c] = fw[static_cast<std::size_t>(f) * q + k] * fh[c];
         }
      }
   });

   parallel_for(ne, [&](int e)
   {
      TensorWork work;
      std::vector<double> ue(nd), uq(static_cast<std::size_t>(m) * nqp), y0(nqp), y1(nqp), re(nd);
      std::array<double, 8> uk{};
      std::array<double, 16> Fk{};
      const std::array<const double *, 3> gb{b.G.data(), b.B.data(), nullptr};
      const std::array<const double *, 3> bg{b.B.data(), b.G.data(), nullptr};
      for (int c = 0; c < m; c++)
      {
         for (int i = 0; i < nd; i++) { ue[i] = x[at(e, i, c)]; }
         s.eval_qp(ue, std::span(uq).subspan(static_cast<std::size_t>(c) * nqp, nqp), work);
      }
      // Reference-direction flux components Y_r = w det J F J^{-T} e_r.
      std::vector<double> Y(static_cast<std::size_t>(m) * 2 * nqp);
      for (int k = 0; k < nqp; k++)
      {
         for (int c = 0; c < m; c++) { uk[c] = uq[static_cast<std::size_t>(c) * nqp + k]; }
         if (!law.admissible(std::span(uk).first(m)))
         {
            law.check(std::span(uk).first(m), "element " + std::to_string(e) + ", point " + std::to_string(k));
         }
         law.flux(std::span(uk).first(m), std::span(Fk).first(2 * m));
         const double *D = qd.data() + (static_cast<std::size_t>(e) * nqp + k) * 4;
         for (int c = 0; c < m; c++)
         {
            for (int r = 0; r < 2; r++)
            {
               Y[(static_cast<std::size_t>(c) * 2 + r) * nqp + k] = Fk[2 * c] * D[r] + Fk[2 * c + 1] * D[2 + r];
            }
         }
      }
      for (int c = 0; c < m; c++)
      {
         tensor_apply_transpose(2, gb, q, p1, std::span(Y).subspan((static_cast<std::size_t>(c) * 2) * nqp, nqp),
                                re, work);
         tensor_apply_transpose(2, bg, q, p1, std::span(Y).subspan((static_cast<std::size_t>(c) * 2 + 1) * nqp, nqp),
                                re, work, true);
         for (int i = 0; i < nd; i++) { out[at(e, i, c)] = re[i]; }
      }
      // Faces touching e, in a fixed order: as minus (x then y), then as plus.
      const auto ijk = fes.mesh().element_ijk(e);
      for (int a = 0; a < 2; a++)
      {
         auto nb = ijk;
         nb[a] = (nb[a] + fes.mesh().count(a) - 1) % fes.mesh().count(a);
         const int fm = 2 * e + a, fp = 2 * fes.mesh().element_index(nb) + a;
         for (int side = 0; side < 2; side++)
         {
            const int f = side == 0 ? fm : fp;
            const double sign = side == 0 ? -1.0 : 1.0;
            for (int k = 0; k < q; k++)
            {
               for (int t = 0; t < p1; t++)
               {
                  const int node = face_node(a, side == 0 ? 1 : 0, t);
                  for (int c = 0; c < m; c++)
                  {
                     out[at(e, node, c)] += sign * b.b(k, t) * fflux[(static_cast<std::size_t>(f) * q + k) * m + c];
                  }
               }
            }
         }
      }
   });
}

/// du/dt = M^{-1} (weak divergence - interface flux). The laws here are
/// autonomous, so t is unused.
inline std::vector<double> dg_residual(const ConservationLaw &law, const DGState &s,
                                       std::span<const double> x, double t = 0.0)
{
   (void)t;
   std::vector<double> w(x.size()), r(x.size());
   dg_weak_form(law, s, x, w);
   s.mass_solve(w, r);
   return r;
}

inline std::vector<double> dg_residual(const ConservationLaw &law, const DGState &s, double t = 0.0)
{
   return dg_residual(law, s, s.u, t);
}

/// cfl * min_e min_a width_a(e) / lambda_a(e) / (2p + 1), lambda_a the
/// largest nodal signal speed along axis a.
inline double stable_dt(const ConservationLaw &law, const DGState &s, double cfl)
{
   require(cfl > 0.0, "stable_dt: cfl must be positive");
   const int m = s.components(), nd = s.fes().dofs_per_element();
   double dt = 1e300;
   for (int e = 0; e < s.fes().num_elements(); e++)
   {
      double lam = 0.0;
      for (int i = 0; i < nd; i++)
      {
         const auto ui = std::span<const double>(s.u).subspan((static_cast<std::size_t>(e) * nd + i) * m, m);
         if (!law.admissible(ui)) { law.check(ui, "element " + std::to_string(e)); }
         lam = std::max({lam, law.max_speed(ui, {1.0, 0.0}), law.max_speed(ui, {0.0, 1.0})});
      }
      if (lam > 0.0) { dt = std::min(dt, s.element_width(e) / lam); }
   }
   require(dt < 1e300, "stable_dt: all signal speeds are zero");
   return cfl * dt / (2 * s.order() + 1);
}

/// Shu-Osher SSP-RK3. On an inadmissible stage the state is left unchanged
/// and the error names the stage.
inline void ssp_rk3_step(const ConservationLaw &law, DGState &s, double dt, double t = 0.0)
{
   require(dt > 0.0, "ssp_rk3_step: dt must be positive");
   const std::size_t n = s.u.size();
   std::vector<double> u1(n), u2(n), u3(n);
   int stage = 1;
   try
   {
      const auto k1 = dg_residual(law, s, s.u, t);
      for (std::size_t i = 0; i < n; i++) { u1[i] = s.u[i] + dt * k1[i]; }
      stage = 2;
      const auto k2 = dg_residual(law, s, u1, t + dt);
      for (std::size_t i = 0; i < n; i++) { u2[i] = 0.75 * s.u[i] + 0.25 * (u1[i] + dt * k2[i]); }
      stage = 3;
      const auto k3 = dg_residual(law, s, u2, t + 0.5 * dt);
      for (std::size_t i = 0; i < n; i++) { u3[i] = s.u[i] / 3.0 + 2.0 / 3.0 * (u2[i] + dt * k3[i]); }
   }
   catch (const InadmissibleStateError &err)
   {
      throw InadmissibleStateError("ssp_rk3_step stage " + std::to_string(stage) + ": " + err.what());
   }
   s.u = std::move(u3);
}

inline std::string hyperbolic_csv_header(int m)
{
   std::string h = "step,t,dt";
   for (int c = 0; c < m; c++) { h += ",mass_" + std::to_string(c); }
   return h + ",l2_norm";
}

inline std::string hyperbolic_csv_row(int step, double t, double dt, const DGState &s)
{
   std::string r = std::to_string(step) + "," + fmt17(t) + "," + fmt17(dt);
   for (double v : s.integrals(s.u)) { r += "," + fmt17(v); }
   return r + "," + fmt17(s.l2_norm(s.u));
}

} // namespace hofem
