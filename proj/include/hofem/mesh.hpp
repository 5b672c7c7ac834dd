#pragma once

// Structured quad/hex meshes with a high-order nodal coordinate field.

#include "hofem/basis.hpp"
#include "hofem/tensor.hpp"

#include <array>
#include <functional>
#include <sstream>
#include <tuple>
#include <vector>

namespace hofem
{

using Point = std::array<double, 3>;
using Mat3 = std::array<double, 9>; // row-major, leading dim x dim block used

/// Tensor-product mesh of [0,1]^dim reference elements. Coordinates live on
/// a lexicographic lattice of geom_order*count+1 nodes per axis (periodic
/// axes drop the last layer), interleaved by node (xyzxyz).
class CartesianMesh
{
public:
   CartesianMesh(int dim, std::array<int, 3> counts, int geom_order,
                 std::array<bool, 3> periodic, Point period,
                 std::vector<double> nodes)
      : dim_(dim), counts_(counts), order_(geom_order), periodic_(periodic),
        period_(period), nodes_(std::move(nodes))
   {
      require(dim == 2 || dim == 3, "mesh: dim must be 2 or 3");
      require(geom_order >= 1, "mesh: geometry order must be >= 1");
      for (int a = 0; a < 3; a++)
      {
         if (a >= dim) { counts_[a] = 1; periodic_[a] = false; }
         require(counts_[a] >= 1, "mesh: element count per axis must be >= 1");
      }
      require(static_cast<int>(nodes_.size()) == num_nodes() * dim,
              "mesh: node array has wrong length");
      for (int a = 0; a < 6; a++) { bdr_attr_[a] = a + 1; }
      gll_ = gll_nodes(order_);
      bary_ = barycentric_weights(gll_);
   }

   int dim() const { return dim_; }
   int count(int axis) const { return counts_[axis]; }
   const std::array<int, 3> &counts() const { return counts_; }
   int geom_order() const { return order_; }
   bool periodic(int axis) const { return periodic_[axis]; }
   const std::array<bool, 3> &periodic_flags() const { return periodic_; }
   double period(int axis) const { return period_[axis]; }
   const Point &periods() const { return period_; }

   int num_elements() const
   {
      int n = 1;
      for (int a = 0; a < dim_; a++) { n *= counts_[a]; }
      return n;
   }

   /// Distinct lattice indices along an axis.
   int node_extent(int axis) const
   {
      if (axis >= dim_) { return 1; }
      return order_ * counts_[axis] + (periodic_[axis] ? 0 : 1);
   }

   int num_nodes() const
   {
      int n = 1;
      for (int a = 0; a < dim_; a++) { n *= node_extent(a); }
      return n;
   }

   int nodes_per_element() const { return ipow(order_ + 1, dim_); }

   std::span<const double> nodes() const { return nodes_; }

   int boundary_attr(int axis, int side) const { return bdr_attr_[2 * axis + side]; }
   void set_boundary_attr(int axis, int side, int attr) { bdr_attr_[2 * axis + side] = attr; }

   std::array<int, 3> element_ijk(int e) const
   {
      return {e % counts_[0], (e / counts_[0]) % counts_[1], e / (counts_[0] * counts_[1])};
   }

   int element_index(const std::array<int, 3> &ijk) const
   {
      return ijk[0] + counts_[0] * (ijk[1] + counts_[1] * ijk[2]);
   }

   /// Global node of element-local node `local`; `wrapped[a]` is set when
   /// the node was folded across a periodic axis.
   int element_node(int e, int local, std::array<bool, 3> *wrapped = nullptr) const
   {
      const auto eijk = element_ijk(e);
      const auto lijk = unflatten(local, order_ + 1, dim_);
      int idx = 0, stride = 1;
      for (int a = 0; a < dim_; a++)
      {
         int i = eijk[a] * order_ + lijk[a];
         const bool wrap = periodic_[a] && i == node_extent(a);
         if (wrap) { i = 0; }
         if (wrapped) { (*wrapped)[a] = wrap; }
         idx += i * stride;
         stride *= node_extent(a);
      }
      return idx;
   }

   /// Element node coordinates, component-blocked: out[c*nloc + l].
   void element_coords(int e, std::span<double> out) const
   {
      const int nloc = nodes_per_element();
      for (int l = 0; l < nloc; l++)
      {
         std::array<bool, 3> wrapped{};
         const int n = element_node(e, l, &wrapped);
         for (int c = 0; c < dim_; c++)
         {
            out[c * nloc + l] = nodes_[n * dim_ + c] + (wrapped[c] ? period_[c] : 0.0);
         }
      }
   }

   /// Physical point and Jacobian dx_i/dxi_j of element e at a reference point.
   void map(int e, const Point &ref, Point &x, Mat3 *jac = nullptr) const
   {
      const int n1 = order_ + 1;
      std::array<std::vector<double>, 3> v, d;
      for (int a = 0; a < dim_; a++)
      {
         v[a].resize(n1);
         d[a].resize(n1);
         lagrange_eval(gll_, bary_, ref[a], v[a], d[a]);
      }
      std::vector<double> coords(nodes_per_element() * dim_);
      element_coords(e, coords);
      x = {0.0, 0.0, 0.0};
      if (jac) { jac->fill(0.0); }
      const int nloc = nodes_per_element();
      for (int l = 0; l < nloc; l++)
      {
         const auto ijk = unflatten(l, n1, dim_);
         double phi = 1.0;
         std::array<double, 3> dphi{1.0, 1.0, 1.0};
         for (int a = 0; a < dim_; a++)
         {
            phi *= v[a][ijk[a]];
            for (int j = 0; j < dim_; j++) { dphi[j] *= (j == a) ? d[a][ijk[a]] : v[a][ijk[a]]; }
         }
         for (int c = 0; c < dim_; c++)
         {
            const double xc = coords[c * nloc + l];
            x[c] += phi * xc;
            if (jac)
            {
               for (int j = 0; j < dim_; j++) { (*jac)[c * 3 + j] += dphi[j] * xc; }
            }
         }
      }
   }

   Point map(int e, const Point &ref) const
   {
      Point x;
      map(e, ref, x);
      return x;
   }

private:
   int dim_;
   std::array<int, 3> counts_;
   int order_;
   std::array<bool, 3> periodic_;
   Point period_;
   std::vector<double> nodes_;
   std::array<int, 6> bdr_attr_{};
   std::vector<double> gll_;
   std::vector<double> bary_;
};

inline double det(const Mat3 &J, int dim)
{
   if (dim == 2) { return J[0] * J[4] - J[1] * J[3]; }
   return J[0] * (J[4] * J[8] - J[5] * J[7]) - J[1] * (J[3] * J[8] - J[5] * J[6])
        + J[2] * (J[3] * J[7] - J[4] * J[6]);
}

/// Inverse transpose of the leading dim x dim block.
inline Mat3 inverse_transpose(const Mat3 &J, int dim)
{
   Mat3 r{};
   const double d = det(J, dim);
   if (dim == 2)
   {
      r[0] = J[4] / d;  r[1] = -J[3] / d;
      r[3] = -J[1] / d; r[4] = J[0] / d;
      return r;
   }
   // Cofactor matrix divided by det is inv(J)^T.
   r[0] = (J[4] * J[8] - J[5] * J[7]) / d;
   r[1] = (J[5] * J[6] - J[3] * J[8]) / d;
   r[2] = (J[3] * J[7] - J[4] * J[6]) / d;
   r[3] = (J[2] * J[7] - J[1] * J[8]) / d;
   r[4] = (J[0] * J[8] - J[2] * J[6]) / d;
   r[5] = (J[1] * J[6] - J[0] * J[7]) / d;
   r[6] = (J[1] * J[5] - J[2] * J[4]) / d;
   r[7] = (J[2] * J[3] - J[0] * J[5]) / d;
   r[8] = (J[0] * J[4] - J[1] * J[3]) / d;
   return r;
}

/// Quadrature-point geometry (the Q-vector of the mesh map). Per element and
/// point k, in element-major order: J and J^{-T} as row-major dim x dim
/// blocks, det J, physical coordinates X.
struct GeometricFactors
{
   int dim = 0;
   int ne = 0;
   int nqp = 0; // points per element
   std::vector<double> weights; // tensor quadrature weights, nqp
   std::vector<double> J;
   std::vector<double> detJ;
   std::vector<double> invJT;
   std::vector<double> X;

   int index(int e, int k) const { return e * nqp + k; }
};

/// Geometry of one element at the tabulated points of `gbasis` (degree =
/// geom_order). Throws InvalidMeshError on det J <= 0.
inline void element_geometry(const CartesianMesh &mesh, int e, const Basis1D &gbasis,
                             std::span<double> J, std::span<double> detJ,
                             std::span<double> invJT, std::span<double> X,
                             TensorWork &work, std::vector<double> &scratch)
{
   const int dim = mesh.dim();
   const int nloc = mesh.nodes_per_element();
   const int n1 = gbasis.ndof();
   const int q1 = gbasis.nq();
   const int nqp = ipow(q1, dim);
   const int dd = dim * dim;
   scratch.resize(nloc * dim + nqp * (dd + dim));
   std::span<double> coords(scratch.data(), nloc * dim);
   std::span<double> grad(scratch.data() + nloc * dim, nqp * dd);
   std::span<double> xq(scratch.data() + nloc * dim + nqp * dd, nqp * dim);
   mesh.element_coords(e, coords);
   const std::array<const double *, 3> bmats{gbasis.B.data(), gbasis.B.data(), gbasis.B.data()};
   for (int c = 0; c < dim; c++)
   {
      auto xc = coords.subspan(c * nloc, nloc);
      tensor_apply(dim, bmats, q1, n1, xc, xq.subspan(c * nqp, nqp), work);
      for (int j = 0; j < dim; j++)
      {
         std::array<const double *, 3> m = bmats;
         m[j] = gbasis.G.data();
         tensor_apply(dim, m, q1, n1, xc, grad.subspan((c * dim + j) * nqp, nqp), work);
      }
   }
   for (int k = 0; k < nqp; k++)
   {
      Mat3 Jk{};
      for (int c = 0; c < dim; c++)
      {
         for (int j = 0; j < dim; j++) { Jk[c * 3 + j] = grad[(c * dim + j) * nqp + k]; }
         X[k * dim + c] = xq[c * nqp + k];
      }
      const double dj = det(Jk, dim);
      if (!(dj > 0.0))
      {
         std::ostringstream os;
         os << "invalid mesh: det J = " << dj << " at element " << e << ", point " << k;
         throw InvalidMeshError(os.str(), e, k);
      }
      detJ[k] = dj;
      const Mat3 it = inverse_transpose(Jk, dim);
      for (int i = 0; i < dim; i++)
      {
         for (int j = 0; j < dim; j++)
         {
            J[k * dd + i * dim + j] = Jk[i * 3 + j];
            invJT[k * dd + i * dim + j] = it[i * 3 + j];
         }
      }
   }
}

/// Tensor Gauss weights for q points per axis.
inline std::vector<double> tensor_weights(const std::vector<double> &w1, int dim)
{
   const int q1 = static_cast<int>(w1.size());
   std::vector<double> w(ipow(q1, dim));
   for (std::size_t k = 0; k < w.size(); k++)
   {
      const auto ijk = unflatten(static_cast<int>(k), q1, dim);
      double v = 1.0;
      for (int a = 0; a < dim; a++) { v *= w1[ijk[a]]; }
      w[k] = v;
   }
   return w;
}

/// J, det J, J^{-T} and X at the q-point Gauss rule of every element.
inline GeometricFactors geometric_factors(const CartesianMesh &mesh, int q)
{
   const Basis1D gbasis = tabulate(mesh.geom_order(), q);
   GeometricFactors gf;
   gf.dim = mesh.dim();
   gf.ne = mesh.num_elements();
   gf.nqp = ipow(q, gf.dim);
   gf.weights = tensor_weights(gbasis.quad_weights, gf.dim);
   const int dd = gf.dim * gf.dim;
   const std::size_t npts = static_cast<std::size_t>(gf.ne) * gf.nqp;
   gf.J.resize(npts * dd);
   gf.invJT.resize(npts * dd);
   gf.detJ.resize(npts);
   gf.X.resize(npts * gf.dim);
   parallel_for(gf.ne, [&](int e)
   {
      TensorWork work;
      std::vector<double> scratch;
      const std::size_t o = static_cast<std::size_t>(e) * gf.nqp;
      element_geometry(mesh, e, gbasis,
                       std::span(gf.J).subspan(o * dd, gf.nqp * dd),
                       std::span(gf.detJ).subspan(o, gf.nqp),
                       std::span(gf.invJT).subspan(o * dd, gf.nqp * dd),
                       std::span(gf.X).subspan(o * gf.dim, gf.nqp * gf.dim), work, scratch);
   });
   return gf;
}

/// Throws InvalidMeshError unless det J > 0 at every point of the default rule.
inline void validate(const CartesianMesh &mesh)
{
   (void)geometric_factors(mesh, default_quad_points(mesh.geom_order()));
}

/// Sum of w * det J: the domain measure.
inline double domain_measure(const CartesianMesh &mesh)
{
   const auto gf = geometric_factors(mesh, default_quad_points(mesh.geom_order()));
   double m = 0.0;
   for (int e = 0; e < gf.ne; e++)
   {
      for (int k = 0; k < gf.nqp; k++) { m += gf.weights[k] * gf.detJ[gf.index(e, k)]; }
   }
   return m;
}

/// Axis-aligned box mesh with GLL-spaced geometry nodes.
inline CartesianMesh make_cartesian_mesh(int dim, std::array<int, 3> counts, int geom_order,
                                         Point lo, Point hi,
                                         std::array<bool, 3> periodic = {false, false, false})
{
   require(dim == 2 || dim == 3, "make_cartesian_mesh: dim must be 2 or 3");
   require(geom_order >= 1, "make_cartesian_mesh: geometry order must be >= 1");
   for (int a = 0; a < dim; a++)
   {
      require(counts[a] >= 1, "make_cartesian_mesh: zero element count along an axis");
      require(hi[a] > lo[a], "make_cartesian_mesh: degenerate extents");
   }
   const auto gll = gll_nodes(geom_order);
   Point period{0.0, 0.0, 0.0};
   std::array<int, 3> ext{1, 1, 1};
   for (int a = 0; a < dim; a++)
   {
      if (periodic[a]) { period[a] = hi[a] - lo[a]; }
      ext[a] = geom_order * counts[a] + (periodic[a] ? 0 : 1);
   }
   const int nn = ext[0] * ext[1] * ext[2];
   std::vector<double> nodes(static_cast<std::size_t>(nn) * dim);
   for (int n = 0; n < nn; n++)
   {
      int rem = n;
      for (int a = 0; a < dim; a++)
      {
         const int i = rem % ext[a];
         rem /= ext[a];
         const int el = std::min(i / geom_order, counts[a] - 1);
         const double t = (el + gll[i - el * geom_order]) / counts[a];
         nodes[n * dim + a] = lo[a] + t * (hi[a] - lo[a]);
      }
   }
   return CartesianMesh(dim, counts, geom_order, periodic, period, std::move(nodes));
}

namespace detail
{

/// For child lattice index i along one axis: parent element index and the
/// reference coordinate of the child node inside it.
using LatticeMap = std::function<std::pair<int, double>(int)>;

inline CartesianMesh resample_mesh(const CartesianMesh &parent, std::array<int, 3> counts,
                                   int order, const std::array<LatticeMap, 3> &maps)
{
   const int dim = parent.dim();
   std::array<int, 3> ext{1, 1, 1};
   for (int a = 0; a < dim; a++)
   {
      ext[a] = order * counts[a] + (parent.periodic(a) ? 0 : 1);
   }
   const int nn = ext[0] * ext[1] * ext[2];
   std::vector<double> nodes(static_cast<std::size_t>(nn) * dim);
   for (int n = 0; n < nn; n++)
   {
      int rem = n;
      std::array<int, 3> pe{0, 0, 0};
      Point ref{0.0, 0.0, 0.0};
      for (int a = 0; a < dim; a++)
      {
         const int i = rem % ext[a];
         rem /= ext[a];
         std::tie(pe[a], ref[a]) = maps[a](i);
      }
      const Point x = parent.map(parent.element_index(pe), ref);
      for (int c = 0; c < dim; c++) { nodes[n * dim + c] = x[c]; }
   }
   CartesianMesh child(dim, counts, order, parent.periodic_flags(), parent.periods(),
                       std::move(nodes));
   for (int a = 0; a < dim; a++)
   {
      for (int s = 0; s < 2; s++) { child.set_boundary_attr(a, s, parent.boundary_attr(a, s)); }
   }
   return child;
}

} // namespace detail

/// Doubles the element count per axis; the coordinate map is unchanged.
inline CartesianMesh refine_uniform(const CartesianMesh &mesh)
{
   const int g = mesh.geom_order();
   const auto gll = gll_nodes(g);
   std::array<int, 3> counts = mesh.counts();
   std::array<detail::LatticeMap, 3> maps;
   for (int a = 0; a < mesh.dim(); a++)
   {
      counts[a] *= 2;
      const int nc = counts[a];
      maps[a] = [g, nc, gll](int i)
      {
         int c = i / g, l = i % g;
         if (c == nc) { c = nc - 1; l = g; }
         return std::pair{c / 2, 0.5 * ((c % 2) + gll[l])};
      };
   }
   return detail::resample_mesh(mesh, counts, g, maps);
}

/// Low-order-refined mesh: each element split into p^dim linear elements
/// whose vertices are the degree-p GLL points of the parent. The vertex
/// lattice coincides with the degree-p H1 dof lattice of the parent mesh.
inline CartesianMesh lor_refine(const CartesianMesh &mesh, int p)
{
   require(p >= 1, "lor_refine: degree must be >= 1");
   const auto gll = gll_nodes(p);
   std::array<int, 3> counts = mesh.counts();
   std::array<detail::LatticeMap, 3> maps;
   for (int a = 0; a < mesh.dim(); a++)
   {
      const int n = counts[a];
      counts[a] *= p;
      maps[a] = [p, n, gll](int i)
      {
         const int el = std::min(i / p, n - 1);
         return std::pair{el, gll[i - el * p]};
      };
   }
   CartesianMesh lor = detail::resample_mesh(mesh, counts, 1, maps);
   try
   {
      validate(lor);
   }
   catch (const InvalidMeshError &err)
   {
      std::ostringstream os;
      os << "lor_refine: inverted sub-element " << err.element() << " (parent element "
         << [&]
      {
         auto ijk = lor.element_ijk(err.element());
         for (int a = 0; a < mesh.dim(); a++) { ijk[a] /= p; }
         return mesh.element_index(ijk);
      }() << ")";
      throw InvalidMeshError(os.str(), err.element(), err.point());
   }
   return lor;
}

/// Same topology with new node coordinates (validated).
inline CartesianMesh with_nodes(const CartesianMesh &mesh, std::vector<double> nodes)
{
   CartesianMesh out(mesh.dim(), mesh.counts(), mesh.geom_order(), mesh.periodic_flags(),
                     mesh.periods(), std::move(nodes));
   for (int a = 0; a < mesh.dim(); a++)
   {
      for (int s = 0; s < 2; s++) { out.set_boundary_attr(a, s, mesh.boundary_attr(a, s)); }
   }
   validate(out);
   return out;
}

/// Applies x -> fn(x) to every geometry node.
inline CartesianMesh transform_nodes(const CartesianMesh &mesh,
                                     const std::function<Point(const Point &)> &fn)
{
   const int dim = mesh.dim();
   std::vector<double> nodes(mesh.nodes().begin(), mesh.nodes().end());
   for (int n = 0; n < mesh.num_nodes(); n++)
   {
      Point x{0.0, 0.0, 0.0};
      for (int c = 0; c < dim; c++) { x[c] = nodes[n * dim + c]; }
      const Point y = fn(x);
      for (int c = 0; c < dim; c++) { nodes[n * dim + c] = y[c]; }
   }
   return with_nodes(mesh, std::move(nodes));
}

} // namespace hofem
