#pragma once

// Finite element spaces and the L-vector <-> E-vector maps.
//
// Layouts:
//   L-vector: dof-major, components interleaved (index = dof*vdim + c).
//   E-vector: element-major, then component, then element-local dof in
//             lexicographic order (index = (e*vdim + c)*nd + i).
// In serial the T-vector equals the L-vector (P = identity).

#include "hofem/mesh.hpp"

#include <algorithm>
#include <memory>
#include <set>

namespace hofem
{

enum class Continuity { H1, L2 };

using ScalarFunction = std::function<double(const Point &)>;
using VectorFunction = std::function<void(const Point &, std::span<double>)>;

class FESpace
{
public:
   FESpace(std::shared_ptr<const CartesianMesh> mesh, int p, Continuity cont, int vdim = 1)
      : mesh_(std::move(mesh)), p_(p), cont_(cont), vdim_(vdim)
   {
      require(mesh_ != nullptr, "FESpace: null mesh");
      require(p >= 1, "FESpace: degree must be >= 1");
      require(vdim >= 1, "FESpace: vdim must be >= 1");
      const int dim = mesh_->dim();
      nd_ = ipow(p + 1, dim);
      const int ne = mesh_->num_elements();
      l_to_e_.resize(static_cast<std::size_t>(ne) * nd_);
      if (cont_ == Continuity::L2)
      {
         ndofs_ = ne * nd_;
         for (int i = 0; i < ne * nd_; i++) { l_to_e_[i] = i; }
         return;
      }
      ndofs_ = 1;
      for (int a = 0; a < dim; a++)
      {
         ext_[a] = p * mesh_->count(a) + (mesh_->periodic(a) ? 0 : 1);
         ndofs_ *= ext_[a];
      }
      for (int e = 0; e < ne; e++)
      {
         const auto eijk = mesh_->element_ijk(e);
         for (int l = 0; l < nd_; l++)
         {
            const auto lijk = unflatten(l, p + 1, dim);
            int idx = 0, stride = 1;
            for (int a = 0; a < dim; a++)
            {
               int i = eijk[a] * p + lijk[a];
               if (mesh_->periodic(a) && i == ext_[a]) { i = 0; }
               idx += i * stride;
               stride *= ext_[a];
            }
            l_to_e_[static_cast<std::size_t>(e) * nd_ + l] = idx;
         }
      }
   }

   const CartesianMesh &mesh() const { return *mesh_; }
   std::shared_ptr<const CartesianMesh> mesh_ptr() const { return mesh_; }
   int order() const { return p_; }
   Continuity continuity() const { return cont_; }
   int vdim() const { return vdim_; }
   int dim() const { return mesh_->dim(); }
   int num_elements() const { return mesh_->num_elements(); }

   /// Scalar dof count.
   int num_dofs() const { return ndofs_; }
   /// L-vector (= T-vector) length.
   int vsize() const { return ndofs_ * vdim_; }
   int dofs_per_element() const { return nd_; }
   /// E-vector length.
   int esize() const { return num_elements() * nd_ * vdim_; }

   std::span<const int> l_to_e() const { return l_to_e_; }

   std::span<const int> element_dofs(int e) const
   {
      return std::span(l_to_e_).subspan(static_cast<std::size_t>(e) * nd_, nd_);
   }

   /// H1 only: distinct dof indices along an axis of the dof lattice.
   int dof_extent(int axis) const { return ext_[axis]; }

private:
   std::shared_ptr<const CartesianMesh> mesh_;
   int p_;
   Continuity cont_;
   int vdim_;
   int nd_ = 0;
   int ndofs_ = 0;
   std::array<int, 3> ext_{1, 1, 1};
   std::vector<int> l_to_e_;
};

inline std::shared_ptr<const FESpace> build_fespace(std::shared_ptr<const CartesianMesh> mesh,
                                                    int p, Continuity cont, int vdim = 1)
{
   return std::make_shared<const FESpace>(std::move(mesh), p, cont, vdim);
}

/// G: L-vector -> E-vector.
inline void gather_e(const FESpace &fes, std::span<const double> l, std::span<double> e)
{
   require(static_cast<int>(l.size()) == fes.vsize(), "gather_e: L-vector length mismatch");
   require(static_cast<int>(e.size()) == fes.esize(), "gather_e: E-vector length mismatch");
   const int nd = fes.dofs_per_element(), vdim = fes.vdim();
   const auto map = fes.l_to_e();
   parallel_for(fes.num_elements(), [&](int el)
   {
      for (int c = 0; c < vdim; c++)
      {
         double *out = e.data() + static_cast<std::size_t>(el * vdim + c) * nd;
         const int *dofs = map.data() + static_cast<std::size_t>(el) * nd;
         for (int i = 0; i < nd; i++) { out[i] = l[dofs[i] * vdim + c]; }
      }
   });
}

/// G^T: sums element contributions into the L-vector (sequential, so the
/// summation order is fixed).
inline void scatter_e_transpose(const FESpace &fes, std::span<const double> e,
                                std::span<double> l)
{
   require(static_cast<int>(l.size()) == fes.vsize(),
           "scatter_e_transpose: L-vector length mismatch");
   require(static_cast<int>(e.size()) == fes.esize(),
           "scatter_e_transpose: E-vector length mismatch");
   const int nd = fes.dofs_per_element(), vdim = fes.vdim();
   const auto map = fes.l_to_e();
   std::fill(l.begin(), l.end(), 0.0);
   for (int el = 0; el < fes.num_elements(); el++)
   {
      for (int c = 0; c < vdim; c++)
      {
         const double *in = e.data() + static_cast<std::size_t>(el * vdim + c) * nd;
         const int *dofs = map.data() + static_cast<std::size_t>(el) * nd;
         for (int i = 0; i < nd; i++) { l[dofs[i] * vdim + c] += in[i]; }
      }
   }
}

/// Sorted T-dof indices (all components) on boundary faces whose attribute
/// is in `attrs`; an empty filter selects every boundary face.
inline std::vector<int> boundary_dofs(const FESpace &fes, std::span<const int> attrs = {})
{
   require(fes.continuity() == Continuity::H1, "boundary_dofs: requires an H1 space");
   const auto &mesh = fes.mesh();
   const int dim = fes.dim();
   auto selected = [&](int axis, int side)
   {
      if (mesh.periodic(axis)) { return false; }
      if (attrs.empty()) { return true; }
      return std::find(attrs.begin(), attrs.end(), mesh.boundary_attr(axis, side)) != attrs.end();
   };
   std::vector<int> out;
   for (int d = 0; d < fes.num_dofs(); d++)
   {
      int rem = d;
      bool on = false;
      for (int a = 0; a < dim; a++)
      {
         const int i = rem % fes.dof_extent(a);
         rem /= fes.dof_extent(a);
         if (i == 0 && selected(a, 0)) { on = true; }
         if (i == fes.dof_extent(a) - 1 && selected(a, 1)) { on = true; }
      }
      if (on)
      {
         for (int c = 0; c < fes.vdim(); c++) { out.push_back(d * fes.vdim() + c); }
      }
   }
   return out;
}

/// Physical coordinates of every scalar dof, interleaved (dof*dim + c).
inline std::vector<double> dof_coordinates(const FESpace &fes)
{
   const auto &mesh = fes.mesh();
   const int dim = fes.dim(), nd = fes.dofs_per_element();
   const int nloc = mesh.nodes_per_element();
   const Basis1D gb = tabulate_at(mesh.geom_order(), gll_nodes(fes.order()));
   const std::array<const double *, 3> mats{gb.B.data(), gb.B.data(), gb.B.data()};
   std::vector<double> xyz(static_cast<std::size_t>(fes.num_dofs()) * dim, 0.0);
   std::vector<char> set(fes.num_dofs(), 0);
   std::vector<double> coords(nloc * dim), xe(nd);
   TensorWork work;
   for (int e = 0; e < fes.num_elements(); e++)
   {
      mesh.element_coords(e, coords);
      const auto dofs = fes.element_dofs(e);
      for (int c = 0; c < dim; c++)
      {
         tensor_apply(dim, mats, fes.order() + 1, mesh.geom_order() + 1,
                      std::span<const double>(coords).subspan(c * nloc, nloc), xe, work);
         for (int i = 0; i < nd; i++)
         {
            if (!set[dofs[i]]) { xyz[dofs[i] * dim + c] = xe[i]; }
         }
      }
      for (int i = 0; i < nd; i++) { set[dofs[i]] = 1; }
   }
   return xyz;
}

/// Nodal interpolant of a scalar function (vdim must be 1).
inline std::vector<double> interpolate(const FESpace &fes, const ScalarFunction &fn)
{
   require(fes.vdim() == 1, "interpolate: scalar function needs vdim = 1");
   const auto xyz = dof_coordinates(fes);
   const int dim = fes.dim();
   std::vector<double> u(fes.num_dofs());
   for (int d = 0; d < fes.num_dofs(); d++)
   {
      Point x{0.0, 0.0, 0.0};
      for (int c = 0; c < dim; c++) { x[c] = xyz[d * dim + c]; }
      u[d] = fn(x);
   }
   return u;
}

/// Nodal interpolant of a vdim-valued function.
inline std::vector<double> interpolate(const FESpace &fes, const VectorFunction &fn)
{
   const auto xyz = dof_coordinates(fes);
   const int dim = fes.dim(), vdim = fes.vdim();
   std::vector<double> u(fes.vsize());
   for (int d = 0; d < fes.num_dofs(); d++)
   {
      Point x{0.0, 0.0, 0.0};
      for (int c = 0; c < dim; c++) { x[c] = xyz[d * dim + c]; }
      fn(x, std::span(u).subspan(static_cast<std::size_t>(d) * vdim, vdim));
   }
   return u;
}

} // namespace hofem
