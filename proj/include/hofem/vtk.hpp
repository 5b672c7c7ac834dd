#pragma once

// Legacy ASCII VTK output. Each high-order element is written as p^dim
// linear sub-cells between its GLL points; points are duplicated per
// element so that discontinuous fields need no special handling.

#include "hofem/fespace.hpp"

#include <fstream>
#include <ostream>
#include <string>

namespace hofem
{

inline constexpr int vtk_quad = 9;
inline constexpr int vtk_hexahedron = 12;

/// Writes the mesh, optionally with a nodal field on `fes` (its degree sets
/// the sub-cell resolution; otherwise the geometry order is used).
inline void write_vtk(std::ostream &os, const CartesianMesh &mesh,
                      const FESpace *fes = nullptr, std::span<const double> field = {},
                      const std::string &name = "u")
{
   const int dim = mesh.dim();
   const int p = fes ? fes->order() : mesh.geom_order();
   const int n1 = p + 1, nloc = ipow(n1, dim), ncell = ipow(p, dim);
   const int ne = mesh.num_elements();
   const Basis1D gb = tabulate_at(mesh.geom_order(), gll_nodes(p));
   const std::array<const double *, 3> mats{gb.B.data(), gb.B.data(), gb.B.data()};

   os << "# vtk DataFile Version 3.0\nhofem\nASCII\nDATASET UNSTRUCTURED_GRID\n";
   os << "POINTS " << ne * nloc << " double\n";
   std::vector<double> coords(mesh.nodes_per_element() * dim), xe(static_cast<std::size_t>(nloc) * dim);
   TensorWork work;
   for (int e = 0; e < ne; e++)
   {
      mesh.element_coords(e, coords);
      for (int c = 0; c < dim; c++)
      {
         tensor_apply(dim, mats, n1, mesh.geom_order() + 1,
                      std::span<const double>(coords).subspan(c * mesh.nodes_per_element(),
                                                              mesh.nodes_per_element()),
                      std::span(xe).subspan(static_cast<std::size_t>(c) * nloc, nloc), work);
      }
      for (int l = 0; l < nloc; l++)
      {
         for (int c = 0; c < 3; c++) { os << (c ? " " : "") << fmt17(c < dim ? xe[c * nloc + l] : 0.0); }
         os << "\n";
      }
   }

   const int nv = (dim == 2) ? 4 : 8;
   os << "CELLS " << ne * ncell << " " << ne * ncell * (nv + 1) << "\n";
   // VTK vertex order of the unit quad/hex in (i, j, k) offsets.
   static constexpr int corner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                        {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
   for (int e = 0; e < ne; e++)
   {
      for (int s = 0; s < ncell; s++)
      {
         const auto ijk = unflatten(s, p, dim);
         os << nv;
         for (int v = 0; v < nv; v++)
         {
            int idx = 0, stride = 1;
            for (int a = 0; a < dim; a++)
            {
               idx += (ijk[a] + corner[v][a]) * stride;
               stride *= n1;
            }
            os << " " << e * nloc + idx;
         }
         os << "\n";
      }
   }
   os << "CELL_TYPES " << ne * ncell << "\n";
   for (int i = 0; i < ne * ncell; i++) { os << (dim == 2 ? vtk_quad : vtk_hexahedron) << "\n"; }

   if (fes && !field.empty())
   {
      require(static_cast<int>(field.size()) == fes->vsize(), "write_vtk: field length mismatch");
      const int vdim = fes->vdim();
      os << "POINT_DATA " << ne * nloc << "\n";
      if (vdim == 1) { os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n"; }
      else { os << "FIELD FieldData 1\n" << name << " " << vdim << " " << ne * nloc << " double\n"; }
      for (int e = 0; e < ne; e++)
      {
         const auto dofs = fes->element_dofs(e);
         for (int l = 0; l < nloc; l++)
         {
            for (int c = 0; c < vdim; c++)
            {
               os << (c ? " " : "") << fmt17(field[dofs[l] * vdim + c]);
            }
            os << "\n";
         }
      }
   }
}

inline void write_vtk(const std::string &path, const CartesianMesh &mesh,
                      const FESpace *fes = nullptr, std::span<const double> field = {},
                      const std::string &name = "u")
{
   std::ofstream os(path);
   if (!os) { throw Error("write_vtk: cannot open " + path); }
   write_vtk(os, mesh, fes, field, name);
}

} // namespace hofem
