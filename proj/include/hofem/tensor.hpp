#pragma once

// Sum-factorization kernels: 1D operators applied axis by axis to tensors
// stored in lexicographic order (axis 0 fastest).

#include "hofem/core.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace hofem
{

inline int ipow(int base, int e)
{
   int r = 1;
   for (int i = 0; i < e; i++) { r *= base; }
   return r;
}

/// Scratch space for tensor_apply; one per worker.
struct TensorWork
{
   std::vector<double> a, b;

   void reserve(std::size_t n)
   {
      if (a.size() < n) { a.resize(n); b.resize(n); }
   }
};

/// Contracts axis `axis` of `src` (extents `ext`) with a 1D matrix.
/// Output coefficient for (out index r, in index c) is mat[r*rs + c*cs].
/// Returns the number of multiply-adds performed.
inline std::size_t contract_axis(const double *mat, int rs, int cs, int nout,
                                 const double *src, const std::array<int, 3> &ext,
                                 int dim, int axis, double *dst, bool accumulate)
{
   int inner = 1, outer = 1;
   for (int a = 0; a < axis; a++) { inner *= ext[a]; }
   for (int a = axis + 1; a < dim; a++) { outer *= ext[a]; }
   const int nin = ext[axis];
   for (int o = 0; o < outer; o++)
   {
      const double *s = src + static_cast<std::size_t>(o) * nin * inner;
      double *d = dst + static_cast<std::size_t>(o) * nout * inner;
      for (int r = 0; r < nout; r++)
      {
         double *dr = d + static_cast<std::size_t>(r) * inner;
         if (!accumulate) { std::fill(dr, dr + inner, 0.0); }
         for (int c = 0; c < nin; c++)
         {
            const double m = mat[r * rs + c * cs];
            const double *sc = s + static_cast<std::size_t>(c) * inner;
            for (int i = 0; i < inner; i++) { dr[i] += m * sc[i]; }
         }
      }
   }
   return static_cast<std::size_t>(outer) * nout * nin * inner;
}

/// out = (M_{dim-1} x ... x M_0) in, each M_a row-major rows x cols.
/// `in` has cols^dim entries, `out` rows^dim.
inline std::size_t tensor_apply(int dim, const std::array<const double *, 3> &mats,
                                int rows, int cols, std::span<const double> in,
                                std::span<double> out, TensorWork &work,
                                bool accumulate = false)
{
   const int big = std::max(rows, cols);
   work.reserve(static_cast<std::size_t>(ipow(big, dim)));
   std::array<int, 3> ext{cols, cols, cols};
   const double *src = in.data();
   std::size_t madds = 0;
   for (int axis = 0; axis < dim; axis++)
   {
      const bool last = (axis == dim - 1);
      double *dst = last ? out.data() : (axis % 2 == 0 ? work.a.data() : work.b.data());
      madds += contract_axis(mats[axis], cols, 1, rows, src, ext, dim, axis, dst,
                             last && accumulate);
      ext[axis] = rows;
      src = dst;
   }
   return madds;
}

/// out = (M_{dim-1}^T x ... x M_0^T) in: rows^dim -> cols^dim.
inline std::size_t tensor_apply_transpose(int dim, const std::array<const double *, 3> &mats,
                                          int rows, int cols, std::span<const double> in,
                                          std::span<double> out, TensorWork &work,
                                          bool accumulate = false)
{
   const int big = std::max(rows, cols);
   work.reserve(static_cast<std::size_t>(ipow(big, dim)));
   std::array<int, 3> ext{rows, rows, rows};
   const double *src = in.data();
   std::size_t madds = 0;
   for (int axis = 0; axis < dim; axis++)
   {
      const bool last = (axis == dim - 1);
      double *dst = last ? out.data() : (axis % 2 == 0 ? work.a.data() : work.b.data());
      madds += contract_axis(mats[axis], 1, cols, cols, src, ext, dim, axis, dst,
                             last && accumulate);
      ext[axis] = cols;
      src = dst;
   }
   return madds;
}

/// Splits a lexicographic index into per-axis indices.
inline std::array<int, 3> unflatten(int idx, int n, int dim)
{
   std::array<int, 3> ijk{0, 0, 0};
   for (int a = 0; a < dim; a++)
   {
      ijk[a] = idx % n;
      idx /= n;
   }
   return ijk;
}

} // namespace hofem
