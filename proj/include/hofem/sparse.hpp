#pragma once

#include "hofem/core.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <ostream>

namespace hofem
{

/// y = A x on vectors of matching length.
using LinearOperator = std::function<void(std::span<const double>, std::span<double>)>;

/// Compressed sparse row matrix; columns sorted within each row.
struct CSRSparseMatrix
{
   int rows = 0;
   int cols = 0;
   std::vector<int> row_ptr;
   std::vector<int> col;
   std::vector<double> val;

   int nnz() const { return static_cast<int>(val.size()); }
   int row_nnz(int r) const { return row_ptr[r + 1] - row_ptr[r]; }

   void mult(std::span<const double> x, std::span<double> y) const
   {
      require(static_cast<int>(x.size()) == cols && static_cast<int>(y.size()) == rows,
              "CSRSparseMatrix::mult: length mismatch");
      for (int r = 0; r < rows; r++)
      {
         double s = 0.0;
         for (int k = row_ptr[r]; k < row_ptr[r + 1]; k++) { s += val[k] * x[col[k]]; }
         y[r] = s;
      }
   }

   double at(int r, int c) const
   {
      const auto first = col.begin() + row_ptr[r], last = col.begin() + row_ptr[r + 1];
      const auto it = std::lower_bound(first, last, c);
      return (it != last && *it == c) ? val[it - col.begin()] : 0.0;
   }

   std::vector<double> diagonal() const
   {
      std::vector<double> d(rows, 0.0);
      for (int r = 0; r < rows; r++) { d[r] = at(r, r); }
      return d;
   }

   LinearOperator as_operator() const
   {
      return [this](std::span<const double> x, std::span<double> y) { mult(x, y); };
   }

   /// Sums duplicate (row, col) entries.
   static CSRSparseMatrix from_triplets(int rows, int cols, const std::vector<int> &ti,
                                        const std::vector<int> &tj,
                                        const std::vector<double> &tv)
   {
      CSRSparseMatrix A;
      A.rows = rows;
      A.cols = cols;
      std::vector<int> count(rows + 1, 0);
      for (int r : ti) { count[r + 1]++; }
      std::partial_sum(count.begin(), count.end(), count.begin());
      std::vector<int> order(ti.size());
      {
         std::vector<int> next(count.begin(), count.end() - 1);
         for (std::size_t t = 0; t < ti.size(); t++) { order[next[ti[t]]++] = static_cast<int>(t); }
      }
      A.row_ptr.assign(rows + 1, 0);
      for (int r = 0; r < rows; r++)
      {
         auto first = order.begin() + count[r], last = order.begin() + count[r + 1];
         // Stable, so duplicates are summed in insertion order.
         std::stable_sort(first, last, [&](int a, int b) { return tj[a] < tj[b]; });
         int prev = -1;
         for (auto it = first; it != last; ++it)
         {
            if (tj[*it] == prev) { A.val.back() += tv[*it]; continue; }
            prev = tj[*it];
            A.col.push_back(prev);
            A.val.push_back(tv[*it]);
         }
         A.row_ptr[r + 1] = static_cast<int>(A.val.size());
      }
      return A;
   }
};

/// Drops rows and columns of `ess` and puts 1 on their diagonal.
inline CSRSparseMatrix eliminate_rows_cols(const CSRSparseMatrix &A, std::span<const int> ess)
{
   std::vector<char> mask(A.rows, 0);
   for (int d : ess)
   {
      require(d >= 0 && d < A.rows, "eliminate_rows_cols: index out of range");
      mask[d] = 1;
   }
   CSRSparseMatrix B;
   B.rows = A.rows;
   B.cols = A.cols;
   B.row_ptr.assign(A.rows + 1, 0);
   for (int r = 0; r < A.rows; r++)
   {
      if (mask[r])
      {
         B.col.push_back(r);
         B.val.push_back(1.0);
      }
      else
      {
         for (int k = A.row_ptr[r]; k < A.row_ptr[r + 1]; k++)
         {
            if (mask[A.col[k]]) { continue; }
            B.col.push_back(A.col[k]);
            B.val.push_back(A.val[k]);
         }
      }
      B.row_ptr[r + 1] = static_cast<int>(B.val.size());
   }
   return B;
}

/// MatrixMarket "coordinate real general", 1-based, %.17g values.
inline void write_matrix_market(std::ostream &os, const CSRSparseMatrix &A)
{
   os << "%%MatrixMarket matrix coordinate real general\n";
   os << A.rows << " " << A.cols << " " << A.nnz() << "\n";
   for (int r = 0; r < A.rows; r++)
   {
      for (int k = A.row_ptr[r]; k < A.row_ptr[r + 1]; k++)
      {
         os << (r + 1) << " " << (A.col[k] + 1) << " " << fmt17(A.val[k]) << "\n";
      }
   }
}

inline Eigen::SparseMatrix<double> to_eigen(const CSRSparseMatrix &A)
{
   std::vector<Eigen::Triplet<double>> trips;
   trips.reserve(A.nnz());
   for (int r = 0; r < A.rows; r++)
   {
      for (int k = A.row_ptr[r]; k < A.row_ptr[r + 1]; k++) { trips.emplace_back(r, A.col[k], A.val[k]); }
   }
   Eigen::SparseMatrix<double> M(A.rows, A.cols);
   M.setFromTriplets(trips.begin(), trips.end());
   return M;
}

/// Exact sparse Cholesky solve; the default inner solver wherever an
/// assembled SPD system has to be inverted.
class SparseCholesky
{
public:
   explicit SparseCholesky(const CSRSparseMatrix &A) : n_(A.rows)
   {
      llt_ = std::make_shared<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>(to_eigen(A));
      if (llt_->info() != Eigen::Success)
      {
         throw Error("SparseCholesky: matrix is not symmetric positive definite");
      }
   }

   void solve(std::span<const double> b, std::span<double> x) const
   {
      Eigen::Map<const Eigen::VectorXd> bb(b.data(), n_);
      Eigen::Map<Eigen::VectorXd> xx(x.data(), n_);
      xx = llt_->solve(bb);
   }

   LinearOperator as_operator() const
   {
      return [self = *this](std::span<const double> b, std::span<double> x) { self.solve(b, x); };
   }

private:
   int n_;
   std::shared_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> llt_;
};

/// Builds an inverse action from an assembled SPD matrix.
using InnerSolverFactory = std::function<LinearOperator(const CSRSparseMatrix &)>;

inline LinearOperator cholesky_solver(const CSRSparseMatrix &A)
{
   return SparseCholesky(A).as_operator();
}

} // namespace hofem
