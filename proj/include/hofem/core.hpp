#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hofem
{

/// Base for every error raised by the library.
class Error : public std::runtime_error
{
public:
   explicit Error(const std::string &msg) : std::runtime_error(msg) {}
   virtual const char *kind() const noexcept { return "error"; }
};

class InvalidArgument : public Error
{
public:
   using Error::Error;
   const char *kind() const noexcept override { return "invalid_argument"; }
};

/// Raised when det J <= 0 somewhere. Carries the offending element/point.
class InvalidMeshError : public Error
{
public:
   InvalidMeshError(const std::string &msg, int element, int point)
      : Error(msg), element_(element), point_(point) {}
   const char *kind() const noexcept override { return "invalid_mesh"; }
   int element() const { return element_; }
   int point() const { return point_; }

private:
   int element_;
   int point_;
};

/// Quality metric evaluated at det T <= 0 (metric value is +inf).
class BarrierError : public Error
{
public:
   using Error::Error;
   const char *kind() const noexcept override { return "barrier"; }
};

/// Conservation-law state outside the admissible set.
class InadmissibleStateError : public Error
{
public:
   using Error::Error;
   const char *kind() const noexcept override { return "inadmissible_state"; }
};

inline void require(bool cond, const std::string &msg)
{
   if (!cond) { throw InvalidArgument(msg); }
}

/// SplitMix64: x += 0x9e3779b97f4a7c15, then two xor-shift-multiply rounds.
/// uniform() takes the top 53 bits, so streams are reproducible bit-for-bit
/// in any language with 64-bit unsigned arithmetic.
class SplitMix64
{
public:
   explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

   std::uint64_t next()
   {
      std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      return z ^ (z >> 31);
   }

   /// Uniform in [0, 1).
   double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

   double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
   std::uint64_t state_;
};

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed,
                                         double lo = -1.0, double hi = 1.0)
{
   SplitMix64 rng(seed);
   std::vector<double> v(n);
   for (auto &x : v) { x = rng.uniform(lo, hi); }
   return v;
}

// Worker count for element loops. Reductions are always sequential, so the
// results do not depend on this value.
inline int &num_threads()
{
   static int n = 1;
   return n;
}

/// Static-partition parallel loop over [0, n). fn(i) must only write to
/// storage owned by index i.
template <typename Fn>
void parallel_for(int n, Fn &&fn)
{
   const int nt = std::clamp(num_threads(), 1, std::max(n, 1));
   if (nt == 1)
   {
      for (int i = 0; i < n; i++) { fn(i); }
      return;
   }
   std::vector<std::jthread> workers;
   workers.reserve(nt);
   for (int t = 0; t < nt; t++)
   {
      const int begin = static_cast<int>(static_cast<long>(n) * t / nt);
      const int end = static_cast<int>(static_cast<long>(n) * (t + 1) / nt);
      workers.emplace_back([begin, end, &fn]
      {
         for (int i = begin; i < end; i++) { fn(i); }
      });
   }
}

inline double dot(std::span<const double> a, std::span<const double> b)
{
   double s = 0.0;
   for (std::size_t i = 0; i < a.size(); i++) { s += a[i] * b[i]; }
   return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a)
{
   double m = 0.0;
   for (double x : a) { m = std::max(m, std::abs(x)); }
   return m;
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y)
{
   for (std::size_t i = 0; i < x.size(); i++) { y[i] += alpha * x[i]; }
}

/// %.17g, the round-trip format used by every text writer.
inline std::string fmt17(double v)
{
   char buf[40];
   std::snprintf(buf, sizeof(buf), "%.17g", v);
   return buf;
}

} // namespace hofem
