#pragma once

// Command-line drivers: benchmark problems, convergence tables, solver
// studies, mesh optimization and hyperbolic runs. Every driver writes CSV to
// a stream; run_cli() parses arguments and dispatches.

#include "hofem/hyperbolic.hpp"
#include "hofem/solvers.hpp"
#include "hofem/tmop.hpp"
#include "hofem/vtk.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <numbers>

namespace hofem::cli
{

struct RunConfig
{
   std::string subcommand;
   std::vector<int> mesh{4, 4};
   int dim = 2;
   std::vector<int> orders{1};
   int quad = 0; // 0: p + 2
   int levels = 3;
   std::string solver = "lor";
   std::optional<double> tol;
   std::optional<int> max_iter;
   double cfl = 0.25;
   std::uint64_t seed = 42;
   std::string out;
   std::string vtk;
   int threads = 1;
   bool deterministic = false;

   // Subcommand-specific.
   std::string rhs = "random";      // solve: random | sine
   std::string solution = "sine";   // converge: sine | linear
   double perturb = 0.2;            // tmop: interior node jitter in units of h
   std::string metric = "shape";    // tmop: shape | size | shape-size
   bool fit = false;                // tmop: circle level-set fitting demo
   std::string problem = "advection"; // hyperbolic: advection | shallow-water
   double t_final = 1.0;
   int vtk_every = 0;
};

/// A failed run that still produced output: the CSV is valid but the run
/// did not converge or validate.
struct RunFailure
{
   std::string kind;
   std::string message;
};

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0)
{
   return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline std::array<int, 3> mesh_counts(const RunConfig &c)
{
   require(c.dim == 2 || c.dim == 3, "--dim must be 2 or 3");
   require(!c.mesh.empty() && static_cast<int>(c.mesh.size()) <= c.dim,
           "--mesh needs between 1 and dim counts");
   std::array<int, 3> n{1, 1, 1};
   for (int a = 0; a < c.dim; a++)
   {
      n[a] = c.mesh[std::min<std::size_t>(a, c.mesh.size() - 1)];
      require(n[a] >= 1, "--mesh counts must be positive");
   }
   return n;
}

inline std::shared_ptr<const CartesianMesh> unit_box(int dim, std::array<int, 3> n, int geom_order = 1)
{
   return std::make_shared<const CartesianMesh>(
      make_cartesian_mesh(dim, n, geom_order, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}));
}

/// prod_a sin(pi x_a) and -Laplacian of it.
inline double sine_solution(const Point &x, int dim)
{
   double v = 1.0;
   for (int a = 0; a < dim; a++) { v *= std::sin(std::numbers::pi * x[a]); }
   return v;
}

/// CG preconditioner by name; `keep` owns whatever the operator refers to.
struct Preconditioner
{
   LinearOperator M;
   std::shared_ptr<void> keep;
};

inline Preconditioner make_preconditioner(const std::string &name, const PAOperator &op)
{
   Preconditioner P;
   if (name == "none") { return P; }
   if (name == "jacobi")
   {
      P.M = jacobi_preconditioner(pa_diagonal(op));
      return P;
   }
   if (name == "chebyshev")
   {
      auto diag = pa_diagonal(op);
      const double lmax = power_method_lmax(as_operator(op), diag);
      P.M = chebyshev_preconditioner(as_operator(op), std::move(diag), lmax, 2, 1);
      return P;
   }
   if (name == "lor")
   {
      auto lor = std::make_shared<LORPreconditioner>(lor_build(op));
      P.M = lor->as_operator();
      P.keep = lor;
      return P;
   }
   if (name == "pmg")
   {
      auto h = std::make_shared<PMGHierarchy>(op.fes_ptr(), op.kind(), op.coeff(),
                                              std::vector<int>{});
      P.M = h->as_preconditioner();
      P.keep = h;
      return P;
   }
   throw InvalidArgument("unknown solver '" + name + "'");
}

// ---------------------------------------------------------------------------
// bp1 / bp3

inline constexpr const char *bp_csv_header = "benchmark,p,q,elements,dofs,iterations,seconds,throughput";

struct BPRow
{
   int p = 0;
   int q = 0;
   int elements = 0;
   int dofs = 0;
   IterStats stats;
   double seconds = 0.0;
   double l2_error = 0.0;
};

/// Mass (BP1) or diffusion (BP3) solve with u = prod sin(pi x_a): fixed
/// iteration unpreconditioned CG unless a tolerance is given.
inline BPRow bp_run(FormKind kind, const RunConfig &c, int p)
{
   const auto n = mesh_counts(c);
   const int dim = c.dim;
   const auto fes = build_fespace(unit_box(dim, n), p, Continuity::H1);
   const int q = c.quad > 0 ? c.quad : default_quad_points(p);
   PAOperator op(fes, kind, {}, q);
   const ScalarFunction u = [dim](const Point &x) { return sine_solution(x, dim); };
   const double lap = dim * std::numbers::pi * std::numbers::pi;
   auto b = assemble_rhs(*fes, kind == FormKind::Mass ? u : ScalarFunction([&](const Point &x)
   {
      return lap * u(x);
   }), q);
   if (kind == FormKind::Diffusion)
   {
      const auto ess = boundary_dofs(*fes);
      eliminate_bc(op, ess, std::vector<double>(fes->vsize(), 0.0), b);
      op.set_essential_dofs(ess);
   }
   BPRow row;
   row.p = p;
   row.q = q;
   row.elements = fes->num_elements();
   row.dofs = fes->vsize();
   std::vector<double> x(fes->vsize(), 0.0);
   const int iters = c.max_iter.value_or(c.tol ? 10000 : 100);
   const auto t0 = Clock::now();
   row.stats = cg(as_operator(op), b, x, {}, c.tol.value_or(0.0), iters);
   if (!c.tol)
   {
      // Fixed-work mode: a tiny system can reach an exactly zero residual
      // early; repeat the solve from zero until the iteration budget is used.
      std::vector<double> y(x.size());
      while (row.stats.iterations < iters)
      {
         std::fill(y.begin(), y.end(), 0.0);
         const auto st = cg(as_operator(op), b, y, {}, 0.0, iters - row.stats.iterations);
         if (st.iterations == 0) { break; }
         row.stats.iterations += st.iterations;
      }
   }
   row.seconds = seconds_since(t0);
   row.l2_error = l2_error(*fes, x, u);
   return row;
}

inline std::string bp_csv_row(const std::string &name, const BPRow &r)
{
   const double thr = r.seconds > 0.0 ? static_cast<double>(r.dofs) * r.stats.iterations / r.seconds : 0.0;
   return name + "," + std::to_string(r.p) + "," + std::to_string(r.q) + "," + std::to_string(r.elements)
          + "," + std::to_string(r.dofs) + "," + std::to_string(r.stats.iterations) + ","
          + fmt17(r.seconds) + "," + fmt17(thr);
}

inline std::vector<RunFailure> cmd_bp(FormKind kind, const RunConfig &c, std::ostream &os,
                                      std::vector<BPRow> *rows = nullptr)
{
   const std::string name = kind == FormKind::Mass ? "bp1" : "bp3";
   std::vector<RunFailure> fails;
   os << bp_csv_header << "\n";
   for (int p : c.orders)
   {
      const auto r = bp_run(kind, c, p);
      os << bp_csv_row(name, r) << "\n";
      if (c.tol && !r.stats.converged)
      {
         fails.push_back({"not_converged", name + " p=" + std::to_string(p) + " did not reach --tol"});
      }
      if (rows) { rows->push_back(r); }
   }
   return fails;
}

// ---------------------------------------------------------------------------
// converge

inline constexpr const char *converge_csv_header = "level,h,dofs,l2_error,rate,iterations";

struct ConvergeRow
{
   int level = 0;
   double h = 0.0;
   int dofs = 0;
   double l2_error = 0.0;
   std::optional<double> rate;
   bool exact = false;
   IterStats stats;
};

/// Poisson -lap u = f with Dirichlet data from the exact solution, solved
/// by preconditioned CG on `levels` uniform refinements.
inline std::vector<ConvergeRow> converge_run(const RunConfig &c, int p)
{
   require(c.levels >= 1, "--levels must be positive");
   require(c.solution == "sine" || c.solution == "linear", "--solution must be sine or linear");
   const int dim = c.dim;
   const bool linear = c.solution == "linear";
   const ScalarFunction u = [dim, linear](const Point &x)
   {
      return linear ? x[0] : sine_solution(x, dim);
   };
   const ScalarFunction f = [dim, linear, u](const Point &x)
   {
      return linear ? 0.0 : dim * std::numbers::pi * std::numbers::pi * u(x);
   };
   auto mesh = unit_box(dim, mesh_counts(c));
   std::vector<ConvergeRow> rows;
   for (int k = 0; k < c.levels; k++)
   {
      if (k > 0) { mesh = std::make_shared<const CartesianMesh>(refine_uniform(*mesh)); }
      const auto fes = build_fespace(mesh, p, Continuity::H1);
      PAOperator op(fes, FormKind::Diffusion, {}, c.quad);
      const auto ess = boundary_dofs(*fes);
      const auto ubc = interpolate(*fes, u);
      auto b = assemble_rhs(*fes, f, c.quad);
      eliminate_bc(op, ess, ubc, b);
      op.set_essential_dofs(ess);
      std::vector<double> x(fes->vsize(), 0.0);
      for (int d : ess) { x[d] = ubc[d]; }
      const auto P = make_preconditioner(c.solver, op);
      ConvergeRow r;
      r.level = k;
      r.h = 1.0 / mesh->count(0);
      r.dofs = fes->vsize();
      r.stats = cg(as_operator(op), b, x, P.M, c.tol.value_or(1e-12), c.max_iter.value_or(5000));
      r.l2_error = l2_error(*fes, x, u);
      if (k > 0)
      {
         const double prev = rows.back().l2_error;
         if (prev <= 1e-12 && r.l2_error <= 1e-12) { r.exact = true; }
         else { r.rate = std::log2(prev / r.l2_error); }
      }
      rows.push_back(std::move(r));
   }
   return rows;
}

inline std::vector<RunFailure> cmd_converge(const RunConfig &c, std::ostream &os,
                                            std::vector<std::vector<ConvergeRow>> *out = nullptr)
{
   std::vector<RunFailure> fails;
   for (int p : c.orders)
   {
      if (c.orders.size() > 1) { os << "# p=" << p << "\n"; }
      os << converge_csv_header << "\n";
      auto rows = converge_run(c, p);
      for (const auto &r : rows)
      {
         os << r.level << "," << fmt17(r.h) << "," << r.dofs << "," << fmt17(r.l2_error) << ","
            << (r.exact ? "exact" : (r.rate ? fmt17(*r.rate) : "")) << "," << r.stats.iterations << "\n";
         if (!r.stats.converged)
         {
            fails.push_back({"not_converged", "converge p=" + std::to_string(p) + " level "
                                                 + std::to_string(r.level) + ": solver did not converge"});
         }
      }
      if (out) { out->push_back(std::move(rows)); }
   }
   return fails;
}

// ---------------------------------------------------------------------------
// solve (solver study)

/// Poisson with homogeneous Dirichlet data; the right-hand side is either
/// the sine load or a seeded random vector on the free dofs.
inline std::vector<RunFailure> cmd_solve(const RunConfig &c, std::ostream &os,
                                         std::vector<IterStats> *out = nullptr)
{
   require(c.rhs == "random" || c.rhs == "sine", "--rhs must be random or sine");
   const auto n = mesh_counts(c);
   const int dim = c.dim;
   std::vector<RunFailure> fails;
   os << solver_csv_header << "\n";
   for (int p : c.orders)
   {
      const auto fes = build_fespace(unit_box(dim, n), p, Continuity::H1);
      PAOperator op(fes, FormKind::Diffusion, {}, c.quad);
      const auto ess = boundary_dofs(*fes);
      std::vector<double> b;
      if (c.rhs == "random") { b = random_vector(fes->vsize(), c.seed, -1.0, 1.0); }
      else
      {
         b = assemble_rhs(*fes, [dim](const Point &x) { return dim * std::numbers::pi * std::numbers::pi * sine_solution(x, dim); });
      }
      for (int d : ess) { b[d] = 0.0; }
      op.set_essential_dofs(ess);
      std::vector<double> x(fes->vsize(), 0.0);
      const auto t0 = Clock::now();
      const auto P = make_preconditioner(c.solver, op);
      const auto st = cg(as_operator(op), b, x, P.M, c.tol.value_or(1e-8), c.max_iter.value_or(1000));
      os << solver_csv_row(c.solver, p, fes->num_elements(), fes->vsize(), st, seconds_since(t0)) << "\n";
      if (!st.converged)
      {
         fails.push_back({"not_converged", c.solver + " p=" + std::to_string(p) + " did not converge"});
      }
      if (out) { out->push_back(st); }
   }
   return fails;
}

// ---------------------------------------------------------------------------
// tmop

/// Unit-square mesh with interior nodes moved by up to amp * h per
/// coordinate, h the node spacing. One draw per coordinate of every node.
inline std::shared_ptr<const CartesianMesh> perturbed_square(std::array<int, 3> n, int geom_order,
                                                             double amp, std::uint64_t seed)
{
   const auto base = make_cartesian_mesh(2, n, geom_order, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0});
   SplitMix64 rng(seed);
   std::vector<double> nodes(base.nodes().begin(), base.nodes().end());
   for (int v = 0; v < base.num_nodes(); v++)
   {
      const int i = v % base.node_extent(0), j = v / base.node_extent(0);
      const bool interior = i > 0 && j > 0 && i < base.node_extent(0) - 1 && j < base.node_extent(1) - 1;
      for (int c = 0; c < 2; c++)
      {
         const double h = 1.0 / (n[c] * geom_order);
         const double d = rng.uniform(-amp, amp) * h;
         if (interior) { nodes[2 * v + c] += d; }
      }
   }
   return std::make_shared<const CartesianMesh>(with_nodes(base, std::move(nodes)));
}

inline MetricId parse_metric(const std::string &s)
{
   if (s == "shape") { return MetricId::Shape; }
   if (s == "size") { return MetricId::Size; }
   if (s == "shape-size") { return MetricId::ShapeSize; }
   throw InvalidArgument("unknown metric '" + s + "'");
}

struct TmopOutcome
{
   TmopReport report;
   std::vector<double> x;
   double node_error = 0.0;    // max distance to the unperturbed nodes
   double fitting_error = 0.0; // max |sigma| over the fitting set
};

/// Perturbed-mesh recovery, or with --fit the circle fitting demo on the
/// unperturbed mesh.
inline std::vector<RunFailure> cmd_tmop(const RunConfig &c, std::ostream &os, TmopOutcome *out = nullptr)
{
   require(c.dim == 2, "tmop: only --dim 2 is supported");
   const auto n = mesh_counts(c);
   const int g = c.orders.front();
   const auto mesh = perturbed_square(n, g, c.fit ? 0.0 : c.perturb, c.seed);
   std::optional<FittingSpec> fit;
   Metric metric{parse_metric(c.metric)};
   if (c.fit)
   {
      FittingSpec fs;
      fs.sigma = [](const Point &x) { return std::hypot(x[0] - 0.5, x[1] - 0.5) - 0.3; };
      fs.weight = 1e4;
      fit = fs;
   }
   const TmopProblem pb(mesh, metric, {}, c.quad, fit);
   TmopOutcome res;
   res.x = pb.initial_nodes();
   if (!c.vtk.empty()) { write_vtk(c.vtk + "-initial.vtk", *mesh); }
   res.report = tmop_newton_solve(pb, res.x, c.tol.value_or(1e-10), c.max_iter.value_or(50));
   os << tmop_csv_header << "\n";
   for (const auto &it : res.report.log)
   {
      os << it.iter << "," << fmt17(it.objective) << "," << fmt17(it.grad_inf) << "," << fmt17(it.step) << "\n";
   }
   const auto ideal = unit_box(2, n, g);
   for (int i = 0; i < pb.size(); i++) { res.node_error = std::max(res.node_error, std::abs(res.x[i] - ideal->nodes()[i])); }
   if (c.fit) { res.fitting_error = pb.fitting_error(res.x).first; }
   if (!c.vtk.empty()) { write_vtk(c.vtk + "-final.vtk", with_nodes(*mesh, res.x)); }
   std::vector<RunFailure> fails;
   if (res.report.line_search_failed) { fails.push_back({"line_search_failed", "tmop: line search failed"}); }
   else if (!res.report.converged) { fails.push_back({"not_converged", "tmop: gradient tolerance not reached"}); }
   if (out) { *out = std::move(res); }
   return fails;
}

// ---------------------------------------------------------------------------
// hyperbolic

struct HyperbolicOutcome
{
   int steps = 0;
   std::vector<double> mass0, mass1;
   double l1_0 = 0.0;
   std::vector<double> u;
};

inline std::vector<RunFailure> cmd_hyperbolic(const RunConfig &c, std::ostream &os,
                                              HyperbolicOutcome *out = nullptr)
{
   require(c.dim == 2, "hyperbolic: only --dim 2 is supported");
   require(c.t_final > 0.0, "--t-final must be positive");
   const auto n = mesh_counts(c);
   const auto mesh = std::make_shared<const CartesianMesh>(
      make_cartesian_mesh(2, n, 1, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}, {true, true, false}));
   std::unique_ptr<ConservationLaw> law;
   VectorFunction u0;
   if (c.problem == "advection")
   {
      law = std::make_unique<LinearAdvection>(std::array<double, 2>{1.0, 1.0});
      u0 = [](const Point &x, std::span<double> v) { v[0] = std::sin(2 * std::numbers::pi * x[0]) * std::sin(2 * std::numbers::pi * x[1]); };
   }
   else if (c.problem == "shallow-water")
   {
      law = std::make_unique<ShallowWater>();
      u0 = [](const Point &x, std::span<double> v)
      {
         const double r2 = (x[0] - 0.5) * (x[0] - 0.5) + (x[1] - 0.5) * (x[1] - 0.5);
         v[0] = 1.0 + 0.1 * std::exp(-50.0 * r2);
         v[1] = 0.0;
         v[2] = 0.0;
      };
   }
   else { throw InvalidArgument("unknown problem '" + c.problem + "'"); }
   const int m = law->num_components();
   DGState s(mesh, c.orders.front(), m, c.quad);
   s.project(u0);
   HyperbolicOutcome res;
   res.mass0 = s.integrals(s.u);
   {
      std::vector<double> a(s.u.size());
      for (std::size_t i = 0; i < a.size(); i++) { a[i] = std::abs(s.u[i]); }
      for (double v : s.integrals(a)) { res.l1_0 += v; }
   }
   const auto snapshot = [&](int step)
   {
      if (c.vtk.empty()) { return; }
      write_vtk(c.vtk + "-" + std::to_string(step) + ".vtk", *mesh, &s.fes(), s.u);
   };
   snapshot(0);
   const double dt = stable_dt(*law, s, c.cfl);
   const int nsteps = static_cast<int>(std::ceil(c.t_final / dt * (1.0 - 1e-14)));
   os << hyperbolic_csv_header(m) << "\n";
   double t = 0.0;
   for (int k = 1; k <= nsteps; k++)
   {
      const double h = (k == nsteps) ? c.t_final - t : dt;
      ssp_rk3_step(*law, s, h, t);
      t = (k == nsteps) ? c.t_final : t + h;
      os << hyperbolic_csv_row(k, t, h, s) << "\n";
      if (c.vtk_every > 0 && k % c.vtk_every == 0) { snapshot(k); }
   }
   if (!c.vtk.empty() && (c.vtk_every <= 0 || nsteps % c.vtk_every != 0)) { snapshot(nsteps); }
   res.steps = nsteps;
   res.mass1 = s.integrals(s.u);
   res.u = s.u;
   std::vector<RunFailure> fails;
   for (int i = 0; i < m; i++)
   {
      if (std::abs(res.mass1[i] - res.mass0[i]) > 1e-11 * std::max(res.l1_0, 1e-300))
      {
         fails.push_back({"conservation", "component " + std::to_string(i) + " mass drifted"});
      }
   }
   if (out) { *out = std::move(res); }
   return fails;
}

// ---------------------------------------------------------------------------
// Argument parsing and dispatch

inline std::string error_line(const std::string &kind, const std::string &msg)
{
   std::string m = msg;
   for (char &ch : m) { if (ch == '\n' || ch == ',') { ch = ch == ',' ? ';' : ' '; } }
   return "error," + kind + "," + m;
}

/// Runs the CLI on `args` (without the program name). CSV goes to `out`
/// unless --out is given; diagnostics go to `err`. Returns the exit code:
/// 0 success, 1 run failure, 2 usage error.
inline int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err)
{
   CLI::App app{"High-order finite element kernels: benchmarks, solver studies, mesh optimization, DG runs", "hofem"};
   app.require_subcommand(1);
   RunConfig c;
   double tol = 0.0;
   int max_iter = 0;
   const auto common = [&](CLI::App *s)
   {
      s->add_option("--mesh", c.mesh, "Elements per axis: NX,NY[,NZ]")->delimiter(',')->check(CLI::PositiveNumber);
      s->add_option("--dim", c.dim, "Spatial dimension")->check(CLI::IsMember({2, 3}));
      s->add_option("--order", c.orders, "Polynomial degree(s), comma separated")->delimiter(',')->check(CLI::PositiveNumber);
      s->add_option("--quad", c.quad, "Gauss points per axis (default p+2)")->check(CLI::PositiveNumber);
      s->add_option("--tol", tol, "Relative tolerance")->check(CLI::PositiveNumber);
      s->add_option("--max-iter", max_iter, "Iteration cap")->check(CLI::PositiveNumber);
      s->add_option("--seed", c.seed, "RNG seed");
      s->add_option("--out", c.out, "CSV output path (default stdout)");
      s->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
      s->add_flag("--deterministic", c.deterministic, "Run single-threaded");
   };
   const std::vector<std::string> solvers{"none", "jacobi", "chebyshev", "lor", "pmg"};

   auto *bp1 = app.add_subcommand("bp1", "Mass benchmark: fixed-iteration CG");
   auto *bp3 = app.add_subcommand("bp3", "Diffusion benchmark: fixed-iteration CG");
   auto *conv = app.add_subcommand("converge", "Poisson convergence table");
   auto *solve = app.add_subcommand("solve", "Preconditioned CG solver study");
   auto *tmop = app.add_subcommand("tmop", "Mesh optimization demo");
   auto *hyp = app.add_subcommand("hyperbolic", "DG conservation-law run");
   for (auto *s : {bp1, bp3, conv, solve, tmop, hyp}) { s->fallthrough(false); }

   for (auto *s : {bp1, bp3, conv, solve, tmop, hyp}) { common(s); }
   conv->add_option("--levels", c.levels, "Number of refinement levels")->check(CLI::PositiveNumber);
   conv->add_option("--solver", c.solver, "Preconditioner")->check(CLI::IsMember(solvers));
   conv->add_option("--solution", c.solution, "Manufactured solution")->check(CLI::IsMember({"sine", "linear"}));
   solve->add_option("--solver", c.solver, "Preconditioner")->check(CLI::IsMember(solvers));
   solve->add_option("--rhs", c.rhs, "Right-hand side")->check(CLI::IsMember({"random", "sine"}));
   tmop->add_option("--perturb", c.perturb, "Interior node perturbation in units of h")->check(CLI::NonNegativeNumber);
   tmop->add_option("--metric", c.metric, "Quality metric")->check(CLI::IsMember({"shape", "size", "shape-size"}));
   tmop->add_flag("--fit", c.fit, "Fit nodes to a circle level set");
   tmop->add_option("--vtk", c.vtk, "VTK prefix for the initial and final meshes");
   hyp->add_option("--problem", c.problem, "Conservation law")->check(CLI::IsMember({"advection", "shallow-water"}));
   hyp->add_option("--cfl", c.cfl, "CFL number")->check(CLI::PositiveNumber);
   hyp->add_option("--t-final", c.t_final, "Final time")->check(CLI::PositiveNumber);
   hyp->add_option("--vtk", c.vtk, "VTK snapshot prefix");
   hyp->add_option("--vtk-every", c.vtk_every, "Snapshot stride in steps")->check(CLI::NonNegativeNumber);

   // The default degree list depends on the subcommand; filled in below.
   c.orders.clear();
   try
   {
      std::vector<std::string> rev(args.rbegin(), args.rend());
      app.parse(rev);
   }
   catch (const CLI::CallForHelp &e)
   {
      return app.exit(e, out, err);
   }
   catch (const CLI::ParseError &e)
   {
      err << error_line("usage", e.what()) << "\n";
      return 2;
   }
   CLI::App *sub = app.get_subcommands().front();
   c.subcommand = sub->get_name();
   if (c.orders.empty())
   {
      if (c.subcommand == "bp1" || c.subcommand == "bp3") { c.orders = {1, 2, 3, 4, 5, 6, 7, 8}; }
      else if (c.subcommand == "converge") { c.orders = {1, 2, 3}; }
      else if (c.subcommand == "solve") { c.orders = {1, 2, 3, 4, 6, 8}; }
      else if (c.subcommand == "hyperbolic") { c.orders = {3}; }
      else { c.orders = {1}; }
   }
   if (sub->count("--tol")) { c.tol = tol; }
   if (sub->count("--max-iter")) { c.max_iter = max_iter; }
   if (c.subcommand == "tmop" && c.fit && !tmop->count("--metric")) { c.metric = "shape-size"; }

   const int saved = num_threads();
   num_threads() = c.deterministic ? 1 : c.threads;
   std::ofstream file;
   if (!c.out.empty())
   {
      file.open(c.out);
      if (!file)
      {
         err << error_line("io", "cannot open " + c.out) << "\n";
         num_threads() = saved;
         return 1;
      }
   }
   std::ostream &os = c.out.empty() ? out : file;
   std::vector<RunFailure> fails;
   try
   {
      if (c.subcommand == "bp1") { fails = cmd_bp(FormKind::Mass, c, os); }
      else if (c.subcommand == "bp3") { fails = cmd_bp(FormKind::Diffusion, c, os); }
      else if (c.subcommand == "converge") { fails = cmd_converge(c, os); }
      else if (c.subcommand == "solve") { fails = cmd_solve(c, os); }
      else if (c.subcommand == "tmop") { fails = cmd_tmop(c, os); }
      else { fails = cmd_hyperbolic(c, os); }
   }
   catch (const Error &e)
   {
      num_threads() = saved;
      err << error_line(e.kind(), e.what()) << "\n";
      return 1;
   }
   num_threads() = saved;
   for (const auto &f : fails) { err << error_line(f.kind, f.message) << "\n"; }
   return fails.empty() ? 0 : 1;
}

} // namespace hofem::cli
