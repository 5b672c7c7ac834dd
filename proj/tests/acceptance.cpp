// Acceptance gate: one PASS/FAIL line per criterion, exit code 1 if any
// criterion fails. argv[1] is the path of the hofem CLI binary.

#include "cli.hpp"
#include "test_util.hpp"

#include <cstdio>
#include <functional>
#include <sstream>

using namespace hofem;
using namespace hofem::testing;

namespace
{

/// Outcome of one criterion. `fingerprint` collects every computed number
/// at full precision so reruns can be compared bit for bit.
struct Outcome
{
   bool pass = true;
   std::string detail;
   std::ostringstream fingerprint;

   void check(bool ok, const std::string &what)
   {
      if (!ok)
      {
         pass = false;
         if (!detail.empty()) { detail += "; "; }
         detail += what;
      }
   }
   void record(double v) { fingerprint << fmt17(v) << ' '; }
   void record(const std::string &s) { fingerprint << s << '\n'; }
};

std::string g3(double v)
{
   char buf[32];
   std::snprintf(buf, sizeof(buf), "%.3g", v);
   return buf;
}

std::string cli_path;

std::string run_cli_binary(const std::string &args, int &code)
{
   const std::string cmd = "\"" + cli_path + "\" " + args + " 2>&1";
   FILE *pipe = popen(cmd.c_str(), "r");
   if (!pipe)
   {
      code = -1;
      return {};
   }
   std::string out;
   char buf[4096];
   while (std::fgets(buf, sizeof(buf), pipe)) { out += buf; }
   code = pclose(pipe);
   return out;
}

// 1. PA, EA and FA matvecs agree.
void assembly_levels(Outcome &o)
{
   double worst = 0.0;
   int cases = 0;
   for (auto kind : {FormKind::Mass, FormKind::Diffusion})
   {
      for (int dim : {2, 3})
      {
         for (int p = 1; p <= 4; p++)
         {
            for (bool curved : {false, true})
            {
               if (curved && p > 2) { continue; }
               const auto mesh = curved ? curved_mesh(dim, dim == 2 ? 4 : 2) : unit_mesh(dim, 4);
               const auto fes = build_fespace(mesh, p, Continuity::H1);
               const PAOperator op(fes, kind);
               const auto em = element_assemble(op);
               const auto A = full_assemble(op, false);
               for (int v = 0; v < 10; v++)
               {
                  const auto x = random_vector(fes->vsize(), 1000 + v);
                  std::vector<double> ypa(x.size()), yea(x.size()), yfa(x.size());
                  pa_apply(op, x, ypa);
                  ea_apply(op, em, x, yea);
                  A.mult(x, yfa);
                  const double d = std::max({rel_diff(ypa, yea), rel_diff(ypa, yfa), rel_diff(yea, yfa)});
                  worst = std::max(worst, d);
                  o.record(ypa[x.size() / 2]);
               }
               cases++;
            }
         }
      }
   }
   o.check(worst <= 1e-12, "max pairwise relative difference " + g3(worst));
   o.detail = o.detail.empty() ? std::to_string(cases) + " configurations, max rel diff " + g3(worst) : o.detail;
}

// 2. Matrix-free diagonal equals the assembled diagonal.
void diagonal(Outcome &o)
{
   double worst = 0.0;
   for (auto kind : {FormKind::Mass, FormKind::Diffusion})
   {
      for (int dim : {2, 3})
      {
         for (int p = 1; p <= 4; p++)
         {
            for (bool curved : {false, true})
            {
               if (curved && p > 2) { continue; }
               const auto mesh = curved ? curved_mesh(dim, dim == 2 ? 4 : 2) : unit_mesh(dim, 4);
               const auto fes = build_fespace(mesh, p, Continuity::H1);
               const PAOperator op(fes, kind);
               const auto d = pa_diagonal(op);
               const auto D = full_assemble(op, false).diagonal();
               worst = std::max(worst, rel_diff(d, D));
               for (double v : d) { o.record(v); }
            }
         }
      }
   }
   o.check(worst <= 1e-13, "max relative difference " + g3(worst));
   if (o.pass) { o.detail = "max rel diff " + g3(worst); }
}

// 3. Poisson convergence rates.
void convergence(Outcome &o)
{
   std::string rates;
   for (int p = 1; p <= 3; p++)
   {
      cli::RunConfig c;
      c.mesh = {4, 4};
      c.levels = 4;
      c.solver = "lor";
      c.tol = 1e-13;
      const auto rows = cli::converge_run(c, p);
      double worst = 1e300;
      for (std::size_t k = 1; k < rows.size(); k++)
      {
         o.check(rows[k].stats.converged, "p=" + std::to_string(p) + " solver did not converge");
         worst = std::min(worst, rows[k].rate.value_or(0.0));
      }
      for (const auto &r : rows) { o.record(r.l2_error); }
      o.check(worst >= p + 0.9, "p=" + std::to_string(p) + " min rate " + g3(worst));
      rates += (rates.empty() ? "" : ", ") + std::string("p") + std::to_string(p) + " min rate " + g3(worst);
   }
   if (o.pass) { o.detail = rates; }
}

int solve_iterations(Outcome &o, const std::string &solver, int n, int p, std::uint64_t seed)
{
   cli::RunConfig c;
   c.mesh = {n, n};
   c.orders = {p};
   c.solver = solver;
   c.tol = 1e-8;
   c.seed = seed;
   std::vector<IterStats> st;
   std::ostringstream os;
   const auto fails = cli::cmd_solve(c, os, &st);
   o.check(fails.empty(), solver + " p=" + std::to_string(p) + " did not converge");
   o.record(st[0].rel_res);
   o.record(st[0].iterations);
   return st[0].iterations;
}

// 4. LOR-preconditioned CG iteration counts.
void lor(Outcome &o)
{
   std::map<int, int> its;
   std::string s;
   for (int p : {1, 2, 3, 4, 6, 8})
   {
      its[p] = solve_iterations(o, "lor", 4, p, 1);
      o.check(its[p] <= 35, "p=" + std::to_string(p) + " took " + std::to_string(its[p]));
      s += (s.empty() ? "" : "/") + std::to_string(its[p]);
   }
   o.check(its[8] <= 2 * its[2], "p=8 exceeds twice p=2");
   const int a = solve_iterations(o, "lor", 4, 3, 1), b = solve_iterations(o, "lor", 8, 3, 1),
             c = solve_iterations(o, "lor", 16, 3, 1);
   o.check(std::max({a, b, c}) - std::min({a, b, c}) <= 5, "h-sweep spread too large");
   if (o.pass)
   {
      o.detail = "iterations p=1/2/3/4/6/8: " + s + "; p=3 at 4/8/16: " + std::to_string(a) + "/"
                 + std::to_string(b) + "/" + std::to_string(c);
   }
}

// 5. p-multigrid V-cycle preconditioner.
void pmg(Outcome &o)
{
   const int its = solve_iterations(o, "pmg", 8, 4, 1);
   o.check(its <= 25, "took " + std::to_string(its) + " iterations");
   if (o.pass) { o.detail = std::to_string(its) + " iterations"; }
}

// 6. TMOP gradient, recovery and fitting.
void tmop(Outcome &o)
{
   // (a) Central differences of the objective as the oracle.
   const auto m = perturbed_mesh(2, 3, 1, 0.25, 17);
   double fd_err = 0.0;
   for (auto id : {MetricId::Shape, MetricId::ShapeSize})
   {
      const TmopProblem pb(m, Metric{id}, {});
      auto x = pb.initial_nodes();
      const auto g = tmop_gradient(pb, x);
      const double h = 1e-6;
      double gmax = 0.0, err = 0.0;
      for (int i = 0; i < pb.size(); i++)
      {
         if (pb.is_fixed(i)) { continue; }
         const double x0 = x[i];
         x[i] = x0 + h;
         const double fp = tmop_objective(pb, x);
         x[i] = x0 - h;
         const double fm = tmop_objective(pb, x);
         x[i] = x0;
         gmax = std::max(gmax, std::abs(g[i]));
         err = std::max(err, std::abs(g[i] - (fp - fm) / (2 * h)));
         o.record(g[i]);
      }
      fd_err = std::max(fd_err, err / gmax);
   }
   o.check(fd_err <= 1e-5, "gradient vs FD " + g3(fd_err));

   // (b) Recovery of the uniform 4x4 mesh.
   cli::RunConfig c;
   c.mesh = {4, 4};
   c.seed = 42;
   c.perturb = 0.2;
   c.tol = 1e-12;
   cli::TmopOutcome rec;
   std::ostringstream os;
   cli::cmd_tmop(c, os, &rec);
   bool monotone = true;
   for (std::size_t k = 1; k < rec.report.log.size(); k++)
   {
      monotone = monotone && rec.report.log[k].objective <= rec.report.log[k - 1].objective;
   }
   o.check(rec.report.objective <= 1e-16, "recovery F = " + g3(rec.report.objective));
   o.check(rec.node_error <= 1e-8, "recovery node error " + g3(rec.node_error));
   o.check(rec.report.min_det > 0.0 && monotone, "recovery inverted an element or increased F");
   o.record(os.str());

   // (c) Circle fitting.
   cli::RunConfig f;
   f.mesh = {8, 8};
   f.fit = true;
   f.metric = "shape-size";
   f.max_iter = 30;
   cli::TmopOutcome fit;
   std::ostringstream fs;
   cli::cmd_tmop(f, fs, &fit);
   o.check(fit.fitting_error <= 5e-3 && fit.report.iterations <= 30,
           "fitting max|sigma| " + g3(fit.fitting_error) + " after " + std::to_string(fit.report.iterations));
   o.check(fit.report.min_det > 0.0, "fitting inverted an element");
   o.record(fs.str());
   if (o.pass)
   {
      o.detail = "FD rel err " + g3(fd_err) + "; recovery F " + g3(rec.report.objective) + " in "
                 + std::to_string(rec.report.iterations) + " its, node err " + g3(rec.node_error)
                 + "; fitting max|sigma| " + g3(fit.fitting_error) + " in "
                 + std::to_string(fit.report.iterations) + " its";
   }
}

// 7. Hyperbolic DG.
void hyperbolic(Outcome &o)
{
   SplitMix64 rng(7);
   const ShallowWater sw;
   double cons = 0.0, anti = 0.0;
   for (int t = 0; t < 1000; t++)
   {
      const double th = rng.uniform(0, 2 * pi);
      const std::array<double, 2> n{std::cos(th), std::sin(th)}, nn{-n[0], -n[1]};
      std::array<double, 3> a{rng.uniform(0.5, 2), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      std::array<double, 3> b{rng.uniform(0.5, 2), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      std::array<double, 3> f1{}, f2{};
      rusanov_flux(sw, n, a, a, f1);
      // Independent evaluation of F(a) n.
      const double h = a[0], vn = (a[1] * n[0] + a[2] * n[1]) / h;
      const std::array<double, 3> Fn{h * vn, a[1] * vn + 0.5 * sw.gravity() * h * h * n[0],
                                     a[2] * vn + 0.5 * sw.gravity() * h * h * n[1]};
      for (int c = 0; c < 3; c++) { cons = std::max(cons, std::abs(f1[c] - Fn[c]) / std::max(1.0, std::abs(Fn[c]))); }
      rusanov_flux(sw, n, a, b, f1);
      rusanov_flux(sw, nn, b, a, f2);
      for (int c = 0; c < 3; c++) { anti = std::max(anti, std::abs(f1[c] + f2[c]) / std::max(1.0, std::abs(f1[c]))); }
   }
   o.check(cons <= 1e-14, "consistency " + g3(cons));
   o.check(anti <= 1e-14, "antisymmetry " + g3(anti));

   const auto periodic = [](int n)
   {
      return std::make_shared<const CartesianMesh>(
         make_cartesian_mesh(2, {n, n, 1}, 1, {0, 0, 0}, {1, 1, 1}, {true, true, false}));
   };
   // Mass over 100 steps.
   const LinearAdvection adv({1.0, 0.6});
   DGState s(periodic(8), 3, 1);
   s.project([](const Point &x, std::span<double> v)
   {
      v[0] = 1.0 + 0.5 * std::sin(2 * pi * x[0]) * std::cos(4 * pi * x[1]);
   });
   const double m0 = s.integrals(s.u)[0];
   const double dt = stable_dt(adv, s, 0.3);
   for (int k = 0; k < 100; k++) { ssp_rk3_step(adv, s, dt); }
   const double drift = std::abs(s.integrals(s.u)[0] - m0) / std::abs(m0);
   o.check(drift <= 1e-11, "mass drift " + g3(drift));
   o.record(drift);

   // One-period convergence.
   std::string rates;
   for (int p : {2, 3})
   {
      std::vector<double> err;
      for (int n : {4, 8, 16})
      {
         cli::RunConfig c;
         c.mesh = {n, n};
         c.orders = {p};
         cli::HyperbolicOutcome out;
         std::ostringstream os;
         cli::cmd_hyperbolic(c, os, &out);
         DGState probe(periodic(n), p, 1);
         probe.u = out.u;
         err.push_back(probe.l2_norm(probe.u, [](const Point &x, std::span<double> v)
         {
            v[0] = std::sin(2 * pi * x[0]) * std::sin(2 * pi * x[1]);
         }));
         o.record(err.back());
      }
      const double r = std::min(std::log2(err[0] / err[1]), std::log2(err[1] / err[2]));
      o.check(r >= p + 0.5, "p=" + std::to_string(p) + " rate " + g3(r));
      rates += (rates.empty() ? "" : ", ") + std::string("p") + std::to_string(p) + " min rate " + g3(r);
   }

   // Lake at rest.
   DGState lake(periodic(6), 3, 3);
   for (std::size_t i = 0; i < lake.u.size(); i += 3) { lake.u[i] = 1.5; }
   const double dtl = stable_dt(sw, lake, 0.3);
   double worst = 0.0;
   for (int k = 0; k < 10; k++)
   {
      const auto before = lake.u;
      ssp_rk3_step(sw, lake, dtl);
      for (std::size_t i = 0; i < before.size(); i++) { worst = std::max(worst, std::abs(lake.u[i] - before[i])); }
   }
   o.check(worst <= 1e-12, "lake at rest change " + g3(worst));
   o.record(worst);
   if (o.pass)
   {
      o.detail = "flux consistency " + g3(cons) + ", antisymmetry " + g3(anti) + ", mass drift " + g3(drift)
                 + ", " + rates + ", lake at rest " + g3(worst);
   }
}

// 8. Benchmark harness through the CLI binary.
void harness(Outcome &o)
{
   std::string summary;
   for (const std::string kind : {"bp1", "bp3"})
   {
      const std::string args = kind + " --mesh 4,4 --order 1,2,3,4,5,6,7,8 --seed 42 --deterministic";
      int c1 = 0, c2 = 0;
      const auto a = run_cli_binary(args, c1), b = run_cli_binary(args, c2);
      o.check(c1 == 0 && c2 == 0, kind + " exit code");
      std::istringstream ia(a), ib(b);
      std::string la, lb;
      std::getline(ia, la);
      std::getline(ib, lb);
      o.check(la == cli::bp_csv_header, kind + " header '" + la + "'");
      int p = 0;
      while (std::getline(ia, la) && std::getline(ib, lb))
      {
         p++;
         std::vector<std::string> ca, cb;
         std::string cell;
         for (std::istringstream s(la); std::getline(s, cell, ',');) { ca.push_back(cell); }
         for (std::istringstream s(lb); std::getline(s, cell, ',');) { cb.push_back(cell); }
         if (ca.size() != 8 || cb.size() != 8)
         {
            o.check(false, kind + " malformed row");
            continue;
         }
         o.check(std::stoi(ca[1]) == p && std::stoi(ca[4]) == (4 * p + 1) * (4 * p + 1),
                 kind + " p=" + std::to_string(p) + " dofs " + ca[4]);
         o.check(std::equal(ca.begin(), ca.begin() + 6, cb.begin()), kind + " rows differ between runs");
         std::string fixed;
         for (int i = 0; i < 6; i++) { fixed += ca[i] + ","; }
         o.record(fixed);
      }
      o.check(p == 8, kind + " expected 8 rows");
   }
   if (o.pass) { o.detail = "bp1/bp3 p=1..8: schema, (4p+1)^2 dofs, identical non-timing columns across runs"; }
}

struct Criterion
{
   int id;
   const char *name;
   double budget; // seconds
   std::function<void(Outcome &)> fn;
};

} // namespace

int main(int argc, char **argv)
{
   if (argc < 2)
   {
      std::fprintf(stderr, "usage: acceptance <path to hofem CLI>\n");
      return 2;
   }
   cli_path = argv[1];
   num_threads() = 1;

   const std::vector<Criterion> criteria{
      {1, "assembly-level equivalence", 30, assembly_levels},
      {2, "matrix-free diagonal", 10, diagonal},
      {3, "discretization convergence", 30, convergence},
      {4, "LOR preconditioning", 60, lor},
      {5, "p-multigrid", 20, pmg},
      {6, "TMOP", 60, tmop},
      {7, "hyperbolic DG", 60, hyperbolic},
      {8, "benchmark harness", 60, harness},
   };

   bool all = true;
   std::vector<std::string> prints;
   for (const auto &c : criteria)
   {
      Outcome o;
      const auto t0 = cli::Clock::now();
      try
      {
         c.fn(o);
      }
      catch (const std::exception &e)
      {
         o.check(false, std::string("exception: ") + e.what());
      }
      const double secs = cli::seconds_since(t0);
      o.check(secs <= c.budget, "runtime " + g3(secs) + " s exceeds " + g3(c.budget) + " s");
      prints.push_back(o.fingerprint.str());
      all = all && o.pass;
      std::printf("criterion %d %s: %s (%s; %.2f s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name,
                  o.detail.c_str(), secs);
      std::fflush(stdout);
   }

   // 9. Rerun everything and compare all recorded numbers bit for bit.
   Outcome det;
   const auto t0 = cli::Clock::now();
   int differing = 0;
   for (std::size_t i = 0; i < criteria.size(); i++)
   {
      Outcome o;
      try
      {
         criteria[i].fn(o);
      }
      catch (const std::exception &e)
      {
         det.check(false, std::string("exception: ") + e.what());
      }
      if (o.fingerprint.str() != prints[i])
      {
         differing++;
         det.check(false, "criterion " + std::to_string(criteria[i].id) + " output differs on rerun");
      }
   }
   if (det.pass) { det.detail = "all recorded outputs of criteria 1-8 identical on rerun"; }
   else { det.detail += " (" + std::to_string(differing) + " differing)"; }
   all = all && det.pass;
   std::printf("criterion 9 %s: determinism (%s; %.2f s)\n", det.pass ? "PASS" : "FAIL", det.detail.c_str(),
               cli::seconds_since(t0));
   return all ? 0 : 1;
}
