#include "cli.hpp"
#include "test_util.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

using namespace hofem;
using namespace hofem::cli;

namespace
{

struct Run
{
   int code = 0;
   std::string out, err;
};

Run run(const std::vector<std::string> &args)
{
   std::ostringstream out, err;
   Run r;
   r.code = run_cli(args, out, err);
   r.out = out.str();
   r.err = err.str();
   return r;
}

std::vector<std::vector<std::string>> csv(const std::string &text)
{
   std::vector<std::vector<std::string>> rows;
   std::istringstream is(text);
   std::string line;
   while (std::getline(is, line))
   {
      if (line.empty() || line[0] == '#') { continue; }
      std::vector<std::string> cells;
      std::string cell;
      std::istringstream ls(line);
      while (std::getline(ls, cell, ',')) { cells.push_back(cell); }
      if (!line.empty() && line.back() == ',') { cells.emplace_back(); }
      rows.push_back(cells);
   }
   return rows;
}

/// Drops the given columns from every row (timing columns).
std::string strip_columns(const std::string &text, std::vector<int> drop)
{
   std::string out;
   for (auto row : csv(text))
   {
      for (std::size_t i = 0; i < row.size(); i++)
      {
         if (std::find(drop.begin(), drop.end(), static_cast<int>(i)) == drop.end()) { out += row[i] + ","; }
      }
      out += "\n";
   }
   return out;
}

} // namespace

TEST_CASE("bp1/bp3 rows", "[cli]")
{
   SECTION("tiny mesh bookkeeping")
   {
      const auto r = run({"bp1", "--mesh", "2,2", "--order", "1"});
      REQUIRE(r.code == 0);
      const auto rows = csv(r.out);
      REQUIRE(rows.size() == 2);
      CHECK(r.out.substr(0, r.out.find('\n')) == "benchmark,p,q,elements,dofs,iterations,seconds,throughput");
      CHECK(rows[1][0] == "bp1");
      CHECK(rows[1][1] == "1");
      CHECK(rows[1][2] == "3");
      CHECK(rows[1][3] == "4");
      CHECK(rows[1][4] == "9");
      CHECK(rows[1][5] == "100");
      CHECK(std::stod(rows[1][7]) > 0.0);
   }

   SECTION("dof counts follow (n p + 1)^dim")
   {
      for (const std::string kind : {"bp1", "bp3"})
      {
         const auto r = run({kind, "--mesh", "8,8", "--order", "1,2,3,4,5,6,7,8", "--max-iter", "3"});
         REQUIRE(r.code == 0);
         const auto rows = csv(r.out);
         REQUIRE(rows.size() == 9);
         for (int p = 1; p <= 8; p++)
         {
            CHECK(std::stoi(rows[p][4]) == (8 * p + 1) * (8 * p + 1));
            CHECK(std::stoi(rows[p][3]) == 64);
            CHECK(rows[p][5] == "3");
         }
      }
      const auto r3 = run({"bp3", "--dim", "3", "--mesh", "2", "--order", "2", "--max-iter", "5"});
      REQUIRE(r3.code == 0);
      CHECK(csv(r3.out)[1][4] == "125");
   }

   SECTION("tolerance mode recovers the manufactured solution")
   {
      RunConfig c;
      c.mesh = {4, 4};
      c.tol = 1e-13;
      std::vector<BPRow> rows;
      c.orders = {2};
      std::ostringstream os;
      REQUIRE(cmd_bp(FormKind::Diffusion, c, os, &rows).empty());
      RunConfig cc = c;
      cc.levels = 1;
      cc.solver = "lor";
      cc.tol = 1e-13;
      const auto conv = converge_run(cc, 2);
      CHECK(std::abs(rows[0].l2_error - conv[0].l2_error) <= 1e-12);
      CHECK(rows[0].stats.converged);
   }

   SECTION("non-timing output is reproducible")
   {
      const std::vector<std::string> args{"bp3", "--mesh", "3,3", "--order", "1,2,3", "--deterministic"};
      const auto a = run(args), b = run(args);
      CHECK(strip_columns(a.out, {6, 7}) == strip_columns(b.out, {6, 7}));
      auto threaded = args;
      threaded.back() = "--threads";
      threaded.push_back("4");
      CHECK(strip_columns(run(threaded).out, {6, 7}) == strip_columns(a.out, {6, 7}));
   }
}

TEST_CASE("convergence tables", "[cli]")
{
   SECTION("rates")
   {
      const auto r = run({"converge", "--order", "1", "--levels", "3"});
      REQUIRE(r.code == 0);
      auto rows = csv(r.out);
      CHECK(r.out.substr(0, r.out.find('\n')) == "level,h,dofs,l2_error,rate,iterations");
      REQUIRE(rows.size() == 4);
      CHECK(rows[1][4].empty());
      for (int k = 2; k <= 3; k++) { CHECK(std::stod(rows[k][4]) >= 1.9); }
      const auto r3 = run({"converge", "--order", "3", "--levels", "3", "--solver", "pmg"});
      REQUIRE(r3.code == 0);
      rows = csv(r3.out);
      for (int k = 2; k <= 3; k++) { CHECK(std::stod(rows[k][4]) >= 3.9); }
   }

   SECTION("linear solution is reproduced exactly")
   {
      const auto r = run({"converge", "--order", "2", "--levels", "3", "--solution", "linear"});
      REQUIRE(r.code == 0);
      const auto rows = csv(r.out);
      for (int k = 1; k <= 3; k++) { CHECK(std::stod(rows[k][3]) <= 1e-12); }
      CHECK(rows[2][4] == "exact");
      CHECK(rows[3][4] == "exact");
   }

   SECTION("preconditioners all reach the same discrete solution")
   {
      std::vector<double> errs;
      for (const std::string s : {"none", "jacobi", "chebyshev", "lor", "pmg"})
      {
         const auto r = run({"converge", "--order", "3", "--levels", "1", "--solver", s});
         REQUIRE(r.code == 0);
         errs.push_back(std::stod(csv(r.out)[1][3]));
      }
      for (double e : errs) { CHECK(std::abs(e - errs.front()) <= 1e-10 * errs.front()); }
   }

   SECTION("errors are reported with a nonzero exit code")
   {
      const auto r = run({"converge", "--order", "1", "--solver", "pmg"});
      CHECK(r.code == 1);
      CHECK(r.err.rfind("error,invalid_argument,", 0) == 0);
      const auto s = run({"converge", "--order", "3", "--solver", "none", "--max-iter", "2"});
      CHECK(s.code == 1);
      CHECK(s.err.find("error,not_converged,") != std::string::npos);
   }
}

TEST_CASE("solver study", "[cli]")
{
   const auto r = run({"solve", "--order", "2,4", "--solver", "lor"});
   REQUIRE(r.code == 0);
   const auto rows = csv(r.out);
   CHECK(r.out.substr(0, r.out.find('\n')) == "solver,p,elements,dofs,iterations,rel_res,seconds");
   REQUIRE(rows.size() == 3);
   CHECK(rows[1][0] == "lor");
   CHECK(rows[2][3] == "289");
   CHECK(std::stod(rows[2][5]) <= 1e-8);
   const auto again = run({"solve", "--order", "2,4", "--solver", "lor"});
   CHECK(strip_columns(r.out, {6}) == strip_columns(again.out, {6}));
}

TEST_CASE("tmop demo", "[cli]")
{
   SECTION("unperturbed mesh needs no iterations")
   {
      const auto r = run({"tmop", "--mesh", "4,4", "--perturb", "0"});
      REQUIRE(r.code == 0);
      const auto rows = csv(r.out);
      CHECK(r.out.substr(0, r.out.find('\n')) == "iter,objective,grad_inf,step");
      REQUIRE(rows.size() == 2);
      CHECK(rows[1][0] == "0");
   }

   SECTION("seed 42 recovery")
   {
      RunConfig c;
      c.mesh = {4, 4};
      c.seed = 42;
      c.perturb = 0.2;
      c.tol = 1e-12;
      TmopOutcome o;
      std::ostringstream os;
      REQUIRE(cmd_tmop(c, os, &o).empty());
      CHECK(o.report.objective <= 1e-16);
      CHECK(o.node_error <= 1e-8);
      const auto r = run({"tmop", "--mesh", "4,4", "--seed", "42", "--tol", "1e-12"});
      CHECK(r.out == os.str());
   }

   SECTION("fitting demo and VTK output")
   {
      const auto dir = std::filesystem::temp_directory_path() / "hofem_cli_tmop";
      std::filesystem::create_directories(dir);
      const std::string prefix = (dir / "fit").string();
      const auto r = run({"tmop", "--mesh", "8,8", "--fit", "--max-iter", "30", "--vtk", prefix});
      REQUIRE(r.code == 0);
      CHECK(std::filesystem::exists(prefix + "-initial.vtk"));
      CHECK(std::filesystem::exists(prefix + "-final.vtk"));
      RunConfig c;
      c.mesh = {8, 8};
      c.fit = true;
      c.metric = "shape-size";
      c.max_iter = 30;
      TmopOutcome o;
      std::ostringstream os;
      cmd_tmop(c, os, &o);
      CHECK(o.fitting_error <= 5e-3);
      std::filesystem::remove_all(dir);
   }

   SECTION("3D is rejected")
   {
      const auto r = run({"tmop", "--dim", "3", "--mesh", "2"});
      CHECK(r.code == 1);
   }
}

TEST_CASE("hyperbolic runs", "[cli]")
{
   SECTION("one advection period")
   {
      RunConfig c;
      c.mesh = {6, 6};
      c.orders = {2};
      HyperbolicOutcome o;
      std::ostringstream os;
      REQUIRE(cmd_hyperbolic(c, os, &o).empty());
      const auto rows = csv(os.str());
      CHECK(os.str().substr(0, os.str().find('\n')) == "step,t,dt,mass_0,l2_norm");
      // Stable step: cfl * (1/6) / |b . e_x| / (2p + 1).
      const double dt = 0.25 * (1.0 / 6.0) / 5.0;
      CHECK(o.steps == static_cast<int>(std::ceil(1.0 / dt)));
      CHECK(static_cast<int>(rows.size()) == o.steps + 1);
      CHECK(std::stod(rows.back()[1]) == 1.0);
      CHECK(std::abs(o.mass1[0] - o.mass0[0]) <= 1e-12);
   }

   SECTION("shallow water conserves every component and is thread independent")
   {
      const std::vector<std::string> args{"hyperbolic", "--problem", "shallow-water", "--mesh", "4,4",
                                          "--order", "2", "--t-final", "0.05", "--threads", "1"};
      const auto a = run(args);
      REQUIRE(a.code == 0);
      auto b_args = args;
      b_args.back() = "3";
      CHECK(run(b_args).out == a.out);
      const auto rows = csv(a.out);
      CHECK(rows[0].size() == 3 + 3 + 1);
   }

   SECTION("snapshots")
   {
      const auto dir = std::filesystem::temp_directory_path() / "hofem_cli_dg";
      std::filesystem::create_directories(dir);
      const std::string prefix = (dir / "adv").string();
      const auto r = run({"hyperbolic", "--mesh", "2,2", "--order", "1", "--t-final", "0.1",
                          "--vtk", prefix, "--vtk-every", "2"});
      REQUIRE(r.code == 0);
      CHECK(std::filesystem::exists(prefix + "-0.vtk"));
      CHECK(std::filesystem::exists(prefix + "-2.vtk"));
      std::filesystem::remove_all(dir);
   }
}

TEST_CASE("argument handling", "[cli]")
{
   auto r = run({});
   CHECK(r.code == 2);
   CHECK(r.err.rfind("error,usage,", 0) == 0);
   r = run({"bp1", "--bogus"});
   CHECK(r.code == 2);
   r = run({"bp1", "--order", "0"});
   CHECK(r.code == 2);
   r = run({"solve", "--solver", "amg"});
   CHECK(r.code == 2);
   r = run({"bp1", "--mesh", "2,2,2"});
   CHECK(r.code == 1);
   CHECK(r.err.find("--mesh") != std::string::npos);
   r = run({"--help"});
   CHECK(r.code == 0);
   CHECK(r.out.find("bp1") != std::string::npos);

   const auto path = (std::filesystem::temp_directory_path() / "hofem_cli_out.csv").string();
   r = run({"bp1", "--mesh", "2,2", "--order", "1", "--out", path});
   CHECK(r.code == 0);
   CHECK(r.out.empty());
   std::ifstream is(path);
   std::string header;
   std::getline(is, header);
   CHECK(header == bp_csv_header);
   std::filesystem::remove(path);
}
