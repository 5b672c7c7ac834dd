#include "hofem/mesh.hpp"
#include "hofem/vtk.hpp"
#include "test_util.hpp"

#include <catch_amalgamated.hpp>

#include <sstream>

using namespace hofem;
using namespace hofem::testing;

namespace
{

Point node(const CartesianMesh &m, int n)
{
   Point x{0.0, 0.0, 0.0};
   for (int c = 0; c < m.dim(); c++) { x[c] = m.nodes()[n * m.dim() + c]; }
   return x;
}

double fd_det(const CartesianMesh &m, int e, const Point &ref, double h)
{
   Mat3 J{};
   for (int j = 0; j < m.dim(); j++)
   {
      Point rp = ref, rm = ref;
      rp[j] += h;
      rm[j] -= h;
      const Point xp = m.map(e, rp), xm = m.map(e, rm);
      for (int c = 0; c < m.dim(); c++) { J[c * 3 + j] = (xp[c] - xm[c]) / (2.0 * h); }
   }
   return det(J, m.dim());
}

} // namespace

TEST_CASE("make_cartesian_mesh", "[mesh]")
{
   SECTION("single linear element has the unit-square corners")
   {
      const auto m = make_cartesian_mesh(2, {1, 1, 1}, 1, {0, 0, 0}, {1, 1, 1});
      REQUIRE(m.num_elements() == 1);
      REQUIRE(m.num_nodes() == 4);
      const std::vector<Point> corners{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
      for (int n = 0; n < 4; n++) { CHECK(node(m, n) == corners[n]); }
   }

   SECTION("node counts")
   {
      CHECK(make_cartesian_mesh(2, {2, 2, 1}, 3, {0, 0, 0}, {1, 1, 1}).num_nodes() == 49);
      const auto m3 = make_cartesian_mesh(3, {2, 1, 1}, 1, {0, 0, 0}, {2, 1, 1});
      CHECK(m3.num_elements() == 2);
      CHECK(m3.num_nodes() == 12);
      CHECK(domain_measure(m3) == Catch::Approx(2.0).epsilon(1e-14));
      const auto mp = make_cartesian_mesh(2, {3, 2, 1}, 2, {0, 0, 0}, {1, 1, 1}, {true, false, false});
      CHECK(mp.num_nodes() == 6 * 5);
   }

   SECTION("errors")
   {
      CHECK_THROWS_AS(make_cartesian_mesh(2, {0, 1, 1}, 1, {0, 0, 0}, {1, 1, 1}), InvalidArgument);
      CHECK_THROWS_AS(make_cartesian_mesh(2, {1, 1, 1}, 1, {0, 0, 0}, {1, 0, 1}), InvalidArgument);
      CHECK_THROWS_AS(make_cartesian_mesh(4, {1, 1, 1}, 1, {0, 0, 0}, {1, 1, 1}), InvalidArgument);
   }

   SECTION("periodic wrap adds the period to the coordinate")
   {
      const auto m = make_cartesian_mesh(2, {2, 2, 1}, 1, {0, 0, 0}, {1, 1, 1}, {true, false, false});
      const int e = m.element_index({1, 0, 0});
      const Point x = m.map(e, {1.0, 0.0, 0.0});
      CHECK(x[0] == Catch::Approx(1.0));
      CHECK(x[1] == 0.0);
      CHECK(domain_measure(m) == Catch::Approx(1.0).epsilon(1e-14));
   }
}

TEST_CASE("refine_uniform", "[mesh]")
{
   SECTION("element counts")
   {
      const auto m = make_cartesian_mesh(2, {2, 2, 1}, 1, {0, 0, 0}, {1, 1, 1});
      CHECK(refine_uniform(m).num_elements() == 16);
   }

   SECTION("affine mesh refined twice sits on the 4x lattice")
   {
      const auto m = refine_uniform(refine_uniform(make_cartesian_mesh(2, {1, 1, 1}, 1, {0, 0, 0}, {1, 1, 1})));
      REQUIRE(m.num_nodes() == 25);
      for (int n = 0; n < 25; n++)
      {
         const Point x = node(m, n);
         CHECK(x[0] == (n % 5) / 4.0);
         CHECK(x[1] == (n / 5) / 4.0);
      }
      CHECK(domain_measure(m) == Catch::Approx(1.0).epsilon(1e-14));
   }

   SECTION("curved parent map is reproduced")
   {
      for (int dim : {2, 3})
      {
         const auto parent = curved_mesh(dim, 2);
         const auto child = refine_uniform(*parent);
         SplitMix64 rng(7);
         double err = 0.0;
         for (int s = 0; s < 100; s++)
         {
            const int e = static_cast<int>(rng.next() % parent->num_elements());
            Point r{0, 0, 0}, rc{0, 0, 0};
            std::array<int, 3> cijk{0, 0, 0};
            const auto pijk = parent->element_ijk(e);
            for (int a = 0; a < dim; a++)
            {
               r[a] = rng.uniform();
               const int half = r[a] < 0.5 ? 0 : 1;
               cijk[a] = 2 * pijk[a] + half;
               rc[a] = 2.0 * r[a] - half;
            }
            const Point xp = parent->map(e, r);
            const Point xc = child.map(child.element_index(cijk), rc);
            for (int c = 0; c < dim; c++) { err = std::max(err, std::abs(xp[c] - xc[c])); }
         }
         CHECK(err <= 1e-14);
      }
   }

   SECTION("affine measure is preserved")
   {
      const auto m = make_cartesian_mesh(3, {2, 1, 3}, 2, {0, 0, 0}, {2, 1, 0.5});
      CHECK(domain_measure(refine_uniform(m)) == Catch::Approx(domain_measure(m)).epsilon(1e-13));
   }
}

TEST_CASE("lor_refine", "[mesh]")
{
   SECTION("2x2, p = 3 gives 6x6 elements and 49 vertices")
   {
      const auto m = make_cartesian_mesh(2, {2, 2, 1}, 1, {0, 0, 0}, {1, 1, 1});
      const auto lor = lor_refine(m, 3);
      CHECK(lor.num_elements() == 36);
      CHECK(lor.num_nodes() == 49);
      CHECK(lor.geom_order() == 1);
   }

   SECTION("p = 2 halves a unit element")
   {
      const auto lor = lor_refine(make_cartesian_mesh(2, {1, 1, 1}, 1, {0, 0, 0}, {1, 1, 1}), 2);
      CHECK(node(lor, 1)[0] - node(lor, 0)[0] == 0.5);
      CHECK(node(lor, 2)[0] - node(lor, 1)[0] == 0.5);
   }

   SECTION("p = 4 vertices at GLL points found by bisection")
   {
      const auto lor = lor_refine(make_cartesian_mesh(2, {1, 1, 1}, 1, {0, 0, 0}, {1, 1, 1}), 4);
      const double r = bisect([](double t) { return legendre_derivative(4, t); }, 0.3, 0.9);
      const std::vector<double> ex{0.0, 0.5 * (1.0 - r), 0.5, 0.5 * (1.0 + r), 1.0};
      for (int i = 0; i <= 4; i++)
      {
         CHECK(std::abs(node(lor, i)[0] - ex[i]) <= 1e-14);
         CHECK(std::abs(node(lor, i * 5)[1] - ex[i]) <= 1e-14);
      }
      CHECK(std::abs(ex[1] - 0.5 * (1.0 - std::sqrt(3.0 / 7.0))) <= 1e-14);
   }

   SECTION("vertex count equals the H1 dof count")
   {
      for (int p = 1; p <= 6; p++)
      {
         const auto m = make_cartesian_mesh(3, {2, 1, 3}, 2, {0, 0, 0}, {1, 1, 1});
         CHECK(lor_refine(m, p).num_nodes() == (2 * p + 1) * (p + 1) * (3 * p + 1));
      }
   }

   SECTION("curved parent maps vertices through the parent geometry")
   {
      const auto parent = curved_mesh(2, 2);
      const int p = 3;
      const auto lor = lor_refine(*parent, p);
      const auto gll = gll_nodes(p);
      const Point x = parent->map(parent->element_index({1, 0, 0}), {gll[1], gll[2], 0});
      const int v = (p + 1) + 2 * (2 * p + 1);
      CHECK(std::abs(node(lor, v)[0] - x[0]) <= 1e-14);
      CHECK(std::abs(node(lor, v)[1] - x[1]) <= 1e-14);
   }

   SECTION("an inverted sub-element is reported")
   {
      // A quadratic edge node pushed far outside folds the element near one side.
      const auto base = make_cartesian_mesh(2, {1, 1, 1}, 2, {0, 0, 0}, {1, 1, 1});
      std::vector<double> nodes(base.nodes().begin(), base.nodes().end());
      nodes[1 * 2 + 1] = 0.45; // bottom edge midpoint, y
      CartesianMesh bent(2, base.counts(), 2, base.periodic_flags(), base.periods(), nodes);
      CHECK_THROWS_AS(validate(bent), InvalidMeshError);
      CHECK_THROWS_AS(lor_refine(bent, 4), InvalidMeshError);
   }
}

TEST_CASE("geometric factors", "[mesh]")
{
   SECTION("identity map")
   {
      const auto m = make_cartesian_mesh(2, {1, 1, 1}, 1, {0, 0, 0}, {1, 1, 1});
      for (int q : {1, 3, 5})
      {
         const auto gf = geometric_factors(m, q);
         for (int k = 0; k < gf.nqp; k++)
         {
            CHECK(std::abs(gf.detJ[k] - 1.0) <= 1e-14);
            CHECK(std::abs(gf.J[4 * k + 0] - 1.0) <= 1e-14);
            CHECK(std::abs(gf.J[4 * k + 1] - 0.0) <= 1e-14);
            CHECK(std::abs(gf.J[4 * k + 2] - 0.0) <= 1e-14);
            CHECK(std::abs(gf.J[4 * k + 3] - 1.0) <= 1e-14);
         }
      }
   }

   SECTION("[0,2]x[0,1]")
   {
      const auto m = make_cartesian_mesh(2, {1, 1, 1}, 1, {0, 0, 0}, {2, 1, 1});
      const auto gf = geometric_factors(m, 3);
      for (int k = 0; k < gf.nqp; k++)
      {
         CHECK(std::abs(gf.detJ[k] - 2.0) <= 1e-14);
         CHECK(std::abs(gf.J[4 * k] - 2.0) <= 1e-14);
         CHECK(std::abs(gf.invJT[4 * k] - 0.5) <= 1e-14);
         CHECK(std::abs(gf.invJT[4 * k + 3] - 1.0) <= 1e-14);
      }
   }

   SECTION("det J matches finite differences on a perturbed quadratic mesh")
   {
      for (int dim : {2, 3})
      {
         const auto m = perturbed_mesh(dim, 3, 2, 0.2, 11);
         const int q = 4;
         const auto gf = geometric_factors(*m, q);
         const auto pts = gauss_quadrature(q).points;
         double worst = 0.0;
         for (int e = 0; e < gf.ne; e++)
         {
            for (int k = 0; k < gf.nqp; k++)
            {
               const auto ijk = unflatten(k, q, dim);
               Point r{0, 0, 0};
               for (int a = 0; a < dim; a++) { r[a] = pts[ijk[a]]; }
               const double fd = fd_det(*m, e, r, 1e-5);
               worst = std::max(worst, std::abs(gf.detJ[gf.index(e, k)] - fd) / std::abs(fd));
               const Point x = m->map(e, r);
               for (int c = 0; c < dim; c++)
               {
                  CHECK(std::abs(gf.X[gf.index(e, k) * dim + c] - x[c]) <= 1e-14);
               }
            }
         }
         CHECK(worst <= 1e-6);
      }
   }

   SECTION("J^{-T} is the inverse transpose")
   {
      const auto m = perturbed_mesh(3, 2, 2, 0.2, 3);
      const auto gf = geometric_factors(*m, 3);
      for (int i = 0; i < gf.ne * gf.nqp; i++)
      {
         Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> J(&gf.J[9 * i]);
         Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> IT(&gf.invJT[9 * i]);
         CHECK((J.transpose() * IT - Eigen::Matrix3d::Identity()).norm() <= 1e-13);
         CHECK(std::abs(J.determinant() - gf.detJ[i]) <= 1e-13 * std::abs(gf.detJ[i]));
      }
   }

   SECTION("invalid mesh names element and point")
   {
      const auto base = make_cartesian_mesh(2, {2, 1, 1}, 1, {0, 0, 0}, {1, 1, 1});
      std::vector<double> nodes(base.nodes().begin(), base.nodes().end());
      nodes[1 * 2 + 0] = 1.2; // middle bottom vertex past the right edge
      try
      {
         (void)CartesianMesh(2, base.counts(), 1, base.periodic_flags(), base.periods(), nodes);
         validate(CartesianMesh(2, base.counts(), 1, base.periodic_flags(), base.periods(), nodes));
         FAIL("expected InvalidMeshError");
      }
      catch (const InvalidMeshError &err)
      {
         CHECK(err.element() == 1);
         CHECK(err.point() >= 0);
      }
      CHECK_THROWS_AS(with_nodes(base, nodes), InvalidMeshError);
   }
}

TEST_CASE("domain measure", "[mesh]")
{
   SECTION("affine boxes")
   {
      for (int g = 1; g <= 4; g++)
      {
         CHECK(std::abs(domain_measure(make_cartesian_mesh(2, {3, 5, 1}, g, {-1, 0, 0}, {2, 0.5, 1})) - 1.5)
               <= 1e-12 * 1.5);
         CHECK(std::abs(domain_measure(make_cartesian_mesh(3, {2, 3, 2}, g, {0, 0, 0}, {1, 2, 3})) - 6.0)
               <= 1e-12 * 6.0);
      }
   }

   SECTION("interior perturbation keeps the measure")
   {
      // Boundary nodes are fixed and the map stays piecewise polynomial, so
      // the measure is still exact.
      CHECK(std::abs(domain_measure(*perturbed_mesh(2, 4, 1, 0.3, 5)) - 1.0) <= 1e-12);
      CHECK(std::abs(domain_measure(*perturbed_mesh(3, 3, 2, 0.2, 5)) - 1.0) <= 1e-12);
   }

   SECTION("thread count does not change the factors")
   {
      const auto m = perturbed_mesh(3, 3, 2, 0.2, 9);
      const int saved = num_threads();
      num_threads() = 1;
      const auto a = geometric_factors(*m, 4);
      num_threads() = 4;
      const auto b = geometric_factors(*m, 4);
      num_threads() = saved;
      CHECK(a.J == b.J);
      CHECK(a.detJ == b.detJ);
   }
}

TEST_CASE("VTK output", "[mesh]")
{
   const auto m = make_cartesian_mesh(2, {2, 1, 1}, 1, {0, 0, 0}, {1, 1, 1});
   auto mp = std::make_shared<const CartesianMesh>(m);
   const auto fes = build_fespace(mp, 2, Continuity::H1, 1);
   const auto u = interpolate(*fes, [](const Point &x) { return x[0]; });
   std::ostringstream os;
   write_vtk(os, m, fes.get(), u);
   const std::string s = os.str();
   CHECK(s.find("DATASET UNSTRUCTURED_GRID") != std::string::npos);
   CHECK(s.find("POINTS 18 double") != std::string::npos);
   CHECK(s.find("CELLS 8 40") != std::string::npos);
   CHECK(s.find("CELL_TYPES 8\n9\n") != std::string::npos);
   CHECK(s.find("POINT_DATA 18") != std::string::npos);

   std::ostringstream os3;
   write_vtk(os3, make_cartesian_mesh(3, {1, 1, 1}, 1, {0, 0, 0}, {1, 1, 1}));
   CHECK(os3.str().find("CELL_TYPES 1\n12\n") != std::string::npos);
}
