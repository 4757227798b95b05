#include <catch2/catch_amalgamated.hpp>

#include "bohm/grid.hpp"

using namespace bohm;
using Catch::Approx;

TEST_CASE("periodic axis tiles [min, max) with centred nodes") {
  const AxisSpec a{4, 0.0, 4.0, Boundary::periodic};
  CHECK(a.spacing() == 1.0);
  CHECK(a.node(0) == 0.5);
  CHECK(a.node(3) == 3.5);
  CHECK(a.wrap(4.25) == Approx(0.25));
  CHECK(a.wrap(-0.25) == Approx(3.75));
  CHECK(a.cell_of(3.99) == 3);
  CHECK(a.cell_of(4.01) == 0);
}

TEST_CASE("box axis keeps nodes off the walls") {
  const AxisSpec a{3, 0.0, 4.0, Boundary::box};
  CHECK(a.spacing() == 1.0);
  CHECK(a.node(0) == 1.0);
  CHECK(a.node(2) == 3.0);
  CHECK(a.cell_lo() == 0.5);
  CHECK(a.cell_hi() == 3.5);
  CHECK(a.cell_of(0.4) == -1);
  CHECK(a.cell_of(3.5) == 2);
  CHECK(a.cell_of(3.6) == -1);
}

TEST_CASE("grid validates its axes") {
  CHECK_THROWS_AS(Grid(std::vector<AxisSpec>{}), Error);
  CHECK_THROWS_AS(Grid({AxisSpec{1, 0.0, 1.0}}), Error);
  CHECK_THROWS_AS(Grid({AxisSpec{4, 1.0, 1.0}}), Error);
  std::vector<AxisSpec> five(5, AxisSpec{2, 0.0, 1.0});
  CHECK_THROWS_AS(Grid(five), Error);
  try {
    Grid({AxisSpec{4, 1.0, 0.0}});
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_grid);
  }
}

TEST_CASE("row-major layout, last axis fastest") {
  const Grid g({AxisSpec{3, 0.0, 3.0}, AxisSpec{4, 0.0, 4.0}});
  CHECK(g.size() == 12);
  CHECK(g.stride(1) == 1);
  CHECK(g.stride(0) == 4);
  CHECK(g.index_along(7, 0) == 1);
  CHECK(g.index_along(7, 1) == 3);
  const Configuration q = g.node(7);
  CHECK(q[0] == 1.5);
  CHECK(q[1] == 3.5);
  CHECK(g.cell_of(q) == 7);
  CHECK(g.cell_volume() == 1.0);
}

TEST_CASE("subgrid keeps the selected axes in order") {
  const Grid g({AxisSpec{3, 0.0, 3.0}, AxisSpec{4, 0.0, 4.0}, AxisSpec{5, -1.0, 1.0, Boundary::box}});
  const std::size_t keep[] = {2, 0};
  const Grid s = g.subgrid(keep);
  REQUIRE(s.dims() == 2);
  CHECK(s.axis(0) == g.axis(2));
  CHECK(s.axis(1) == g.axis(0));
  CHECK_THROWS_AS(g.subgrid(std::span<const std::size_t>{}), Error);
  const std::size_t axes[] = {1};
  CHECK(complement_axes(3, axes) == std::vector<std::size_t>{0, 2});
}

TEST_CASE("configuration selection") {
  const Configuration q{1.0, 2.0, 3.0};
  const std::size_t axes[] = {2, 0};
  const Configuration s = q.select(axes);
  CHECK(s.size() == 2);
  CHECK(s[0] == 3.0);
  CHECK(s[1] == 1.0);
}
