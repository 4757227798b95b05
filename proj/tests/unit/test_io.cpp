#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "bohm/io.hpp"
#include "oracles.hpp"

using namespace bohm;

TEST_CASE("snapshot round trip is exact") {
  const Grid g({AxisSpec{8, -2.0, 2.0, Boundary::periodic}, AxisSpec{5, 0.0, 1.5, Boundary::box}});
  std::vector<Complex> a(g.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = Complex(std::sin(0.3 * i), std::cos(1.7 * i) / 3.0);
  const WaveFunction psi(g, a, 0.25);
  std::stringstream ss;
  io::write_snapshot(ss, psi);
  const WaveFunction back = io::read_snapshot(ss);
  CHECK(back.grid() == g);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(back[i] == a[i]);
}

TEST_CASE("snapshot header layout") {
  const Grid g({AxisSpec{2, 0.0, 1.0, Boundary::box}});
  const WaveFunction psi(g, {Complex(1.0, 2.0), Complex(3.0, 4.0)});
  std::stringstream ss;
  io::write_snapshot(ss, psi);
  const std::string bytes = ss.str();
  // magic, D, {points, min, max, boundary}, 2 complex pairs
  CHECK(bytes.size() == 5 + 4 + (8 + 8 + 8 + 1) + 2 * 16);
  CHECK(bytes.substr(0, 5) == "BSIM1");
  CHECK(static_cast<unsigned char>(bytes[5]) == 1);
  CHECK(static_cast<unsigned char>(bytes[5 + 4 + 24]) == 1);
}

TEST_CASE("corrupt snapshots are rejected") {
  std::stringstream bad("BSIM2xxxx");
  CHECK_THROWS_AS(io::read_snapshot(bad), Error);
  const Grid g({AxisSpec{4, 0.0, 1.0}});
  std::stringstream ss;
  io::write_snapshot(ss, WaveFunction(g, std::vector<Complex>(4, Complex(1.0, 0.0))));
  std::string truncated = ss.str();
  truncated.resize(truncated.size() - 3);
  std::stringstream t(truncated);
  CHECK_THROWS_AS(io::read_snapshot(t), Error);
}

TEST_CASE("real formatting keeps 17 significant digits") {
  CHECK(io::format_real(0.1) == "0.10000000000000001");
  CHECK(std::stod(io::format_real(1.0 / 3.0)) == 1.0 / 3.0);
}
