#include <sstream>

#include "doctest.h"
#include "ksp/csv.hpp"
#include "ksp/rng.hpp"

using namespace ksp;

TEST_CASE("csv number formatting round-trips bit-exactly") {
  RngStream rng(11, 0);
  for (int i = 0; i < 2000; ++i) {
    const double v = (rng.uniform() - 0.5) * std::pow(10.0, static_cast<int>(rng.uniform() * 40) - 20);
    CHECK(csv::parse(csv::format(v)) == v);
  }
  CHECK(csv::format(0.5) == "0.5");
  CHECK(csv::format(-1.0) == "-1");
}

TEST_CASE("csv table read/write") {
  Mat rows(2, 2);
  rows << 0.0, 1.25, 0.1, -3.0;
  std::ostringstream os;
  csv::write(os, {"t", "y_1"}, rows);
  CHECK(os.str() == "t,y_1\n0,1.25\n0.1,-3\n");
  std::istringstream is(os.str());
  const auto table = csv::read(is);
  CHECK(table.header == std::vector<std::string>{"t", "y_1"});
  CHECK(table.rows.size() == 2);
  CHECK(table.rows[1][1] == -3.0);
  CHECK(table.column("y_1") == 1);
  CHECK_THROWS_AS(table.column("nope"), std::invalid_argument);
}

TEST_CASE("csv rejects ragged rows and junk") {
  std::istringstream ragged("a,b\n1,2,3\n");
  CHECK_THROWS_AS(csv::read(ragged), std::invalid_argument);
  std::istringstream junk("a\n1x\n");
  CHECK_THROWS_AS(csv::read(junk), std::invalid_argument);
}
