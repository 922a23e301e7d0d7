#include <cmath>
#include <limits>

#include <doctest.h>

#include "phylofunc/csv.hpp"
#include "phylofunc/error.hpp"

using namespace phylofunc;

TEST_CASE("numbers round trip through their shortest text") {
  for (const double v : {0.0, -1.5, 0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, std::nextafter(1.0, 2.0)}) {
    CHECK(csv::ParseDouble(csv::FormatDouble(v)) == v);
  }
  CHECK(csv::FormatDouble(2.0) == "2");
  CHECK(csv::ParseDouble(" +4.25\r") == 4.25);
  CHECK_THROWS_AS(csv::ParseDouble("1.0x"), Error);
  CHECK_THROWS_AS(csv::ParseDouble(""), Error);
}

TEST_CASE("rows split on commas and skip blank lines") {
  const auto rows = csv::Parse("a,b,,c\r\n\n1\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == csv::Row{"a", "b", "", "c"});
  CHECK(rows[1] == csv::Row{"1"});
  CHECK(csv::JoinRow({"x", "y"}) == "x,y\n");
}
