#include <cmath>
#include <sstream>

#include "doctest.h"
#include "gandyn/csv.hpp"
#include "gandyn/errors.hpp"

using namespace gandyn;

TEST_CASE("csv reader") {
  std::istringstream in("a,b,name\n1,2.5,x\r\n\n-3,inf,y\n");
  const CsvTable t = read_csv(in);
  CHECK(t.header.size() == 3);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.number(0, "b") == 2.5);
  CHECK(t.number(1, "a") == -3.0);
  CHECK(std::isinf(t.number(1, "b")));
  CHECK(t.rows[1][t.column("name")] == "y");
  CHECK_THROWS_AS(t.column("missing"), ValidationError);
  CHECK_THROWS_WITH_AS(t.number(0, "name"), "line 2: 'x' in column 'name' is not a number", ValidationError);

  std::istringstream ragged("a,b\n1\n");
  CHECK_THROWS_WITH_AS(read_csv(ragged), "line 2: expected 2 fields, got 1", ValidationError);
  std::istringstream empty("");
  CHECK_THROWS_AS(read_csv(empty), ValidationError);
  CHECK_THROWS_AS(read_csv_file("/nonexistent/file.csv"), ValidationError);
}
