#include <sstream>

#include <gtest/gtest.h>

#include "svcsel/csv.hpp"

using namespace svcsel;

TEST(Csv, RoundTrip) {
  std::istringstream in("a, b,\"c\"\n1,2.5,-3e-4\n0.1,0.2,0.30000000000000004\n");
  const Table t = read_csv(in);
  ASSERT_EQ(t.names, (std::vector<std::string>{"a", "b", "c"}));
  ASSERT_EQ(t.values.rows(), 2);
  EXPECT_EQ(t.values(0, 2), -3e-4);
  std::ostringstream out;
  write_csv(out, t);
  std::istringstream back(out.str());
  const Table u = read_csv(back);
  EXPECT_TRUE(u.values.cwiseEqual(t.values).all());
  EXPECT_TRUE(t.columns({"c", "a"}).col(1).isApprox(t.column("a")));
}

TEST(Csv, Errors) {
  std::istringstream ragged("a,b\n1\n");
  EXPECT_THROW(read_csv(ragged), InvalidArgument);
  std::istringstream text("a,b\n1,x\n");
  EXPECT_THROW(read_csv(text), InvalidArgument);
  std::istringstream ok("a\n1\n");
  EXPECT_THROW(read_csv(ok).column("z"), InvalidArgument);
  EXPECT_EQ(format_double(std::nan("")), "NA");
}

TEST(Csv, Standardize) {
  std::istringstream in("x,k\n1,5\n2,5\n3,5\n");
  Table t = read_csv(in);
  const auto s = standardize(t, {"x"});
  EXPECT_DOUBLE_EQ(s[0].mean, 2.0);
  EXPECT_DOUBLE_EQ(s[0].sd, 1.0);
  EXPECT_DOUBLE_EQ(t.values(0, 0), -1.0);
  EXPECT_THROW(standardize(t, {"k"}), InvalidArgument);
}
