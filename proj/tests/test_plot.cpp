#include "fixtures.hpp"

#include "idea/plot.hpp"

#include <doctest.h>

#include <fstream>

using namespace idea;
using idea::test::TempDir;

namespace {

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("points on a line project onto the first component") {
  Vector t(5);
  t << -2, -1, 0, 1, 2;
  RowVector dir(3);
  dir << 1, 2, 2;
  dir /= 3;
  const Matrix z = (t * dir).rowwise() + RowVector::Constant(3, 7.0);
  const Matrix p = principal_components_2d(z);
  REQUIRE(p.rows() == 5);
  REQUIRE(p.cols() == 2);
  // Largest loading is positive, so the scores follow t itself.
  for (Index i = 0; i < 5; ++i) CHECK(p(i, 0) == doctest::Approx(t[i]).epsilon(1e-12));
  CHECK(p.col(1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("principal components are centred, ordered, odd and translation invariant") {
  auto rng = substream(0, "plot");
  Matrix z = standard_normal(40, 4, rng);
  z.col(0) *= 5;
  z.col(2) *= 2;
  const Matrix p = principal_components_2d(z);
  CHECK(p.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  CHECK(p.col(0).squaredNorm() >= p.col(1).squaredNorm());
  CHECK((principal_components_2d(-z) + p).cwiseAbs().maxCoeff() < 1e-10);
  const Matrix moved = z.rowwise() + RowVector::LinSpaced(4, -3, 3);
  CHECK((principal_components_2d(moved) - p).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("a one-dimensional embedding gets a zero second component") {
  Matrix z(3, 1);
  z << 1, 2, 4;
  const Matrix p = principal_components_2d(z);
  CHECK(p.cols() == 2);
  CHECK(p.col(1).isZero());
  CHECK(principal_components_2d(Matrix(0, 3)).rows() == 0);
}

TEST_CASE("embedding tables round-trip and malformed files are located") {
  TempDir dir;
  Matrix z(3, 2);
  z << 1, 2, 3, 4, 5, 6;
  LabelVector y(3);
  y << 2, -1, 0;
  export_embeddings(z, y, dir / "e.csv", NodeList{4, 7, 9});
  const EmbeddingTable t = read_embeddings(dir / "e.csv");
  CHECK(t.nodes == NodeList{4, 7, 9});
  CHECK(t.labels == y);
  CHECK(t.z == z);

  std::ofstream(dir / "bad.csv") << "id,label,z0\n0,1,2\n";
  CHECK_THROWS_AS(read_embeddings(dir / "bad.csv"), Error);
  std::ofstream(dir / "short.csv") << "node,label,z0,z1\n0,1,2,3\n1,0,2\n";
  try {
    read_embeddings(dir / "short.csv");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("short.csv:3") != std::string::npos);
  }
}

TEST_CASE("scatter_svg draws one marker per point and escapes the title") {
  Matrix p(4, 2);
  p << 0, 0, 1, 1, -1, 2, 3, -3;
  LabelVector y(4);
  y << 0, 1, -1, 1;
  const std::string svg = scatter_svg(p, y, "a<b & c");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(count(svg, "<circle") == 4);
  CHECK(svg.find("a&lt;b &amp; c") != std::string::npos);
  CHECK(svg.find("a<b") == std::string::npos);
  CHECK(svg == scatter_svg(p, y, "a<b & c"));
  CHECK_THROWS_AS(scatter_svg(p, LabelVector::Zero(3), "t"), Error);
}
