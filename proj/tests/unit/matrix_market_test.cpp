#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "unmatched/errors.hpp"
#include "unmatched/matrix_market.hpp"
#include "unmatched/test_problems.hpp"

using namespace unmatched;
using namespace testing_helpers;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "unmatched_mm_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST(MatrixMarket, DenseRoundTripIsExact) {
  const Matrix m = gaussian(7, 5, 4) * 1e-7;
  const fs::path p = scratch("dense.mtx");
  write_matrix_market(p, m);
  EXPECT_EQ(read_matrix_market_dense(p), m);
  // dense file read as sparse
  EXPECT_EQ(Matrix(read_matrix_market_sparse(p)), m);
}

TEST(MatrixMarket, SparseRoundTripIsExact) {
  const SparseMatrix s = ct_forward_matrix(CtGeometry{8, 5, 6, 1.0});
  const fs::path p = scratch("sparse.mtx");
  write_matrix_market(p, s);
  const SparseMatrix back = read_matrix_market_sparse(p);
  EXPECT_EQ(back.nonZeros(), s.nonZeros());
  EXPECT_EQ(Matrix(back), Matrix(s));
  EXPECT_EQ(read_matrix_market_dense(p), Matrix(s));
}

TEST(MatrixMarket, VectorRoundTrip) {
  const Vector v = gaussian_vector(11, 2);
  const fs::path p = scratch("vec.mtx");
  write_matrix_market(p, v);
  EXPECT_EQ(read_matrix_market_vector(p), v);
}

TEST(MatrixMarket, HandWrittenCoordinateFile) {
  const fs::path p = scratch("hand.mtx");
  write_text(p,
             "%%MatrixMarket matrix coordinate real general\n"
             "% comment\n"
             "3 2 3\n"
             "1 1 1.5\n"
             "3 2 -2\n"
             "2 1 4e-1\n");
  Matrix ref = Matrix::Zero(3, 2);
  ref(0, 0) = 1.5;
  ref(2, 1) = -2.0;
  ref(1, 0) = 0.4;
  EXPECT_EQ(read_matrix_market_dense(p), ref);
}

TEST(MatrixMarket, SymmetricFileIsExpanded) {
  const fs::path p = scratch("sym.mtx");
  write_text(p,
             "%%MatrixMarket matrix coordinate real symmetric\n"
             "2 2 2\n"
             "1 1 3\n"
             "2 1 5\n");
  Matrix ref(2, 2);
  ref << 3, 5, 5, 0;
  EXPECT_EQ(read_matrix_market_dense(p), ref);
}

TEST(MatrixMarket, ErrorCases) {
  EXPECT_THROW(read_matrix_market_dense(scratch("does_not_exist.mtx")), IoError);

  const fs::path p = scratch("bad.mtx");
  write_text(p, "not a banner\n1 1\n1\n");
  EXPECT_THROW(read_matrix_market_dense(p), IoError);

  write_text(p, "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n");
  EXPECT_THROW(read_matrix_market_dense(p), IoError);

  write_text(p, "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n");
  EXPECT_THROW(read_matrix_market_dense(p), IoError);

  write_text(p, "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n");
  EXPECT_THROW(read_matrix_market_dense(p), IoError);

  write_text(p, "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n");
  EXPECT_THROW(read_matrix_market_dense(p), IoError);

  write_text(p, "");
  EXPECT_THROW(read_matrix_market_dense(p), IoError);

  write_matrix_market(p, Matrix::Ones(3, 2).eval());
  EXPECT_THROW(read_matrix_market_vector(p), ShapeError);

  EXPECT_THROW(write_matrix_market(scratch("no_such_dir") / "x.mtx", Matrix::Ones(1, 1).eval()),
               IoError);
}
