#include "unmatched/matrix_market.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "unmatched/errors.hpp"

namespace unmatched {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

// %.17g round-trips every double.
void put(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

struct Parsed {
  bool coordinate = false;
  Index rows = 0;
  Index cols = 0;
  std::vector<Eigen::Triplet<double, Index>> entries;
};

Parsed parse(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path.string() + "': empty file");
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (tag != "%%MatrixMarket" || lower(object) != "matrix") {
    throw IoError("'" + path.string() + "': missing %%MatrixMarket matrix banner");
  }
  format = lower(format);
  field = lower(field);
  symmetry = lower(symmetry);
  if (format != "coordinate" && format != "array") {
    throw IoError("'" + path.string() + "': unsupported format '" + format + "'");
  }
  if (field != "real" && field != "double" && field != "integer") {
    throw IoError("'" + path.string() + "': unsupported field '" + field + "'");
  }
  if (symmetry != "general" && symmetry != "symmetric") {
    throw IoError("'" + path.string() + "': unsupported symmetry '" + symmetry + "'");
  }
  const bool symmetric = symmetry == "symmetric";

  do {
    if (!std::getline(in, line)) throw IoError("'" + path.string() + "': missing size line");
  } while (line.empty() || line[0] == '%');

  Parsed p;
  p.coordinate = format == "coordinate";
  std::istringstream size(line);
  Index nnz = 0;
  if (p.coordinate) {
    if (!(size >> p.rows >> p.cols >> nnz)) throw IoError("'" + path.string() + "': bad size line");
    p.entries.reserve(static_cast<std::size_t>(nnz));
    for (Index k = 0; k < nnz; ++k) {
      Index i = 0, j = 0;
      double v = 0.0;
      if (!(in >> i >> j >> v)) throw IoError("'" + path.string() + "': truncated entry list");
      if (i < 1 || i > p.rows || j < 1 || j > p.cols) {
        throw IoError("'" + path.string() + "': index out of range");
      }
      p.entries.emplace_back(i - 1, j - 1, v);
      if (symmetric && i != j) p.entries.emplace_back(j - 1, i - 1, v);
    }
  } else {
    if (!(size >> p.rows >> p.cols)) throw IoError("'" + path.string() + "': bad size line");
    for (Index j = 0; j < p.cols; ++j) {
      for (Index i = symmetric ? j : 0; i < p.rows; ++i) {
        double v = 0.0;
        if (!(in >> v)) throw IoError("'" + path.string() + "': truncated array");
        p.entries.emplace_back(i, j, v);
        if (symmetric && i != j) p.entries.emplace_back(j, i, v);
      }
    }
  }
  return p;
}

}  // namespace

void write_matrix_market(const std::filesystem::path& path, const SparseMatrix& matrix) {
  auto out = open_out(path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << matrix.rows() << ' ' << matrix.cols() << ' ' << matrix.nonZeros() << '\n';
  for (Index i = 0; i < matrix.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(matrix, i); it; ++it) {
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ';
      put(out, it.value());
      out << '\n';
    }
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void write_matrix_market(const std::filesystem::path& path, const Matrix& matrix) {
  auto out = open_out(path);
  out << "%%MatrixMarket matrix array real general\n";
  out << matrix.rows() << ' ' << matrix.cols() << '\n';
  for (Index j = 0; j < matrix.cols(); ++j) {
    for (Index i = 0; i < matrix.rows(); ++i) {
      put(out, matrix(i, j));
      out << '\n';
    }
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void write_matrix_market(const std::filesystem::path& path, const Vector& vector) {
  write_matrix_market(path, Matrix(vector));
}

SparseMatrix read_matrix_market_sparse(const std::filesystem::path& path) {
  Parsed p = parse(path);
  SparseMatrix m(p.rows, p.cols);
  m.setFromTriplets(p.entries.begin(), p.entries.end());
  m.makeCompressed();
  return m;
}

Matrix read_matrix_market_dense(const std::filesystem::path& path) {
  Parsed p = parse(path);
  Matrix m = Matrix::Zero(p.rows, p.cols);
  for (const auto& t : p.entries) m(t.row(), t.col()) += t.value();
  return m;
}

Vector read_matrix_market_vector(const std::filesystem::path& path) {
  Matrix m = read_matrix_market_dense(path);
  if (m.cols() != 1) {
    throw ShapeError("'" + path.string() + "': expected a single column, got " +
                     std::to_string(m.cols()));
  }
  return m.col(0);
}

}  // namespace unmatched
