#pragma once

// Matrix Market (ASCII, real, general) reading and writing.
//
// Sparse matrices are written in coordinate format, dense matrices and
// vectors in array format (column-major, one value per line). Both readers
// accept either format. Indices are 1-based on disk.

#include <filesystem>

#include "unmatched/linear_map.hpp"

namespace unmatched {

void write_matrix_market(const std::filesystem::path& path, const SparseMatrix& matrix);
void write_matrix_market(const std::filesystem::path& path, const Matrix& matrix);
void write_matrix_market(const std::filesystem::path& path, const Vector& vector);

SparseMatrix read_matrix_market_sparse(const std::filesystem::path& path);
Matrix read_matrix_market_dense(const std::filesystem::path& path);
/// Accepts an n x 1 matrix in either format.
Vector read_matrix_market_vector(const std::filesystem::path& path);

}  // namespace unmatched
