#pragma once

#include <cstddef>
#include <span>

// Dense scoring kernels behind the knowledge-base search. The serial versions
// are the reference; the OpenMP versions must produce bit-identical output
// (each row is reduced in the same order, only rows are distributed).
namespace iodiag::kernels {

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

/// out[i] = <row_i, query> / (row_norms[i] * query_norm) for a row-major
/// matrix with `dim` columns.
void cosine_scores_serial(std::span<const double> matrix, std::size_t dim,
                          std::span<const double> row_norms, std::span<const double> query,
                          double query_norm, std::span<double> out);

void cosine_scores_parallel(std::span<const double> matrix, std::size_t dim,
                            std::span<const double> row_norms, std::span<const double> query,
                            double query_norm, std::span<double> out, int threads = 0);

}  // namespace iodiag::kernels
