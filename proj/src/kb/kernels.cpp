#include "iodiag/kernels.hpp"

#include <cmath>

#include <omp.h>

namespace iodiag::kernels {

double dot(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

void cosine_scores_serial(std::span<const double> matrix, std::size_t dim,
                          std::span<const double> row_norms, std::span<const double> query,
                          double query_norm, std::span<double> out) {
    const std::size_t rows = row_norms.size();
    for (std::size_t r = 0; r < rows; ++r) {
        const auto row = matrix.subspan(r * dim, dim);
        out[r] = dot(row, query) / (row_norms[r] * query_norm);
    }
}

void cosine_scores_parallel(std::span<const double> matrix, std::size_t dim,
                            std::span<const double> row_norms, std::span<const double> query,
                            double query_norm, std::span<double> out, int threads) {
    const auto rows = static_cast<long long>(row_norms.size());
    const int n_threads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(n_threads)
    for (long long r = 0; r < rows; ++r) {
        const auto row = matrix.subspan(static_cast<std::size_t>(r) * dim, dim);
        out[static_cast<std::size_t>(r)] = dot(row, query) / (row_norms[r] * query_norm);
    }
}

}  // namespace iodiag::kernels
