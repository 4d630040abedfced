#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace iodiag {

/// How fan-out loops run. `serial` is the reference path used by tests to
/// check that the OpenMP path gives identical results; `serial_reverse`
/// walks indices backwards to exercise scheduling independence.
enum class Execution { parallel, serial, serial_reverse };

/// Calls body(i) for i in [0, n). Exceptions are captured per index and the
/// first one (lowest index) is rethrown after every iteration has finished.
template <typename Body>
void for_each_index(std::size_t n, Execution mode, int max_threads, Body&& body) {
    std::vector<std::exception_ptr> errors(n);
    if (mode == Execution::parallel && n > 1) {
        const int threads = max_threads > 0 ? max_threads : 1;
        const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
        for (long long i = 0; i < count; ++i) {
            try {
                body(static_cast<std::size_t>(i));
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    } else if (mode == Execution::serial_reverse) {
        for (std::size_t i = n; i-- > 0;) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace iodiag
