#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace fep {

// Selects between the OpenMP kernels and their serial reference versions.
// Both produce bit-identical results: parallel loops write into per-item
// slots and every reduction is folded in index order afterwards.
enum class Exec { serial, parallel };

// Calls f(i) for i in [0, n). Under Exec::parallel the iterations are split
// statically across OpenMP threads. An exception thrown by any iteration is
// rethrown after the loop (the one from the lowest index wins).
template <typename F>
void for_each_index(std::size_t n, Exec exec, F&& f) {
    std::vector<std::exception_ptr> errors(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < count; ++i) {
            try {
                f(static_cast<std::size_t>(i));
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    } else {
        for (std::ptrdiff_t i = 0; i < count; ++i) {
            try {
                f(static_cast<std::size_t>(i));
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace fep
