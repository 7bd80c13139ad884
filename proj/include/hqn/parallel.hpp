#pragma once

// OpenMP fan-out over independent indices. Each index writes only its own
// output slot, so results are identical to a serial loop.

#include <cstddef>
#include <exception>
#include <mutex>

namespace hqn {

void set_thread_count(int n);
int thread_count();

template <class Fn>
void parallel_for_each_index(std::size_t n, Fn&& fn) {
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < count; ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace hqn
