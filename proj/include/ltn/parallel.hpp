#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <Eigen/Sparse>

namespace ltn {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

inline void set_num_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

inline int num_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

/// Reads LTN_NUM_THREADS and applies it when set to a positive integer.
inline void apply_thread_env() {
    if (const char* s = std::getenv("LTN_NUM_THREADS")) {
        try {
            set_num_threads(std::stoi(s));
        } catch (...) {
        }
    }
}

namespace detail {

inline constexpr std::size_t kChunks = 64;

/// Runs `work(begin, end, out)` over a fixed split of [0, n) into chunks and
/// concatenates the per-chunk outputs in chunk order, so the result does not
/// depend on the number of threads.
template <class T, class F>
std::vector<T> chunked_collect(std::size_t n, F&& work) {
    const std::size_t chunks = std::max<std::size_t>(1, std::min(kChunks, n));
    std::vector<std::vector<T>> parts(chunks);
    std::vector<std::exception_ptr> errors(chunks);
#pragma omp parallel for schedule(dynamic, 1)
    for (long c = 0; c < static_cast<long>(chunks); ++c) {
        const std::size_t b = n * static_cast<std::size_t>(c) / chunks;
        const std::size_t e = n * static_cast<std::size_t>(c + 1) / chunks;
        try {
            work(b, e, parts[c]);
        } catch (...) {
            errors[c] = std::current_exception();
        }
    }
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);
    std::size_t total = 0;
    for (const auto& p : parts) total += p.size();
    std::vector<T> out;
    out.reserve(total);
    for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

inline SpMat from_triplets(Eigen::Index rows, Eigen::Index cols, const std::vector<Triplet>& t) {
    SpMat m(rows, cols);
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
}

}  // namespace detail
}  // namespace ltn
