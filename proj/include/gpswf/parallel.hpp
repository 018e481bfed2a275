#pragma once

#include <atomic>
#include <complex>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace gpswf {

inline unsigned default_parallelism() {
    unsigned h = std::thread::hardware_concurrency();
    return h ? h : 1u;
}

// Runs fn(block) for block = 0..nblocks-1 on up to `degree` threads. Blocks are
// claimed dynamically, so fn must only write to block-indexed storage; callers
// then reduce the per-block results in block order. That convention is what
// makes every output independent of the parallelism degree and the schedule.
template <class F>
void parallel_for_blocks(std::size_t nblocks, unsigned degree, F&& fn) {
    if (nblocks == 0) return;
    if (degree <= 1 || nblocks == 1) {
        for (std::size_t b = 0; b < nblocks; ++b) fn(b);
        return;
    }
    unsigned nthreads = degree;
    if (nthreads > nblocks) nthreads = static_cast<unsigned>(nblocks);
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            std::size_t b = next.fetch_add(1, std::memory_order_relaxed);
            if (b >= nblocks) return;
            try {
                fn(b);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// Kahan compensated accumulator; used wherever long reduction chains must be
// both accurate and bit-reproducible under a fixed summation order.
struct kahan_sum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        double y = x - carry;
        double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

struct kahan_csum {
    kahan_sum re, im;
    void add(std::complex<double> z) {
        re.add(z.real());
        im.add(z.imag());
    }
    std::complex<double> value() const { return {re.sum, im.sum}; }
};

} // namespace gpswf
