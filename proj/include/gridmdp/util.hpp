#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace gridmdp {

/// Error loading or validating input data (network files, profiles, configs).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Mismatch between a persisted artifact and the current scenario.
class ChecksumError : public std::runtime_error {
public:
    explicit ChecksumError(const std::string& msg) : std::runtime_error(msg) {}
};

/// The scenario admits no feasible trajectory (some epoch has no lawful
/// action even with maximal shedding).
class InfeasibleError : public std::runtime_error {
public:
    explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

/// n evenly spaced values over [lo, hi], endpoints included.
/// n == 1 collapses to the midpoint.
inline std::vector<double> linspace(double lo, double hi, int n) {
    if (n <= 0) throw std::invalid_argument("linspace: n must be positive");
    if (n == 1) return {(lo + hi) / 2.0};
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    return v;
}

/// Shortest decimal form that round-trips a double exactly.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    double back = std::strtod(buf, nullptr);
    for (int prec = 1; prec <= 16; ++prec) {
        char probe[40];
        std::snprintf(probe, sizeof(probe), "%.*g", prec, x);
        if (std::strtod(probe, nullptr) == back) return probe;
    }
    return buf;
}

/// Streaming FNV-1a 64-bit hash. Used for scenario/utility-table checksums.
class Fnv1a64 {
public:
    Fnv1a64& add(std::string_view s) {
        for (unsigned char c : s) {
            h_ ^= c;
            h_ *= 0x100000001b3ULL;
        }
        return *this;
    }
    Fnv1a64& add(double x) { return add(format_double(x)).add("|"); }
    Fnv1a64& add(std::int64_t x) { return add(std::to_string(x)).add("|"); }
    std::uint64_t value() const { return h_; }
    std::string hex() const {
        char buf[20];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h_));
        return buf;
    }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline bool nearly_equal(double a, double b, double rel = 1e-9, double abs = 1e-12) {
    double diff = std::fabs(a - b);
    if (diff <= abs) return true;
    return diff <= rel * std::max(std::fabs(a), std::fabs(b));
}

/// Static-partition parallel loop over [0, n). Each index is handled by
/// exactly one worker, so writes to disjoint slots need no locking and the
/// result is identical for any worker count.
template <typename Fn>
void parallel_for(long n, int workers, Fn&& fn) {
    if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    if (n <= 0) return;
    workers = static_cast<int>(std::min<long>(workers, n));
    if (workers == 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        long lo = n * w / workers;
        long hi = n * (w + 1) / workers;
        pool.emplace_back([lo, hi, &fn] {
            for (long i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace gridmdp
