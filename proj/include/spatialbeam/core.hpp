#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace spatialbeam {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Floor added inside every log argument (log-mel and CLP magnitudes).
inline constexpr double kLogFloor = 1e-7;

inline constexpr double kPi = 3.14159265358979323846;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// Storage aligned like Eigen's own allocations. Vectorized kernels pick their
// summation order from the address alignment, so plain std::vector storage
// would make results depend on where the heap placed a buffer.
using DoubleBuffer = std::vector<double, Eigen::aligned_allocator<double>>;

/// Dense, row-major, named block of doubles. Every trainable quantity in the
/// model is a Tensor so that the optimizer, checkpoint writer and gradient
/// checker can treat parameters uniformly.
struct Tensor {
    std::string name;
    std::vector<std::size_t> dims;
    DoubleBuffer data;

    Tensor() = default;
    Tensor(std::string n, std::vector<std::size_t> d)
        : name(std::move(n)), dims(std::move(d)), data(count(dims), 0.0) {}

    static std::size_t count(const std::vector<std::size_t>& d) {
        return std::accumulate(d.begin(), d.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return dims.size(); }
    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    /// View as a matrix: first dimension rows, remaining dimensions flattened.
    MatMap mat() {
        const auto rows = dims.empty() ? 1 : dims.front();
        return {data.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(rows == 0 ? 0 : size() / rows)};
    }
    ConstMatMap mat() const {
        const auto rows = dims.empty() ? 1 : dims.front();
        return {data.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(rows == 0 ? 0 : size() / rows)};
    }
    VecMap vec() { return {data.data(), static_cast<Eigen::Index>(size())}; }
    ConstVecMap vec() const { return {data.data(), static_cast<Eigen::Index>(size())}; }

    bool same_shape(const Tensor& o) const { return dims == o.dims; }
};

inline std::string dims_to_string(const std::vector<std::size_t>& d) {
    std::string s = "[";
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(d[i]);
    }
    return s + "]";
}

/// Simple 3-D row-major array used for spectrogram-like data.
struct Array3 {
    std::size_t d0 = 0, d1 = 0, d2 = 0;
    DoubleBuffer data;

    Array3() = default;
    Array3(std::size_t a, std::size_t b, std::size_t c, double v = 0.0)
        : d0(a), d1(b), d2(c), data(a * b * c, v) {}

    double& operator()(std::size_t i, std::size_t j, std::size_t k) { return data[(i * d1 + j) * d2 + k]; }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const { return data[(i * d1 + j) * d2 + k]; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Array3& o) const { return d0 == o.d0 && d1 == o.d1 && d2 == o.d2; }
    std::span<double> row(std::size_t i, std::size_t j) { return {data.data() + (i * d1 + j) * d2, d2}; }
    std::span<const double> row(std::size_t i, std::size_t j) const {
        return {data.data() + (i * d1 + j) * d2, d2};
    }
};

// ---------------------------------------------------------------------------
// Randomness. The <random> distributions are implementation-defined, so draws
// are produced here from a splitmix64 stream to keep datasets bit-reproducible.

/// splitmix64 finalizer; used for stable seed derivation.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// FNV-1a over bytes.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Derive a child seed from a root seed and a stage/utterance name.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
    return mix64(root ^ fnv1a(tag));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
    return mix64(mix64(root) ^ (index * 0xD1B54A32D192ED03ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(next_u64() % n); }

    /// Standard normal via Box-Muller (one draw per call so the state stays a single word).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

}  // namespace spatialbeam
