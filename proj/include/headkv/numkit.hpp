// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "headkv/common.hpp"

namespace headkv {

/// Dense row-major matrix of doubles. All arithmetic in this project is
/// 64-bit with a fixed accumulation order so results are reproducible
/// across runs.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> d)
        : rows(r), cols(c), data(std::move(d)) {
        require(data.size() == rows * cols, "Matrix: data length must equal rows*cols");
    }

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    const double* row(std::size_t r) const { return data.data() + r * cols; }
    double* row(std::size_t r) { return data.data() + r * cols; }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(),
                           [](double v) { return std::isfinite(v); });
    }
};

/// Deterministic 64-bit generator (xorshift64* family). The stream is fully
/// specified so it can be reproduced in any language:
///
///   state0 = splitmix64(seed)            (0x9E3779B97F4A7C15 if that is zero)
///   s ^= s >> 12;  s ^= s << 25;  s ^= s >> 27
///   output = s * 0x2545F4914F6CDD1D
///
/// next_double() maps the top 53 bits of the output to [0, 1).
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed) {
        state_ = detail::splitmix64(seed);
        if (state_ == 0) {
            state_ = 0x9E3779B97F4A7C15ULL;
        }
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545F4914F6CDD1DULL;
    }

    /// Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    /// Uniform integer in [0, bound). Plain modulo reduction: the tiny bias is
    /// irrelevant at this scale and the mapping stays portable.
    std::uint64_t next_below(std::uint64_t bound) {
        require(bound > 0, "SeededRng::next_below: bound must be positive");
        return next_u64() % bound;
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

/// Numerically stable softmax (max-shift). Output sums to 1 within 1e-12.
inline std::vector<double> softmax(const std::vector<double>& v) {
    require(!v.empty(), "softmax: input must be non-empty");
    const double m = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        sum += out[i];
    }
    for (double& x : out) {
        x /= sum;
    }
    return out;
}

/// Indices of the k largest entries, descending by value, ties broken by the
/// lower index first. Deterministic for any input.
inline std::vector<std::size_t> top_k_indices(const std::vector<double>& v, std::size_t k) {
    require(k <= v.size(), "top_k_indices: k exceeds vector length");
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (v[a] != v[b]) return v[a] > v[b];
                          return a < b;
                      });
    idx.resize(k);
    return idx;
}

/// Index of the largest entry, ties broken by the lower index.
inline std::size_t argmax_index(const double* v, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

/// Standard matrix product with row-major, left-to-right accumulation.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, "matmul: inner dimensions must match");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

}  // namespace headkv
