#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace spade {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Derives an independent RNG for a named stream of a run, so that e.g.
/// per-epoch batch shuffling and per-epoch labeler partitioning never share
/// state.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t epoch = 0) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1) + 0xBF58476D1CE4E5B9ULL * epoch;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
}

// Fisher-Yates with a pinned index formula; std::shuffle's draw sequence is
// implementation-defined, and scenario generation must be reproducible from
// the seed alone.
inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
}

inline std::vector<std::size_t> shuffled_range(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle_indices(idx, rng);
    return idx;
}

/// First k entries of a seeded permutation of [0, n), sorted ascending.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
    if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
    std::vector<std::size_t> idx = shuffled_range(n, rng);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline Matrix vstack(const Matrix& a, const Matrix& b) {
    if (a.rows() == 0) return b;
    if (b.rows() == 0) return a;
    if (a.cols() != b.cols()) throw std::invalid_argument("vstack: column mismatch");
    Matrix out(a.rows() + b.rows(), a.cols());
    out.topRows(a.rows()) = a;
    out.bottomRows(b.rows()) = b;
    return out;
}

inline Matrix select_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

}  // namespace spade
