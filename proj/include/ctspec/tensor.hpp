#ifndef CTSPEC_TENSOR_HPP
#define CTSPEC_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ctspec/common.hpp"
#include "ctspec/csv.hpp"
#include "ctspec/series.hpp"

namespace ctspec
{

// Window of 2*delta_t + 1 consecutive weeks centred on t.
struct WindowSpec
{
    int delta_t = 2;

    int window() const { return 2 * delta_t + 1; }
    int first_center() const { return delta_t; }
    int last_center(int num_weeks) const { return num_weeks - 1 - delta_t; }
    int num_centers(int num_weeks) const { return std::max(0, last_center(num_weeks) - first_center() + 1); }
    bool valid_center(int t, int num_weeks) const { return t >= first_center() && t <= last_center(num_weeks); }
};

//
// Windowed correlation tensor in factored form.
//
//   M_ij^ab(t) = 1/(2 dT) * sum_s Z[a](i, s) * Z[b](j, s)
//
// Z[a] is N x W: every row is the window of V_i^a centred by its window mean and
// divided by its window sample standard deviation (divisor W - 1 = 2 dT), so the
// implied self-correlation is exactly one. Rows with zero variance are zeroed
// and listed in `dropped`.
//
template < typename Scalar >
struct CorrelationTensor
{
    int center_week = 0;
    int delta_t = 0;
    std::vector< MatrixX< Scalar > > z; // one N x W block per component
    std::vector< std::pair< Eigen::Index, Eigen::Index > > dropped; // (i, alpha), sorted

    Eigen::Index num_nodes() const { return z.empty() ? 0 : z.front().rows(); }
    Eigen::Index dim() const { return static_cast< Eigen::Index >(z.size()); }
    Eigen::Index window() const { return 2 * delta_t + 1; }
    Scalar norm() const { return Scalar(2 * delta_t); }

    Scalar operator()(Eigen::Index i, Eigen::Index j, Eigen::Index alpha, Eigen::Index beta) const
    {
        return z[alpha].row(i).dot(z[beta].row(j)) / norm();
    }

    // Dense N x N slice for fixed (alpha, beta). Debug path for small N.
    MatrixX< Scalar > slice(Eigen::Index alpha, Eigen::Index beta) const
    {
        return (z[alpha] * z[beta].transpose()) / norm();
    }

    bool is_dropped(Eigen::Index i, Eigen::Index alpha) const
    {
        return std::binary_search(dropped.begin(), dropped.end(), std::make_pair(i, alpha));
    }
};

namespace detail
{

// Standardizes `row` in place; returns false (and zeroes it) on zero variance.
template < typename Derived >
bool standardize_row(Eigen::MatrixBase< Derived >& row)
{
    using Scalar = typename Derived::Scalar;
    const auto n = row.size();
    const Scalar mean = row.mean();
    const Scalar scale = row.cwiseAbs().maxCoeff();
    row.array() -= mean;
    const Scalar sd = std::sqrt(row.squaredNorm() / Scalar(n - 1));
    if (!(sd > Scalar(64) * std::numeric_limits< Scalar >::epsilon() * scale)) {
        row.setZero();
        return false;
    }
    row /= sd;
    return true;
}

template < typename Scalar >
void check_center(const BasicEmbeddingSeries< Scalar >& series, int t, const WindowSpec& spec)
{
    if (spec.delta_t < 1)
        throw Error("window half-width delta_t must be >= 1");
    const auto T = static_cast< int >(series.num_weeks());
    if (spec.window() > T)
        throw Error("window of " + std::to_string(spec.window()) + " weeks exceeds series length " +
                    std::to_string(T));
    if (!spec.valid_center(t, T))
        throw Error("center week " + std::to_string(t) + " outside valid range [" +
                    std::to_string(spec.first_center()) + ", " + std::to_string(spec.last_center(T)) + "]");
}

// Raw window block for component alpha: N x W.
template < typename Scalar >
MatrixX< Scalar > window_block(const BasicEmbeddingSeries< Scalar >& series, int t, const WindowSpec& spec,
                               Eigen::Index alpha)
{
    const auto N = series.num_nodes();
    const auto W = spec.window();
    MatrixX< Scalar > block(N, W);
    for (int s = 0; s < W; ++s)
        block.col(s) = series.weeks[static_cast< std::size_t >(t - spec.delta_t + s)].col(alpha);
    return block;
}

template < typename Scalar >
CorrelationTensor< Scalar > finish_tensor(std::vector< MatrixX< Scalar > > blocks, int t, const WindowSpec& spec)
{
    CorrelationTensor< Scalar > tensor;
    tensor.center_week = t;
    tensor.delta_t = spec.delta_t;
    const auto D = static_cast< Eigen::Index >(blocks.size());
    const auto N = D > 0 ? blocks.front().rows() : 0;
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index a = 0; a < D; ++a) {
            auto row = blocks[a].row(i);
            if (!standardize_row(row))
                tensor.dropped.emplace_back(i, a);
        }
    if (static_cast< Eigen::Index >(tensor.dropped.size()) == N * D)
        throw Error("correlation tensor at week " + std::to_string(t) + ": every (node, component) series is constant");
    tensor.z = std::move(blocks);
    return tensor;
}

} // namespace detail

template < typename Scalar >
CorrelationTensor< Scalar > correlation_tensor(const BasicEmbeddingSeries< Scalar >& series, int t,
                                               const WindowSpec& spec)
{
    detail::check_center(series, t, spec);
    std::vector< MatrixX< Scalar > > blocks;
    blocks.reserve(static_cast< std::size_t >(series.dim()));
    for (Eigen::Index a = 0; a < series.dim(); ++a)
        blocks.push_back(detail::window_block(series, t, spec, a));
    return detail::finish_tensor(std::move(blocks), t, spec);
}

// Null tensor: the W window samples of every (i, alpha) series are permuted
// independently (node-major order, one mt19937_64 stream seeded with `seed`),
// then standardized exactly as in correlation_tensor.
template < typename Scalar >
CorrelationTensor< Scalar > reshuffled_tensor(const BasicEmbeddingSeries< Scalar >& series, int t,
                                              const WindowSpec& spec, std::uint64_t seed)
{
    detail::check_center(series, t, spec);
    const auto D = series.dim();
    const auto N = series.num_nodes();
    const auto W = spec.window();
    std::vector< MatrixX< Scalar > > blocks;
    for (Eigen::Index a = 0; a < D; ++a)
        blocks.push_back(detail::window_block(series, t, spec, a));

    std::mt19937_64 eng(seed);
    std::vector< int > perm(static_cast< std::size_t >(W));
    VectorX< Scalar > tmp(W);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index a = 0; a < D; ++a) {
            for (int s = 0; s < W; ++s)
                perm[static_cast< std::size_t >(s)] = s;
            portable_shuffle(perm.begin(), perm.end(), eng);
            for (int s = 0; s < W; ++s)
                tmp(s) = blocks[a](i, perm[static_cast< std::size_t >(s)]);
            blocks[a].row(i) = tmp.transpose();
        }
    return detail::finish_tensor(std::move(blocks), t, spec);
}

// Debug dump `i,j,alpha,beta,value`; refuses N > max_nodes.
template < typename Scalar >
void write_tensor_dump(const std::string& path, const CorrelationTensor< Scalar >& tensor, Eigen::Index max_nodes = 50)
{
    if (tensor.num_nodes() > max_nodes)
        throw Error("tensor dump is limited to N <= " + std::to_string(max_nodes));
    auto out = csv::open_output(path);
    out << "i,j,alpha,beta,value\n";
    for (Eigen::Index a = 0; a < tensor.dim(); ++a)
        for (Eigen::Index b = 0; b < tensor.dim(); ++b) {
            const auto s = tensor.slice(a, b);
            for (Eigen::Index i = 0; i < s.rows(); ++i)
                for (Eigen::Index j = 0; j < s.cols(); ++j)
                    out << i << ',' << j << ',' << a << ',' << b << ',' << csv::format(double(s(i, j))) << '\n';
        }
}

} // namespace ctspec

#endif // CTSPEC_TENSOR_HPP
