#ifndef CTSPEC_SERIES_HPP
#define CTSPEC_SERIES_HPP

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace ctspec
{

template < typename Scalar >
using MatrixX = Eigen::Matrix< Scalar, Eigen::Dynamic, Eigen::Dynamic >;

template < typename Scalar >
using VectorX = Eigen::Matrix< Scalar, Eigen::Dynamic, 1 >;

// V_i^a(t): one N x D matrix per week, rows in regular-node index order.
template < typename Scalar >
struct BasicEmbeddingSeries
{
    std::vector< MatrixX< Scalar > > weeks;
    std::uint64_t seed = 0;

    Eigen::Index num_weeks() const { return static_cast< Eigen::Index >(weeks.size()); }
    Eigen::Index num_nodes() const { return weeks.empty() ? 0 : weeks.front().rows(); }
    Eigen::Index dim() const { return weeks.empty() ? 0 : weeks.front().cols(); }

    Scalar operator()(Eigen::Index t, Eigen::Index i, Eigen::Index alpha) const
    {
        return weeks[static_cast< std::size_t >(t)](i, alpha);
    }

    bool is_finite() const
    {
        for (const auto& w : weeks)
            if (!w.allFinite())
                return false;
        return true;
    }
};

using EmbeddingSeries = BasicEmbeddingSeries< double >;

} // namespace ctspec

#endif // CTSPEC_SERIES_HPP
