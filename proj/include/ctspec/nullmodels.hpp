#ifndef CTSPEC_NULLMODELS_HPP
#define CTSPEC_NULLMODELS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctspec/common.hpp"
#include "ctspec/csv.hpp"
#include "ctspec/series.hpp"
#include "ctspec/spectra.hpp"

namespace ctspec
{

struct GaussianTensorSpec
{
    Eigen::Index num_nodes = 64;
    Eigen::Index dim = 8;
    double sigma_g = 0.5;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (num_nodes < 2 || dim < 2 || !(sigma_g > 0.0))
            throw Error("Gaussian tensor needs N >= 2, D >= 2 and sigma_g > 0");
    }
};

// Counter-based N(0, sigma_g^2) entry keyed by (seed, i, j, alpha, beta):
// two splitmix64 draws feed one Box-Muller transform. The value of an entry
// never depends on generation order.
inline double gaussian_entry(const GaussianTensorSpec& spec, Eigen::Index i, Eigen::Index j, Eigen::Index alpha,
                             Eigen::Index beta)
{
    const auto n = static_cast< std::uint64_t >(spec.num_nodes);
    const auto d = static_cast< std::uint64_t >(spec.dim);
    const auto idx = ((static_cast< std::uint64_t >(alpha) * d + static_cast< std::uint64_t >(beta)) * n +
                      static_cast< std::uint64_t >(i)) *
                         n +
                     static_cast< std::uint64_t >(j);
    const double u1 = 1.0 - unit_from_bits(derive_seed(spec.seed, 2 * idx)); // (0, 1]
    const double u2 = unit_from_bits(derive_seed(spec.seed, 2 * idx + 1));
    return spec.sigma_g * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Dense four-index tensor stored as D^2 slices of N x N, slice (a, b) at a * D + b.
template < typename Scalar >
struct DenseTensor
{
    Eigen::Index num_nodes = 0;
    Eigen::Index dim = 0;
    std::vector< MatrixX< Scalar > > slices;

    const MatrixX< Scalar >& slice(Eigen::Index alpha, Eigen::Index beta) const
    {
        return slices[static_cast< std::size_t >(alpha * dim + beta)];
    }
};

// Lazily generated Gaussian tensor: slices are produced on demand, so the
// N = 265, D = 32 ensemble does not need N^2 D^2 doubles resident at once.
template < typename Scalar >
struct GaussianTensor
{
    GaussianTensorSpec spec;

    MatrixX< Scalar > slice(Eigen::Index alpha, Eigen::Index beta) const
    {
        MatrixX< Scalar > m(spec.num_nodes, spec.num_nodes);
        for (Eigen::Index j = 0; j < spec.num_nodes; ++j)
            for (Eigen::Index i = 0; i < spec.num_nodes; ++i)
                m(i, j) = Scalar(gaussian_entry(spec, i, j, alpha, beta));
        return m;
    }
};

inline constexpr std::uint64_t default_dense_entry_cap = std::uint64_t{1} << 27;

template < typename Scalar = double >
DenseTensor< Scalar > sample_gaussian_tensor(const GaussianTensorSpec& spec,
                                             std::uint64_t max_entries = default_dense_entry_cap)
{
    spec.validate();
    const auto n = static_cast< std::uint64_t >(spec.num_nodes);
    const auto d = static_cast< std::uint64_t >(spec.dim);
    if (n * n * d * d > max_entries)
        throw Error("Gaussian tensor with " + std::to_string(n * n * d * d) + " entries exceeds the cap of " +
                    std::to_string(max_entries));
    const GaussianTensor< Scalar > lazy{spec};
    DenseTensor< Scalar > out;
    out.num_nodes = spec.num_nodes;
    out.dim = spec.dim;
    out.slices.resize(static_cast< std::size_t >(spec.dim * spec.dim));
#pragma omp parallel for schedule(static)
    for (Eigen::Index s = 0; s < spec.dim * spec.dim; ++s)
        out.slices[static_cast< std::size_t >(s)] = lazy.slice(s / spec.dim, s % spec.dim);
    return out;
}

// Full-rank double SVD: every slice contributes all N singular values, so the
// result has K = N rows. Works on DenseTensor and GaussianTensor alike.
template < typename Scalar, typename SliceSource >
TensorSpectrum< Scalar > full_rank_double_svd(const SliceSource& source, Eigen::Index num_nodes, Eigen::Index dim)
{
    MatrixX< Scalar > sigma(num_nodes, dim * dim);
#pragma omp parallel for schedule(dynamic)
    for (Eigen::Index s = 0; s < dim * dim; ++s) {
        const MatrixX< Scalar > m = source.slice(s / dim, s % dim);
        Eigen::BDCSVD< MatrixX< Scalar > > svd(m);
        sigma.col(s) = svd.singularValues();
    }
    return detail::stage_two(sigma, dim, 0, num_nodes);
}

template < typename Scalar >
TensorSpectrum< Scalar > gaussian_double_svd(const DenseTensor< Scalar >& tensor)
{
    return full_rank_double_svd< Scalar >(tensor, tensor.num_nodes, tensor.dim);
}

template < typename Scalar >
TensorSpectrum< Scalar > gaussian_double_svd(const GaussianTensor< Scalar >& tensor)
{
    tensor.spec.validate();
    return full_rank_double_svd< Scalar >(tensor, tensor.spec.num_nodes, tensor.spec.dim);
}

//
// Quarter-circle law for the stage-two values rho_k^1 of a Gaussian tensor,
// normalized to unit mass on [0, rho_max] with rho_max = 2 sigma_g D sqrt(N):
//
//   f(x) = 4 / (pi rho_max^2) * sqrt(rho_max^2 - x^2)
//   F(x) = 2/pi * (u sqrt(1 - u^2) + asin(u)),   u = x / rho_max
//
struct AnalyticSpectrum
{
    double rho_max = 0.0;

    double density(double x) const
    {
        if (x < 0.0 || x > rho_max)
            return 0.0;
        return 4.0 / (std::numbers::pi * rho_max * rho_max) * std::sqrt(rho_max * rho_max - x * x);
    }

    double cdf(double x) const
    {
        if (x <= 0.0)
            return 0.0;
        if (x >= rho_max)
            return 1.0;
        const double u = x / rho_max;
        return 2.0 / std::numbers::pi * (u * std::sqrt(1.0 - u * u) + std::asin(u));
    }

    // Inverse CDF by bisection; F is strictly increasing on (0, rho_max).
    double quantile(double p) const
    {
        double lo = 0.0, hi = rho_max;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * rho_max; ++it) {
            const double mid = 0.5 * (lo + hi);
            (cdf(mid) < p ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }
};

inline AnalyticSpectrum analytic_spectrum(const GaussianTensorSpec& spec)
{
    return AnalyticSpectrum{2.0 * spec.sigma_g * double(spec.dim) * std::sqrt(double(spec.num_nodes))};
}

struct KsReport
{
    double ks = 0.0;
    std::size_t n = 0;
    double rho_max = 0.0;
};

// Kolmogorov-Smirnov distance between the empirical CDF of `values` and the
// quarter-circle CDF. Values may exceed rho_max by at most 5%.
inline KsReport quarter_circle_ks(std::span< const double > values, const GaussianTensorSpec& spec)
{
    if (values.empty())
        throw Error("quarter_circle_ks: no values");
    const auto law = analytic_spectrum(spec);
    std::vector< double > sorted(values.begin(), values.end());
    for (const double v : sorted)
        if (!(v >= 0.0 && v <= 1.05 * law.rho_max))
            throw Error("quarter_circle_ks: value " + csv::format(v) + " outside [0, 1.05 * rho_max]");
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast< double >(sorted.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = law.cdf(sorted[i]);
        ks = std::max({ks, f - double(i) / n, double(i + 1) / n - f});
    }
    return KsReport{ks, sorted.size(), law.rho_max};
}

// `k,gamma,rho`, one-based.
template < typename Scalar >
void write_null_spectrum_csv(const std::string& path, const TensorSpectrum< Scalar >& spectrum)
{
    auto out = csv::open_output(path);
    out << "k,gamma,rho\n";
    for (Eigen::Index k = 0; k < spectrum.rho.rows(); ++k)
        for (Eigen::Index g = 0; g < spectrum.rho.cols(); ++g)
            out << k + 1 << ',' << g + 1 << ',' << csv::format(double(spectrum.rho(k, g))) << '\n';
}

} // namespace ctspec

#endif // CTSPEC_NULLMODELS_HPP
