#ifndef CTSPEC_SPECTRA_HPP
#define CTSPEC_SPECTRA_HPP

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctspec/common.hpp"
#include "ctspec/csv.hpp"
#include "ctspec/series.hpp"
#include "ctspec/tensor.hpp"

namespace ctspec
{

// SVD of one N x N slice M^ab = sum_k L(:, k) sigma(k) R(:, k)^T.
// Only the k < min(N, W - 1) triples exist: window centering bounds the rank.
template < typename Scalar >
struct SliceSVD
{
    Eigen::Index alpha = 0;
    Eigen::Index beta = 0;
    VectorX< Scalar > sigma;
    MatrixX< Scalar > left;  // N x K
    MatrixX< Scalar > right; // N x K; R_kj = right(j, k)

    MatrixX< Scalar > reconstruct() const { return left * sigma.asDiagonal() * right.transpose(); }
};

// Double-SVD spectrum of one tensor. rho(k, g) holds rho_k^g (k, g zero based);
// stage_left[k] and stage_right[k] are the D x D factors of the k-th
// singular-value matrix [sigma_k^ab] = stage_left[k] * diag(rho.row(k)) * stage_right[k].
template < typename Scalar >
struct TensorSpectrum
{
    int center_week = 0;
    Eigen::Index num_nodes = 0;
    MatrixX< Scalar > rho; // K_max x D
    std::vector< MatrixX< Scalar > > stage_left;
    std::vector< MatrixX< Scalar > > stage_right;

    Eigen::Index k_max() const { return rho.rows(); }

    // rho_k^g for any k < N; zero beyond the computed rank bound.
    Scalar value(Eigen::Index k, Eigen::Index gamma) const { return k < rho.rows() ? rho(k, gamma) : Scalar(0); }

    Scalar spectral_gap() const { return value(0, 0) - value(1, 0); }
};

namespace detail
{

// Flips each column pair so the largest-magnitude entry of `left.col(c)` is
// positive (first index wins ties).
template < typename L, typename R >
void apply_sign_convention(Eigen::MatrixBase< L >& left, Eigen::MatrixBase< R >& right)
{
    for (Eigen::Index c = 0; c < left.cols(); ++c) {
        Eigen::Index arg = 0;
        left.col(c).cwiseAbs().maxCoeff(&arg);
        if (left(arg, c) < 0) {
            left.col(c) *= -1;
            right.col(c) *= -1;
        }
    }
}

// Thin QR of Z^a / sqrt(2 dT): Q is N x r, R is r x W with r = min(N, W).
template < typename Scalar >
struct ComponentQR
{
    MatrixX< Scalar > q;
    MatrixX< Scalar > r;
};

template < typename Scalar >
ComponentQR< Scalar > component_qr(const CorrelationTensor< Scalar >& tensor, Eigen::Index alpha)
{
    const MatrixX< Scalar > scaled = tensor.z[alpha] / std::sqrt(tensor.norm());
    const auto N = scaled.rows();
    const auto W = scaled.cols();
    const auto r = std::min(N, W);
    Eigen::HouseholderQR< MatrixX< Scalar > > qr(scaled);
    ComponentQR< Scalar > out;
    out.q = qr.householderQ() * MatrixX< Scalar >::Identity(N, r);
    out.r = qr.matrixQR().topRows(r).template triangularView< Eigen::Upper >();
    return out;
}

template < typename Scalar >
SliceSVD< Scalar > slice_svd_from_factors(const ComponentQR< Scalar >& a, const ComponentQR< Scalar >& b,
                                          Eigen::Index alpha, Eigen::Index beta, Eigen::Index k_max)
{
    // M = Qa Ra Rb^T Qb^T; SVD of the small core Ra Rb^T.
    const MatrixX< Scalar > core = a.r * b.r.transpose();
    Eigen::JacobiSVD< MatrixX< Scalar > > svd(core, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto K = std::min< Eigen::Index >(k_max, core.rows());
    SliceSVD< Scalar > out;
    out.alpha = alpha;
    out.beta = beta;
    out.sigma = svd.singularValues().head(K);
    out.left = a.q * svd.matrixU().leftCols(K);
    out.right = b.q * svd.matrixV().leftCols(K);
    apply_sign_convention(out.left, out.right);
    return out;
}

// Stage two: for every k, the SVD of the D x D matrix S_k(a, b) = sigma(k, a * D + b).
template < typename Scalar >
TensorSpectrum< Scalar > stage_two(const MatrixX< Scalar >& sigma, Eigen::Index D, int center_week,
                                   Eigen::Index num_nodes)
{
    TensorSpectrum< Scalar > spec;
    spec.center_week = center_week;
    spec.num_nodes = num_nodes;
    const auto K = sigma.rows();
    spec.rho.resize(K, D);
    spec.stage_left.resize(static_cast< std::size_t >(K));
    spec.stage_right.resize(static_cast< std::size_t >(K));
    MatrixX< Scalar > s(D, D);
    for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index a = 0; a < D; ++a)
            for (Eigen::Index b = 0; b < D; ++b)
                s(a, b) = sigma(k, a * D + b);
        Eigen::JacobiSVD< MatrixX< Scalar > > svd(s, Eigen::ComputeFullU | Eigen::ComputeFullV);
        MatrixX< Scalar > u = svd.matrixU();
        MatrixX< Scalar > v = svd.matrixV();
        apply_sign_convention(u, v);
        spec.rho.row(k) = svd.singularValues().transpose();
        spec.stage_left[static_cast< std::size_t >(k)] = std::move(u);
        spec.stage_right[static_cast< std::size_t >(k)] = v.transpose();
    }
    return spec;
}

} // namespace detail

// Exact SVD of the (alpha, beta) slice through its rank <= W - 1 factorization.
// Cost O(N W^2); the N x N slice is never formed.
template < typename Scalar >
SliceSVD< Scalar > slice_svd(const CorrelationTensor< Scalar >& tensor, Eigen::Index alpha, Eigen::Index beta)
{
    if (alpha < 0 || beta < 0 || alpha >= tensor.dim() || beta >= tensor.dim())
        throw Error("slice_svd: component index out of range");
    const auto qa = detail::component_qr(tensor, alpha);
    const auto qb = alpha == beta ? qa : detail::component_qr(tensor, beta);
    return detail::slice_svd_from_factors(qa, qb, alpha, beta, tensor.window() - 1);
}

// All D^2 slice SVDs, slice (a, b) at position a * D + b.
template < typename Scalar >
std::vector< SliceSVD< Scalar > > all_slice_svds(const CorrelationTensor< Scalar >& tensor)
{
    const auto D = tensor.dim();
    std::vector< detail::ComponentQR< Scalar > > qr;
    qr.reserve(static_cast< std::size_t >(D));
    for (Eigen::Index a = 0; a < D; ++a)
        qr.push_back(detail::component_qr(tensor, a));
    std::vector< SliceSVD< Scalar > > out;
    out.reserve(static_cast< std::size_t >(D * D));
    for (Eigen::Index a = 0; a < D; ++a)
        for (Eigen::Index b = 0; b < D; ++b)
            out.push_back(detail::slice_svd_from_factors(qr[static_cast< std::size_t >(a)],
                                                         qr[static_cast< std::size_t >(b)], a, b,
                                                         tensor.window() - 1));
    return out;
}

template < typename Scalar >
TensorSpectrum< Scalar > double_svd(const CorrelationTensor< Scalar >& tensor)
{
    const auto D = tensor.dim();
    const auto slices = all_slice_svds(tensor);
    const auto K = std::min< Eigen::Index >(tensor.num_nodes(), tensor.window() - 1);
    MatrixX< Scalar > sigma = MatrixX< Scalar >::Zero(K, D * D);
    for (std::size_t s = 0; s < slices.size(); ++s)
        sigma.col(static_cast< Eigen::Index >(s)).head(slices[s].sigma.size()) = slices[s].sigma;
    return detail::stage_two(sigma, D, tensor.center_week, tensor.num_nodes());
}

// Reference path: materializes every slice and runs a dense SVD on it.
// Intended for small N cross-checks (the `--dense` debug mode).
template < typename Scalar >
TensorSpectrum< Scalar > dense_double_svd(const CorrelationTensor< Scalar >& tensor, Eigen::Index max_nodes = 50)
{
    if (tensor.num_nodes() > max_nodes)
        throw Error("dense double SVD is limited to N <= " + std::to_string(max_nodes));
    const auto D = tensor.dim();
    const auto K = std::min< Eigen::Index >(tensor.num_nodes(), tensor.window() - 1);
    MatrixX< Scalar > sigma(K, D * D);
    for (Eigen::Index a = 0; a < D; ++a)
        for (Eigen::Index b = 0; b < D; ++b) {
            Eigen::JacobiSVD< MatrixX< Scalar > > svd(tensor.slice(a, b));
            sigma.col(a * D + b) = svd.singularValues().head(K);
        }
    return detail::stage_two(sigma, D, tensor.center_week, tensor.num_nodes());
}

// k = 1 singular vectors of every slice; column a * D + b holds L_{i1}^{ab}
// (resp. R_{i1}^{ab}) under the sign convention.
template < typename Scalar >
struct SingularVectorField
{
    Eigen::Index dim = 0;
    MatrixX< Scalar > left;  // N x D^2
    MatrixX< Scalar > right; // N x D^2

    Eigen::Index num_nodes() const { return left.rows(); }
};

template < typename Scalar >
SingularVectorField< Scalar > largest_singular_vectors(const CorrelationTensor< Scalar >& tensor)
{
    const auto D = tensor.dim();
    const auto N = tensor.num_nodes();
    SingularVectorField< Scalar > field;
    field.dim = D;
    field.left.resize(N, D * D);
    field.right.resize(N, D * D);
    const auto slices = all_slice_svds(tensor);
    for (std::size_t s = 0; s < slices.size(); ++s) {
        field.left.col(static_cast< Eigen::Index >(s)) = slices[s].left.col(0);
        field.right.col(static_cast< Eigen::Index >(s)) = slices[s].right.col(0);
    }
    return field;
}

struct GapRow
{
    int week = 0;
    double rho11 = 0.0;
    double rho21 = 0.0;
    double gap = 0.0;
};

// Spectrum of every valid center week, in week order. Centers are
// independent and computed in parallel; output order is fixed.
template < typename Scalar >
std::vector< TensorSpectrum< Scalar > > spectra_series(const BasicEmbeddingSeries< Scalar >& series,
                                                       const WindowSpec& spec)
{
    const auto T = static_cast< int >(series.num_weeks());
    if (T < spec.window())
        throw Error("series of " + std::to_string(T) + " weeks is shorter than the window of " +
                    std::to_string(spec.window()));
    const int n = spec.num_centers(T);
    std::vector< TensorSpectrum< Scalar > > out(static_cast< std::size_t >(n));
#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < n; ++c) {
        const auto t = spec.first_center() + c;
        out[static_cast< std::size_t >(c)] = double_svd(correlation_tensor(series, t, spec));
    }
    return out;
}

template < typename Scalar >
std::vector< GapRow > gap_rows(const std::vector< TensorSpectrum< Scalar > >& spectra)
{
    std::vector< GapRow > rows;
    rows.reserve(spectra.size());
    for (const auto& s : spectra)
        rows.push_back(GapRow{s.center_week, double(s.value(0, 0)), double(s.value(1, 0)), double(s.spectral_gap())});
    return rows;
}

template < typename Scalar >
std::vector< GapRow > spectra_timeseries(const BasicEmbeddingSeries< Scalar >& series, const WindowSpec& spec)
{
    return gap_rows(spectra_series(series, spec));
}

// `week,k,gamma,rho` with k and gamma one-based. With pad_to_n the rows for
// k beyond the rank bound are written as explicit zeros up to k = N.
template < typename Scalar >
void write_spectra_csv(const std::string& path, const std::vector< TensorSpectrum< Scalar > >& spectra,
                       bool pad_to_n = false)
{
    auto out = csv::open_output(path);
    out << "week,k,gamma,rho\n";
    for (const auto& s : spectra) {
        const auto K = pad_to_n ? std::max(s.k_max(), s.num_nodes) : s.k_max();
        for (Eigen::Index k = 0; k < K; ++k)
            for (Eigen::Index g = 0; g < s.rho.cols(); ++g)
                out << s.center_week << ',' << k + 1 << ',' << g + 1 << ',' << csv::format(double(s.value(k, g)))
                    << '\n';
    }
}

inline void write_gap_csv(const std::string& path, const std::vector< GapRow >& rows)
{
    auto out = csv::open_output(path);
    out << "week,rho11,rho21,gap\n";
    for (const auto& r : rows)
        out << r.week << ',' << csv::format(r.rho11) << ',' << csv::format(r.rho21) << ',' << csv::format(r.gap)
            << '\n';
}

// `alpha,beta,i,L1,R1`
template < typename Scalar >
void write_singular_vectors_csv(const std::string& path, const SingularVectorField< Scalar >& field)
{
    auto out = csv::open_output(path);
    out << "alpha,beta,i,L1,R1\n";
    const auto D = field.dim;
    for (Eigen::Index a = 0; a < D; ++a)
        for (Eigen::Index b = 0; b < D; ++b)
            for (Eigen::Index i = 0; i < field.num_nodes(); ++i)
                out << a << ',' << b << ',' << i << ',' << csv::format(double(field.left(i, a * D + b))) << ','
                    << csv::format(double(field.right(i, a * D + b))) << '\n';
}

} // namespace ctspec

#endif // CTSPEC_SPECTRA_HPP
