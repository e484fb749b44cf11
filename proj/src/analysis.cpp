#include "ctspec/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "ctspec/common.hpp"
#include "ctspec/csv.hpp"

namespace ctspec
{
namespace
{
constexpr double nan = std::numeric_limits<double>::quiet_NaN();

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double a, double b, double x)
{
    constexpr int max_iter = 500;
    constexpr double eps = 1e-16;
    constexpr double tiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny)
        d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps)
            return h;
    }
    return h;
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x)
{
    if (!(a > 0.0) || !(b > 0.0))
        throw Error("incomplete beta: parameters must be positive");
    if (!(x >= 0.0 && x <= 1.0))
        throw Error("incomplete beta: x must lie in [0, 1]");
    if (x == 0.0)
        return 0.0;
    if (x == 1.0)
        return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    // Use the symmetry relation where the fraction converges fastest.
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df)
{
    if (!(df > 0.0))
        throw Error("t distribution needs positive degrees of freedom");
    if (std::isinf(t))
        return 0.0;
    return regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size())
        throw Error("pearson: series lengths differ");
    const auto n = x.size();
    if (n < 2)
        return std::nullopt;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0))
        return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson_p_value(double r, std::size_t n)
{
    if (n < 3)
        throw Error("p-value of a Pearson coefficient needs at least 3 pairs");
    const double df = double(n) - 2.0;
    const double one_minus = 1.0 - r * r;
    if (one_minus <= 0.0)
        return 0.0;
    return student_t_two_sided_p(r * std::sqrt(df / one_minus), df);
}

double welch_p_value(std::span<const double> x, std::span<const double> y)
{
    if (x.size() < 2 || y.size() < 2)
        throw Error("Welch test needs at least two samples per group");
    auto moments = [](std::span<const double> v) {
        double m = 0.0;
        for (const double e : v)
            m += e;
        m /= double(v.size());
        double s = 0.0;
        for (const double e : v)
            s += (e - m) * (e - m);
        return std::pair{m, s / double(v.size() - 1)};
    };
    const auto [mx, vx] = moments(x);
    const auto [my, vy] = moments(y);
    const double ax = vx / double(x.size());
    const double ay = vy / double(y.size());
    const double se2 = ax + ay;
    if (!(se2 > 0.0))
        return mx == my ? 1.0 : 0.0;
    const double t = (mx - my) / std::sqrt(se2);
    const double df = se2 * se2 / (ax * ax / double(x.size() - 1) + ay * ay / double(y.size() - 1));
    return student_t_two_sided_p(t, df);
}

LagCorrelation lagged_correlation(std::span<const double> weekly_price, std::span<const double> rho11, int max_lag)
{
    if (max_lag < 0)
        throw Error("max_lag must be non-negative");
    LagCorrelation out;
    const auto T = static_cast<long>(std::min(weekly_price.size(), rho11.size()));
    for (int lag = 0; lag <= max_lag; ++lag) {
        std::vector<double> px, ry;
        for (long t = 0; t + lag < static_cast<long>(weekly_price.size()) && t < T; ++t) {
            const double p = weekly_price[static_cast<std::size_t>(t + lag)];
            const double r = rho11[static_cast<std::size_t>(t)];
            if (std::isfinite(p) && std::isfinite(r)) {
                px.push_back(p);
                ry.push_back(r);
            }
        }
        if (px.size() < 3)
            throw Error("lagged correlation: fewer than 3 overlapping weeks at lag " + std::to_string(lag));
        const auto r = pearson(px, ry);
        if (!r)
            throw Error("lagged correlation: zero variance at lag " + std::to_string(lag));
        out.lags.push_back(lag);
        out.r.push_back(*r);
        out.p.push_back(pearson_p_value(*r, px.size()));
        out.n.push_back(px.size());
    }
    return out;
}

RollingCorrelation rolling_correlation(std::span<const double> weekly_price, std::span<const double> rho11,
                                       int delta_tau)
{
    if (delta_tau < 1)
        throw Error("rolling correlation: delta_tau must be >= 1");
    RollingCorrelation out;
    out.delta_tau = delta_tau;
    const auto T = static_cast<int>(std::min(weekly_price.size(), rho11.size() + 1));
    const int len = 2 * delta_tau + 1;
    std::vector<double> px(static_cast<std::size_t>(len)), ry(static_cast<std::size_t>(len));
    for (int t = delta_tau + 1; t + delta_tau < T; ++t) {
        bool complete = true;
        for (int s = 0; s < len; ++s) {
            const int tp = t - delta_tau + s;
            px[static_cast<std::size_t>(s)] = weekly_price[static_cast<std::size_t>(tp)];
            ry[static_cast<std::size_t>(s)] = rho11[static_cast<std::size_t>(tp - 1)];
            complete = complete && std::isfinite(px[static_cast<std::size_t>(s)]) &&
                       std::isfinite(ry[static_cast<std::size_t>(s)]);
        }
        if (!complete)
            continue;
        out.centers.push_back(t);
        const auto r = pearson(px, ry);
        out.r.push_back(r ? *r : nan);
        out.p.push_back(r ? pearson_p_value(*r, px.size()) : nan);
    }
    if (out.centers.empty())
        throw Error("rolling correlation: series too short for a window of " + std::to_string(len) + " weeks");
    return out;
}

DriverReport driver_set(const Eigen::MatrixXd& vectors, double threshold, double margin)
{
    if (vectors.size() == 0)
        throw Error("driver_set: empty singular vectors");
    if (!(threshold > 0.0) || !(margin >= 0.0))
        throw Error("driver_set: threshold must be positive and margin non-negative");
    const auto N = static_cast<std::size_t>(vectors.rows());
    DriverReport rep;
    rep.threshold = threshold;
    rep.margin = margin;
    rep.count_positive.assign(N, 0);
    rep.count_negative.assign(N, 0);
    for (Eigen::Index c = 0; c < vectors.cols(); ++c)
        for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
            const double v = vectors(i, c);
            if (v > threshold)
                ++rep.count_positive[static_cast<std::size_t>(i)];
            else if (v < -threshold)
                ++rep.count_negative[static_cast<std::size_t>(i)];
        }
    for (std::size_t i = 0; i < N; ++i) {
        rep.n_c_positive += rep.count_positive[i];
        rep.n_c_negative += rep.count_negative[i];
    }
    const double cut_pos = double(rep.n_c_positive) / double(N) + margin;
    const double cut_neg = double(rep.n_c_negative) / double(N) + margin;
    for (std::size_t i = 0; i < N; ++i) {
        const bool pos = double(rep.count_positive[i]) > cut_pos;
        const bool neg = double(rep.count_negative[i]) > cut_neg;
        if (pos)
            rep.positive_nodes.push_back(i);
        if (neg)
            rep.negative_nodes.push_back(i);
        (pos || neg ? rep.driver_set : rep.complement).push_back(i);
    }
    return rep;
}

std::vector<std::size_t> driver_union(const DriverReport& left, const DriverReport& right)
{
    std::vector<std::size_t> out;
    std::set_union(left.driver_set.begin(), left.driver_set.end(), right.driver_set.begin(), right.driver_set.end(),
                   std::back_inserter(out));
    return out;
}

std::vector<FlowRow> flow_stats(const std::vector<WeeklyNetwork>& networks, const std::vector<FlowSets>& sets)
{
    std::vector<FlowRow> rows;
    for (const auto& net : networks) {
        std::map<std::string, double> inflow, outflow;
        for (const auto& [pair, w] : net.edges) {
            outflow[pair.first] += w;
            inflow[pair.second] += w;
        }
        for (const auto& s : sets) {
            FlowRow row;
            row.week = net.week_index;
            row.set = s.name;
            for (const auto& [pair, w] : net.edges)
                if (s.members.contains(pair.first) && s.members.contains(pair.second))
                    row.induced_volume += w;
            double in = 0.0, out = 0.0;
            for (const auto& m : s.members) {
                if (!net.nodes.contains(m))
                    continue;
                ++row.presence;
                if (auto it = inflow.find(m); it != inflow.end())
                    in += it->second;
                if (auto it = outflow.find(m); it != outflow.end())
                    out += it->second;
            }
            row.mean_inflow = row.presence ? in / double(row.presence) : nan;
            row.mean_outflow = row.presence ? out / double(row.presence) : nan;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::vector<FlowRow> flow_stats(const std::vector<WeeklyNetwork>& networks, const std::set<std::string>& node_set,
                                const std::set<std::string>& complement)
{
    for (const auto& m : node_set)
        if (complement.contains(m))
            throw Error("flow_stats: node sets must be disjoint (" + m + " in both)");
    return flow_stats(networks, {FlowSets{"driver", node_set}, FlowSets{"complement", complement}});
}

void write_lag_csv(const std::string& path, const LagCorrelation& lag)
{
    auto out = csv::open_output(path);
    out << "lag,r,p\n";
    for (std::size_t i = 0; i < lag.lags.size(); ++i)
        out << lag.lags[i] << ',' << csv::format(lag.r[i]) << ',' << csv::format(lag.p[i]) << '\n';
}

void write_rolling_csv(const std::string& path, const RollingCorrelation& rolling)
{
    auto out = csv::open_output(path);
    out << "week,r,p,significant\n";
    for (std::size_t i = 0; i < rolling.centers.size(); ++i)
        out << rolling.centers[i] << ',' << csv::format(rolling.r[i]) << ',' << csv::format(rolling.p[i]) << ','
            << (rolling.significant(i) ? 1 : 0) << '\n';
}

void write_flow_csv(const std::string& path, const std::vector<FlowRow>& rows)
{
    auto out = csv::open_output(path);
    out << "week,set,induced_volume,mean_inflow,mean_outflow,presence\n";
    for (const auto& r : rows)
        out << r.week << ',' << r.set << ',' << csv::format(r.induced_volume) << ',' << csv::format(r.mean_inflow)
            << ',' << csv::format(r.mean_outflow) << ',' << r.presence << '\n';
}

} // namespace ctspec
