#ifndef CTSPEC_ANALYSIS_HPP
#define CTSPEC_ANALYSIS_HPP

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctspec/ingest.hpp"

namespace ctspec
{

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided p-value of a Student t statistic with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

// Pearson r; nullopt when either series has zero variance or n < 2.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

// Two-sided p-value of Pearson r from n pairs: t = r sqrt((n - 2) / (1 - r^2)).
double pearson_p_value(double r, std::size_t n);

// Welch two-sample t-test, two-sided p-value.
double welch_p_value(std::span<const double> x, std::span<const double> y);

struct LagCorrelation
{
    std::vector<int> lags;
    std::vector<double> r;
    std::vector<double> p;
    std::vector<std::size_t> n;
};

// For t0 = 0..max_lag: Pearson r between price(t + t0) and rho11(t) over all
// t where both are finite. Both series are indexed by week; NaN marks weeks
// without a value (e.g. edge weeks without a spectrum).
LagCorrelation lagged_correlation(std::span<const double> weekly_price, std::span<const double> rho11, int max_lag);

struct RollingCorrelation
{
    int delta_tau = 0;
    std::vector<int> centers;
    std::vector<double> r; // NaN where undefined
    std::vector<double> p;

    bool significant(std::size_t idx, double alpha = 0.05) const { return p[idx] < alpha; }
};

// r(t) between price(t') and rho11(t' - 1) for t' in [t - dtau, t + dtau].
// Centers whose window is incomplete are skipped; zero in-window variance
// yields NaN r and p.
RollingCorrelation rolling_correlation(std::span<const double> weekly_price, std::span<const double> rho11,
                                       int delta_tau);

struct DriverReport
{
    double threshold = 0.05;
    double margin = 10.0;
    std::size_t n_c_positive = 0;
    std::size_t n_c_negative = 0;
    std::vector<std::size_t> count_positive; // per node
    std::vector<std::size_t> count_negative;
    std::vector<std::size_t> positive_nodes;
    std::vector<std::size_t> negative_nodes;
    std::vector<std::size_t> driver_set;
    std::vector<std::size_t> complement;
};

// `vectors` is N x D^2 (one column per slice). Node i is overrepresented in a
// tail when its count of entries beyond the threshold exceeds N_c / N + margin.
DriverReport driver_set(const Eigen::MatrixXd& vectors, double threshold = 0.05, double margin = 10.0);

// Union of the driver sets from the left and right vectors.
std::vector<std::size_t> driver_union(const DriverReport& left, const DriverReport& right);

struct FlowRow
{
    int week = 0;
    std::string set;
    double induced_volume = 0.0;
    double mean_inflow = 0.0; // NaN when no member is present
    double mean_outflow = 0.0;
    std::size_t presence = 0;
};

struct FlowSets
{
    std::string name;
    std::set<std::string> members;
};

// Per week and per set: induced-subgraph volume, mean weighted in/out degree
// against the full network over present members, and presence count.
std::vector<FlowRow> flow_stats(const std::vector<WeeklyNetwork>& networks, const std::set<std::string>& node_set,
                                const std::set<std::string>& complement);

std::vector<FlowRow> flow_stats(const std::vector<WeeklyNetwork>& networks, const std::vector<FlowSets>& sets);

void write_lag_csv(const std::string& path, const LagCorrelation& lag);
void write_rolling_csv(const std::string& path, const RollingCorrelation& rolling);
void write_flow_csv(const std::string& path, const std::vector<FlowRow>& rows);

} // namespace ctspec

#endif // CTSPEC_ANALYSIS_HPP
