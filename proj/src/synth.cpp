#include "ctspec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ctspec/common.hpp"
#include "ctspec/csv.hpp"

namespace ctspec
{
namespace
{

double standard_normal(std::mt19937_64& eng)
{
    const double u1 = 1.0 - uniform01(eng);
    const double u2 = uniform01(eng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Triangular bump over [first, last + 1) weeks, peak 1 at the midpoint.
double bubble_profile(double week, int first, int last)
{
    const double lo = first;
    const double hi = last + 1.0;
    const double mid = 0.5 * (lo + hi);
    if (week <= lo || week >= hi)
        return 0.0;
    return week <= mid ? (week - lo) / (mid - lo) : (hi - week) / (hi - mid);
}

} // namespace

void SynthSpec::validate() const
{
    if (num_nodes < 3 || num_weeks < 1 || base_rate < 1)
        throw Error("synth: num_nodes >= 3, num_weeks >= 1 and base_rate >= 1 are required");
    if (!(driver_fraction > 0.0 && driver_fraction < 1.0))
        throw Error("synth: driver_fraction must lie in (0, 1)");
    if (num_drivers() < 2 || num_drivers() >= num_nodes)
        throw Error("synth: driver_fraction yields fewer than 2 drivers or no non-drivers");
    for (const int w : bubble_weeks)
        if (w < 0 || w >= num_weeks)
            throw Error("synth: bubble week " + std::to_string(w) + " outside [0, num_weeks)");
    if (!(bubble_isolation >= 0.0 && bubble_isolation <= 1.0))
        throw Error("synth: bubble_isolation must lie in [0, 1]");
    if (!(bubble_boost > 0.0) || !(amount_scale > 0.0) || !(amount_log_sd >= 0.0) || !(initial_price > 0.0) ||
        !(daily_volatility >= 0.0))
        throw Error("synth: amounts, prices and boost must be positive");
    (void)parse_date(start_date);
}

int SynthSpec::num_drivers() const
{
    return static_cast<int>(std::lround(driver_fraction * num_nodes));
}

std::string synth_wallet(int index)
{
    std::ostringstream os;
    os << 'w' << std::setfill('0') << std::setw(5) << index;
    return os.str();
}

SynthOutput generate(const SynthSpec& spec)
{
    spec.validate();
    SynthOutput out;
    std::mt19937_64 eng(derive_seed(spec.seed, 0));

    std::vector<int> ids(static_cast<std::size_t>(spec.num_nodes));
    for (int i = 0; i < spec.num_nodes; ++i)
        ids[static_cast<std::size_t>(i)] = i;
    portable_shuffle(ids.begin(), ids.end(), eng);
    std::vector<char> is_driver(static_cast<std::size_t>(spec.num_nodes), 0);
    for (int k = 0; k < spec.num_drivers(); ++k)
        is_driver[static_cast<std::size_t>(ids[static_cast<std::size_t>(k)])] = 1;
    for (int i = 0; i < spec.num_nodes; ++i)
        if (is_driver[static_cast<std::size_t>(i)])
            out.drivers.push_back(synth_wallet(i));
    out.bubble_weeks.assign(spec.bubble_weeks.begin(), spec.bubble_weeks.end());

    const auto start = parse_date(spec.start_date);
    const std::int64_t start_s = static_cast<std::int64_t>(start.time_since_epoch().count()) * 86400;
    constexpr std::int64_t week_s = 7 * 86400;
    const int nd = spec.num_drivers();
    std::vector<int> driver_ids;
    for (int i = 0; i < spec.num_nodes; ++i)
        if (is_driver[static_cast<std::size_t>(i)])
            driver_ids.push_back(i);
    // Extra driver-to-driver transactions per driver in a bubble week, chosen so
    // the expected mutual volume grows by the factor bubble_boost.
    const double extra_rate =
        (spec.bubble_boost - 1.0) * spec.base_rate * double(nd - 1) / double(spec.num_nodes - 1);

    auto emit = [&](int w, int u, int v) {
        double amount = spec.amount_scale * std::exp(spec.amount_log_sd * standard_normal(eng));
        // Whole thousandths keep the CSV text short and exact.
        amount = std::max(0.001, std::round(amount * 1000.0) / 1000.0);
        TransactionRecord rec;
        rec.timestamp =
            start_s + w * week_s + static_cast<std::int64_t>(uniform_index(eng, static_cast<std::uint64_t>(week_s)));
        rec.source = synth_wallet(u);
        rec.destination = synth_wallet(v);
        rec.amount = amount;
        out.transactions.push_back(std::move(rec));
    };

    for (int w = 0; w < spec.num_weeks; ++w) {
        const bool bubble = spec.bubble_weeks.contains(w);
        for (int u = 0; u < spec.num_nodes; ++u) {
            const bool u_driver = is_driver[static_cast<std::size_t>(u)];
            for (int k = 0; k < spec.base_rate; ++k) {
                auto v = static_cast<int>(uniform_index(eng, static_cast<std::uint64_t>(spec.num_nodes - 1)));
                if (v >= u)
                    ++v;
                if (bubble && !u_driver && is_driver[static_cast<std::size_t>(v)] &&
                    uniform01(eng) < spec.bubble_isolation) {
                    do {
                        v = static_cast<int>(uniform_index(eng, static_cast<std::uint64_t>(spec.num_nodes)));
                    } while (v == u || is_driver[static_cast<std::size_t>(v)]);
                }
                emit(w, u, v);
            }
            if (bubble && u_driver && extra_rate > 0.0) {
                // stochastic rounding of the expected count
                const double whole = std::floor(extra_rate);
                const int count = static_cast<int>(whole) + (uniform01(eng) < extra_rate - whole ? 1 : 0);
                for (int k = 0; k < count; ++k) {
                    int v = u;
                    while (v == u)
                        v = driver_ids[uniform_index(eng, static_cast<std::uint64_t>(nd))];
                    emit(w, u, v);
                }
            }
        }
    }
    std::stable_sort(out.transactions.begin(), out.transactions.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });

    const int first = spec.bubble_weeks.empty() ? 0 : *spec.bubble_weeks.begin();
    const int last = spec.bubble_weeks.empty() ? -1 : *spec.bubble_weeks.rbegin();
    double walk = 0.0;
    for (int d = 0; d < 7 * spec.num_weeks; ++d) {
        walk += spec.daily_volatility * standard_normal(eng);
        const double bump = spec.bubble_weeks.empty() ? 0.0 : bubble_profile((d + 0.5) / 7.0, first, last);
        out.prices.dates.push_back(start + std::chrono::days{d});
        out.prices.close.push_back(spec.initial_price * std::exp(walk + spec.bubble_log_amplitude * bump));
    }
    return out;
}

void write_synth(const SynthOutput& out, const std::string& transactions_path, const std::string& prices_path,
                 const std::string& truth_path)
{
    write_transactions(transactions_path, out.transactions);
    write_prices(prices_path, out.prices);
    nlohmann::json truth;
    truth["drivers"] = out.drivers;
    truth["bubble_weeks"] = out.bubble_weeks;
    auto f = csv::open_output(truth_path);
    f << truth.dump(2) << '\n';
}

GroundTruth read_ground_truth(const std::string& path)
{
    auto in = csv::open_input(path);
    const auto j = nlohmann::json::parse(in);
    GroundTruth truth;
    truth.drivers = j.at("drivers").get<std::vector<std::string>>();
    truth.bubble_weeks = j.at("bubble_weeks").get<std::vector<int>>();
    return truth;
}

} // namespace ctspec
