#ifndef CTSPEC_SYNTH_HPP
#define CTSPEC_SYNTH_HPP

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "ctspec/ingest.hpp"

namespace ctspec
{

// Synthetic ledger with a planted driver group. Every node sends
// `base_rate` transactions to uniformly chosen partners each week, so every
// node is regular. During bubble weeks every driver sends extra
// transactions to other drivers so that the expected driver-to-driver volume
// is `bubble_boost` times its baseline. Log price is a Gaussian random walk plus a
// triangular bump spanning the bubble weeks.
struct SynthSpec
{
    int num_nodes = 60;
    int num_weeks = 20;
    int base_rate = 5;
    double driver_fraction = 0.3;
    std::set<int> bubble_weeks{7, 8, 9, 10, 11, 12};
    double bubble_boost = 20.0;
    // Probability that a non-driver transaction aimed at a driver during a
    // bubble week is redirected to a non-driver.
    double bubble_isolation = 0.0;
    double amount_scale = 1000.0;
    double amount_log_sd = 0.5;
    double initial_price = 0.25;
    double daily_volatility = 0.02;
    double bubble_log_amplitude = 1.0;
    std::string start_date = "2020-01-06";
    std::uint64_t seed = 1;

    void validate() const;
    int num_drivers() const;
};

struct SynthOutput
{
    std::vector<TransactionRecord> transactions;
    PriceSeries prices;
    std::vector<std::string> drivers; // wallet ids, sorted
    std::vector<int> bubble_weeks;
};

std::string synth_wallet(int index);

SynthOutput generate(const SynthSpec& spec);

// Writes the transactions and price CSVs plus `{drivers, bubble_weeks}` JSON.
void write_synth(const SynthOutput& out, const std::string& transactions_path, const std::string& prices_path,
                 const std::string& truth_path);

struct GroundTruth
{
    std::vector<std::string> drivers;
    std::vector<int> bubble_weeks;
};

GroundTruth read_ground_truth(const std::string& path);

} // namespace ctspec

#endif // CTSPEC_SYNTH_HPP
