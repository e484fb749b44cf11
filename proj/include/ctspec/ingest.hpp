#ifndef CTSPEC_INGEST_HPP
#define CTSPEC_INGEST_HPP

#include <chrono>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ctspec
{

using Date = std::chrono::sys_days;

Date parse_date(std::string_view text);
std::string format_date(Date d);

struct TransactionRecord
{
    std::int64_t timestamp = 0; // Unix seconds, UTC
    std::string source;
    std::string destination;
    double amount = 0.0;
};

using WalletPair = std::pair<std::string, std::string>;

struct WeeklyNetwork
{
    int week_index = 0;
    std::map<WalletPair, double> edges;
    std::set<std::string> nodes;

    void add(const std::string& source, const std::string& destination, double weight);
    double total_volume() const;
};

// Records excluded while binning. Not errors.
struct IngestCounters
{
    std::size_t rows = 0;
    std::size_t used = 0;
    std::size_t out_of_range = 0;
    std::size_t zero_amount = 0;
    std::size_t self_loop = 0;
    double input_volume = 0.0;
    double dropped_volume = 0.0;
};

struct LoadedNetworks
{
    std::vector<WeeklyNetwork> networks;
    IngestCounters counters;
};

enum class TimestampFormat
{
    UnixSeconds,
    Iso8601
};

// Parses the transactions CSV (header `timestamp,source,destination,amount`)
// and bins it into half-open weekly bins [start + 7w, start + 7(w+1)) days.
LoadedNetworks load_transactions(const std::string& path, Date start_date, int num_weeks);

// Same binning over in-memory records, in the given order.
LoadedNetworks bin_transactions(const std::vector<TransactionRecord>& records, Date start_date, int num_weeks);

std::vector<TransactionRecord> read_transactions(const std::string& path);
void write_transactions(const std::string& path, const std::vector<TransactionRecord>& records,
                        TimestampFormat format = TimestampFormat::Iso8601);

// Wallets present in every network, in lexicographic order. Position is the
// node index used by every downstream tensor.
struct RegularNodeIndex
{
    std::vector<std::string> wallets;

    std::size_t size() const { return wallets.size(); }
};

RegularNodeIndex regular_nodes(const std::vector<WeeklyNetwork>& networks);

struct NetworkStatsRow
{
    int week = 0;
    std::size_t nodes = 0;
    double links_per_node = 0.0;
    double total_volume = 0.0;
};

std::vector<NetworkStatsRow> network_stats(const std::vector<WeeklyNetwork>& networks);
void write_network_stats(const std::string& path, const std::vector<NetworkStatsRow>& rows);

struct PriceSeries
{
    std::vector<Date> dates;
    std::vector<double> close;
};

PriceSeries load_prices(const std::string& path);
void write_prices(const std::string& path, const PriceSeries& prices);

struct WeeklyPrice
{
    std::vector<double> mean;
    std::vector<int> observed_days;

    int missing_days() const;
};

WeeklyPrice weekly_mean_price(const PriceSeries& prices, Date start_date, int num_weeks);

// Edge list per week: `source,destination,weight`.
void write_network(const std::string& path, const WeeklyNetwork& network);
WeeklyNetwork read_network(const std::string& path, int week_index);

} // namespace ctspec

#endif // CTSPEC_INGEST_HPP
