#include "ctspec/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>

#include "ctspec/common.hpp"
#include "ctspec/csv.hpp"

namespace ctspec
{
namespace
{
constexpr std::int64_t seconds_per_day = 86400;
constexpr std::int64_t seconds_per_week = 7 * seconds_per_day;

bool all_digits(std::string_view s)
{
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

bool parse_fixed_int(std::string_view s, int& out)
{
    return all_digits(s) && csv::parse_int(s, out);
}

bool try_parse_date(std::string_view s, Date& out)
{
    if (s.size() != 10 || s[4] != '-' || s[7] != '-')
        return false;
    int y = 0, m = 0, d = 0;
    if (!parse_fixed_int(s.substr(0, 4), y) || !parse_fixed_int(s.substr(5, 2), m) || !parse_fixed_int(s.substr(8, 2), d))
        return false;
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok())
        return false;
    out = Date{ymd};
    return true;
}

// YYYY-MM-DD[T ]HH:MM:SS[.fff][Z|+00:00]
bool try_parse_iso(std::string_view s, std::int64_t& out)
{
    Date date;
    if (s.size() < 19 || !try_parse_date(s.substr(0, 10), date))
        return false;
    if (s[10] != 'T' && s[10] != ' ')
        return false;
    if (s[13] != ':' || s[16] != ':')
        return false;
    int hh = 0, mm = 0, ss = 0;
    if (!parse_fixed_int(s.substr(11, 2), hh) || !parse_fixed_int(s.substr(14, 2), mm) ||
        !parse_fixed_int(s.substr(17, 2), ss))
        return false;
    if (hh > 23 || mm > 59 || ss > 60)
        return false;
    auto rest = s.substr(19);
    if (!rest.empty() && rest.front() == '.') {
        std::size_t n = 1;
        while (n < rest.size() && std::isdigit(static_cast<unsigned char>(rest[n])))
            ++n;
        if (n == 1)
            return false;
        rest.remove_prefix(n);
    }
    if (!(rest.empty() || rest == "Z" || rest == "+00:00"))
        return false;
    out = static_cast<std::int64_t>(date.time_since_epoch().count()) * seconds_per_day + hh * 3600 + mm * 60 + ss;
    return true;
}

std::string format_iso(std::int64_t ts)
{
    auto days = ts / seconds_per_day;
    auto rem = ts % seconds_per_day;
    if (rem < 0) {
        rem += seconds_per_day;
        --days;
    }
    const Date d{std::chrono::days{days}};
    std::ostringstream os;
    os << format_date(d) << 'T' << std::setfill('0') << std::setw(2) << rem / 3600 << ':' << std::setw(2)
       << (rem / 60) % 60 << ':' << std::setw(2) << rem % 60 << 'Z';
    return os.str();
}

std::int64_t day_start_seconds(Date d)
{
    return static_cast<std::int64_t>(d.time_since_epoch().count()) * seconds_per_day;
}

void expect_header(std::istream& in, std::string_view expected, const std::string& path)
{
    std::string line;
    if (!std::getline(in, line))
        throw Error(path + ": empty file");
    if (csv::trim(line) != expected)
        throw Error(path + ": line 1: expected header '" + std::string(expected) + "'");
}

} // namespace

Date parse_date(std::string_view text)
{
    Date d;
    if (!try_parse_date(csv::trim(text), d))
        throw Error("invalid date '" + std::string(text) + "', expected YYYY-MM-DD");
    return d;
}

std::string format_date(Date d)
{
    const std::chrono::year_month_day ymd{d};
    std::ostringstream os;
    os << std::setfill('0') << std::setw(4) << static_cast<int>(ymd.year()) << '-' << std::setw(2)
       << static_cast<unsigned>(ymd.month()) << '-' << std::setw(2) << static_cast<unsigned>(ymd.day());
    return os.str();
}

void WeeklyNetwork::add(const std::string& source, const std::string& destination, double weight)
{
    edges[{source, destination}] += weight;
    nodes.insert(source);
    nodes.insert(destination);
}

double WeeklyNetwork::total_volume() const
{
    double total = 0.0;
    for (const auto& [pair, w] : edges)
        total += w;
    return total;
}

std::vector<TransactionRecord> read_transactions(const std::string& path)
{
    auto in = csv::open_input(path);
    expect_header(in, "timestamp,source,destination,amount", path);

    std::vector<TransactionRecord> records;
    std::optional<TimestampFormat> format;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty())
            continue;
        const auto where = path + ": line " + std::to_string(line_no) + ": ";
        const auto fields = csv::split(line);
        if (fields.size() != 4)
            throw Error(where + "expected 4 fields, got " + std::to_string(fields.size()));

        const auto ts_text = csv::trim(fields[0]);
        if (!format)
            format = all_digits(ts_text) ? TimestampFormat::UnixSeconds : TimestampFormat::Iso8601;

        TransactionRecord rec;
        bool ok = false;
        if (*format == TimestampFormat::UnixSeconds)
            ok = all_digits(ts_text) && csv::parse_int(ts_text, rec.timestamp);
        else
            ok = try_parse_iso(ts_text, rec.timestamp);
        if (!ok)
            throw Error(where + "malformed timestamp '" + std::string(ts_text) + "'");

        rec.source = std::string(csv::trim(fields[1]));
        rec.destination = std::string(csv::trim(fields[2]));
        if (rec.source.empty() || rec.destination.empty())
            throw Error(where + "empty wallet identifier");
        if (!csv::parse_double(fields[3], rec.amount) || !std::isfinite(rec.amount) || rec.amount < 0.0)
            throw Error(where + "malformed amount '" + std::string(csv::trim(fields[3])) + "'");
        records.push_back(std::move(rec));
    }
    return records;
}

void write_transactions(const std::string& path, const std::vector<TransactionRecord>& records, TimestampFormat format)
{
    auto out = csv::open_output(path);
    out << "timestamp,source,destination,amount\n";
    for (const auto& r : records) {
        if (format == TimestampFormat::UnixSeconds)
            out << r.timestamp;
        else
            out << format_iso(r.timestamp);
        out << ',' << r.source << ',' << r.destination << ',' << csv::format(r.amount) << '\n';
    }
}

LoadedNetworks bin_transactions(const std::vector<TransactionRecord>& records, Date start_date, int num_weeks)
{
    if (num_weeks <= 0)
        throw Error("num_weeks must be positive");

    LoadedNetworks result;
    result.networks.resize(static_cast<std::size_t>(num_weeks));
    for (int w = 0; w < num_weeks; ++w)
        result.networks[static_cast<std::size_t>(w)].week_index = w;

    auto& c = result.counters;
    const auto start = day_start_seconds(start_date);
    for (const auto& r : records) {
        ++c.rows;
        c.input_volume += r.amount;
        if (r.amount == 0.0) {
            ++c.zero_amount;
            continue;
        }
        if (r.source == r.destination) {
            ++c.self_loop;
            c.dropped_volume += r.amount;
            continue;
        }
        const auto offset = r.timestamp - start;
        const auto week = offset < 0 ? -1 : offset / seconds_per_week;
        if (week < 0 || week >= num_weeks) {
            ++c.out_of_range;
            c.dropped_volume += r.amount;
            continue;
        }
        result.networks[static_cast<std::size_t>(week)].add(r.source, r.destination, r.amount);
        ++c.used;
    }
    if (c.used == 0)
        throw Error("no usable transaction records in the requested period");
    return result;
}

LoadedNetworks load_transactions(const std::string& path, Date start_date, int num_weeks)
{
    return bin_transactions(read_transactions(path), start_date, num_weeks);
}

RegularNodeIndex regular_nodes(const std::vector<WeeklyNetwork>& networks)
{
    if (networks.empty())
        throw Error("regular_nodes: no networks");
    std::vector<std::string> common(networks.front().nodes.begin(), networks.front().nodes.end());
    for (std::size_t w = 1; w < networks.size() && !common.empty(); ++w) {
        std::vector<std::string> next;
        const auto& nodes = networks[w].nodes;
        std::set_intersection(common.begin(), common.end(), nodes.begin(), nodes.end(), std::back_inserter(next));
        common = std::move(next);
    }
    if (common.empty())
        throw Error("no regular nodes: no wallet is present in every week");
    return RegularNodeIndex{std::move(common)};
}

std::vector<NetworkStatsRow> network_stats(const std::vector<WeeklyNetwork>& networks)
{
    if (networks.empty())
        throw Error("network_stats: no networks");
    std::vector<NetworkStatsRow> rows;
    rows.reserve(networks.size());
    for (const auto& net : networks) {
        NetworkStatsRow row;
        row.week = net.week_index;
        row.nodes = net.nodes.size();
        row.links_per_node =
            net.nodes.empty() ? 0.0 : static_cast<double>(net.edges.size()) / static_cast<double>(net.nodes.size());
        row.total_volume = net.total_volume();
        rows.push_back(row);
    }
    return rows;
}

void write_network_stats(const std::string& path, const std::vector<NetworkStatsRow>& rows)
{
    auto out = csv::open_output(path);
    out << "week,nodes,links_per_node,total_volume_xrp\n";
    for (const auto& r : rows)
        out << r.week << ',' << r.nodes << ',' << csv::format(r.links_per_node) << ',' << csv::format(r.total_volume)
            << '\n';
}

PriceSeries load_prices(const std::string& path)
{
    auto in = csv::open_input(path);
    expect_header(in, "date,close", path);
    PriceSeries prices;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty())
            continue;
        const auto where = path + ": line " + std::to_string(line_no) + ": ";
        const auto fields = csv::split(line);
        if (fields.size() != 2)
            throw Error(where + "expected 2 fields");
        Date d;
        if (!try_parse_date(csv::trim(fields[0]), d))
            throw Error(where + "malformed date '" + std::string(fields[0]) + "'");
        double close = 0.0;
        if (!csv::parse_double(fields[1], close) || !(close > 0.0) || !std::isfinite(close))
            throw Error(where + "malformed close price");
        if (!prices.dates.empty() && d <= prices.dates.back())
            throw Error(where + "dates must be strictly increasing");
        prices.dates.push_back(d);
        prices.close.push_back(close);
    }
    if (prices.dates.empty())
        throw Error(path + ": no price rows");
    return prices;
}

void write_prices(const std::string& path, const PriceSeries& prices)
{
    auto out = csv::open_output(path);
    out << "date,close\n";
    for (std::size_t i = 0; i < prices.dates.size(); ++i)
        out << format_date(prices.dates[i]) << ',' << csv::format(prices.close[i]) << '\n';
}

int WeeklyPrice::missing_days() const
{
    int missing = 0;
    for (const auto n : observed_days)
        missing += 7 - n;
    return missing;
}

WeeklyPrice weekly_mean_price(const PriceSeries& prices, Date start_date, int num_weeks)
{
    if (num_weeks <= 0)
        throw Error("num_weeks must be positive");
    std::vector<double> sums(static_cast<std::size_t>(num_weeks), 0.0);
    WeeklyPrice result;
    result.observed_days.assign(static_cast<std::size_t>(num_weeks), 0);
    for (std::size_t i = 0; i < prices.dates.size(); ++i) {
        const auto offset = (prices.dates[i] - start_date).count();
        if (offset < 0)
            continue;
        const auto week = offset / 7;
        if (week >= num_weeks)
            continue;
        sums[static_cast<std::size_t>(week)] += prices.close[i];
        ++result.observed_days[static_cast<std::size_t>(week)];
    }
    result.mean.resize(sums.size());
    for (std::size_t w = 0; w < sums.size(); ++w) {
        if (result.observed_days[w] == 0)
            throw Error("no price observations in week " + std::to_string(w) + " (starting " +
                        format_date(start_date + std::chrono::days{7 * static_cast<long>(w)}) + ")");
        result.mean[w] = sums[w] / result.observed_days[w];
    }
    return result;
}

void write_network(const std::string& path, const WeeklyNetwork& network)
{
    auto out = csv::open_output(path);
    out << "source,destination,weight\n";
    for (const auto& [pair, w] : network.edges)
        out << pair.first << ',' << pair.second << ',' << csv::format(w) << '\n';
}

WeeklyNetwork read_network(const std::string& path, int week_index)
{
    auto in = csv::open_input(path);
    expect_header(in, "source,destination,weight", path);
    WeeklyNetwork net;
    net.week_index = week_index;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty())
            continue;
        const auto fields = csv::split(line);
        double w = 0.0;
        if (fields.size() != 3 || !csv::parse_double(fields[2], w) || !(w > 0.0))
            throw Error(path + ": line " + std::to_string(line_no) + ": malformed edge");
        net.add(std::string(fields[0]), std::string(fields[1]), w);
    }
    return net;
}

} // namespace ctspec
