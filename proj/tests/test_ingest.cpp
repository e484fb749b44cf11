#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "ctspec/common.hpp"
#include "ctspec/ingest.hpp"
#include "ctspec/synth.hpp"
#include "test_util.hpp"

using namespace ctspec;
using ctspec::testing::TempDir;
using ctspec::testing::write_text;

namespace
{

const Date start = parse_date("2020-01-06");
constexpr std::int64_t day = 86400;

std::int64_t ts(int days, int seconds = 0)
{
    return static_cast<std::int64_t>(start.time_since_epoch().count() + days) * day + seconds;
}

TransactionRecord rec(std::int64_t t, std::string s, std::string d, double a)
{
    return TransactionRecord{t, std::move(s), std::move(d), a};
}

} // namespace

TEST(Dates, ParseAndFormat)
{
    EXPECT_EQ(format_date(parse_date("2020-01-06")), "2020-01-06");
    EXPECT_EQ(format_date(parse_date("2021-12-26")), "2021-12-26");
    EXPECT_THROW(parse_date("2020-02-30"), Error);
    EXPECT_THROW(parse_date("2020-1-6"), Error);
    // 2020-01-06 is a Monday
    EXPECT_EQ(std::chrono::weekday{start}, std::chrono::Monday);
}

TEST(Binning, ParallelRecordsSumIntoOneEdge)
{
    const std::vector<TransactionRecord> r{rec(ts(0), "A", "B", 10), rec(ts(1), "A", "B", 20),
                                           rec(ts(6), "A", "B", 30)};
    const auto loaded = bin_transactions(r, start, 1);
    ASSERT_EQ(loaded.networks.size(), 1u);
    const auto& net = loaded.networks[0];
    ASSERT_EQ(net.edges.size(), 1u);
    EXPECT_EQ(net.edges.at({"A", "B"}), 60.0);
    EXPECT_EQ(net.nodes, (std::set<std::string>{"A", "B"}));
}

TEST(Binning, RecordBeforeStartIsOutOfRange)
{
    const std::vector<TransactionRecord> r{rec(ts(0, -1), "A", "B", 5), rec(ts(0), "A", "B", 1)};
    const auto loaded = bin_transactions(r, start, 2);
    EXPECT_EQ(loaded.counters.out_of_range, 1u);
    EXPECT_EQ(loaded.counters.used, 1u);
    EXPECT_EQ(loaded.networks.size(), 2u);
}

TEST(Binning, WeeksAreHalfOpen)
{
    const std::vector<TransactionRecord> r{rec(ts(7, -1), "A", "B", 1), rec(ts(7), "C", "D", 2),
                                           rec(ts(14), "E", "F", 4)};
    const auto loaded = bin_transactions(r, start, 2);
    EXPECT_TRUE(loaded.networks[0].edges.contains({"A", "B"}));
    EXPECT_TRUE(loaded.networks[1].edges.contains({"C", "D"}));
    EXPECT_EQ(loaded.counters.out_of_range, 1u);
}

TEST(Binning, TwoYearPeriodHas103Weeks)
{
    // January 6, 2020 through December 26, 2021 inclusive
    const auto last = parse_date("2021-12-26");
    const std::vector<TransactionRecord> r{
        rec(ts(0), "A", "B", 1),
        rec((last.time_since_epoch().count()) * day + day - 1, "A", "B", 1),
        rec((last.time_since_epoch().count() + 1) * day, "A", "B", 1)};
    const auto loaded = bin_transactions(r, start, 103);
    EXPECT_EQ(loaded.networks.size(), 103u);
    EXPECT_EQ(loaded.networks[102].edges.size(), 1u);
    EXPECT_EQ(loaded.counters.out_of_range, 1u);
}

TEST(Binning, ZeroAmountAndSelfLoopsAreCounted)
{
    const std::vector<TransactionRecord> r{rec(ts(0), "A", "B", 0), rec(ts(0), "A", "A", 3),
                                           rec(ts(0), "A", "C", 2)};
    const auto loaded = bin_transactions(r, start, 1);
    EXPECT_EQ(loaded.counters.zero_amount, 1u);
    EXPECT_EQ(loaded.counters.self_loop, 1u);
    EXPECT_EQ(loaded.counters.used, 1u);
    EXPECT_EQ(loaded.networks[0].nodes, (std::set<std::string>{"A", "C"}));
}

TEST(Binning, NoUsableRecordsIsAnError)
{
    const std::vector<TransactionRecord> r{rec(ts(0), "A", "A", 3)};
    EXPECT_THROW(bin_transactions(r, start, 1), Error);
    EXPECT_THROW(bin_transactions({}, start, 1), Error);
}

TEST(Binning, VolumeIsConserved)
{
    SynthSpec spec;
    spec.num_weeks = 6;
    spec.num_nodes = 20;
    spec.bubble_weeks = {2, 3};
    auto records = generate(spec).transactions;
    // sprinkle in dropped records
    records.push_back(rec(ts(-3), "x", "y", 17.5));
    records.push_back(rec(ts(100), "x", "y", 2.25));
    records.push_back(rec(ts(1), "x", "x", 4.0));
    records.push_back(rec(ts(1), "x", "y", 0.0));
    const auto loaded = bin_transactions(records, start, spec.num_weeks);
    double total = 0.0;
    for (const auto& n : loaded.networks)
        total += n.total_volume();
    double input = 0.0;
    for (const auto& r : records)
        input += r.amount;
    EXPECT_NEAR(total + loaded.counters.dropped_volume, input, 1e-9 * input);
    EXPECT_NEAR(loaded.counters.input_volume, input, 1e-9 * input);
    EXPECT_EQ(loaded.counters.out_of_range, 2u);
}

TEST(TransactionsFile, UnixAndIsoTimestampsAgree)
{
    TempDir dir("ingest");
    write_text(dir.file("unix.csv"), "timestamp,source,destination,amount\n" + std::to_string(ts(0, 5)) +
                                         ",A,B,1.5\n" + std::to_string(ts(8)) + ",B,C,2\n");
    write_text(dir.file("iso.csv"), "timestamp,source,destination,amount\n"
                                    "2020-01-06T00:00:05Z,A,B,1.5\n"
                                    "2020-01-14 00:00:00.000+00:00,B,C,2\n");
    const auto a = load_transactions(dir.file("unix.csv"), start, 2);
    const auto b = load_transactions(dir.file("iso.csv"), start, 2);
    for (int w = 0; w < 2; ++w)
        EXPECT_EQ(a.networks[w].edges, b.networks[w].edges);
    EXPECT_EQ(a.networks[1].edges.at({"B", "C"}), 2.0);
}

TEST(TransactionsFile, FormatIsDetectedPerFile)
{
    TempDir dir("ingest");
    write_text(dir.file("mixed.csv"), "timestamp,source,destination,amount\n" + std::to_string(ts(0)) +
                                          ",A,B,1\n2020-01-06T00:00:00Z,A,B,1\n");
    try {
        load_transactions(dir.file("mixed.csv"), start, 1);
        FAIL() << "expected error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(TransactionsFile, MalformedRowsReportLineNumbers)
{
    TempDir dir("ingest");
    const std::string header = "timestamp,source,destination,amount\n";
    const std::vector<std::pair<std::string, std::string>> bad{
        {header + "2020-01-06T00:00:00Z,A,B,1\n2020-01-06T00:00:00Z,A,B\n", "line 3"},
        {header + "2020-01-06T00:00:00Z,A,B,abc\n", "line 2"},
        {header + "2020-01-06T00:00:00Z,A,B,-1\n", "line 2"},
        {header + "2020-13-06T00:00:00Z,A,B,1\n", "line 2"},
        {header + "\n2020-01-06T00:00:00Z,,B,1\n", "line 3"},
    };
    for (const auto& [text, where] : bad) {
        write_text(dir.file("bad.csv"), text);
        try {
            load_transactions(dir.file("bad.csv"), start, 1);
            ADD_FAILURE() << "expected error for " << text;
        } catch (const Error& e) {
            EXPECT_NE(std::string(e.what()).find(where), std::string::npos) << e.what();
        }
    }
    write_text(dir.file("hdr.csv"), "time,src,dst,amount\n");
    EXPECT_THROW(load_transactions(dir.file("hdr.csv"), start, 1), Error);
    EXPECT_THROW(load_transactions(dir.file("missing.csv"), start, 1), Error);
}

TEST(TransactionsFile, WriteReadRoundTripAndRerunsAreIdentical)
{
    TempDir dir("ingest");
    SynthSpec spec;
    spec.num_weeks = 4;
    spec.num_nodes = 12;
    spec.bubble_weeks = {1};
    const auto records = generate(spec).transactions;
    for (const auto fmt : {TimestampFormat::Iso8601, TimestampFormat::UnixSeconds}) {
        write_transactions(dir.file("tx.csv"), records, fmt);
        const auto back = read_transactions(dir.file("tx.csv"));
        ASSERT_EQ(back.size(), records.size());
        for (std::size_t k = 0; k < records.size(); ++k) {
            EXPECT_EQ(back[k].timestamp, records[k].timestamp);
            EXPECT_EQ(back[k].amount, records[k].amount);
        }
        const auto a = load_transactions(dir.file("tx.csv"), start, 4);
        const auto b = load_transactions(dir.file("tx.csv"), start, 4);
        for (int w = 0; w < 4; ++w)
            EXPECT_EQ(a.networks[w].edges, b.networks[w].edges);
        EXPECT_EQ(a.counters.used, records.size());
    }
}

TEST(RegularNodes, IntersectionSortedLexicographically)
{
    std::vector<WeeklyNetwork> nets(3);
    nets[0].add("X", "Y", 1);
    nets[0].add("b", "Z", 1);
    nets[1].add("X", "Y", 1);
    nets[1].add("Z", "b", 1);
    nets[2].add("X", "Z", 1);
    nets[2].add("b", "X", 1);
    const auto idx = regular_nodes(nets);
    EXPECT_EQ(idx.wallets, (std::vector<std::string>{"X", "Z", "b"}));
}

TEST(RegularNodes, EmptyIntersectionIsAnError)
{
    std::vector<WeeklyNetwork> nets(2);
    nets[0].add("A", "B", 1);
    nets[1].add("C", "D", 1);
    try {
        regular_nodes(nets);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("no regular nodes"), std::string::npos);
    }
    EXPECT_THROW(regular_nodes({}), Error);
}

TEST(RegularNodes, InvariantUnderRecordOrder)
{
    SynthSpec spec;
    spec.num_weeks = 5;
    spec.num_nodes = 15;
    spec.bubble_weeks = {2};
    auto records = generate(spec).transactions;
    const auto a = regular_nodes(bin_transactions(records, start, 5).networks);
    std::mt19937_64 eng(11);
    portable_shuffle(records.begin(), records.end(), eng);
    const auto b = regular_nodes(bin_transactions(records, start, 5).networks);
    EXPECT_EQ(a.wallets, b.wallets);
}

TEST(NetworkStats, DirectCount)
{
    WeeklyNetwork net;
    net.add("A", "B", 10);
    net.add("B", "C", 20);
    net.add("C", "D", 30);
    net.add("D", "A", 15);
    net.add("A", "C", 15);
    net.add("B", "D", 10);
    WeeklyNetwork empty;
    empty.week_index = 1;
    const auto rows = network_stats({net, empty});
    EXPECT_EQ(rows[0].nodes, 4u);
    EXPECT_EQ(rows[0].links_per_node, 1.5);
    EXPECT_EQ(rows[0].total_volume, 100.0);
    EXPECT_EQ(rows[1].nodes, 0u);
    EXPECT_EQ(rows[1].links_per_node, 0.0);
    EXPECT_EQ(rows[1].total_volume, 0.0);
    EXPECT_THROW(network_stats({}), Error);
}

TEST(NetworkStats, MatchesRecountOfSyntheticRecords)
{
    SynthSpec spec;
    spec.num_weeks = 10;
    spec.num_nodes = 30;
    spec.bubble_weeks = {4, 5};
    const auto out = generate(spec);
    const auto rows = network_stats(bin_transactions(out.transactions, start, 10).networks);

    // independent recount straight from the emitted records
    std::vector<std::set<std::string>> nodes(10);
    std::vector<std::set<std::pair<std::string, std::string>>> links(10);
    std::vector<double> volume(10, 0.0);
    for (const auto& r : out.transactions) {
        const auto w = (r.timestamp - ts(0)) / (7 * day);
        ASSERT_GE(w, 0);
        ASSERT_LT(w, 10);
        nodes[w].insert(r.source);
        nodes[w].insert(r.destination);
        links[w].insert({r.source, r.destination});
        volume[w] += r.amount;
    }
    for (int w = 0; w < 10; ++w) {
        EXPECT_EQ(rows[w].nodes, nodes[w].size());
        EXPECT_DOUBLE_EQ(rows[w].links_per_node, double(links[w].size()) / double(nodes[w].size()));
        EXPECT_NEAR(rows[w].total_volume, volume[w], 1e-9 * volume[w]);
    }
}

TEST(Prices, WeeklyMean)
{
    PriceSeries p;
    for (int d = 0; d < 7; ++d) {
        p.dates.push_back(start + std::chrono::days{d});
        p.close.push_back(d + 1.0);
    }
    p.dates.push_back(start + std::chrono::days{10});
    p.close.push_back(0.25);
    const auto w = weekly_mean_price(p, start, 2);
    EXPECT_EQ(w.mean[0], 4.0);
    EXPECT_EQ(w.mean[1], 0.25);
    EXPECT_EQ(w.observed_days[1], 1);
    EXPECT_EQ(w.missing_days(), 6);
}

TEST(Prices, EmptyWeekIsNamed)
{
    PriceSeries p;
    p.dates.push_back(start);
    p.close.push_back(1.0);
    try {
        weekly_mean_price(p, start, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("week 1"), std::string::npos) << e.what();
    }
}

TEST(Prices, FileRoundTripAndValidation)
{
    TempDir dir("prices");
    write_text(dir.file("p.csv"), "date,close\n2020-01-06,0.2\n2020-01-07,0.25\n");
    const auto p = load_prices(dir.file("p.csv"));
    ASSERT_EQ(p.close.size(), 2u);
    write_prices(dir.file("q.csv"), p);
    const auto q = load_prices(dir.file("q.csv"));
    EXPECT_EQ(q.close, p.close);
    EXPECT_EQ(q.dates, p.dates);
    write_text(dir.file("dup.csv"), "date,close\n2020-01-07,0.2\n2020-01-06,0.25\n");
    EXPECT_THROW(load_prices(dir.file("dup.csv")), Error);
    write_text(dir.file("neg.csv"), "date,close\n2020-01-07,-0.2\n");
    EXPECT_THROW(load_prices(dir.file("neg.csv")), Error);
}

TEST(NetworkFile, RoundTripIsExact)
{
    TempDir dir("net");
    WeeklyNetwork net;
    net.week_index = 3;
    net.add("A", "B", 0.1 + 0.2);
    net.add("B", "C", 1e11 / 3.0);
    write_network(dir.file("n.csv"), net);
    const auto back = read_network(dir.file("n.csv"), 3);
    EXPECT_EQ(back.edges, net.edges);
    EXPECT_EQ(back.nodes, net.nodes);
}
