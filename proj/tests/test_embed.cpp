#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include <omp.h>

#include "ctspec/common.hpp"
#include "ctspec/embed.hpp"
#include "ctspec/synth.hpp"
#include "test_util.hpp"

using namespace ctspec;
using ctspec::testing::TempDir;

namespace
{

WeeklyNetwork two_cliques(double bridge)
{
    WeeklyNetwork net;
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j)
                if (i != j)
                    net.add("c" + std::to_string(c) + "_" + std::to_string(i),
                            "c" + std::to_string(c) + "_" + std::to_string(j), 1.0);
    net.add("c0_0", "c1_0", bridge);
    net.add("c1_0", "c0_0", bridge);
    return net;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    return a.dot(b) / (a.norm() * b.norm());
}

std::vector<WeeklyNetwork> synth_networks(int weeks, int nodes)
{
    SynthSpec spec;
    spec.num_weeks = weeks;
    spec.num_nodes = nodes;
    spec.bubble_weeks = {0};
    return bin_transactions(generate(spec).transactions, parse_date(spec.start_date), weeks).networks;
}

Node2VecParams small_params()
{
    Node2VecParams p;
    p.dim = 8;
    p.walk_length = 20;
    p.walks_per_node = 4;
    p.epochs = 2;
    return p;
}

} // namespace

TEST(Node2VecParams, Validation)
{
    Node2VecParams p;
    EXPECT_NO_THROW(p.validate());
    EXPECT_EQ(p.dim, 32);
    for (auto mutate : std::vector<std::function<void(Node2VecParams&)>>{
             [](auto& x) { x.p = 0; }, [](auto& x) { x.q = -1; }, [](auto& x) { x.dim = 1; },
             [](auto& x) { x.epochs = 0; }, [](auto& x) { x.learning_rate = 0; }, [](auto& x) { x.walk_length = 0; },
             [](auto& x) { x.negative_power = 0; }}) {
        Node2VecParams bad;
        mutate(bad);
        EXPECT_THROW(bad.validate(), Error);
    }
}

TEST(Walks, HubAppearsInEveryWalkFromALeaf)
{
    WeeklyNetwork star;
    for (int k = 0; k < 6; ++k) {
        star.add("leaf" + std::to_string(k), "hub", 1.0 + k);
        star.add("hub", "leaf" + std::to_string(k), 2.0);
    }
    const auto corpus = generate_walks(star, Node2VecParams{}, 3);
    const auto hub = std::find(corpus.nodes.begin(), corpus.nodes.end(), "hub") - corpus.nodes.begin();
    int checked = 0;
    for (const auto& w : corpus.walks) {
        if (w.front() == hub)
            continue;
        ASSERT_GE(w.size(), 2u);
        EXPECT_NE(std::find(w.begin(), w.end(), hub), w.end());
        ++checked;
    }
    EXPECT_EQ(checked, 6 * Node2VecParams{}.walks_per_node);
}

TEST(Walks, FollowOutEdgesAndStopAtSinks)
{
    WeeklyNetwork chain;
    chain.add("A", "B", 1.0);
    chain.add("B", "C", 1.0);
    Node2VecParams p;
    p.walks_per_node = 3;
    const auto corpus = generate_walks(chain, p, 1);
    ASSERT_EQ(corpus.walks.size(), 9u);
    for (const auto& w : corpus.walks) {
        EXPECT_EQ(w.size(), static_cast<std::size_t>(3 - w.front()));
        for (std::size_t k = 1; k < w.size(); ++k)
            EXPECT_EQ(w[k], w[k - 1] + 1);
    }
    p.directed = false;
    const auto sym = generate_walks(chain, p, 1);
    for (const auto& w : sym.walks)
        EXPECT_EQ(w.size(), 80u);
}

TEST(Walks, TransitionProbabilityFollowsWeights)
{
    WeeklyNetwork net;
    net.add("A", "B", 1.0);
    net.add("A", "C", 3.0);
    Node2VecParams p;
    p.walks_per_node = 4000;
    p.walk_length = 2;
    const auto corpus = generate_walks(net, p, 2);
    int to_c = 0, from_a = 0;
    for (const auto& w : corpus.walks)
        if (w.front() == 0) {
            ++from_a;
            to_c += w[1] == 2;
        }
    EXPECT_EQ(from_a, 4000);
    EXPECT_NEAR(double(to_c) / from_a, 0.75, 0.03);
}

TEST(Walks, ReturnAndInOutBias)
{
    WeeklyNetwork path;
    path.add("A", "B", 1.0);
    path.add("B", "A", 1.0);
    path.add("B", "C", 1.0);
    path.add("C", "B", 1.0);
    Node2VecParams p;
    p.walk_length = 3;
    p.walks_per_node = 2000;
    auto fraction_returning = [&](double pp, double qq) {
        p.p = pp;
        p.q = qq;
        const auto corpus = generate_walks(path, p, 4);
        int n = 0, ret = 0;
        for (const auto& w : corpus.walks)
            if (w[0] == 0) { // A -> B -> ?
                ++n;
                ret += w[2] == 0;
            }
        return double(ret) / n;
    };
    EXPECT_GT(fraction_returning(0.01, 1.0), 0.95);
    EXPECT_LT(fraction_returning(1.0, 0.01), 0.05);
    EXPECT_NEAR(fraction_returning(1.0, 1.0), 0.5, 0.05);
}

TEST(Walks, EmptyNetworkIsAnError)
{
    WeeklyNetwork empty;
    empty.week_index = 4;
    EXPECT_THROW(generate_walks(empty, Node2VecParams{}, 1), Error);
}

TEST(EmbedWeek, Deterministic)
{
    const auto nets = synth_networks(1, 20);
    const auto a = embed_week(nets[0], small_params(), 99);
    const auto b = embed_week(nets[0], small_params(), 99);
    EXPECT_EQ(a.nodes, b.nodes);
    EXPECT_TRUE((a.vectors.array() == b.vectors.array()).all());
    const auto c = embed_week(nets[0], small_params(), 100);
    EXPECT_FALSE((a.vectors.array() == c.vectors.array()).all());
}

TEST(EmbedWeek, ShapeAndNonZeroNorms)
{
    const auto nets = synth_networks(1, 20);
    Node2VecParams p = small_params();
    p.dim = 32;
    const auto e = embed_week(nets[0], p, 1);
    EXPECT_EQ(e.vectors.rows(), static_cast<Eigen::Index>(nets[0].nodes.size()));
    EXPECT_EQ(e.vectors.cols(), 32);
    EXPECT_TRUE(e.vectors.allFinite());
    EXPECT_GT(e.vectors.rowwise().norm().minCoeff(), 0.0);
    EXPECT_THROW(e.row("nobody"), Error);
}

TEST(EmbedWeek, TwoCliquesSeparate)
{
    const auto net = two_cliques(0.01);
    Node2VecParams p;
    p.dim = 16;
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto e = embed_week(net, p, seed);
        double intra = 0.0, inter = 0.0;
        int n_intra = 0, n_inter = 0;
        for (std::size_t i = 0; i < e.nodes.size(); ++i)
            for (std::size_t j = i + 1; j < e.nodes.size(); ++j) {
                const double c = cosine(e.vectors.row(i).transpose(), e.vectors.row(j).transpose());
                if (e.nodes[i].substr(0, 2) == e.nodes[j].substr(0, 2)) {
                    intra += c;
                    ++n_intra;
                } else {
                    inter += c;
                    ++n_inter;
                }
            }
        ok += intra / n_intra > inter / n_inter;
    }
    EXPECT_GE(ok, 95);
}

TEST(EmbedSeries, ShapeAndSeedContract)
{
    const auto nets = synth_networks(3, 15);
    const auto idx = regular_nodes(nets);
    const auto a = embed_series(nets, idx, small_params(), 5);
    EXPECT_EQ(a.num_weeks(), 3);
    EXPECT_EQ(a.num_nodes(), static_cast<Eigen::Index>(idx.size()));
    EXPECT_EQ(a.dim(), 8);
    EXPECT_TRUE(a.is_finite());
    const auto b = embed_series(nets, idx, small_params(), 6);
    EXPECT_EQ(b.num_weeks(), 3);
    EXPECT_FALSE((a.weeks[0].array() == b.weeks[0].array()).all());
    // rows are the regular nodes of each week's own embedding
    const auto w1 = embed_week(nets[1], small_params(), derive_seed(5, 1));
    EXPECT_TRUE((a.weeks[1].row(2).array() == w1.vectors.row(w1.row(idx.wallets[2])).array()).all());
}

TEST(EmbedSeries, IndependentOfThreadCount)
{
    const auto nets = synth_networks(4, 15);
    const auto idx = regular_nodes(nets);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto a = embed_series(nets, idx, small_params(), 8);
    omp_set_num_threads(4);
    const auto b = embed_series(nets, idx, small_params(), 8);
    omp_set_num_threads(saved);
    for (int t = 0; t < 4; ++t)
        EXPECT_TRUE((a.weeks[t].array() == b.weeks[t].array()).all());
}

TEST(EmbedSeries, ErrorsNameTheWeek)
{
    auto nets = synth_networks(3, 15);
    const auto idx = regular_nodes(nets);
    nets[2].edges.clear();
    try {
        embed_series(nets, idx, small_params(), 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("week 2"), std::string::npos) << e.what();
    }
}

TEST(EmbedSeries, ProcrustesAlignsConsecutiveWeeks)
{
    const auto nets = synth_networks(3, 20);
    const auto idx = regular_nodes(nets);
    const auto raw = embed_series(nets, idx, small_params(), 2);
    const auto aligned = embed_series(nets, idx, small_params(), 2, EmbedOptions{true});
    EXPECT_TRUE((raw.weeks[0].array() == aligned.weeks[0].array()).all());
    for (int t = 1; t < 3; ++t) {
        EXPECT_LE((aligned.weeks[t] - aligned.weeks[t - 1]).norm(), (raw.weeks[t] - aligned.weeks[t - 1]).norm());
        // rotation preserves row norms
        EXPECT_LT((aligned.weeks[t].rowwise().norm() - raw.weeks[t].rowwise().norm()).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Procrustes, RecoversAKnownRotation)
{
    std::mt19937_64 eng(3);
    std::normal_distribution<double> n;
    Eigen::MatrixXd x(30, 5);
    for (Eigen::Index k = 0; k < x.size(); ++k)
        x.data()[k] = n(eng);
    Eigen::MatrixXd g(5, 5);
    for (Eigen::Index k = 0; k < g.size(); ++k)
        g.data()[k] = n(eng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    const Eigen::MatrixXd r = procrustes_rotation(x * q, x);
    EXPECT_LT((x * q * r - x).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ensemble, SeedsMustBeDistinctAndNonEmpty)
{
    const auto nets = synth_networks(2, 12);
    const auto idx = regular_nodes(nets);
    EXPECT_THROW(embed_ensemble(nets, idx, small_params(), {3, 3}), Error);
    EXPECT_THROW(embed_ensemble(nets, idx, small_params(), {}), Error);
    const auto e = embed_ensemble(nets, idx, small_params(), {3, 4});
    ASSERT_EQ(e.size(), 2u);
    EXPECT_EQ(e[1].seed, 4u);
}

TEST(EmbeddingCache, BitExactRoundTrip)
{
    TempDir dir("cache");
    Eigen::MatrixXd m(3, 4);
    m << 0.1, -0.0, 1e-310, 3.0, std::numeric_limits<double>::max(), -2.5, 1.0 / 3.0, 7, 8, 9, 10, -11;
    write_embedding_cache(dir.file("w.bin"), m, 0xDEADBEEFULL);
    const auto back = read_embedding_cache(dir.file("w.bin"));
    EXPECT_EQ(back.seed, 0xDEADBEEFULL);
    ASSERT_EQ(back.vectors.rows(), 3);
    ASSERT_EQ(back.vectors.cols(), 4);
    EXPECT_EQ(std::memcmp(back.vectors.data(), m.data(), sizeof(double) * 12), 0);
    EXPECT_EQ(std::filesystem::file_size(dir.file("w.bin")), 32u + 8u * 12u);
}

TEST(EmbeddingCache, LayoutIsLittleEndianRowMajor)
{
    TempDir dir("cache");
    Eigen::MatrixXd m(2, 2);
    m << 1.0, 2.0, 3.0, 4.0;
    write_embedding_cache(dir.file("w.bin"), m, 7);
    const auto bytes = ctspec::testing::read_text(dir.file("w.bin"));
    EXPECT_EQ(bytes.substr(0, 4), "CTSE");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[8], 2);
    EXPECT_EQ(bytes[16], 2);
    EXPECT_EQ(bytes[24], 7);
    double second = 0.0;
    std::memcpy(&second, bytes.data() + 40, 8); // host is little endian here
    EXPECT_EQ(second, 2.0);
}

TEST(EmbeddingCache, RejectsCorruptFiles)
{
    TempDir dir("cache");
    Eigen::MatrixXd m = Eigen::MatrixXd::Ones(2, 2);
    write_embedding_cache(dir.file("w.bin"), m, 1);
    auto bytes = ctspec::testing::read_text(dir.file("w.bin"));

    ctspec::testing::write_text(dir.file("magic.bin"), "XXXX" + bytes.substr(4));
    EXPECT_THROW(read_embedding_cache(dir.file("magic.bin")), Error);
    auto v = bytes;
    v[4] = 2;
    ctspec::testing::write_text(dir.file("version.bin"), v);
    EXPECT_THROW(read_embedding_cache(dir.file("version.bin")), Error);
    ctspec::testing::write_text(dir.file("short.bin"), bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(read_embedding_cache(dir.file("short.bin")), Error);
    ctspec::testing::write_text(dir.file("long.bin"), bytes + "x");
    EXPECT_THROW(read_embedding_cache(dir.file("long.bin")), Error);
    EXPECT_THROW(read_embedding_cache(dir.file("none.bin")), Error);
}
