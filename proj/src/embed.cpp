#include "ctspec/embed.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "ctspec/common.hpp"

namespace ctspec
{
namespace
{

struct Adjacency
{
    // CSR: targets of node u are targets[offset[u] .. offset[u + 1]), sorted.
    std::vector<std::size_t> offset;
    std::vector<int> targets;
    std::vector<double> cumulative; // running weight sum within each row

    std::size_t degree(int u) const { return offset[u + 1] - offset[u]; }

    bool has_edge(int u, int v) const
    {
        const auto first = targets.begin() + static_cast<std::ptrdiff_t>(offset[u]);
        const auto last = targets.begin() + static_cast<std::ptrdiff_t>(offset[u + 1]);
        return std::binary_search(first, last, v);
    }
};

Adjacency build_adjacency(const WeeklyNetwork& network, const std::vector<std::string>& nodes, bool directed)
{
    auto id = [&](const std::string& w) {
        return static_cast<int>(std::lower_bound(nodes.begin(), nodes.end(), w) - nodes.begin());
    };
    std::vector<std::vector<std::pair<int, double>>> rows(nodes.size());
    for (const auto& [pair, w] : network.edges) {
        const int s = id(pair.first);
        const int d = id(pair.second);
        rows[static_cast<std::size_t>(s)].emplace_back(d, w);
        if (!directed)
            rows[static_cast<std::size_t>(d)].emplace_back(s, w);
    }
    Adjacency adj;
    adj.offset.push_back(0);
    for (auto& row : rows) {
        std::sort(row.begin(), row.end());
        double running = 0.0;
        for (std::size_t k = 0; k < row.size(); ++k) {
            // merge duplicates produced by symmetrization
            if (!adj.targets.empty() && k > 0 && row[k].first == row[k - 1].first) {
                running += row[k].second;
                adj.cumulative.back() = running;
                continue;
            }
            running += row[k].second;
            adj.targets.push_back(row[k].first);
            adj.cumulative.push_back(running);
        }
        adj.offset.push_back(adj.targets.size());
    }
    return adj;
}

int sample_neighbor(const Adjacency& adj, int u, std::mt19937_64& eng)
{
    const auto first = adj.cumulative.begin() + static_cast<std::ptrdiff_t>(adj.offset[u]);
    const auto last = adj.cumulative.begin() + static_cast<std::ptrdiff_t>(adj.offset[u + 1]);
    const double x = uniform01(eng) * *(last - 1);
    auto it = std::upper_bound(first, last, x);
    if (it == last)
        --it;
    return adj.targets[static_cast<std::size_t>(it - adj.cumulative.begin())];
}

int sample_biased(const Adjacency& adj, int prev, int u, const Node2VecParams& params, std::mt19937_64& eng,
                  std::vector<double>& scratch)
{
    const auto begin = adj.offset[u];
    const auto end = adj.offset[u + 1];
    scratch.resize(end - begin);
    double total = 0.0;
    for (auto k = begin; k < end; ++k) {
        const double w = adj.cumulative[k] - (k == begin ? 0.0 : adj.cumulative[k - 1]);
        const int next = adj.targets[k];
        double bias = 1.0 / params.q;
        if (next == prev)
            bias = 1.0 / params.p;
        else if (adj.has_edge(prev, next))
            bias = 1.0;
        total += w * bias;
        scratch[k - begin] = total;
    }
    const double x = uniform01(eng) * total;
    auto it = std::upper_bound(scratch.begin(), scratch.end(), x);
    if (it == scratch.end())
        --it;
    return adj.targets[begin + static_cast<std::size_t>(it - scratch.begin())];
}

double sigmoid(double x)
{
    return 1.0 / (1.0 + std::exp(-x));
}

} // namespace

void Node2VecParams::validate() const
{
    if (!(p > 0.0) || !(q > 0.0))
        throw Error("embedding: p and q must be positive");
    if (walks_per_node < 1 || walk_length < 1 || context_window < 1 || negative_samples < 1 || epochs < 1)
        throw Error("embedding: walk and training counts must be positive");
    if (!(learning_rate > 0.0))
        throw Error("embedding: learning_rate must be positive");
    if (dim < 2)
        throw Error("embedding: dim must be >= 2");
    if (!(negative_power > 0.0))
        throw Error("embedding: negative_power must be positive");
}

WalkCorpus generate_walks(const WeeklyNetwork& network, const Node2VecParams& params, std::uint64_t seed)
{
    params.validate();
    if (network.edges.empty())
        throw Error("week " + std::to_string(network.week_index) + ": cannot embed a network without edges");
    WalkCorpus corpus;
    corpus.nodes.assign(network.nodes.begin(), network.nodes.end());
    const auto adj = build_adjacency(network, corpus.nodes, params.directed);
    const bool unbiased = params.p == 1.0 && params.q == 1.0;

    std::mt19937_64 eng(seed);
    std::vector<int> order(corpus.nodes.size());
    std::vector<double> scratch;
    corpus.walks.reserve(order.size() * static_cast<std::size_t>(params.walks_per_node));
    for (int pass = 0; pass < params.walks_per_node; ++pass) {
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = static_cast<int>(i);
        portable_shuffle(order.begin(), order.end(), eng);
        for (const int start : order) {
            std::vector<int> walk{start};
            walk.reserve(static_cast<std::size_t>(params.walk_length));
            while (static_cast<int>(walk.size()) < params.walk_length) {
                const int cur = walk.back();
                if (adj.degree(cur) == 0)
                    break;
                if (walk.size() == 1 || unbiased)
                    walk.push_back(sample_neighbor(adj, cur, eng));
                else
                    walk.push_back(sample_biased(adj, walk[walk.size() - 2], cur, params, eng, scratch));
            }
            corpus.walks.push_back(std::move(walk));
        }
    }
    return corpus;
}

Eigen::MatrixXd train_skipgram(const WalkCorpus& corpus, const Node2VecParams& params, std::uint64_t seed)
{
    params.validate();
    const auto n = static_cast<Eigen::Index>(corpus.nodes.size());
    const Eigen::Index D = params.dim;
    std::mt19937_64 eng(seed);

    // Input vectors (columns) start uniform in [-0.5, 0.5) / D; output vectors at zero.
    Eigen::MatrixXd syn0(D, n);
    for (Eigen::Index c = 0; c < n; ++c)
        for (Eigen::Index r = 0; r < D; ++r)
            syn0(r, c) = (uniform01(eng) - 0.5) / double(D);
    Eigen::MatrixXd syn1 = Eigen::MatrixXd::Zero(D, n);

    // Negative-sampling distribution: corpus frequency ^ power.
    std::vector<double> freq(static_cast<std::size_t>(n), 0.0);
    std::size_t tokens = 0;
    for (const auto& walk : corpus.walks) {
        for (const int v : walk)
            freq[static_cast<std::size_t>(v)] += 1.0;
        tokens += walk.size();
    }
    std::vector<double> cumulative(freq.size());
    double total = 0.0;
    for (std::size_t v = 0; v < freq.size(); ++v) {
        total += std::pow(freq[v], params.negative_power);
        cumulative[v] = total;
    }
    auto draw_negative = [&]() {
        const double x = uniform01(eng) * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
        if (it == cumulative.end())
            --it;
        return static_cast<Eigen::Index>(it - cumulative.begin());
    };

    const double total_steps = double(params.epochs) * double(std::max<std::size_t>(tokens, 1));
    double processed = 0.0;
    std::vector<double> hidden_error(static_cast<std::size_t>(D));
    double* const in_vec = syn0.data();
    double* const out_vec = syn1.data();
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        for (const auto& walk : corpus.walks) {
            const auto len = static_cast<long>(walk.size());
            for (long pos = 0; pos < len; ++pos, processed += 1.0) {
                const double lr = params.learning_rate * std::max(1e-4, 1.0 - processed / total_steps);
                const auto center = static_cast<Eigen::Index>(walk[static_cast<std::size_t>(pos)]);
                const long reach = params.context_window -
                                   static_cast<long>(uniform_index(eng, static_cast<std::uint64_t>(params.context_window)));
                for (long c = pos - reach; c <= pos + reach; ++c) {
                    if (c < 0 || c >= len || c == pos)
                        continue;
                    double* const l1 = in_vec + D * walk[static_cast<std::size_t>(c)];
                    std::fill(hidden_error.begin(), hidden_error.end(), 0.0);
                    for (int d = 0; d <= params.negative_samples; ++d) {
                        Eigen::Index target = center;
                        double label = 1.0;
                        if (d > 0) {
                            target = draw_negative();
                            if (target == center)
                                continue;
                            label = 0.0;
                        }
                        double* const l2 = out_vec + D * target;
                        double f = 0.0;
                        for (Eigen::Index r = 0; r < D; ++r)
                            f += l1[r] * l2[r];
                        const double g = (label - sigmoid(f)) * lr;
                        for (Eigen::Index r = 0; r < D; ++r) {
                            hidden_error[static_cast<std::size_t>(r)] += g * l2[r];
                            l2[r] += g * l1[r];
                        }
                    }
                    for (Eigen::Index r = 0; r < D; ++r)
                        l1[r] += hidden_error[static_cast<std::size_t>(r)];
                }
            }
        }
    }
    return syn0.transpose();
}

Eigen::Index WeekEmbedding::row(const std::string& wallet) const
{
    const auto it = std::lower_bound(nodes.begin(), nodes.end(), wallet);
    if (it == nodes.end() || *it != wallet)
        throw Error("wallet '" + wallet + "' is not in this week's network");
    return static_cast<Eigen::Index>(it - nodes.begin());
}

WeekEmbedding embed_week(const WeeklyNetwork& network, const Node2VecParams& params, std::uint64_t seed)
{
    auto corpus = generate_walks(network, params, derive_seed(seed, 0));
    WeekEmbedding out;
    out.vectors = train_skipgram(corpus, params, derive_seed(seed, 1));
    out.nodes = std::move(corpus.nodes);
    if (!out.vectors.allFinite())
        throw Error("week " + std::to_string(network.week_index) + ": embedding diverged");
    return out;
}

Eigen::MatrixXd procrustes_rotation(const Eigen::MatrixXd& current, const Eigen::MatrixXd& reference)
{
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(current.transpose() * reference, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().transpose();
}

EmbeddingSeries embed_series(const std::vector<WeeklyNetwork>& networks, const RegularNodeIndex& index,
                             const Node2VecParams& params, std::uint64_t seed, const EmbedOptions& options)
{
    params.validate();
    EmbeddingSeries series;
    series.seed = seed;
    series.weeks.resize(networks.size());
    const auto N = static_cast<Eigen::Index>(index.size());
    const auto T = static_cast<long>(networks.size());
    std::vector<std::string> errors(networks.size());

#pragma omp parallel for schedule(dynamic)
    for (long w = 0; w < T; ++w) {
        const auto& net = networks[static_cast<std::size_t>(w)];
        try {
            const auto emb = embed_week(net, params, derive_seed(seed, static_cast<std::uint64_t>(net.week_index)));
            Eigen::MatrixXd rows(N, params.dim);
            for (Eigen::Index i = 0; i < N; ++i)
                rows.row(i) = emb.vectors.row(emb.row(index.wallets[static_cast<std::size_t>(i)]));
            series.weeks[static_cast<std::size_t>(w)] = std::move(rows);
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(w)] = "week " + std::to_string(net.week_index) + ": " + e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty())
            throw Error(e);

    if (options.procrustes)
        for (std::size_t w = 1; w < series.weeks.size(); ++w)
            series.weeks[w] = series.weeks[w] * procrustes_rotation(series.weeks[w], series.weeks[w - 1]);
    return series;
}

std::vector<EmbeddingSeries> embed_ensemble(const std::vector<WeeklyNetwork>& networks, const RegularNodeIndex& index,
                                            const Node2VecParams& params, const std::vector<std::uint64_t>& seeds,
                                            const EmbedOptions& options)
{
    if (seeds.empty())
        throw Error("embedding ensemble needs at least one seed");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
        throw Error("embedding ensemble seeds must be distinct");
    std::vector<EmbeddingSeries> out;
    out.reserve(seeds.size());
    for (const auto s : seeds)
        out.push_back(embed_series(networks, index, params, s, options));
    return out;
}

} // namespace ctspec
