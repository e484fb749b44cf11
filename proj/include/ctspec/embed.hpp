#ifndef CTSPEC_EMBED_HPP
#define CTSPEC_EMBED_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctspec/ingest.hpp"
#include "ctspec/series.hpp"

namespace ctspec
{

// node2vec settings. p = q = 1 is the unbiased (weighted first-order) walk.
struct Node2VecParams
{
    double p = 1.0;
    double q = 1.0;
    int walks_per_node = 10;
    int walk_length = 80;
    int context_window = 10;
    int negative_samples = 5;
    int epochs = 5;
    double learning_rate = 0.025;
    int dim = 32;
    double negative_power = 0.75;
    bool directed = true; // false: walks run on the symmetrized graph

    void validate() const;
};

// Random-walk corpus over one weekly network. Node ids index `nodes`, which
// is the network's node set in lexicographic order.
struct WalkCorpus
{
    std::vector<std::string> nodes;
    std::vector<std::vector<int>> walks;
};

WalkCorpus generate_walks(const WeeklyNetwork& network, const Node2VecParams& params, std::uint64_t seed);

struct WeekEmbedding
{
    std::vector<std::string> nodes; // lexicographic
    Eigen::MatrixXd vectors;        // one row per node, D columns

    // Row of `wallet`; throws if the wallet is not in the network.
    Eigen::Index row(const std::string& wallet) const;
};

// Skip-gram with negative sampling over a walk corpus. Single-threaded and
// bit-reproducible for a given seed.
Eigen::MatrixXd train_skipgram(const WalkCorpus& corpus, const Node2VecParams& params, std::uint64_t seed);

WeekEmbedding embed_week(const WeeklyNetwork& network, const Node2VecParams& params, std::uint64_t seed);

struct EmbedOptions
{
    // Rotate each week onto the previous one (orthogonal Procrustes over the
    // regular nodes). Off by default.
    bool procrustes = false;
};

// Per-week seed: derive_seed(seed, week_index). Weeks train in parallel; the
// result does not depend on the number of threads.
EmbeddingSeries embed_series(const std::vector<WeeklyNetwork>& networks, const RegularNodeIndex& index,
                             const Node2VecParams& params, std::uint64_t seed, const EmbedOptions& options = {});

std::vector<EmbeddingSeries> embed_ensemble(const std::vector<WeeklyNetwork>& networks, const RegularNodeIndex& index,
                                            const Node2VecParams& params, const std::vector<std::uint64_t>& seeds,
                                            const EmbedOptions& options = {});

// Rotation Q minimizing ||current * Q - reference||_F.
Eigen::MatrixXd procrustes_rotation(const Eigen::MatrixXd& current, const Eigen::MatrixXd& reference);

//
// Embedding cache, one file per week. Layout, all integers and reals little endian:
//
//   offset  size  field
//   0       4     magic "CTSE"
//   4       4     version (uint32, = 1)
//   8       8     N (uint64)
//   16      8     D (uint64)
//   24      8     seed (uint64)
//   32      8*N*D row-major float64 values
//
struct CachedEmbedding
{
    std::uint64_t seed = 0;
    Eigen::MatrixXd vectors;
};

void write_embedding_cache(const std::string& path, const Eigen::MatrixXd& vectors, std::uint64_t seed);
CachedEmbedding read_embedding_cache(const std::string& path);

} // namespace ctspec

#endif // CTSPEC_EMBED_HPP
