#ifndef CTSPEC_PIPELINE_HPP
#define CTSPEC_PIPELINE_HPP

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctspec/embed.hpp"
#include "ctspec/synth.hpp"

namespace ctspec
{

//
// Run configuration, loaded from JSON. Sections mirror the modules:
//
//   {
//     "seed": 1,
//     "paths":     {"transactions", "prices", "ground_truth", "output"},
//     "ingest":    {"start_date", "num_weeks"},
//     "embedding": Node2VecParams fields plus "procrustes", "deterministic",
//     "ensemble":  {"size"},
//     "tensor":    {"delta_t", "dense"},
//     "null":      {"num_nodes", "dim", "sigma_g", "dense_entry_cap"},
//     "analysis":  {"max_lag", "delta_tau"},
//     "drivers":   {"threshold", "margin", "week"},
//     "synth":     SynthSpec fields except the seed
//   }
//
// Every key is optional; unknown keys are rejected.
//
struct RunConfig
{
    std::uint64_t seed = 1;

    struct Paths
    {
        std::string transactions = "data/transactions.csv";
        std::string prices = "data/prices.csv";
        std::string ground_truth = "data/ground_truth.json";
        std::string output = "out";
    } paths;

    struct Ingest
    {
        std::string start_date = "2020-01-06";
        int num_weeks = 103;
    } ingest;

    Node2VecParams embedding;
    bool procrustes = false;
    bool deterministic = true;

    int ensemble_size = 1;

    struct Tensor
    {
        int delta_t = 2;
        bool dense = false;
    } tensor;

    struct Null
    {
        int num_nodes = 64;
        int dim = 8;
        double sigma_g = 0.5;
        std::uint64_t dense_entry_cap = std::uint64_t{1} << 27;
    } null;

    struct Analysis
    {
        int max_lag = 8;
        int delta_tau = 4;
    } analysis;

    struct Drivers
    {
        double threshold = 0.05;
        double margin = 10.0;
        int week = -1; // center week; -1 picks the week with the largest rho_1^1
    } drivers;

    SynthSpec synth;

    void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::string& path);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t h);
std::uint64_t file_hash(const std::string& path);

// Hash of the canonical JSON form without `paths` (locations are not
// semantic; input contents enter the stage keys instead).
std::string config_hash(const RunConfig& config);

// Stage seeds, all derived from the master seed.
std::uint64_t ensemble_seed(const RunConfig& config, int member);
std::uint64_t reshuffle_seed(const RunConfig& config);
std::uint64_t null_seed(const RunConfig& config);
std::uint64_t synth_seed(const RunConfig& config);

enum class StageResult
{
    Computed,
    CacheHit
};

StageResult run_synth(const RunConfig& config, std::ostream& log);
StageResult run_ingest(const RunConfig& config, std::ostream& log);
StageResult run_embed(const RunConfig& config, std::ostream& log);
StageResult run_spectra(const RunConfig& config, std::ostream& log);
StageResult run_null(const RunConfig& config, std::ostream& log);
StageResult run_analyze(const RunConfig& config, std::ostream& log);
StageResult run_drivers(const RunConfig& config, std::ostream& log);

// ingest, embed, spectra, null, analyze, drivers.
std::vector<StageResult> run_all(const RunConfig& config, std::ostream& log);

// Dispatch by subcommand name.
void run_stage(const std::string& name, const RunConfig& config, std::ostream& log);

} // namespace ctspec

#endif // CTSPEC_PIPELINE_HPP
