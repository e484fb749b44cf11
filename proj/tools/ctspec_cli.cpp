// ctspec: correlation-tensor spectra pipeline.
//
//   ctspec <subcommand> --config run.json [--threads N] [--seed S]
//
// Subcommands: synth, ingest, embed, spectra, null, analyze, drivers, all.

#include <iostream>
#include <optional>
#include <string>

#include <omp.h>

#include <CLI11.hpp>

#include "ctspec/pipeline.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Correlation-tensor spectra of weekly transaction-network embeddings"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path;
    int threads = 0;
    std::optional< std::uint64_t > seed;
    app.add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    app.add_option("--threads", threads, "Worker threads (0: OpenMP default)")->check(CLI::NonNegativeNumber);
    app.add_option("--seed", seed, "Override the master seed");

    for (const char* name : {"synth", "ingest", "embed", "spectra", "null", "analyze", "drivers", "all"})
        app.add_subcommand(name);

    CLI11_PARSE(app, argc, argv);

    try {
        auto config = ctspec::load_config(config_path);
        if (seed)
            config.seed = *seed;
        if (threads > 0)
            omp_set_num_threads(threads);
        ctspec::run_stage(app.get_subcommands().front()->get_name(), config, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
