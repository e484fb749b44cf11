#include "ctspec/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "ctspec/analysis.hpp"
#include "ctspec/common.hpp"
#include "ctspec/csv.hpp"
#include "ctspec/ingest.hpp"
#include "ctspec/nullmodels.hpp"
#include "ctspec/spectra.hpp"
#include "ctspec/tensor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ctspec
{
namespace
{

// Bumped whenever an artifact format or algorithm changes.
constexpr const char* artifact_version = "ctspec-artifacts-1";

class SectionReader
{
public:
    SectionReader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix))
    {
        if (!j_.is_object())
            throw Error("config: " + (prefix_.empty() ? std::string("top level") : prefix_) + " must be an object");
    }

    template < typename T >
    void get(const std::string& key, T& dst)
    {
        seen_.insert(key);
        if (!j_.contains(key))
            return;
        try {
            dst = j_.at(key).get< T >();
        } catch (const json::exception&) {
            throw Error("config: " + name(key) + ": wrong value type");
        }
    }

    const json* section(const std::string& key)
    {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const
    {
        for (const auto& [k, v] : j_.items())
            if (!seen_.contains(k))
                throw Error("config: unknown key " + name(k));
    }

    std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

private:
    const json& j_;
    std::string prefix_;
    std::set< std::string > seen_;
};

void require(bool ok, const std::string& key, const std::string& what)
{
    if (!ok)
        throw Error("config: " + key + " " + what);
}

std::string week_file(int w, const char* ext)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "week_%03d.%s", w, ext);
    return buf;
}

std::string member_dir(int e)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "member_%02d", e);
    return buf;
}

std::string section_hash(const json& j)
{
    return hex64(fnv1a(j.dump()));
}

fs::path stage_dir(const RunConfig& c, const char* stage)
{
    return fs::path(c.paths.output) / stage;
}

//
// Manifests: {stage, key, config_hash, files: [{path, fnv1a}], ...}. Paths
// are relative to the stage directory. No timestamps, so reruns are
// byte-identical.
//

std::vector< std::string > list_files(const fs::path& dir)
{
    std::vector< std::string > files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file()) {
            auto rel = fs::relative(entry.path(), dir).generic_string();
            if (rel != "manifest.json")
                files.push_back(std::move(rel));
        }
    std::sort(files.begin(), files.end());
    return files;
}

std::optional< json > read_manifest(const fs::path& dir)
{
    const auto path = dir / "manifest.json";
    if (!fs::exists(path))
        return std::nullopt;
    std::ifstream in(path, std::ios::binary);
    try {
        return json::parse(in);
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

bool files_match(const json& files, const fs::path& base)
{
    if (!files.is_array())
        return false;
    for (const auto& f : files) {
        const auto path = (base / f.at("path").get< std::string >()).string();
        if (!fs::exists(path) || hex64(file_hash(path)) != f.at("fnv1a").get< std::string >())
            return false;
    }
    return true;
}

bool cache_hit(const fs::path& dir, const std::string& key)
{
    const auto m = read_manifest(dir);
    if (!m || !m->contains("key") || m->at("key") != key || !m->contains("files"))
        return false;
    try {
        return files_match(m->at("files"), dir);
    } catch (const std::exception&) {
        return false;
    }
}

json file_entries(const fs::path& dir, const std::vector< std::string >& rel)
{
    json files = json::array();
    for (const auto& f : rel)
        files.push_back({{"path", f}, {"fnv1a", hex64(file_hash((dir / f).string()))}});
    return files;
}

void write_manifest(const fs::path& dir, const char* stage, const std::string& key, const RunConfig& c, json extra)
{
    extra["stage"] = stage;
    extra["key"] = key;
    extra["config_hash"] = config_hash(c);
    extra["files"] = file_entries(dir, list_files(dir));
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    out << extra.dump(2) << '\n';
    if (!out)
        throw Error("cannot write manifest in " + dir.string());
}

fs::path fresh_dir(const RunConfig& c, const char* stage)
{
    const auto dir = stage_dir(c, stage);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Throws unless `stage` artifacts exist and were produced under `key`.
void require_stage(const RunConfig& c, const char* stage, const char* dir_name, const std::string& key)
{
    const auto dir = stage_dir(c, dir_name);
    const auto m = read_manifest(dir);
    if (!m)
        throw Error("missing " + std::string(dir_name) + " artifacts in " + dir.string() + "; run `" + stage +
                    "` first");
    if (!m->contains("key") || m->at("key") != key)
        throw Error(std::string(dir_name) + " artifacts in " + dir.string() +
                    " are stale for this configuration; run `" + stage + "` first");
}

StageResult report(std::ostream& log, const char* stage, StageResult r)
{
    log << stage << ": " << (r == StageResult::CacheHit ? "cache hit" : "computed") << '\n';
    return r;
}

//
// Stage keys. Each key hashes the stage's config section together with the
// keys of its inputs, so a change anywhere upstream invalidates it.
//

json embedding_json(const RunConfig& c)
{
    const auto& e = c.embedding;
    return {{"p", e.p},
            {"q", e.q},
            {"walks_per_node", e.walks_per_node},
            {"walk_length", e.walk_length},
            {"context_window", e.context_window},
            {"negative_samples", e.negative_samples},
            {"epochs", e.epochs},
            {"learning_rate", e.learning_rate},
            {"dim", e.dim},
            {"negative_power", e.negative_power},
            {"directed", e.directed},
            {"procrustes", c.procrustes},
            {"deterministic", c.deterministic}};
}

json synth_json(const SynthSpec& s)
{
    return {{"num_nodes", s.num_nodes},
            {"num_weeks", s.num_weeks},
            {"base_rate", s.base_rate},
            {"driver_fraction", s.driver_fraction},
            {"bubble_weeks", s.bubble_weeks},
            {"bubble_boost", s.bubble_boost},
            {"bubble_isolation", s.bubble_isolation},
            {"amount_scale", s.amount_scale},
            {"amount_log_sd", s.amount_log_sd},
            {"initial_price", s.initial_price},
            {"daily_volatility", s.daily_volatility},
            {"bubble_log_amplitude", s.bubble_log_amplitude},
            {"start_date", s.start_date}};
}

std::string input_hash(const std::string& path, const char* key)
{
    if (!fs::exists(path))
        throw Error("input file " + path + " (paths." + key + ") does not exist; run `synth` or fix the path");
    return hex64(file_hash(path));
}

std::string synth_key(const RunConfig& c)
{
    const json j = config_to_json(c);
    return section_hash({{"v", artifact_version}, {"stage", "synth"}, {"seed", synth_seed(c)}, {"synth", j["synth"]}});
}

std::string ingest_key(const RunConfig& c)
{
    const json j = config_to_json(c);
    return section_hash({{"v", artifact_version},
                         {"stage", "ingest"},
                         {"transactions", input_hash(c.paths.transactions, "transactions")},
                         {"prices", input_hash(c.paths.prices, "prices")},
                         {"ingest", j["ingest"]}});
}

std::string embed_key(const RunConfig& c)
{
    const json j = config_to_json(c);
    return section_hash({{"v", artifact_version},
                         {"stage", "embed"},
                         {"ingest", ingest_key(c)},
                         {"seed", c.seed},
                         {"embedding", j["embedding"]},
                         {"ensemble", j["ensemble"]}});
}

std::string spectra_key(const RunConfig& c)
{
    const json j = config_to_json(c);
    return section_hash({{"v", artifact_version},
                         {"stage", "spectra"},
                         {"embed", embed_key(c)},
                         {"seed", c.seed},
                         {"tensor", j["tensor"]}});
}

std::string null_key(const RunConfig& c)
{
    const json j = config_to_json(c);
    return section_hash({{"v", artifact_version}, {"stage", "null"}, {"seed", null_seed(c)}, {"null", j["null"]}});
}

std::string analyze_key(const RunConfig& c)
{
    const json j = config_to_json(c);
    return section_hash({{"v", artifact_version},
                         {"stage", "analyze"},
                         {"spectra", spectra_key(c)},
                         {"analysis", j["analysis"]}});
}

std::string drivers_key(const RunConfig& c)
{
    const json j = config_to_json(c);
    return section_hash({{"v", artifact_version},
                         {"stage", "drivers"},
                         {"spectra", spectra_key(c)},
                         {"drivers", j["drivers"]}});
}

//
// Artifact readers.
//

struct Table
{
    std::vector< std::string > header;
    std::vector< std::vector< std::string > > rows;

    std::size_t column(const std::string& name, const std::string& path) const
    {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw Error(path + ": missing column " + name);
        return static_cast< std::size_t >(it - header.begin());
    }
};

Table read_table(const std::string& path)
{
    auto in = csv::open_input(path);
    Table t;
    std::string line;
    if (!std::getline(in, line))
        throw Error(path + ": empty file");
    for (const auto f : csv::split(line))
        t.header.emplace_back(f);
    while (std::getline(in, line)) {
        if (csv::trim(line).empty())
            continue;
        std::vector< std::string > row;
        for (const auto f : csv::split(line))
            row.emplace_back(f);
        if (row.size() != t.header.size())
            throw Error(path + ": ragged row");
        t.rows.push_back(std::move(row));
    }
    return t;
}

double cell_double(const std::string& s, const std::string& path)
{
    if (s.empty())
        return std::numeric_limits< double >::quiet_NaN();
    double v = 0.0;
    if (!csv::parse_double(s, v))
        throw Error(path + ": malformed number '" + s + "'");
    return v;
}

int cell_int(const std::string& s, const std::string& path)
{
    int v = 0;
    if (!csv::parse_int(s, v))
        throw Error(path + ": malformed integer '" + s + "'");
    return v;
}

std::vector< WeeklyNetwork > load_networks(const RunConfig& c)
{
    const auto dir = stage_dir(c, "networks");
    std::vector< WeeklyNetwork > nets;
    nets.reserve(static_cast< std::size_t >(c.ingest.num_weeks));
    for (int w = 0; w < c.ingest.num_weeks; ++w)
        nets.push_back(read_network((dir / week_file(w, "csv")).string(), w));
    return nets;
}

RegularNodeIndex load_index(const RunConfig& c)
{
    const auto path = (stage_dir(c, "networks") / "regular_nodes.csv").string();
    const auto t = read_table(path);
    RegularNodeIndex index;
    const auto col = t.column("wallet", path);
    for (const auto& r : t.rows)
        index.wallets.push_back(r[col]);
    return index;
}

std::vector< double > load_weekly_price(const RunConfig& c)
{
    const auto path = (stage_dir(c, "networks") / "weekly_price.csv").string();
    const auto t = read_table(path);
    const auto col = t.column("price", path);
    std::vector< double > price;
    for (const auto& r : t.rows)
        price.push_back(cell_double(r[col], path));
    return price;
}

EmbeddingSeries load_series(const RunConfig& c, int member)
{
    const auto dir = stage_dir(c, "embeddings") / member_dir(member);
    EmbeddingSeries series;
    series.seed = ensemble_seed(c, member);
    for (int w = 0; w < c.ingest.num_weeks; ++w) {
        auto cached = read_embedding_cache((dir / week_file(w, "bin")).string());
        series.weeks.push_back(std::move(cached.vectors));
    }
    return series;
}

// Column of a week-indexed CSV as a length-T series, NaN where absent.
std::vector< double > load_week_column(const std::string& path, const std::string& column, int num_weeks)
{
    const auto t = read_table(path);
    const auto wc = t.column("week", path);
    const auto vc = t.column(column, path);
    std::vector< double > out(static_cast< std::size_t >(num_weeks), std::numeric_limits< double >::quiet_NaN());
    for (const auto& r : t.rows) {
        const int w = cell_int(r[wc], path);
        if (w < 0 || w >= num_weeks)
            throw Error(path + ": week " + r[wc] + " out of range");
        out[static_cast< std::size_t >(w)] = cell_double(r[vc], path);
    }
    return out;
}

json driver_report_json(const DriverReport& r, const RegularNodeIndex& index)
{
    auto wallets = [&](const std::vector< std::size_t >& ids) {
        json a = json::array();
        for (const auto i : ids)
            a.push_back(index.wallets[i]);
        return a;
    };
    return {{"n_c_positive", r.n_c_positive},
            {"n_c_negative", r.n_c_negative},
            {"positive_nodes", wallets(r.positive_nodes)},
            {"negative_nodes", wallets(r.negative_nodes)},
            {"driver_set", wallets(r.driver_set)}};
}

} // namespace

//
// Config.
//

void RunConfig::validate() const
{
    require(ingest.num_weeks >= 1, "ingest.num_weeks", "must be positive");
    try {
        (void)parse_date(ingest.start_date);
    } catch (const std::exception&) {
        throw Error("config: ingest.start_date is not a YYYY-MM-DD date");
    }
    try {
        embedding.validate();
    } catch (const std::exception& e) {
        throw Error(std::string("config: embedding: ") + e.what());
    }
    require(deterministic, "embedding.deterministic",
            "must be true (only deterministic single-threaded training per week is implemented)");
    require(ensemble_size >= 1, "ensemble.size", "must be at least 1");
    require(tensor.delta_t >= 1, "tensor.delta_t", "must be at least 1");
    require(null.num_nodes >= 2, "null.num_nodes", "must be at least 2");
    require(null.dim >= 2, "null.dim", "must be at least 2");
    require(null.sigma_g > 0.0, "null.sigma_g", "must be positive");
    require(null.dense_entry_cap > 0, "null.dense_entry_cap", "must be positive");
    require(analysis.max_lag >= 0, "analysis.max_lag", "must be non-negative");
    require(analysis.delta_tau >= 1, "analysis.delta_tau", "must be at least 1");
    require(drivers.threshold > 0.0, "drivers.threshold", "must be positive");
    require(drivers.margin >= 0.0, "drivers.margin", "must be non-negative");
    require(drivers.week >= -1, "drivers.week", "must be -1 or a center week");
    try {
        synth.validate();
    } catch (const std::exception& e) {
        throw Error(std::string("config: ") + e.what());
    }
}

RunConfig config_from_json(const json& j)
{
    RunConfig c;
    SectionReader top(j, "");
    top.get("seed", c.seed);
    if (const auto* s = top.section("paths")) {
        SectionReader r(*s, "paths");
        r.get("transactions", c.paths.transactions);
        r.get("prices", c.paths.prices);
        r.get("ground_truth", c.paths.ground_truth);
        r.get("output", c.paths.output);
        r.finish();
    }
    if (const auto* s = top.section("ingest")) {
        SectionReader r(*s, "ingest");
        r.get("start_date", c.ingest.start_date);
        r.get("num_weeks", c.ingest.num_weeks);
        r.finish();
    }
    if (const auto* s = top.section("embedding")) {
        SectionReader r(*s, "embedding");
        auto& e = c.embedding;
        r.get("p", e.p);
        r.get("q", e.q);
        r.get("walks_per_node", e.walks_per_node);
        r.get("walk_length", e.walk_length);
        r.get("context_window", e.context_window);
        r.get("negative_samples", e.negative_samples);
        r.get("epochs", e.epochs);
        r.get("learning_rate", e.learning_rate);
        r.get("dim", e.dim);
        r.get("negative_power", e.negative_power);
        r.get("directed", e.directed);
        r.get("procrustes", c.procrustes);
        r.get("deterministic", c.deterministic);
        r.finish();
    }
    if (const auto* s = top.section("ensemble")) {
        SectionReader r(*s, "ensemble");
        r.get("size", c.ensemble_size);
        r.finish();
    }
    if (const auto* s = top.section("tensor")) {
        SectionReader r(*s, "tensor");
        r.get("delta_t", c.tensor.delta_t);
        r.get("dense", c.tensor.dense);
        r.finish();
    }
    if (const auto* s = top.section("null")) {
        SectionReader r(*s, "null");
        r.get("num_nodes", c.null.num_nodes);
        r.get("dim", c.null.dim);
        r.get("sigma_g", c.null.sigma_g);
        r.get("dense_entry_cap", c.null.dense_entry_cap);
        r.finish();
    }
    if (const auto* s = top.section("analysis")) {
        SectionReader r(*s, "analysis");
        r.get("max_lag", c.analysis.max_lag);
        r.get("delta_tau", c.analysis.delta_tau);
        r.finish();
    }
    if (const auto* s = top.section("drivers")) {
        SectionReader r(*s, "drivers");
        r.get("threshold", c.drivers.threshold);
        r.get("margin", c.drivers.margin);
        r.get("week", c.drivers.week);
        r.finish();
    }
    if (const auto* s = top.section("synth")) {
        SectionReader r(*s, "synth");
        auto& y = c.synth;
        r.get("num_nodes", y.num_nodes);
        r.get("num_weeks", y.num_weeks);
        r.get("base_rate", y.base_rate);
        r.get("driver_fraction", y.driver_fraction);
        r.get("bubble_weeks", y.bubble_weeks);
        r.get("bubble_boost", y.bubble_boost);
        r.get("bubble_isolation", y.bubble_isolation);
        r.get("amount_scale", y.amount_scale);
        r.get("amount_log_sd", y.amount_log_sd);
        r.get("initial_price", y.initial_price);
        r.get("daily_volatility", y.daily_volatility);
        r.get("bubble_log_amplitude", y.bubble_log_amplitude);
        r.get("start_date", y.start_date);
        r.finish();
    }
    top.finish();
    c.validate();
    return c;
}

json config_to_json(const RunConfig& c)
{
    return {{"seed", c.seed},
            {"paths",
             {{"transactions", c.paths.transactions},
              {"prices", c.paths.prices},
              {"ground_truth", c.paths.ground_truth},
              {"output", c.paths.output}}},
            {"ingest", {{"start_date", c.ingest.start_date}, {"num_weeks", c.ingest.num_weeks}}},
            {"embedding", embedding_json(c)},
            {"ensemble", {{"size", c.ensemble_size}}},
            {"tensor", {{"delta_t", c.tensor.delta_t}, {"dense", c.tensor.dense}}},
            {"null",
             {{"num_nodes", c.null.num_nodes},
              {"dim", c.null.dim},
              {"sigma_g", c.null.sigma_g},
              {"dense_entry_cap", c.null.dense_entry_cap}}},
            {"analysis", {{"max_lag", c.analysis.max_lag}, {"delta_tau", c.analysis.delta_tau}}},
            {"drivers",
             {{"threshold", c.drivers.threshold}, {"margin", c.drivers.margin}, {"week", c.drivers.week}}},
            {"synth", synth_json(c.synth)}};
}

RunConfig load_config(const std::string& path)
{
    auto in = csv::open_input(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(path + ": invalid JSON: " + e.what());
    }
    return config_from_json(j);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h)
{
    for (const unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t h)
{
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast< unsigned long long >(h));
    return buf;
}

std::uint64_t file_hash(const std::string& path)
{
    auto in = csv::open_input(path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv1a(std::string_view(buf, static_cast< std::size_t >(in.gcount())), h);
    return h;
}

std::string config_hash(const RunConfig& config)
{
    auto j = config_to_json(config);
    j.erase("paths");
    return hex64(fnv1a(j.dump()));
}

std::uint64_t ensemble_seed(const RunConfig& config, int member)
{
    return derive_seed(derive_seed(config.seed, 1), static_cast< std::uint64_t >(member));
}

std::uint64_t reshuffle_seed(const RunConfig& config)
{
    return derive_seed(config.seed, 2);
}

std::uint64_t null_seed(const RunConfig& config)
{
    return derive_seed(config.seed, 3);
}

std::uint64_t synth_seed(const RunConfig& config)
{
    return derive_seed(config.seed, 4);
}

//
// Stages.
//

StageResult run_synth(const RunConfig& c, std::ostream& log)
{
    const auto key = synth_key(c);
    const auto dir = stage_dir(c, "synth");
    // outputs are recorded by config role so the manifest does not depend on where the data lives
    const std::vector<std::pair<std::string, std::string>> roles{{"transactions", c.paths.transactions},
                                                                 {"prices", c.paths.prices},
                                                                 {"ground_truth", c.paths.ground_truth}};
    auto outputs_match = [&](const json& outputs) {
        if (!outputs.is_object())
            return false;
        for (const auto& [role, path] : roles)
            if (!outputs.contains(role) || !fs::exists(path) || outputs.at(role) != hex64(file_hash(path)))
                return false;
        return true;
    };
    const auto m = read_manifest(dir);
    if (m && m->value("key", "") == key && m->contains("outputs") && outputs_match(m->at("outputs")))
        return report(log, "synth", StageResult::CacheHit);

    SynthSpec spec = c.synth;
    spec.seed = synth_seed(c);
    const auto out = generate(spec);
    for (const auto& p : {c.paths.transactions, c.paths.prices, c.paths.ground_truth})
        if (const auto parent = fs::path(p).parent_path(); !parent.empty())
            fs::create_directories(parent);
    write_synth(out, c.paths.transactions, c.paths.prices, c.paths.ground_truth);

    fresh_dir(c, "synth");
    json outputs = json::object();
    for (const auto& [role, path] : roles)
        outputs[role] = hex64(file_hash(path));
    write_manifest(dir, "synth", key, c,
                   {{"outputs", outputs},
                    {"seed", spec.seed},
                    {"num_transactions", out.transactions.size()},
                    {"num_drivers", out.drivers.size()}});
    return report(log, "synth", StageResult::Computed);
}

StageResult run_ingest(const RunConfig& c, std::ostream& log)
{
    const auto key = ingest_key(c);
    if (cache_hit(stage_dir(c, "networks"), key))
        return report(log, "ingest", StageResult::CacheHit);

    const auto start = parse_date(c.ingest.start_date);
    const auto loaded = load_transactions(c.paths.transactions, start, c.ingest.num_weeks);
    const auto index = regular_nodes(loaded.networks);
    const auto prices = load_prices(c.paths.prices);
    const auto weekly = weekly_mean_price(prices, start, c.ingest.num_weeks);

    const auto dir = fresh_dir(c, "networks");
    for (const auto& net : loaded.networks)
        write_network((dir / week_file(net.week_index, "csv")).string(), net);
    write_network_stats((dir / "stats.csv").string(), network_stats(loaded.networks));
    {
        auto out = csv::open_output((dir / "regular_nodes.csv").string());
        out << "wallet\n";
        for (const auto& w : index.wallets)
            out << w << '\n';
    }
    {
        auto out = csv::open_output((dir / "weekly_price.csv").string());
        out << "week,price,observed_days\n";
        for (std::size_t w = 0; w < weekly.mean.size(); ++w)
            out << w << ',' << csv::format(weekly.mean[w]) << ',' << weekly.observed_days[w] << '\n';
    }
    const auto& k = loaded.counters;
    write_manifest(dir, "ingest", key, c,
                   {{"num_weeks", c.ingest.num_weeks},
                    {"num_regular_nodes", index.size()},
                    {"missing_price_days", weekly.missing_days()},
                    {"counters",
                     {{"rows", k.rows},
                      {"used", k.used},
                      {"out_of_range", k.out_of_range},
                      {"zero_amount", k.zero_amount},
                      {"self_loop", k.self_loop},
                      {"input_volume", k.input_volume},
                      {"dropped_volume", k.dropped_volume}}}});
    return report(log, "ingest", StageResult::Computed);
}

StageResult run_embed(const RunConfig& c, std::ostream& log)
{
    const auto key = embed_key(c);
    if (cache_hit(stage_dir(c, "embeddings"), key))
        return report(log, "embed", StageResult::CacheHit);
    require_stage(c, "ingest", "networks", ingest_key(c));

    const auto nets = load_networks(c);
    const auto index = load_index(c);
    const auto dir = fresh_dir(c, "embeddings");
    json members = json::array();
    for (int e = 0; e < c.ensemble_size; ++e) {
        const auto seed = ensemble_seed(c, e);
        const auto series = embed_series(nets, index, c.embedding, seed, EmbedOptions{c.procrustes});
        const auto mdir = dir / member_dir(e);
        fs::create_directories(mdir);
        for (std::size_t w = 0; w < series.weeks.size(); ++w)
            write_embedding_cache((mdir / week_file(static_cast< int >(w), "bin")).string(), series.weeks[w], seed);
        members.push_back({{"member", e}, {"seed", seed}});
    }
    write_manifest(dir, "embed", key, c,
                   {{"members", members},
                    {"num_weeks", c.ingest.num_weeks},
                    {"num_nodes", index.size()},
                    {"dim", c.embedding.dim}});
    return report(log, "embed", StageResult::Computed);
}

StageResult run_spectra(const RunConfig& c, std::ostream& log)
{
    const auto key = spectra_key(c);
    if (cache_hit(stage_dir(c, "spectra"), key))
        return report(log, "spectra", StageResult::CacheHit);
    require_stage(c, "embed", "embeddings", embed_key(c));

    const WindowSpec spec{c.tensor.delta_t};
    const auto dir = fresh_dir(c, "spectra");
    std::vector< std::vector< GapRow > > gaps;
    EmbeddingSeries first;
    for (int e = 0; e < c.ensemble_size; ++e) {
        auto series = load_series(c, e);
        const auto spectra = spectra_series(series, spec);
        const auto mdir = dir / member_dir(e);
        fs::create_directories(mdir);
        write_spectra_csv((mdir / "spectra.csv").string(), spectra);
        gaps.push_back(gap_rows(spectra));
        write_gap_csv((mdir / "gap.csv").string(), gaps.back());
        if (e == 0)
            first = std::move(series);
    }

    // Ensemble mean and sample standard deviation per center week.
    {
        auto out = csv::open_output((dir / "ensemble.csv").string());
        out << "week,rho11_mean,rho11_std,gap_mean,gap_std\n";
        const auto E = static_cast< double >(gaps.size());
        for (std::size_t r = 0; r < gaps[0].size(); ++r) {
            double m1 = 0.0, mg = 0.0;
            for (const auto& g : gaps) {
                m1 += g[r].rho11;
                mg += g[r].gap;
            }
            m1 /= E;
            mg /= E;
            double s1 = 0.0, sg = 0.0;
            for (const auto& g : gaps) {
                s1 += (g[r].rho11 - m1) * (g[r].rho11 - m1);
                sg += (g[r].gap - mg) * (g[r].gap - mg);
            }
            const double denom = gaps.size() > 1 ? E - 1.0 : 1.0;
            out << gaps[0][r].week << ',' << csv::format(m1) << ',' << csv::format(std::sqrt(s1 / denom)) << ','
                << csv::format(mg) << ',' << csv::format(std::sqrt(sg / denom)) << '\n';
        }
    }

    // Reshuffled null for the first member, one derived seed per center.
    const int T = static_cast< int >(first.num_weeks());
    const int n = spec.num_centers(T);
    std::vector< TensorSpectrum< double > > shuffled(static_cast< std::size_t >(n));
    const auto rseed = reshuffle_seed(c);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        const int t = spec.first_center() + i;
        shuffled[static_cast< std::size_t >(i)] =
            double_svd(reshuffled_tensor(first, t, spec, derive_seed(rseed, static_cast< std::uint64_t >(t))));
    }
    write_spectra_csv((dir / "reshuffled_spectra.csv").string(), shuffled);
    const auto shuffled_gaps = gap_rows(shuffled);
    std::size_t exceed = 0;
    {
        auto out = csv::open_output((dir / "null_comparison.csv").string());
        out << "week,rho11,rho11_reshuffled,exceeds\n";
        for (std::size_t r = 0; r < shuffled_gaps.size(); ++r) {
            const bool ex = gaps[0][r].rho11 > shuffled_gaps[r].rho11;
            exceed += ex;
            out << gaps[0][r].week << ',' << csv::format(gaps[0][r].rho11) << ','
                << csv::format(shuffled_gaps[r].rho11) << ',' << (ex ? 1 : 0) << '\n';
        }
    }

    json extra{{"num_centers", n},
               {"first_center", spec.first_center()},
               {"last_center", spec.last_center(T)},
               {"reshuffled_below_empirical", exceed}};

    if (c.tensor.dense) {
        if (first.num_nodes() > 50)
            throw Error("tensor.dense needs at most 50 regular nodes, have " + std::to_string(first.num_nodes()));
        double worst = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto tensor = correlation_tensor(first, spec.first_center() + i, spec);
            const auto dense = dense_double_svd(tensor);
            const auto factored = double_svd(tensor);
            worst = std::max(worst, (factored.rho - dense.rho.topRows(factored.rho.rows())).cwiseAbs().maxCoeff());
            if (i == 0)
                write_tensor_dump((dir / week_file(spec.first_center(), "tensor.csv")).string(), tensor);
        }
        extra["dense_check_max_abs_diff"] = worst;
    }
    write_manifest(dir, "spectra", key, c, std::move(extra));
    return report(log, "spectra", StageResult::Computed);
}

StageResult run_null(const RunConfig& c, std::ostream& log)
{
    const auto key = null_key(c);
    if (cache_hit(stage_dir(c, "null"), key))
        return report(log, "null", StageResult::CacheHit);

    GaussianTensorSpec spec;
    spec.num_nodes = c.null.num_nodes;
    spec.dim = c.null.dim;
    spec.sigma_g = c.null.sigma_g;
    spec.seed = null_seed(c);
    const auto tensor = sample_gaussian_tensor(spec, c.null.dense_entry_cap);
    const auto spectrum = gaussian_double_svd(tensor);
    std::vector< double > rho1(static_cast< std::size_t >(spectrum.rho.rows()));
    for (Eigen::Index k = 0; k < spectrum.rho.rows(); ++k)
        rho1[static_cast< std::size_t >(k)] = spectrum.rho(k, 0);
    const auto ks = quarter_circle_ks(rho1, spec);

    const auto dir = fresh_dir(c, "null");
    write_null_spectrum_csv((dir / "spectrum.csv").string(), spectrum);
    {
        auto out = csv::open_output((dir / "ks.json").string());
        out << json{{"ks", ks.ks}, {"n", ks.n}, {"rho_max", ks.rho_max}}.dump(2) << '\n';
    }
    write_manifest(dir, "null", key, c, {{"seed", spec.seed}, {"rho11", spectrum.rho(0, 0)}});
    return report(log, "null", StageResult::Computed);
}

StageResult run_analyze(const RunConfig& c, std::ostream& log)
{
    const auto key = analyze_key(c);
    if (cache_hit(stage_dir(c, "analysis"), key))
        return report(log, "analyze", StageResult::CacheHit);
    require_stage(c, "ingest", "networks", ingest_key(c));
    require_stage(c, "spectra", "spectra", spectra_key(c));

    const auto price = load_weekly_price(c);
    const auto rho11 =
        load_week_column((stage_dir(c, "spectra") / "ensemble.csv").string(), "rho11_mean", c.ingest.num_weeks);
    const auto lag = lagged_correlation(price, rho11, c.analysis.max_lag);
    const auto rolling = rolling_correlation(price, rho11, c.analysis.delta_tau);

    const auto dir = fresh_dir(c, "analysis");
    write_lag_csv((dir / "lag.csv").string(), lag);
    write_rolling_csv((dir / "rolling.csv").string(), rolling);
    {
        auto out = csv::open_output((dir / "price_rho.csv").string());
        out << "week,price,rho11\n";
        for (std::size_t w = 0; w < price.size(); ++w)
            out << w << ',' << csv::format(price[w]) << ',' << csv::format(rho11[w]) << '\n';
    }
    write_manifest(dir, "analyze", key, c, {{"max_lag", c.analysis.max_lag}, {"delta_tau", c.analysis.delta_tau}});
    return report(log, "analyze", StageResult::Computed);
}

StageResult run_drivers(const RunConfig& c, std::ostream& log)
{
    const auto key = drivers_key(c);
    if (cache_hit(stage_dir(c, "drivers"), key))
        return report(log, "drivers", StageResult::CacheHit);
    require_stage(c, "ingest", "networks", ingest_key(c));
    require_stage(c, "embed", "embeddings", embed_key(c));
    require_stage(c, "spectra", "spectra", spectra_key(c));

    const WindowSpec spec{c.tensor.delta_t};
    const auto series = load_series(c, 0);
    const int T = static_cast< int >(series.num_weeks());
    int week = c.drivers.week;
    if (week < 0) {
        const auto rho =
            load_week_column((stage_dir(c, "spectra") / member_dir(0) / "gap.csv").string(), "rho11", T);
        double best = -1.0;
        for (int t = 0; t < T; ++t)
            if (!std::isnan(rho[static_cast< std::size_t >(t)]) && rho[static_cast< std::size_t >(t)] > best) {
                best = rho[static_cast< std::size_t >(t)];
                week = t;
            }
    } else if (!spec.valid_center(week, T)) {
        throw Error("config: drivers.week " + std::to_string(week) + " is not a valid center week");
    }

    const auto tensor = correlation_tensor(series, week, spec);
    const auto field = largest_singular_vectors(tensor);
    const auto left = driver_set(field.left, c.drivers.threshold, c.drivers.margin);
    const auto right = driver_set(field.right, c.drivers.threshold, c.drivers.margin);
    const auto drivers = driver_union(left, right);
    const auto index = load_index(c);

    std::set< std::string > driver_wallets, complement;
    std::vector< bool > is_driver(index.size(), false);
    for (const auto i : drivers)
        is_driver[i] = true;
    for (std::size_t i = 0; i < index.size(); ++i)
        (is_driver[i] ? driver_wallets : complement).insert(index.wallets[i]);
    const auto flows = flow_stats(load_networks(c), driver_wallets, complement);

    const auto dir = fresh_dir(c, "drivers");
    write_singular_vectors_csv((dir / "singular_vectors.csv").string(), field);
    write_flow_csv((dir / "flow.csv").string(), flows);
    {
        json report_json{{"week", week},
                         {"threshold", c.drivers.threshold},
                         {"margin", c.drivers.margin},
                         {"num_nodes", index.size()},
                         {"left", driver_report_json(left, index)},
                         {"right", driver_report_json(right, index)},
                         {"driver_set", std::vector< std::string >(driver_wallets.begin(), driver_wallets.end())},
                         {"complement_size", complement.size()}};
        auto out = csv::open_output((dir / "report.json").string());
        out << report_json.dump(2) << '\n';
    }
    write_manifest(dir, "drivers", key, c, {{"week", week}, {"num_drivers", driver_wallets.size()}});
    return report(log, "drivers", StageResult::Computed);
}

std::vector< StageResult > run_all(const RunConfig& config, std::ostream& log)
{
    return {run_ingest(config, log),  run_embed(config, log),   run_spectra(config, log),
            run_null(config, log),    run_analyze(config, log), run_drivers(config, log)};
}

void run_stage(const std::string& name, const RunConfig& config, std::ostream& log)
{
    static const std::map< std::string, StageResult (*)(const RunConfig&, std::ostream&) > stages{
        {"synth", run_synth},     {"ingest", run_ingest},   {"embed", run_embed},    {"spectra", run_spectra},
        {"null", run_null},       {"analyze", run_analyze}, {"drivers", run_drivers}};
    if (name == "all") {
        run_all(config, log);
        return;
    }
    const auto it = stages.find(name);
    if (it == stages.end())
        throw Error("unknown subcommand " + name);
    it->second(config, log);
}

} // namespace ctspec
