// covfuzz command line: fixture generation, profiling, fuzzing campaigns and report rendering.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "covfuzz/campaign.hpp"
#include "covfuzz/dataset.hpp"
#include "covfuzz/error.hpp"
#include "covfuzz/fixtures.hpp"
#include "covfuzz/model_io.hpp"

using namespace covfuzz;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInvariant = 4;

int exit_code(ErrorCode code) {
    switch (classify(code)) {
    case ErrorClass::Config: return kExitConfig;
    case ErrorClass::Data: return kExitData;
    case ErrorClass::Invariant: return kExitInvariant;
    }
    return kExitInvariant;
}

std::string default_out_dir() {
    if (const char* env = std::getenv("COVFUZZ_OUT_DIR"); env && *env) return env;
    return "covfuzz-out";
}

// Model/dataset selection shared by `profile` and `fuzz`.
void add_source_flags(CLI::App* cmd, CampaignConfig& c) {
    cmd->add_option("--model", c.model_path, "model container; default is a generated fixture");
    cmd->add_option("--fixture", c.fixture, "fixture architecture when no --model is given")
        ->capture_default_str();
    cmd->add_option("--fixture-seed", c.fixture_seed, "weight seed for the fixture")->capture_default_str();
    cmd->add_option("--dataset-format", c.dataset_format, "synthetic or idx")
        ->check(CLI::IsMember({"synthetic", "idx"}))
        ->capture_default_str();
    cmd->add_option("--dataset", c.dataset_path, "IDX images file (labels found alongside)");
    cmd->add_option("--synthetic-count", c.synthetic_count, "synthetic dataset size")->capture_default_str();
    cmd->add_option("--profiling-count", c.profiling_count, "leading images used for profiling")
        ->capture_default_str();
    cmd->add_option("--k", c.k, "sections per neuron")->capture_default_str();
}

CampaignConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Config, "cannot open config " + path);
    try {
        return config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::Config, "config " + path + ": " + e.what());
    }
}

Model campaign_model(const CampaignConfig& c) {
    return c.model_path.empty() ? generate_fixture_model(c.fixture, c.fixture_seed) : load_model(c.model_path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coverage-guided fuzzing of small neural networks"};
    app.require_subcommand(1);

    // fixture
    std::string fx_arch = "mini-lenet";
    std::uint64_t fx_seed = 0;
    std::string fx_out;
    auto* fixture = app.add_subcommand("fixture", "write a seeded random-weight model container");
    fixture->add_option("--arch", fx_arch, "architecture")->capture_default_str();
    fixture->add_option("--seed", fx_seed, "weight seed")->required();
    fixture->add_option("--out", fx_out, "output path")->required();

    // profile
    CampaignConfig prof_cfg;
    std::string prof_out;
    auto* prof = app.add_subcommand("profile", "profile neuron ranges on the profiling split");
    add_source_flags(prof, prof_cfg);
    prof->add_option("--seed", prof_cfg.rng_seed, "dataset seed")->required();
    prof->add_option("--out", prof_out, "profile file to write")->required();

    // fuzz
    CampaignConfig cfg;
    std::string config_path;
    std::string sampling = "dsf-prob";
    std::string search = "spea2-mcts";
    std::string out_dir = default_out_dir();
    bool quiet = false;
    auto* fuzz = app.add_subcommand("fuzz", "run a fuzzing campaign");
    fuzz->add_option("--config", config_path, "JSON config; flags given explicitly override it");
    add_source_flags(fuzz, cfg);
    fuzz->add_option("--profile", cfg.profile_path, "saved profile instead of profiling");
    fuzz->add_option("--sampling", sampling, "dsf-random | dsf-clustered | dsf-prob")->capture_default_str();
    fuzz->add_option("--search", search, "spea2-mcts | spea2-decomp | nsga3 | random-mutation | mcts-only")
        ->capture_default_str();
    fuzz->add_option("--alpha", cfg.constraint.alpha, "L0 fraction threshold")->capture_default_str();
    fuzz->add_option("--beta", cfg.constraint.beta, "L-infinity fraction threshold")->capture_default_str();
    fuzz->add_option("--a", cfg.a, "fuzz-count decay")->capture_default_str();
    fuzz->add_option("--b", cfg.b, "fuzz-count offset")->capture_default_str();
    fuzz->add_option("--clusters", cfg.clusters, "clusters for dsf-clustered")->capture_default_str();
    fuzz->add_option("--population", cfg.search_config.population)->capture_default_str();
    fuzz->add_option("--archive", cfg.search_config.archive)->capture_default_str();
    fuzz->add_option("--iterations", cfg.search_config.iterations)->capture_default_str();
    fuzz->add_option("--weight-divisions", cfg.search_config.weight_divisions)->capture_default_str();
    fuzz->add_option("--mcts-rollouts", cfg.search_config.mcts.rollouts)->capture_default_str();
    fuzz->add_option("--mcts-max-depth", cfg.search_config.mcts.max_depth)->capture_default_str();
    fuzz->add_option("--mutation-max-steps", cfg.search_config.mutation_max_steps)->capture_default_str();
    fuzz->add_option("--workers", cfg.search_config.workers, "evaluation threads")->capture_default_str();
    fuzz->add_option("--batches", cfg.batches)->capture_default_str();
    fuzz->add_option("--batch-size", cfg.batch_size)->capture_default_str();
    fuzz->add_option("--batch-budget", cfg.batch_budgets, "forward passes per batch (one per batch)");
    fuzz->add_option("--max-corpus-growth", cfg.max_corpus_growth, "new seeds per batch, 0 = batch size")
        ->capture_default_str();
    fuzz->add_flag("--mcts-trace", cfg.mcts_trace, "write per-rollout depth and reward");
    fuzz->add_option("--seed", cfg.rng_seed, "campaign seed")->required();
    fuzz->add_option("--out-dir", out_dir, "output directory (default $COVFUZZ_OUT_DIR or covfuzz-out)")
        ->capture_default_str();
    fuzz->add_flag("--quiet", quiet, "do not print the summary table");

    // report
    std::string report_in;
    std::string report_format = "txt";
    auto* report = app.add_subcommand("report", "re-render a saved report.json");
    report->add_option("--in", report_in, "report.json path")->required();
    report->add_option("--format", report_format, "txt | csv | json")
        ->check(CLI::IsMember({"txt", "csv", "json"}))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*fixture) {
            save_model(generate_fixture_model(fx_arch, fx_seed), fx_out);
            std::cout << "wrote " << fx_out << "\n";
        } else if (*prof) {
            prof_cfg.validate();
            const Model model = campaign_model(prof_cfg);
            const Dataset data = prof_cfg.dataset_format == "idx"
                                     ? load_idx(prof_cfg.dataset_path)
                                     : synthetic_dataset(prof_cfg.synthetic_count, model.input_shape(),
                                                         prof_cfg.rng_seed ^ 0x5eed5eedULL);
            const std::size_t n = std::min(prof_cfg.profiling_count, data.size());
            const NeuronProfile p = profile(model, std::span<const Tensor>(data.images.data(), n), prof_cfg.k);
            save_profile(p, prof_out);
            std::cout << "profiled " << p.neuron_count() << " neurons on " << n << " images -> " << prof_out << "\n";
        } else if (*fuzz) {
            if (!config_path.empty()) {
                // Explicit flags win over the file.
                CampaignConfig base = load_config_file(config_path);
                auto overlay = [&](const char* flag, auto& target, const auto& value) {
                    if (fuzz->count(flag) > 0) target = value;
                };
                overlay("--model", base.model_path, cfg.model_path);
                overlay("--fixture", base.fixture, cfg.fixture);
                overlay("--fixture-seed", base.fixture_seed, cfg.fixture_seed);
                overlay("--dataset-format", base.dataset_format, cfg.dataset_format);
                overlay("--dataset", base.dataset_path, cfg.dataset_path);
                overlay("--synthetic-count", base.synthetic_count, cfg.synthetic_count);
                overlay("--profiling-count", base.profiling_count, cfg.profiling_count);
                overlay("--k", base.k, cfg.k);
                overlay("--profile", base.profile_path, cfg.profile_path);
                overlay("--alpha", base.constraint.alpha, cfg.constraint.alpha);
                overlay("--beta", base.constraint.beta, cfg.constraint.beta);
                overlay("--a", base.a, cfg.a);
                overlay("--b", base.b, cfg.b);
                overlay("--clusters", base.clusters, cfg.clusters);
                overlay("--population", base.search_config.population, cfg.search_config.population);
                overlay("--archive", base.search_config.archive, cfg.search_config.archive);
                overlay("--iterations", base.search_config.iterations, cfg.search_config.iterations);
                overlay("--weight-divisions", base.search_config.weight_divisions,
                        cfg.search_config.weight_divisions);
                overlay("--mcts-rollouts", base.search_config.mcts.rollouts, cfg.search_config.mcts.rollouts);
                overlay("--mcts-max-depth", base.search_config.mcts.max_depth, cfg.search_config.mcts.max_depth);
                overlay("--mutation-max-steps", base.search_config.mutation_max_steps,
                        cfg.search_config.mutation_max_steps);
                overlay("--workers", base.search_config.workers, cfg.search_config.workers);
                overlay("--batches", base.batches, cfg.batches);
                overlay("--batch-size", base.batch_size, cfg.batch_size);
                overlay("--batch-budget", base.batch_budgets, cfg.batch_budgets);
                overlay("--max-corpus-growth", base.max_corpus_growth, cfg.max_corpus_growth);
                overlay("--mcts-trace", base.mcts_trace, cfg.mcts_trace);
                if (fuzz->count("--sampling") == 0) sampling = to_string(base.sampling);
                if (fuzz->count("--search") == 0) search = to_string(base.search);
                base.rng_seed = cfg.rng_seed;
                cfg = base;
            }
            cfg.sampling = parse_sampling_strategy(sampling);
            cfg.search = parse_search_algorithm(search);
            // A single budget value applies to every batch.
            if (cfg.batch_budgets.size() == 1 && cfg.batches > 1) cfg.batch_budgets.assign(cfg.batches, cfg.batch_budgets[0]);
            cfg.output_dir = out_dir;
            const CampaignResult result = run_campaign_detailed(cfg);
            emit_campaign(result, out_dir);
            if (!quiet) std::cout << render_table(result.report);
            std::cout << "reports in " << out_dir << "\n";
        } else if (*report) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(read_file(report_in));
            } catch (const nlohmann::json::parse_error& e) {
                throw Error(ErrorCode::MalformedHeader, report_in + ": " + e.what());
            }
            const CampaignReport r = report_from_json(j);
            if (report_format == "json")
                std::cout << to_json(r).dump(2) << "\n";
            else if (report_format == "csv")
                std::cout << render_csv(r);
            else
                std::cout << render_table(r);
        }
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInvariant;
    }
    return 0;
}
