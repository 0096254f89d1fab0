#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "covfuzz/coverage.hpp"
#include "covfuzz/mutation.hpp"
#include "covfuzz/sampling.hpp"
#include "covfuzz/search.hpp"

namespace covfuzz {

struct CampaignConfig {
    /// Model container path; empty means generate `fixture` from `fixture_seed`.
    std::string model_path;
    std::string fixture = "mini-lenet";
    std::uint64_t fixture_seed = 1;
    /// "synthetic" or "idx".
    std::string dataset_format = "synthetic";
    std::string dataset_path;
    std::size_t synthetic_count = 2000;
    /// Optional saved profile; otherwise the profiling split is profiled.
    std::string profile_path;
    std::size_t profiling_count = 1000;

    SamplingStrategy sampling = SamplingStrategy::Frequency;
    SearchAlgorithm search = SearchAlgorithm::Spea2Mcts;
    int k = 10;
    ConstraintParams constraint;
    MutationTables tables;
    double a = 0.3;
    double b = -1.0;
    std::size_t clusters = 10;
    SearchConfig search_config;

    std::size_t batches = 16;
    std::size_t batch_size = 64;
    std::uint64_t rng_seed = 0;
    /// Forward passes allowed per batch (equal-budget comparisons). Empty
    /// means each search's own default.
    std::vector<std::size_t> batch_budgets;
    /// New corpus entries per batch; 0 means batch_size.
    std::size_t max_corpus_growth = 0;
    bool mcts_trace = false;
    std::string output_dir;

    void validate() const;
    std::string label() const;
};

nlohmann::ordered_json to_json(const CampaignConfig& c);
CampaignConfig config_from_json(const nlohmann::json& j);

struct BatchRecord {
    std::size_t index = 0;
    CoverageVector coverage;
    std::size_t forwards = 0;
    std::size_t mutants = 0;
    std::size_t adversarial = 0;
    std::size_t inserted = 0;
    std::size_t corpus_size = 0;
    bool operator==(const BatchRecord&) const = default;
};

struct ForwardAccount {
    std::size_t profiling = 0;
    std::size_t seeding = 0;
    std::size_t search = 0;
    std::size_t total() const { return profiling + seeding + search; }
    bool operator==(const ForwardAccount&) const = default;
};

struct CampaignReport {
    static constexpr int kSchemaVersion = 1;
    CampaignConfig config;
    std::string model_name;
    std::size_t neurons = 0;
    CoverageVector initial;
    CoverageVector final_coverage;
    std::size_t adversarial = 0;
    /// Denominator for the adversarial percentage: constraint-satisfying mutants evaluated.
    std::size_t mutants = 0;
    std::vector<BatchRecord> batches;
    ForwardAccount forwards;
    std::size_t corpus_size = 0;
    /// Wall clock; not serialised to JSON so reports stay reproducible.
    double duration_seconds = 0.0;

    double adversarial_percent() const;
};

nlohmann::ordered_json to_json(const CampaignReport& r);
CampaignReport report_from_json(const nlohmann::json& j);

/// One decimal, as reported in the tables.
double percent(double fraction);

struct CorpusEntry {
    std::size_t id = 0;
    std::size_t root = 0;
    SeedOrigin origin = SeedOrigin::Initial;
    int label = 0;
    std::size_t fuzz_count = 0;
    double last_gain = 0.0;
    std::size_t inserted_at_batch = 0;
};

struct GenerationRecord {
    std::size_t batch = 0;
    GenerationLog log;
};

struct CampaignResult {
    CampaignReport report;
    std::vector<CorpusEntry> corpus;
    std::vector<GenerationRecord> generations;
    CoverageState coverage;
    std::vector<RolloutRecord> mcts_trace;
};

CampaignResult run_campaign_detailed(const CampaignConfig& config);
CampaignReport run_campaign(const CampaignConfig& config);

struct AdversarialCount {
    std::size_t count = 0;
    double percent = 0.0;
};

/// A mutant is adversarial when its prediction differs from its source's.
AdversarialCount count_adversarial(std::span<const int> original_labels, std::span<const int> mutant_labels);
AdversarialCount count_adversarial(std::span<const int> original_labels,
                                   std::span<const ActivationTrace> mutant_traces);

/// report.json, report.csv and report.txt.
void emit_report(const CampaignReport& report, const std::filesystem::path& dir);
/// emit_report plus corpus.csv, generations.csv, coverage.bin and (if traced) mcts_trace.csv.
void emit_campaign(const CampaignResult& result, const std::filesystem::path& dir);

std::string render_csv(const CampaignReport& report);
std::string render_table(const CampaignReport& report);

}  // namespace covfuzz
