#include "covfuzz/campaign.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "covfuzz/dataset.hpp"
#include "covfuzz/error.hpp"
#include "covfuzz/fixtures.hpp"
#include "covfuzz/model_io.hpp"

namespace covfuzz {

using ojson = nlohmann::ordered_json;

void CampaignConfig::validate() const {
    if (model_path.empty() && fixture.empty()) throw Error(ErrorCode::Config, "no model path or fixture given");
    if (dataset_format != "synthetic" && dataset_format != "idx")
        throw Error(ErrorCode::Config, "dataset format must be 'synthetic' or 'idx'");
    if (dataset_format == "idx" && dataset_path.empty()) throw Error(ErrorCode::Config, "idx dataset needs a path");
    if (k < 1) throw Error(ErrorCode::Config, "k must be >= 1");
    if (batch_size < 1) throw Error(ErrorCode::Config, "batch size must be >= 1");
    if (profile_path.empty() && profiling_count < 1) throw Error(ErrorCode::Config, "profiling count must be >= 1");
    if (!batch_budgets.empty() && batch_budgets.size() != batches)
        throw Error(ErrorCode::Config, "batch budgets must list one entry per batch");
    constraint.validate();
    tables.validate();
    SamplerParams{a, b, std::max<std::size_t>(batches, 1), 0, sampling, clusters}.validate();
    search_config.validate();
}

std::string CampaignConfig::label() const {
    static const char* names[] = {"dsf-random", "dsf-clustered", "dsf-prob"};
    return std::string(names[static_cast<int>(sampling)]) + "+" + to_string(search);
}

ojson to_json(const CampaignConfig& c) {
    const SearchConfig& s = c.search_config;
    ojson j;
    j["model_path"] = c.model_path;
    j["fixture"] = c.fixture;
    j["fixture_seed"] = c.fixture_seed;
    j["dataset_format"] = c.dataset_format;
    j["dataset_path"] = c.dataset_path;
    j["synthetic_count"] = c.synthetic_count;
    j["profile_path"] = c.profile_path;
    j["profiling_count"] = c.profiling_count;
    j["sampling"] = to_string(c.sampling);
    j["search"] = to_string(c.search);
    j["k"] = c.k;
    j["alpha"] = c.constraint.alpha;
    j["beta"] = c.constraint.beta;
    j["brightness"] = c.tables.brightness;
    j["contrast"] = c.tables.contrast;
    j["blur"] = c.tables.blur;
    j["a"] = c.a;
    j["b"] = c.b;
    j["clusters"] = c.clusters;
    j["population"] = s.population;
    j["archive"] = s.archive;
    j["iterations"] = s.iterations;
    j["crossover_eta"] = s.variation.crossover_eta;
    j["mutation_eta"] = s.variation.mutation_eta;
    j["mutation_probability"] = s.variation.mutation_probability;
    j["weight_divisions"] = s.weight_divisions;
    j["init_mask_probability"] = s.init_mask_probability;
    j["mcts_rollouts"] = s.mcts.rollouts;
    j["mcts_uct_c"] = s.mcts.uct_c;
    j["mcts_max_depth"] = s.mcts.max_depth;
    j["repair_c0"] = s.repair_c0;
    j["repair_c1"] = s.repair_c1;
    j["mutation_max_steps"] = s.mutation_max_steps;
    j["workers"] = s.workers;
    j["batches"] = c.batches;
    j["batch_size"] = c.batch_size;
    j["rng_seed"] = c.rng_seed;
    j["batch_budgets"] = c.batch_budgets;
    j["max_corpus_growth"] = c.max_corpus_growth;
    j["mcts_trace"] = c.mcts_trace;
    return j;
}

CampaignConfig config_from_json(const nlohmann::json& j) {
    CampaignConfig c;
    SearchConfig& s = c.search_config;
    try {
        c.model_path = j.value("model_path", c.model_path);
        c.fixture = j.value("fixture", c.fixture);
        c.fixture_seed = j.value("fixture_seed", c.fixture_seed);
        c.dataset_format = j.value("dataset_format", c.dataset_format);
        c.dataset_path = j.value("dataset_path", c.dataset_path);
        c.synthetic_count = j.value("synthetic_count", c.synthetic_count);
        c.profile_path = j.value("profile_path", c.profile_path);
        c.profiling_count = j.value("profiling_count", c.profiling_count);
        if (j.contains("sampling")) c.sampling = parse_sampling_strategy(j.at("sampling").get<std::string>());
        if (j.contains("search")) c.search = parse_search_algorithm(j.at("search").get<std::string>());
        c.k = j.value("k", c.k);
        c.constraint.alpha = j.value("alpha", c.constraint.alpha);
        c.constraint.beta = j.value("beta", c.constraint.beta);
        c.tables.brightness = j.value("brightness", c.tables.brightness);
        c.tables.contrast = j.value("contrast", c.tables.contrast);
        c.tables.blur = j.value("blur", c.tables.blur);
        c.a = j.value("a", c.a);
        c.b = j.value("b", c.b);
        c.clusters = j.value("clusters", c.clusters);
        s.population = j.value("population", s.population);
        s.archive = j.value("archive", s.archive);
        s.iterations = j.value("iterations", s.iterations);
        s.variation.crossover_eta = j.value("crossover_eta", s.variation.crossover_eta);
        s.variation.mutation_eta = j.value("mutation_eta", s.variation.mutation_eta);
        s.variation.mutation_probability = j.value("mutation_probability", s.variation.mutation_probability);
        s.weight_divisions = j.value("weight_divisions", s.weight_divisions);
        s.init_mask_probability = j.value("init_mask_probability", s.init_mask_probability);
        s.mcts.rollouts = j.value("mcts_rollouts", s.mcts.rollouts);
        s.mcts.uct_c = j.value("mcts_uct_c", s.mcts.uct_c);
        s.mcts.max_depth = j.value("mcts_max_depth", s.mcts.max_depth);
        s.repair_c0 = j.value("repair_c0", s.repair_c0);
        s.repair_c1 = j.value("repair_c1", s.repair_c1);
        s.mutation_max_steps = j.value("mutation_max_steps", s.mutation_max_steps);
        s.workers = j.value("workers", s.workers);
        c.batches = j.value("batches", c.batches);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.rng_seed = j.value("rng_seed", c.rng_seed);
        c.batch_budgets = j.value("batch_budgets", c.batch_budgets);
        c.max_corpus_growth = j.value("max_corpus_growth", c.max_corpus_growth);
        c.mcts_trace = j.value("mcts_trace", c.mcts_trace);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, std::string("bad config field: ") + e.what());
    }
    return c;
}

double percent(double fraction) { return std::round(fraction * 1000.0) / 10.0; }

double CampaignReport::adversarial_percent() const {
    return mutants == 0 ? 0.0 : 100.0 * static_cast<double>(adversarial) / static_cast<double>(mutants);
}

namespace {

ojson coverage_json(const CoverageVector& v) {
    ojson j;
    j["kmnc"] = v.kmnc;
    j["nbc"] = v.nbc;
    j["snac"] = v.snac;
    j["kmnc_percent"] = percent(v.kmnc);
    j["nbc_percent"] = percent(v.nbc);
    j["snac_percent"] = percent(v.snac);
    return j;
}

CoverageVector coverage_from(const nlohmann::json& j) {
    return {j.at("kmnc").get<double>(), j.at("nbc").get<double>(), j.at("snac").get<double>()};
}

}  // namespace

ojson to_json(const CampaignReport& r) {
    ojson j;
    j["schema_version"] = CampaignReport::kSchemaVersion;
    j["label"] = r.config.label();
    j["model"] = r.model_name;
    j["neurons"] = r.neurons;
    j["initial"] = coverage_json(r.initial);
    j["final"] = coverage_json(r.final_coverage);
    ojson adv;
    adv["count"] = r.adversarial;
    adv["mutants"] = r.mutants;
    adv["percent"] = percent(r.adversarial_percent() / 100.0);
    j["adversarial"] = adv;
    ojson fw;
    fw["profiling"] = r.forwards.profiling;
    fw["seeding"] = r.forwards.seeding;
    fw["search"] = r.forwards.search;
    fw["total"] = r.forwards.total();
    j["forward_passes"] = fw;
    j["corpus_size"] = r.corpus_size;
    ojson batches = ojson::array();
    for (const auto& b : r.batches) {
        ojson row;
        row["index"] = b.index;
        row["coverage"] = coverage_json(b.coverage);
        row["forwards"] = b.forwards;
        row["mutants"] = b.mutants;
        row["adversarial"] = b.adversarial;
        row["inserted"] = b.inserted;
        row["corpus_size"] = b.corpus_size;
        batches.push_back(row);
    }
    j["batches"] = batches;
    j["config"] = to_json(r.config);
    return j;
}

CampaignReport report_from_json(const nlohmann::json& j) {
    CampaignReport r;
    try {
        if (j.at("schema_version").get<int>() != CampaignReport::kSchemaVersion)
            throw Error(ErrorCode::MalformedHeader, "unsupported report schema version");
        r.config = config_from_json(j.at("config"));
        r.model_name = j.at("model").get<std::string>();
        r.neurons = j.at("neurons").get<std::size_t>();
        r.initial = coverage_from(j.at("initial"));
        r.final_coverage = coverage_from(j.at("final"));
        r.adversarial = j.at("adversarial").at("count").get<std::size_t>();
        r.mutants = j.at("adversarial").at("mutants").get<std::size_t>();
        const auto& fw = j.at("forward_passes");
        r.forwards = {fw.at("profiling").get<std::size_t>(), fw.at("seeding").get<std::size_t>(),
                      fw.at("search").get<std::size_t>()};
        r.corpus_size = j.at("corpus_size").get<std::size_t>();
        for (const auto& row : j.at("batches")) {
            BatchRecord b;
            b.index = row.at("index").get<std::size_t>();
            b.coverage = coverage_from(row.at("coverage"));
            b.forwards = row.at("forwards").get<std::size_t>();
            b.mutants = row.at("mutants").get<std::size_t>();
            b.adversarial = row.at("adversarial").get<std::size_t>();
            b.inserted = row.at("inserted").get<std::size_t>();
            b.corpus_size = row.at("corpus_size").get<std::size_t>();
            r.batches.push_back(b);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedHeader, std::string("malformed report: ") + e.what());
    }
    return r;
}

AdversarialCount count_adversarial(std::span<const int> original_labels, std::span<const int> mutant_labels) {
    if (original_labels.size() != mutant_labels.size())
        throw Error(ErrorCode::CountMismatch, "adversarial count: " + std::to_string(original_labels.size()) +
                                                  " source labels for " + std::to_string(mutant_labels.size()) +
                                                  " mutants");
    AdversarialCount out;
    for (std::size_t i = 0; i < original_labels.size(); ++i)
        if (original_labels[i] != mutant_labels[i]) ++out.count;
    if (!mutant_labels.empty())
        out.percent = 100.0 * static_cast<double>(out.count) / static_cast<double>(mutant_labels.size());
    return out;
}

AdversarialCount count_adversarial(std::span<const int> original_labels,
                                   std::span<const ActivationTrace> mutant_traces) {
    std::vector<int> labels;
    labels.reserve(mutant_traces.size());
    for (const auto& t : mutant_traces) labels.push_back(t.predicted_label);
    return count_adversarial(original_labels, labels);
}

namespace {

Model load_campaign_model(const CampaignConfig& c) {
    if (!c.model_path.empty()) return load_model(c.model_path);
    return generate_fixture_model(c.fixture, c.fixture_seed);
}

Dataset load_campaign_dataset(const CampaignConfig& c, const Model& model) {
    Dataset d = c.dataset_format == "idx" ? load_idx(c.dataset_path)
                                          : synthetic_dataset(c.synthetic_count, model.input_shape(),
                                                              c.rng_seed ^ 0x5eed5eedULL);
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d.images[i].shape != model.input_shape())
            throw Error(ErrorCode::ShapeMismatch, "dataset image " + std::to_string(i) + " has shape " +
                                                      to_string(d.images[i].shape) + ", model expects " +
                                                      to_string(model.input_shape()));
    return d;
}

// Coverage gains first (largest first), then adversarial finds; stable.
std::vector<GeneratedTest*> rank_tests(std::vector<GeneratedTest>& tests) {
    std::vector<GeneratedTest*> ranked;
    for (auto& t : tests)
        if (t.committed_bits > 0 || t.adversarial) ranked.push_back(&t);
    std::stable_sort(ranked.begin(), ranked.end(), [](const GeneratedTest* x, const GeneratedTest* y) {
        return x->committed_bits > y->committed_bits;
    });
    return ranked;
}

}  // namespace

CampaignResult run_campaign_detailed(const CampaignConfig& config) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    CampaignResult result;
    CampaignReport& report = result.report;
    report.config = config;

    const Model model = load_campaign_model(config);
    const Dataset data = load_campaign_dataset(config, model);
    report.model_name = model.name();
    report.neurons = model.neuron_count();

    const std::size_t split = config.profile_path.empty() ? config.profiling_count : 0;
    if (data.size() <= split)
        throw Error(ErrorCode::Config, "dataset has " + std::to_string(data.size()) +
                                           " images; the profiling split alone needs " + std::to_string(split));
    NeuronProfile prof;
    if (config.profile_path.empty()) {
        prof = profile(model, std::span<const Tensor>(data.images.data(), split), config.k);
        report.forwards.profiling = split;
    } else {
        prof = load_profile(config.profile_path);
    }
    if (prof.neuron_count() != model.neuron_count())
        throw Error(ErrorCode::DimensionMismatch, "profile covers " + std::to_string(prof.neuron_count()) +
                                                      " neurons, model has " + std::to_string(model.neuron_count()));

    // Fuzzing corpus and initial coverage.
    CoverageState global = CoverageState::empty_for(prof);
    std::vector<Seed> corpus;
    std::vector<std::size_t> inserted_at;
    for (std::size_t i = split; i < data.size(); ++i) {
        const ActivationTrace trace = forward(model, data.images[i]);
        update(global, prof, trace.values);
        Seed s;
        s.id = corpus.size();
        s.image = data.images[i];
        s.root = s.id;
        s.label = trace.predicted_label;
        corpus.push_back(std::move(s));
        inserted_at.push_back(0);
    }
    report.forwards.seeding = corpus.size();
    report.initial = measure(global);

    Rng rng(config.rng_seed);
    SamplerParams sp{config.a, config.b, std::max<std::size_t>(config.batches, 1), 0, config.sampling,
                     config.clusters};
    Rng sampler_rng = rng.fork();
    SeedSampler sampler(sp, corpus, sampler_rng);

    const Evaluator evaluator(model, prof, RegionGrid::for_image(model.input_shape()[0], model.input_shape()[1]),
                              config.tables, config.constraint);
    const double cells = static_cast<double>(prof.neuron_count()) * (prof.k + 2);
    const std::size_t growth = config.max_corpus_growth ? config.max_corpus_growth : config.batch_size;

    for (std::size_t t = 0; t < config.batches; ++t) {
        try {
            sampler.params().circle = t;
            const std::vector<std::size_t> picked = sampler.select_next(corpus, config.batch_size, rng);
            std::vector<BatchItem> batch;
            for (std::size_t idx : picked) {
                const Seed& s = corpus[idx];
                // Constraint and adversarial checks both refer back to the original image.
                batch.push_back({&s.image, &corpus[s.root].image, corpus[s.root].label});
            }

            BatchRecord rec;
            rec.index = t;
            SearchOutcome outcome;
            const bool skip = !config.batch_budgets.empty() && config.batch_budgets[t] == 0;
            if (!skip) {
                SearchEnvironment env;
                env.evaluator = &evaluator;
                env.batch = batch;
                env.global = &global;
                env.budget.limit = config.batch_budgets.empty() ? 0 : config.batch_budgets[t];
                env.mcts_trace = config.mcts_trace ? &result.mcts_trace : nullptr;
                Rng search_rng = rng.fork();
                outcome = run_search(config.search, config.search_config, env, search_rng);
            }
            rec.forwards = outcome.totals.forwards;
            rec.mutants = outcome.totals.mutants;
            rec.adversarial = outcome.totals.adversarial;

            for (std::size_t i = 0; i < outcome.item_bits.size(); ++i)
                corpus[picked[i]].last_gain = std::min(1.0, static_cast<double>(outcome.item_bits[i]) / cells);

            // Seeds may move when the corpus grows, so copy what the new entries need first.
            std::vector<std::pair<std::size_t, const Tensor*>> roots;
            for (std::size_t idx : picked) roots.push_back({corpus[idx].root, &corpus[corpus[idx].root].image});
            std::vector<Seed> fresh;
            for (GeneratedTest* test : rank_tests(outcome.tests)) {
                if (fresh.size() == growth) break;
                const auto [root, root_image] = roots[test->item];
                if (!check_constraint(*root_image, test->image, config.constraint))
                    throw Error(ErrorCode::Invariant, "generated test breaks the semantic constraint");
                Seed s;
                s.id = corpus.size() + fresh.size();
                s.image = std::move(test->image);
                s.root = root;
                s.label = test->label;
                s.origin = SeedOrigin::Generated;
                fresh.push_back(std::move(s));
            }
            for (auto& s : fresh) {
                corpus.push_back(std::move(s));
                inserted_at.push_back(t + 1);
                sampler.on_insert(corpus.back());
            }
            rec.inserted = fresh.size();
            rec.corpus_size = corpus.size();
            rec.coverage = measure(global);
            report.batches.push_back(rec);
            report.forwards.search += rec.forwards;
            report.mutants += rec.mutants;
            report.adversarial += rec.adversarial;
            for (const auto& g : outcome.generations) result.generations.push_back({t, g});
        } catch (const Error& e) {
            throw Error(e.code(), "batch " + std::to_string(t) + ": " + e.what());
        }
    }

    report.final_coverage = measure(global);
    report.corpus_size = corpus.size();
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const Seed& s = corpus[i];
        result.corpus.push_back({s.id, s.root, s.origin, s.label, s.fuzz_count, s.last_gain, inserted_at[i]});
    }
    result.coverage = std::move(global);
    report.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

CampaignReport run_campaign(const CampaignConfig& config) { return run_campaign_detailed(config).report; }

namespace {

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

}  // namespace

std::string render_csv(const CampaignReport& r) {
    std::ostringstream out;
    out << "batch,kmnc,nbc,snac,forwards,mutants,adversarial,inserted,corpus_size\n";
    for (const auto& b : r.batches)
        out << b.index << ',' << fmt("%.6f", b.coverage.kmnc) << ',' << fmt("%.6f", b.coverage.nbc) << ','
            << fmt("%.6f", b.coverage.snac) << ',' << b.forwards << ',' << b.mutants << ',' << b.adversarial << ','
            << b.inserted << ',' << b.corpus_size << '\n';
    return out.str();
}

std::string render_table(const CampaignReport& r) {
    std::ostringstream out;
    char line[160];
    out << "model " << r.model_name << " (" << r.neurons << " neurons, k=" << r.config.k << ")\n";
    std::snprintf(line, sizeof line, "%-28s %8s %8s %8s\n", "Strategy", "KMNC", "NBC", "SNAC");
    out << line;
    auto row = [&](const std::string& name, const CoverageVector& v) {
        std::snprintf(line, sizeof line, "%-28s %7.1f%% %7.1f%% %7.1f%%\n", name.c_str(), percent(v.kmnc),
                      percent(v.nbc), percent(v.snac));
        out << line;
    };
    row("Initial", r.initial);
    row(r.config.label(), r.final_coverage);
    out << "adversarial " << r.adversarial << " / " << r.mutants << " mutants ("
        << fmt("%.1f", percent(r.adversarial_percent() / 100.0)) << "%)\n";
    out << "forward passes " << r.forwards.total() << " (profiling " << r.forwards.profiling << ", seeding "
        << r.forwards.seeding << ", search " << r.forwards.search << ")\n";
    out << "corpus " << r.corpus_size << " seeds after " << r.batches.size() << " batches\n";
    if (r.duration_seconds > 0.0) out << "duration " << fmt("%.1f", r.duration_seconds) << " s\n";
    return out.str();
}

void emit_report(const CampaignReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    write_file(dir / "report.json", to_json(report).dump(2) + "\n");
    write_file(dir / "report.csv", render_csv(report));
    write_file(dir / "report.txt", render_table(report));
}

void emit_campaign(const CampaignResult& result, const std::filesystem::path& dir) {
    emit_report(result.report, dir);
    std::ostringstream corpus;
    corpus << "id,root,origin,label,fuzz_count,last_gain,inserted_at_batch\n";
    for (const auto& e : result.corpus)
        corpus << e.id << ',' << e.root << ',' << (e.origin == SeedOrigin::Initial ? "initial" : "generated") << ','
               << e.label << ',' << e.fuzz_count << ',' << fmt("%.8f", e.last_gain) << ',' << e.inserted_at_batch
               << '\n';
    write_file(dir / "corpus.csv", corpus.str());

    std::ostringstream gens;
    gens << "batch,generation,best_kmnc,best_nbc,best_snac,archive_size,feasible_fraction,repairs,refills,forwards\n";
    for (const auto& [batch, g] : result.generations)
        gens << batch << ',' << g.generation << ',' << fmt("%.6f", g.best.kmnc) << ',' << fmt("%.6f", g.best.nbc)
             << ',' << fmt("%.6f", g.best.snac) << ',' << g.archive_size << ',' << fmt("%.4f", g.feasible_fraction)
             << ',' << g.repairs << ',' << g.refills << ',' << g.forwards << '\n';
    write_file(dir / "generations.csv", gens.str());
    write_file(dir / "coverage.bin", serialize_state(result.coverage));

    if (result.report.config.mcts_trace) {
        std::ostringstream trace;
        trace << "rollout,depth,reward\n";
        for (std::size_t i = 0; i < result.mcts_trace.size(); ++i)
            trace << i << ',' << result.mcts_trace[i].depth << ',' << fmt("%.8f", result.mcts_trace[i].reward) << '\n';
        write_file(dir / "mcts_trace.csv", trace.str());
    }
}

}  // namespace covfuzz
