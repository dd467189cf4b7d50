// swapnas: training-free network scoring and architecture search built on
// sample-wise activation patterns.
//
// Subcommands: score, search, correlate, ablate batch-size|input-dim,
// oracle-check. Exit codes: 0 success, 1 usage error, 2 runtime/numeric
// error, 3 oracle failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "swapnas/batch.hpp"
#include "swapnas/genome.hpp"
#include "swapnas/harness.hpp"
#include "swapnas/network.hpp"
#include "swapnas/pattern.hpp"
#include "swapnas/rng.hpp"
#include "swapnas/search.hpp"
#include "swapnas/stats.hpp"

namespace fs = std::filesystem;
using namespace swapnas;

namespace {

struct RegFlags {
    std::string mode = "off";
    double mu = 1.0;
    double sigma = 1.0;
    double theta_scale = 1e6;

    score::RegularisationParams resolve() const {
        score::RegularisationParams p;
        if (mode == "off") p.mode = score::RegularisationParams::Mode::Off;
        else if (mode == "static") p.mode = score::RegularisationParams::Mode::Static;
        else if (mode == "adaptive") p.mode = score::RegularisationParams::Mode::Adaptive;
        else throw CLI::ValidationError("--reg must be off, static or adaptive");
        p.mu = mu;
        p.sigma = sigma;
        p.theta_scale = theta_scale;
        return p;
    }
};

struct EngineFlags {
    std::string bn = "batch";
    double init_gain = 1.4142135623730951;

    engine::EngineOptions resolve() const {
        engine::EngineOptions opts;
        if (bn == "batch") opts.batch_norm = true;
        else if (bn == "off") opts.batch_norm = false;
        else throw CLI::ValidationError("--bn must be batch or off");
        opts.init_gain = init_gain;
        return opts;
    }
};

struct SpaceFlags {
    std::string space = "nb201";
    int nodes = 0;
    int stem = 0;
    int stack = 0;
    int seq_len = 0;
    int vocab = 0;

    graph::SpaceId resolve_space() const {
        if (space == "nb201" || space == "NB201") return graph::SpaceId::NB201;
        if (space == "dlite" || space == "DLITE") return graph::SpaceId::DartsLite;
        if (space == "tform" || space == "TFORM") return graph::SpaceId::Transformer;
        throw CLI::ValidationError("--space must be nb201, dlite or tform");
    }

    graph::SpaceParams resolve_params() const {
        graph::SpaceParams p = graph::SpaceParams::defaults(resolve_space());
        if (nodes > 0) p.nodes = nodes;
        if (stem > 0) p.stem_channels = stem;
        if (stack > 0) p.stack_depth = stack;
        if (seq_len > 0) p.seq_len = seq_len;
        if (vocab > 0) p.vocab = vocab;
        return p;
    }
};

void add_reg_flags(CLI::App* cmd, RegFlags& reg) {
    cmd->add_option("--reg", reg.mode, "regularisation mode: off, static, adaptive")
        ->capture_default_str();
    cmd->add_option("--mu", reg.mu, "bell-curve centre (param count / theta-scale)")
        ->capture_default_str();
    cmd->add_option("--sigma", reg.sigma, "bell-curve width, same units")->capture_default_str();
    cmd->add_option("--theta-scale", reg.theta_scale,
                    "divisor applied to the raw parameter count (1e6 = millions)")
        ->capture_default_str();
}

void add_engine_flags(CLI::App* cmd, EngineFlags& eng) {
    cmd->add_option("--bn", eng.bn, "cell-network normalisation: batch or off")
        ->capture_default_str();
    cmd->add_option("--init-gain", eng.init_gain, "weight std = gain / sqrt(fan_in)")
        ->capture_default_str();
}

void add_space_flags(CLI::App* cmd, SpaceFlags& sf) {
    cmd->add_option("--space", sf.space, "architecture space: nb201, dlite, tform")
        ->capture_default_str();
    cmd->add_option("--nodes", sf.nodes, "intermediate nodes per cell (0 = space default)");
    cmd->add_option("--stem", sf.stem, "stem channels (0 = space default)");
    cmd->add_option("--stack", sf.stack, "cells per stage (0 = space default)");
    cmd->add_option("--seq-len", sf.seq_len, "transformer sequence length (0 = default)");
    cmd->add_option("--vocab", sf.vocab, "transformer vocabulary (0 = default)");
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::istringstream is(text);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stoi(tok));
    }
    if (out.empty()) throw CLI::ValidationError("expected a comma-separated integer list");
    return out;
}

std::vector<engine::InputDims> parse_dims_list(const std::string& text) {
    std::vector<engine::InputDims> out;
    std::istringstream is(text);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        engine::InputDims d;
        if (std::sscanf(tok.c_str(), "%dx%dx%d", &d.channels, &d.height, &d.width) != 3) {
            throw CLI::ValidationError("dims entries must be CxHxW: " + tok);
        }
        out.push_back(d);
    }
    if (out.empty()) throw CLI::ValidationError("expected a comma-separated dims list");
    return out;
}

std::vector<std::uint64_t> resolve_seeds(int count, const std::string& list,
                                         std::uint64_t base) {
    std::vector<std::uint64_t> seeds;
    if (!list.empty()) {
        std::istringstream is(list);
        std::string tok;
        while (std::getline(is, tok, ',')) {
            if (!tok.empty()) seeds.push_back(std::stoull(tok));
        }
    } else {
        for (int i = 0; i < count; ++i) seeds.push_back(base + static_cast<std::uint64_t>(i));
    }
    if (seeds.empty()) throw CLI::ValidationError("no evaluation seeds given");
    return seeds;
}

void write_snapshot(const CLI::App& app, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "effective-config.txt");
    out << app.config_to_str(true, false);
}

void print_correlations(const std::vector<eval::CorrelationReport>& reports) {
    std::printf("%-12s %8s %10s %10s %6s %8s\n", "metric", "seeds", "mean_rho", "std_err", "n",
                "skipped");
    for (const auto& rep : reports) {
        if (rep.per_seed.empty()) {
            std::printf("%-12s %8zu %10s %10s %6d %8d  error: %s\n", rep.metric.c_str(),
                        rep.per_seed.size(), "-", "-", rep.n, rep.skipped, rep.error.c_str());
        } else {
            std::printf("%-12s %8zu %10.4f %10.4f %6d %8d%s%s\n", rep.metric.c_str(),
                        rep.per_seed.size(), rep.mean_rho, rep.std_err, rep.n, rep.skipped,
                        rep.error.empty() ? "" : "  error: ", rep.error.c_str());
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"training-free network scoring and architecture search"};
    app.set_config("--config", "", "flat key=value config file (flags mirror keys)");
    app.require_subcommand(1);

    std::uint64_t master_seed = 1;
    app.add_option("--seed", master_seed, "master seed (env SWAP_SEED)")
        ->envname("SWAP_SEED")
        ->capture_default_str();
    int threads = 1;
    app.add_option("--threads", threads, "worker thread cap")->capture_default_str();

    // ---- score ----------------------------------------------------------
    auto* score_cmd = app.add_subcommand("score", "score one genome");
    std::string score_genome_str;
    std::string score_batch = "noise:s=8,dims=3x32x32,seed=1";
    std::uint64_t score_init_seed = 1;
    std::string score_out;
    bool score_f64 = false;
    RegFlags score_reg;
    EngineFlags score_eng;
    score_cmd->add_option("--genome", score_genome_str, "encoded genome string")->required();
    score_cmd->add_option("--batch", score_batch, "batch spec")->capture_default_str();
    score_cmd->add_option("--init-seed", score_init_seed, "weight init seed")
        ->capture_default_str();
    score_cmd->add_option("--out", score_out, "output directory (score.jsonl + config snapshot)");
    score_cmd->add_flag("--f64", score_f64, "run the forward pass in 64-bit mode");
    add_reg_flags(score_cmd, score_reg);
    add_engine_flags(score_cmd, score_eng);

    // ---- search ---------------------------------------------------------
    auto* search_cmd = app.add_subcommand("search", "evolutionary architecture search");
    SpaceFlags search_space;
    RegFlags search_reg;
    EngineFlags search_eng;
    std::string search_batch = "noise:s=8,dims=3x16x16,seed=1";
    std::string search_out = "search-out";
    int search_pop = 10, search_cycles = 20, search_tournament = 0, search_mut = 5;
    double search_xprob = 0.5;
    add_space_flags(search_cmd, search_space);
    search_cmd->add_option("--pop", search_pop, "population size")->capture_default_str();
    search_cmd->add_option("--cycles", search_cycles, "search cycles")->capture_default_str();
    search_cmd->add_option("--tournament", search_tournament,
                           "tournament size (0 = half the population)");
    search_cmd->add_option("--mutation-times", search_mut, "children per cycle")
        ->capture_default_str();
    search_cmd->add_option("--crossover-prob", search_xprob,
                           "probability the parent comes from crossover")
        ->capture_default_str();
    search_cmd->add_option("--batch", search_batch, "batch spec")->capture_default_str();
    search_cmd->add_option("--out", search_out, "output directory")->capture_default_str();
    add_reg_flags(search_cmd, search_reg);
    add_engine_flags(search_cmd, search_eng);

    // ---- correlate ------------------------------------------------------
    auto* corr_cmd = app.add_subcommand("correlate",
                                        "rank-correlate metrics against a ground-truth table");
    std::string corr_csv;
    std::string corr_batch = "noise:s=8,dims=3x32x32,seed=1";
    std::string corr_out = "correlate-out";
    std::string corr_seed_list;
    int corr_seeds = 5;
    RegFlags corr_reg;
    EngineFlags corr_eng;
    corr_cmd->add_option("--csv", corr_csv, "ground-truth csv (arch_id,encoding,accuracy)")
        ->required();
    corr_cmd->add_option("--batch", corr_batch, "batch spec")->capture_default_str();
    corr_cmd->add_option("--seeds", corr_seeds, "number of independent runs")
        ->capture_default_str();
    corr_cmd->add_option("--seed-list", corr_seed_list, "explicit comma-separated run seeds");
    corr_cmd->add_option("--out", corr_out, "output directory")->capture_default_str();
    add_reg_flags(corr_cmd, corr_reg);
    add_engine_flags(corr_cmd, corr_eng);

    // ---- ablate ---------------------------------------------------------
    auto* ablate_cmd = app.add_subcommand("ablate", "batch-size and input-dimension sweeps");
    ablate_cmd->require_subcommand(1);

    auto* ab_bs = ablate_cmd->add_subcommand("batch-size", "sweep the batch size");
    SpaceFlags ab_bs_space;
    RegFlags ab_bs_reg;
    EngineFlags ab_bs_eng;
    std::string ab_bs_sizes = "8,16,32,64,128";
    std::string ab_bs_batch = "noise:s=8,dims=3x32x32,seed=1";
    std::string ab_bs_csv, ab_bs_out = "ablate-out", ab_bs_seed_list;
    int ab_bs_nets = 20, ab_bs_seeds = 5;
    ab_bs->add_option("--sizes", ab_bs_sizes, "comma-separated batch sizes")
        ->capture_default_str();
    ab_bs->add_option("--batch", ab_bs_batch, "base batch spec")->capture_default_str();
    ab_bs->add_option("--csv", ab_bs_csv, "optional ground-truth csv");
    ab_bs->add_option("--nets", ab_bs_nets, "sampled networks when no csv given")
        ->capture_default_str();
    ab_bs->add_option("--seeds", ab_bs_seeds, "number of independent runs")
        ->capture_default_str();
    ab_bs->add_option("--seed-list", ab_bs_seed_list, "explicit run seeds");
    ab_bs->add_option("--out", ab_bs_out, "output directory")->capture_default_str();
    add_space_flags(ab_bs, ab_bs_space);
    add_reg_flags(ab_bs, ab_bs_reg);
    add_engine_flags(ab_bs, ab_bs_eng);

    auto* ab_id = ablate_cmd->add_subcommand("input-dim", "sweep the input dimensions");
    SpaceFlags ab_id_space;
    RegFlags ab_id_reg;
    EngineFlags ab_id_eng;
    std::string ab_id_dims = "3x3x3,3x8x8,3x16x16,3x32x32";
    std::string ab_id_batch = "noise:s=16,dims=3x32x32,seed=1";
    std::string ab_id_csv, ab_id_out = "ablate-out", ab_id_seed_list;
    int ab_id_nets = 20, ab_id_seeds = 5;
    ab_id->add_option("--dims", ab_id_dims, "comma-separated CxHxW crops")
        ->capture_default_str();
    ab_id->add_option("--batch", ab_id_batch,
                      "base batch spec (image:path=... crops that file)")
        ->capture_default_str();
    ab_id->add_option("--csv", ab_id_csv, "optional ground-truth csv");
    ab_id->add_option("--nets", ab_id_nets, "sampled networks when no csv given")
        ->capture_default_str();
    ab_id->add_option("--seeds", ab_id_seeds, "number of independent runs")
        ->capture_default_str();
    ab_id->add_option("--seed-list", ab_id_seed_list, "explicit run seeds");
    ab_id->add_option("--out", ab_id_out, "output directory")->capture_default_str();
    add_space_flags(ab_id, ab_id_space);
    add_reg_flags(ab_id, ab_id_reg);
    add_engine_flags(ab_id, ab_id_eng);

    // ---- oracle-check ---------------------------------------------------
    auto* oracle_cmd = app.add_subcommand(
        "oracle-check", "certify the hash-set pattern counts against brute force");
    SpaceFlags oracle_space;
    int oracle_nets = 50;
    std::int64_t oracle_vcap = 2000;
    std::string oracle_sizes = "4,8,16";
    std::string oracle_out;
    oracle_cmd->add_option("--nets", oracle_nets, "networks to sample")->capture_default_str();
    oracle_cmd->add_option("--vcap", oracle_vcap, "activation-site cap (max 5000)")
        ->capture_default_str();
    oracle_cmd->add_option("--sizes", oracle_sizes, "batch sizes to exercise")
        ->capture_default_str();
    oracle_cmd->add_option("--out", oracle_out, "output directory (report.jsonl)");
    oracle_cmd->add_option("--space", oracle_space.space, "architecture space")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << e.what() << "\nrun with --help for usage\n";
        return 1;
    }

    try {
        if (score_cmd->parsed()) {
            const auto genome = graph::decode(score_genome_str);
            const auto spec = engine::parse_batch_spec(score_batch);
            const auto batch = engine::make_batch(spec);
            engine::InputDims dims{batch.channels, batch.height, batch.width};
            const auto inst = engine::instantiate(genome, score_init_seed, dims,
                                                  score_eng.resolve());
            score::ScoreReport report;
            if (score_f64) {
                // capture in 64-bit mode, then derive the same report fields
                const auto rec = engine::forward_capture(inst, batch,
                                                         engine::Precision::Float64);
                const auto p = score_reg.resolve();
                report.genome = graph::encode(genome);
                report.seed = inst.init_seed;
                report.samples = rec.sample_count;
                report.sites = rec.site_count;
                report.swap = score::swap_score(rec).distinct_count;
                report.standard = score::standard_pattern_score(rec).distinct_count;
                report.params_m = inst.params_m;
                report.flops = engine::count_flops(inst, dims);
                report.reg_off = (p.mode == score::RegularisationParams::Mode::Off);
                report.f_theta =
                    report.reg_off
                        ? 1.0
                        : score::regulariser(
                              static_cast<double>(inst.param_count) / p.theta_scale, p);
                report.reg_swap = static_cast<double>(report.swap) * report.f_theta;
                report.reg_params = report.params_m * report.f_theta;
                report.reg_flops = static_cast<double>(report.flops) * report.f_theta;
                report.mu = p.mu;
                report.sigma = p.sigma;
                report.batch = batch.descriptor();
            } else {
                report = score::score_all(inst, batch, score_reg.resolve());
            }
            const auto j = score::report_to_json(report);
            std::cout << j.dump() << "\n";
            if (!score_out.empty()) {
                write_snapshot(app, score_out);
                std::ofstream out(fs::path(score_out) / "score.jsonl");
                out << j.dump() << "\n";
            }
            return 0;
        }

        if (search_cmd->parsed()) {
            evo::SearchConfig cfg;
            cfg.space = search_space.resolve_space();
            cfg.space_params = search_space.resolve_params();
            cfg.population_size = search_pop;
            cfg.cycles = search_cycles;
            cfg.tournament_size = search_tournament;
            cfg.mutation_times = search_mut;
            cfg.crossover_prob = search_xprob;
            cfg.reg = search_reg.resolve();
            cfg.master_seed = master_seed;
            cfg.batch = engine::parse_batch_spec(search_batch);
            cfg.engine_opts = search_eng.resolve();
            cfg.threads = threads;
            const auto result = evo::run_search(cfg);
            write_snapshot(app, search_out);
            evo::write_best_txt((fs::path(search_out) / "best.txt").string(),
                                result.best_genome);
            evo::write_history_jsonl((fs::path(search_out) / "history.jsonl").string(),
                                     result.state);
            {
                std::ofstream cyc(fs::path(search_out) / "cycles.csv");
                cyc << "cycle,mu,sigma,best_score\n";
                for (const auto& c : result.state.cycle_log) {
                    cyc << c.cycle << "," << c.mu << "," << c.sigma << "," << c.best_score
                        << "\n";
                }
            }
            nlohmann::ordered_json j = score::report_to_json(result.best_report);
            j["history_size"] = result.state.history.size();
            std::cout << j.dump() << "\n";
            return 0;
        }

        if (corr_cmd->parsed()) {
            const auto table = eval::load_ground_truth_csv(corr_csv);
            eval::EvalOptions opts;
            opts.reg = corr_reg.resolve();
            opts.engine_opts = corr_eng.resolve();
            opts.threads = threads;
            const auto seeds = resolve_seeds(corr_seeds, corr_seed_list, master_seed);
            const auto reports = eval::correlate_metrics(
                table, engine::parse_batch_spec(corr_batch), seeds, opts);
            write_snapshot(app, corr_out);
            eval::write_correlation_csv((fs::path(corr_out) / "correlations.csv").string(),
                                        reports);
            eval::write_correlation_jsonl((fs::path(corr_out) / "correlations.jsonl").string(),
                                          reports);
            print_correlations(reports);
            return 0;
        }

        if (ab_bs->parsed()) {
            eval::EvalOptions opts;
            opts.reg = ab_bs_reg.resolve();
            opts.engine_opts = ab_bs_eng.resolve();
            opts.threads = threads;
            std::optional<eval::GroundTruthTable> table;
            if (!ab_bs_csv.empty()) table = eval::load_ground_truth_csv(ab_bs_csv);
            const auto result = eval::ablate_batch_size(
                ab_bs_space.resolve_space(), ab_bs_space.resolve_params(),
                engine::parse_batch_spec(ab_bs_batch), parse_int_list(ab_bs_sizes),
                resolve_seeds(ab_bs_seeds, ab_bs_seed_list, master_seed), ab_bs_nets, table,
                opts);
            write_snapshot(app, ab_bs_out);
            eval::write_long_csv((fs::path(ab_bs_out) / "batch-size.csv").string(), result.rows);
            eval::write_summary_csv((fs::path(ab_bs_out) / "batch-size-summary.csv").string(),
                                    eval::summarise_long_rows(result.rows));
            if (!result.correlations.empty()) {
                eval::write_correlation_csv(
                    (fs::path(ab_bs_out) / "batch-size-correlations.csv").string(),
                    result.correlations);
                print_correlations(result.correlations);
            }
            std::printf("wrote %zu observations to %s\n", result.rows.size(),
                        (fs::path(ab_bs_out) / "batch-size.csv").c_str());
            return 0;
        }

        if (ab_id->parsed()) {
            eval::EvalOptions opts;
            opts.reg = ab_id_reg.resolve();
            opts.engine_opts = ab_id_eng.resolve();
            opts.threads = threads;
            std::optional<eval::GroundTruthTable> table;
            if (!ab_id_csv.empty()) table = eval::load_ground_truth_csv(ab_id_csv);
            const auto result = eval::ablate_input_dims(
                ab_id_space.resolve_space(), ab_id_space.resolve_params(),
                engine::parse_batch_spec(ab_id_batch), parse_dims_list(ab_id_dims),
                resolve_seeds(ab_id_seeds, ab_id_seed_list, master_seed), ab_id_nets, table,
                opts);
            write_snapshot(app, ab_id_out);
            eval::write_long_csv((fs::path(ab_id_out) / "input-dim.csv").string(), result.rows);
            eval::write_summary_csv((fs::path(ab_id_out) / "input-dim-summary.csv").string(),
                                    eval::summarise_long_rows(result.rows));
            std::printf("wrote %zu observations to %s\n", result.rows.size(),
                        (fs::path(ab_id_out) / "input-dim.csv").c_str());
            return 0;
        }

        if (oracle_cmd->parsed()) {
            eval::OracleOptions opts;
            opts.seed = master_seed;
            std::vector<int> sizes = parse_int_list(oracle_sizes);
            opts.batch_sizes = sizes;
            const auto report = eval::oracle_check(oracle_space.resolve_space(), oracle_nets,
                                                   oracle_vcap, opts);
            if (!oracle_out.empty()) {
                write_snapshot(app, oracle_out);
                std::ofstream out(fs::path(oracle_out) / "report.jsonl");
                nlohmann::ordered_json j;
                j["nets_checked"] = report.nets_checked;
                j["comparisons"] = report.comparisons;
                j["vacuous"] = report.vacuous;
                j["failures"] = nlohmann::ordered_json::array();
                for (const auto& f : report.failures) {
                    j["failures"].push_back(
                        {{"genome", f.genome}, {"seed", f.seed}, {"batch", f.batch}, {"what", f.what}});
                }
                out << j.dump() << "\n";
            }
            if (report.vacuous) {
                std::printf("oracle-check: vacuous pass (site cap 0 checks nothing)\n");
                return 0;
            }
            if (report.passed()) {
                std::printf("oracle-check: PASS (%d nets, %d comparisons)\n",
                            report.nets_checked, report.comparisons);
                return 0;
            }
            std::printf("oracle-check: FAIL (%zu mismatches)\n", report.failures.size());
            for (const auto& f : report.failures) {
                std::printf("  %s  seed=%llu  batch=%s  %s\n", f.genome.c_str(),
                            static_cast<unsigned long long>(f.seed), f.batch.c_str(),
                            f.what.c_str());
            }
            return 3;
        }
    } catch (const graph::GenomeParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
