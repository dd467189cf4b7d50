// Acceptance suite. Runs every release gate end to end and prints one
// PASS/FAIL line per criterion; exits nonzero if any gate fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"

#include "swapnas/batch.hpp"
#include "swapnas/genome.hpp"
#include "swapnas/harness.hpp"
#include "swapnas/network.hpp"
#include "swapnas/pattern.hpp"
#include "swapnas/rng.hpp"
#include "swapnas/search.hpp"
#include "swapnas/stats.hpp"

using namespace swapnas;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Oracle equivalence: hash-set pattern counts equal brute force, exactly.
// ---------------------------------------------------------------------------
Outcome criterion_oracle_equivalence() {
    const auto t0 = std::chrono::steady_clock::now();
    eval::OracleOptions opts;
    opts.batch_sizes = {4, 8, 16};
    opts.seed = 2027;
    const auto report = eval::oracle_check(graph::SpaceId::NB201, 50, 5000, opts);
    const double secs = seconds_since(t0);
    std::ostringstream os;
    os << report.nets_checked << " nets, " << report.comparisons << " comparisons, "
       << report.failures.size() << " mismatches, " << secs << " s (limit 120)";
    return {report.passed() && report.nets_checked == 50 && secs < 120.0, os.str()};
}

// ---------------------------------------------------------------------------
// 2. Closed-form activation-site count equals instrumentation, exactly.
// ---------------------------------------------------------------------------
engine::PlainConvSpec random_plain_spec(Rng& rng) {
    engine::PlainConvSpec spec;
    spec.in_channels = 1 + static_cast<int>(rng.next_below(3));
    spec.in_height = 8 + static_cast<int>(rng.next_below(9));
    spec.in_width = 8 + static_cast<int>(rng.next_below(9));
    int h = spec.in_height, w = spec.in_width;
    const int layers = 1 + static_cast<int>(rng.next_below(3));
    for (int l = 0; l < layers; ++l) {
        for (int attempt = 0; attempt < 10; ++attempt) {
            const int k = 1 + 2 * static_cast<int>(rng.next_below(3));  // 1, 3, 5
            const int stride = 1 + static_cast<int>(rng.next_below(2));
            const int oh = (h - k) / stride + 1;
            const int ow = (w - k) / stride + 1;
            if (oh < 1 || ow < 1) continue;
            spec.convs.push_back({1 + static_cast<int>(rng.next_below(6)), k, stride, 0});
            h = oh;
            w = ow;
            break;
        }
    }
    return spec;
}

Outcome criterion_closed_form_sites() {
    Rng rng(99);
    int checked = 0;
    for (int i = 0; i < 20; ++i) {
        auto spec = random_plain_spec(rng);
        if (spec.convs.empty()) {
            --i;
            continue;
        }
        const auto inst = engine::instantiate_plain(spec, rng.next_u64());
        const auto batch = engine::make_noise_batch(rng.next_u64(), 3, spec.in_channels,
                                                    spec.in_height, spec.in_width);
        const auto rec = engine::forward_capture(inst, batch);
        if (engine::count_sites_closed_form(inst) != rec.site_count) {
            return {false, "conv stack " + std::to_string(i) + " mismatch"};
        }
        ++checked;
    }
    graph::SpaceParams params = graph::SpaceParams::defaults(graph::SpaceId::Transformer);
    params.seq_len = 8;
    params.vocab = 64;
    params.d_model_choices = {16, 32};
    params.d_ff_choices = {32, 64, 128};
    params.layer_choices = {1, 2, 3};
    params.head_choices = {1, 2, 4};
    for (int i = 0; i < 20; ++i) {
        const auto g = graph::random_genome(graph::SpaceId::Transformer,
                                            derive_seed(17, "tf", static_cast<std::uint64_t>(i)),
                                            params);
        const auto inst = engine::instantiate(g, derive_seed(17, "init", i));
        const auto batch = engine::make_token_batch(derive_seed(17, "tok", i), 3, 8, 64);
        const auto rec = engine::forward_capture(inst, batch);
        if (engine::count_sites_closed_form(inst) != rec.site_count) {
            return {false, "transformer " + std::to_string(i) + " mismatch"};
        }
        ++checked;
    }
    return {checked == 40, std::to_string(checked) + "/40 exact matches"};
}

// ---------------------------------------------------------------------------
// 3. Cardinality bounds on 200 random networks across all three spaces.
// ---------------------------------------------------------------------------
Outcome criterion_cardinality_bounds() {
    const int batch_sizes[3] = {4, 8, 16};
    int checked = 0;

    graph::SpaceParams cell_params = graph::SpaceParams::defaults(graph::SpaceId::NB201);
    cell_params.stem_channels = 4;
    graph::SpaceParams dlite_params = graph::SpaceParams::defaults(graph::SpaceId::DartsLite);
    dlite_params.stem_channels = 4;
    graph::SpaceParams tf_params = graph::SpaceParams::defaults(graph::SpaceId::Transformer);
    tf_params.seq_len = 8;
    tf_params.vocab = 64;
    tf_params.d_model_choices = {16, 32};
    tf_params.d_ff_choices = {32, 64};
    tf_params.layer_choices = {1, 2};
    tf_params.head_choices = {1, 2};

    struct SpaceCase {
        graph::SpaceId space;
        const graph::SpaceParams* params;
        int count;
    };
    const SpaceCase cases[] = {{graph::SpaceId::NB201, &cell_params, 70},
                               {graph::SpaceId::DartsLite, &dlite_params, 70},
                               {graph::SpaceId::Transformer, &tf_params, 60}};
    for (const auto& c : cases) {
        for (int i = 0; i < c.count; ++i) {
            const int samples = batch_sizes[i % 3];
            const auto g = graph::random_genome(
                c.space, derive_seed(31, "bounds", static_cast<std::uint64_t>(checked)),
                *c.params);
            engine::InputBatch batch;
            engine::NetworkInstance inst;
            if (c.space == graph::SpaceId::Transformer) {
                inst = engine::instantiate(g, derive_seed(31, "init", checked));
                batch = engine::make_token_batch(derive_seed(31, "tok", checked), samples, 8, 64);
            } else {
                inst = engine::instantiate(g, derive_seed(31, "init", checked), {3, 8, 8});
                batch = engine::make_noise_batch(derive_seed(31, "img", checked), samples, 3, 8, 8);
            }
            const auto rec = engine::forward_capture(inst, batch);
            const bool ternary = c.space == graph::SpaceId::Transformer;
            const auto swap = score::swap_score(rec).distinct_count;
            const auto standard = score::standard_pattern_score(rec).distinct_count;
            if (standard > samples) return {false, "standard bound violated"};
            if (swap > score::pattern_cardinality_bound(rec.site_count, samples, ternary ? 3 : 2)) {
                return {false, "swap bound violated"};
            }
            for (const auto v : rec.matrix) {
                if (!ternary && v < 0) return {false, "ReLU matrix contains -1"};
                if (v < -1 || v > 1) return {false, "matrix value outside {-1,0,1}"};
            }
            ++checked;
        }
    }
    return {checked == 200, std::to_string(checked) + "/200 networks within bounds"};
}

// ---------------------------------------------------------------------------
// 4. Saturation gap: value-wise score pins at S while SWAP stays diverse.
// ---------------------------------------------------------------------------
Outcome criterion_saturation() {
    const auto t0 = std::chrono::steady_clock::now();
    const int nets = 50, samples = 8;
    const auto batch = engine::make_correlated_image_batch(7, samples, 3, 32, 32, 0.9999);
    int saturated = 0;
    std::set<std::int64_t> swap_values;
    for (int i = 0; i < nets; ++i) {
        const auto g = graph::random_genome(graph::SpaceId::NB201,
                                            derive_seed(11, "net", static_cast<std::uint64_t>(i)));
        const auto inst = engine::instantiate(g, derive_seed(11, "init", i), {3, 32, 32});
        const auto rec = engine::forward_capture(inst, batch);
        if (score::standard_pattern_score(rec).distinct_count == samples) ++saturated;
        swap_values.insert(score::swap_score(rec).distinct_count);
    }
    const double secs = seconds_since(t0);
    std::ostringstream os;
    os << "standard==S on " << saturated << "/" << nets << " (need >= 48), "
       << swap_values.size() << " distinct swap values (need >= 10), " << secs
       << " s (limit 180)";
    return {saturated >= 48 && swap_values.size() >= 10 && secs < 180.0, os.str()};
}

// ---------------------------------------------------------------------------
// 5. Regulariser analytics at 1e-12.
// ---------------------------------------------------------------------------
Outcome criterion_regulariser() {
    const double tol = 1e-12;
    score::RegularisationParams p;
    p.mode = score::RegularisationParams::Mode::Static;
    p.mu = 1.7;
    p.sigma = 0.6;
    if (std::fabs(score::regulariser(p.mu, p) - 1.0) > tol) return {false, "f(mu) != 1"};
    const double e1 = std::exp(-1.0);
    if (std::fabs(score::regulariser(p.mu + std::sqrt(p.sigma), p) - e1) > tol ||
        std::fabs(score::regulariser(p.mu - std::sqrt(p.sigma), p) - e1) > tol) {
        return {false, "f(mu +- sqrt(sigma)) != exp(-1)"};
    }
    for (double d = 0.05; d < 4.0; d += 0.05) {
        if (std::fabs(score::regulariser(p.mu + d, p) - score::regulariser(p.mu - d, p)) > tol) {
            return {false, "symmetry broken at d=" + std::to_string(d)};
        }
    }
    // argmax of psi * f over a theta grid that contains mu
    const std::int64_t psi = 1234;
    double best_v = -1, best_theta = -1;
    for (double theta = 0.2; theta <= 3.2001; theta += 0.05) {
        const double v = score::regularised_swap(psi, theta, p);
        if (v > best_v) {
            best_v = v;
            best_theta = theta;
        }
    }
    if (std::fabs(best_theta - p.mu) > 1e-9) {
        return {false, "argmax at " + std::to_string(best_theta) + " not mu"};
    }
    return {true, "unit value, exp(-1) points, symmetry and argmax all within 1e-12"};
}

// ---------------------------------------------------------------------------
// 6. Search invariants on a toy run, deterministic end to end.
// ---------------------------------------------------------------------------
evo::SearchConfig toy_search_config() {
    evo::SearchConfig cfg;
    cfg.space = graph::SpaceId::NB201;
    cfg.space_params = graph::SpaceParams::defaults(graph::SpaceId::NB201);
    cfg.space_params.stem_channels = 8;
    cfg.population_size = 10;
    cfg.cycles = 20;
    cfg.mutation_times = 5;
    cfg.master_seed = 404;
    cfg.batch = engine::parse_batch_spec("noise:s=8,dims=3x16x16,seed=6");
    return cfg;
}

Outcome criterion_search_invariants() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = toy_search_config();
    auto state = evo::init_population(cfg);
    if (state.population.size() != 10) return {false, "initial population size wrong"};
    double best = state.best.score;
    for (int c = 0; c < cfg.cycles; ++c) {
        evo::run_cycle(state, cfg);
        if (state.population.size() != 10) {
            return {false, "population size drifted at cycle " + std::to_string(c + 1)};
        }
        double pop_best = state.population[0].score;
        for (const auto& m : state.population) pop_best = std::max(pop_best, m.score);
        if (pop_best + 1e-15 < best) {
            return {false, "best score decreased at cycle " + std::to_string(c + 1)};
        }
        best = std::max(best, pop_best);
    }
    // the stepped loop above is exactly run_search's sequence
    const auto rerun = evo::run_search(cfg);
    const bool identical =
        graph::encode(rerun.best_genome) == graph::encode(state.best.genome);
    const double secs = seconds_since(t0);
    std::ostringstream os;
    os << "20 cycles, population stable, best monotone, reruns identical=" << identical << ", "
       << secs << " s (limit 60)";
    return {identical && secs < 60.0, os.str()};
}

// ---------------------------------------------------------------------------
// 7. Spearman against a brute-force average-rank oracle.
// ---------------------------------------------------------------------------
Outcome criterion_spearman_oracle() {
    Rng rng(31415);
    int compared = 0;
    double worst = 0.0;
    while (compared < 10000) {
        const int n = 3 + static_cast<int>(rng.next_below(30));
        std::vector<double> xs(static_cast<std::size_t>(n));
        std::vector<double> ys(static_cast<std::size_t>(n));
        const bool heavy_ties = rng.next_bool();
        for (auto& x : xs) {
            x = heavy_ties ? static_cast<double>(rng.next_below(6)) : rng.next_normal();
        }
        for (auto& y : ys) {
            y = heavy_ties ? static_cast<double>(rng.next_below(6)) : rng.next_normal();
        }
        double rho;
        try {
            rho = eval::spearman(xs, ys);
        } catch (const std::invalid_argument&) {
            continue;  // constant vector drawn
        }
        const double oracle = testing_oracles::spearman_bruteforce(xs, ys);
        worst = std::max(worst, std::fabs(rho - oracle));
        if (std::fabs(rho - oracle) > 1e-12) {
            return {false, "deviation " + std::to_string(std::fabs(rho - oracle))};
        }
        ++compared;
    }
    std::ostringstream os;
    os << compared << " vectors, max |diff| " << worst << " (tol 1e-12)";
    return {true, os.str()};
}

// ---------------------------------------------------------------------------
// 8. Adaptive mu/sigma bookkeeping is exactly mean/std of the history.
// ---------------------------------------------------------------------------
Outcome criterion_adaptive_bookkeeping() {
    evo::SearchConfig cfg;
    cfg.space = graph::SpaceId::NB201;
    cfg.space_params = graph::SpaceParams::defaults(graph::SpaceId::NB201);
    cfg.space_params.stem_channels = 4;
    cfg.population_size = 6;
    cfg.cycles = 8;
    cfg.mutation_times = 3;
    cfg.master_seed = 77;
    cfg.batch = engine::parse_batch_spec("noise:s=4,dims=3x8x8,seed=5");
    cfg.reg.mode = score::RegularisationParams::Mode::Adaptive;
    cfg.reg.mu = 0.5;
    cfg.reg.sigma = 1.0;

    auto state = evo::init_population(cfg);
    int checks = 0;
    auto verify = [&](int cycle) -> bool {
        std::vector<double> thetas;
        for (const auto& m : state.history) {
            if (m.cycle <= cycle) thetas.push_back(m.report.params_m);
        }
        const double mu = eval::mean_of(thetas);
        const double sigma = std::max(score::kSigmaMin, eval::sample_std(thetas));
        const auto& logged = state.cycle_log.back();
        return logged.mu == mu && logged.sigma == sigma && state.reg.mu == mu &&
               state.reg.sigma == sigma;
    };
    if (!verify(0)) return {false, "mismatch after init"};
    ++checks;
    for (int c = 1; c <= cfg.cycles; ++c) {
        evo::run_cycle(state, cfg);
        if (!verify(c)) return {false, "mismatch after cycle " + std::to_string(c)};
        ++checks;
    }
    return {true, std::to_string(checks) + " cycle logs match mean/sample-std exactly"};
}

// ---------------------------------------------------------------------------
// 9. Published headline correlations are declared out of desk-scale reach;
//    the external-data hook is exercised on a self-consistent table.
// ---------------------------------------------------------------------------
Outcome criterion_external_check_machinery() {
    graph::SpaceParams params = graph::SpaceParams::defaults(graph::SpaceId::NB201);
    params.stem_channels = 4;
    engine::BatchSpec spec = engine::parse_batch_spec("corr:s=8,dims=3x8x8,seed=7");
    eval::GroundTruthTable table;
    const std::uint64_t run_seed = 21;
    const auto batch = engine::make_batch(spec, run_seed);
    for (int i = 0; i < 12; ++i) {
        const auto g = graph::random_genome(graph::SpaceId::NB201,
                                            derive_seed(500, "tbl", static_cast<std::uint64_t>(i)),
                                            params);
        const std::string enc = graph::encode(g);
        const auto inst = engine::instantiate(
            g, derive_seed(run_seed, "weights", fnv1a64(enc)), {3, 8, 8});
        const auto rep = score::score_all(inst, batch, {});
        table.rows.push_back({"arch-" + std::to_string(i), enc, static_cast<double>(rep.swap)});
    }
    const auto reports = eval::correlate_metrics(table, spec, {run_seed}, {});
    for (const auto& rep : reports) {
        if (rep.metric == "swap") {
            if (rep.per_seed.size() != 1 || std::fabs(rep.per_seed[0] - 1.0) > 1e-9) {
                return {false, "self-consistency rho != 1"};
            }
            return {true,
                    "headline correlations need trained ground truth (not reproduced here); "
                    "external-csv hook verified with self-consistent table, rho = 1.0"};
        }
    }
    return {false, "swap metric missing from correlation reports"};
}

}  // namespace

int main() {
    using Criterion = std::pair<const char*, std::function<Outcome()>>;
    const std::vector<Criterion> criteria = {
        {"oracle equivalence (exact)", criterion_oracle_equivalence},
        {"closed-form site count cross-check (exact)", criterion_closed_form_sites},
        {"cardinality bounds (100%)", criterion_cardinality_bounds},
        {"saturation gap reproduction", criterion_saturation},
        {"regulariser analytics (1e-12)", criterion_regulariser},
        {"search invariants (deterministic)", criterion_search_invariants},
        {"spearman vs brute-force oracle (1e-12)", criterion_spearman_oracle},
        {"adaptive mu/sigma bookkeeping (exact)", criterion_adaptive_bookkeeping},
        {"declared non-reproduction + external-data hook", criterion_external_check_machinery},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome outcome;
        try {
            outcome = criteria[i].second();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] criterion %zu: %s — %s\n", outcome.pass ? "PASS" : "FAIL", i + 1,
                    criteria[i].first, outcome.detail.c_str());
        std::fflush(stdout);
        if (!outcome.pass) ++failures;
    }
    if (failures == 0) {
        std::printf("acceptance: all %zu criteria passed\n", criteria.size());
        return 0;
    }
    std::printf("acceptance: %d criteria FAILED\n", failures);
    return 1;
}
