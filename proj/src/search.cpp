#include "swapnas/search.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "swapnas/rng.hpp"

namespace swapnas::evo {

namespace {

// Scoring is content-addressed: the same genome always receives the same
// weights within a run, so rescoring a duplicate is reproducible.
std::uint64_t genome_init_seed(std::uint64_t master_seed, const graph::Genome& g) {
    return derive_seed(master_seed, "weights", fnv1a64(graph::encode(g)));
}

Member score_genome(const SearchConfig& cfg, const engine::InputBatch& batch,
                    const score::RegularisationParams& reg, const graph::Genome& g, int cycle) {
    engine::InputDims dims{batch.channels, batch.height, batch.width};
    const auto inst = engine::instantiate(g, genome_init_seed(cfg.master_seed, g), dims,
                                          cfg.engine_opts);
    Member m;
    m.genome = g;
    m.report = score::score_all(inst, batch, reg);
    m.score = m.report.reg_swap;
    m.cycle = cycle;
    return m;
}

graph::Genome mutate_child(const SearchConfig& cfg, const graph::Genome& parent,
                           std::uint64_t seed) {
    Rng rng(seed);
    const std::uint64_t op_seed = rng.next_u64();
    if (cfg.space == graph::SpaceId::Transformer) {
        return graph::mutate_operation(parent, op_seed);
    }
    // Cell spaces alternate between the two mutation kinds at random; a
    // cell without rewirable edges falls back to an operation mutation.
    if (rng.next_bool()) {
        try {
            return graph::mutate_connectivity(std::get<graph::CellGenome>(parent), op_seed);
        } catch (const std::invalid_argument&) {
            return graph::mutate_operation(parent, op_seed);
        }
    }
    return graph::mutate_operation(parent, op_seed);
}

// Deterministic parallel map: slot i is written only by the worker that
// owns index i; reduction order never depends on thread timing.
template <class Fn>
void parallel_indexed(int count, int threads, Fn&& fn) {
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    const int workers = std::min(threads, count);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int i = w; i < count; i += workers) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::vector<double> theta_history(const SearchState& state) {
    // params_m is params/1e6, so the factor is exactly 1.0 at the default
    // scale and the adaptive bookkeeping stays bit-exact.
    const double factor = 1e6 / state.reg.theta_scale;
    std::vector<double> out;
    out.reserve(state.history.size());
    for (const auto& m : state.history) out.push_back(m.report.params_m * factor);
    return out;
}

void log_cycle(SearchState& state, int cycle) {
    CycleStats cs;
    cs.cycle = cycle;
    cs.mu = state.reg.mu;
    cs.sigma = state.reg.sigma;
    cs.best_score = state.best.score;
    state.cycle_log.push_back(cs);
}

}  // namespace

int SearchConfig::effective_tournament() const {
    if (tournament_size > 0) return tournament_size;
    return std::max(2, population_size / 2);
}

void SearchConfig::check() const {
    if (population_size < 2) throw std::invalid_argument("population_size must be >= 2");
    if (cycles < 1) throw std::invalid_argument("cycles must be >= 1");
    const int st = effective_tournament();
    if (st < 2 || st > population_size) {
        throw std::invalid_argument("tournament size must be in [2, population_size]");
    }
    if (mutation_times < 1) throw std::invalid_argument("mutation_times must be >= 1");
    if (crossover_prob < 0.0 || crossover_prob > 1.0) {
        throw std::invalid_argument("crossover_prob must be in [0, 1]");
    }
}

SearchState init_population(const SearchConfig& cfg) {
    cfg.check();
    const engine::InputBatch batch = engine::make_batch(cfg.batch);
    SearchState state;
    state.reg = cfg.reg;
    for (int i = 0; i < cfg.population_size; ++i) {
        Member member;
        bool scored = false;
        for (int attempt = 0; attempt <= cfg.score_retries; ++attempt) {
            const auto g = graph::random_genome(
                cfg.space, derive_seed(cfg.master_seed, "init", static_cast<std::uint64_t>(i),
                                       static_cast<std::uint64_t>(attempt)),
                cfg.space_params);
            try {
                member = score_genome(cfg, batch, state.reg, g, 0);
                scored = true;
                break;
            } catch (const std::runtime_error&) {
                // numeric failure: resample and retry
            }
        }
        if (!scored) throw std::runtime_error("could not score an initial population member");
        member.age = state.next_age++;
        state.population.push_back(member);
        state.history.push_back(member);
        if (state.population.size() == 1 || member.score > state.best.score) {
            state.best = member;
        }
    }
    if (state.reg.mode == score::RegularisationParams::Mode::Adaptive) {
        state.reg = score::adaptive_update(theta_history(state), state.reg);
    }
    log_cycle(state, 0);
    return state;
}

void run_cycle(SearchState& state, const SearchConfig& cfg) {
    if (state.population.empty()) throw std::logic_error("run_cycle before init_population");
    const engine::InputBatch batch = engine::make_batch(cfg.batch);
    const int next_cycle = state.cycle + 1;
    Rng rng(derive_seed(cfg.master_seed, "cycle", static_cast<std::uint64_t>(next_cycle)));

    // Tournament candidates: uniform sample without replacement.
    const int st = std::min<int>(cfg.effective_tournament(),
                                 static_cast<int>(state.population.size()));
    std::vector<std::size_t> order(state.population.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int i = 0; i < st; ++i) {
        const std::size_t j = static_cast<std::size_t>(i) +
                              rng.next_below(order.size() - static_cast<std::size_t>(i));
        std::swap(order[static_cast<std::size_t>(i)], order[j]);
    }
    auto better = [&](std::size_t a, std::size_t b) {
        const auto& ma = state.population[a];
        const auto& mb = state.population[b];
        if (ma.score != mb.score) return ma.score > mb.score;
        return ma.age < mb.age;
    };
    std::vector<std::size_t> cand(order.begin(), order.begin() + st);
    std::sort(cand.begin(), cand.end(), better);

    graph::Genome parent = state.population[cand[0]].genome;
    if (st >= 2 && rng.next_unit() < cfg.crossover_prob) {
        parent = graph::crossover(state.population[cand[0]].genome,
                                  state.population[cand[1]].genome,
                                  derive_seed(cfg.master_seed, "xover",
                                              static_cast<std::uint64_t>(next_cycle)));
    }

    // Children are independent mutations of the parent; seeds are assigned
    // up front so scoring can run concurrently.
    std::vector<Member> children(static_cast<std::size_t>(cfg.mutation_times));
    std::vector<char> ok(static_cast<std::size_t>(cfg.mutation_times), 0);
    parallel_indexed(cfg.mutation_times, cfg.threads, [&](int i) {
        for (int attempt = 0; attempt <= cfg.score_retries; ++attempt) {
            const std::uint64_t seed =
                derive_seed(cfg.master_seed, "child",
                            static_cast<std::uint64_t>(next_cycle),
                            static_cast<std::uint64_t>(i) * 131 + static_cast<std::uint64_t>(attempt));
            try {
                const auto child = mutate_child(cfg, parent, seed);
                children[static_cast<std::size_t>(i)] =
                    score_genome(cfg, batch, state.reg, child, next_cycle);
                ok[static_cast<std::size_t>(i)] = 1;
                return;
            } catch (const std::runtime_error&) {
                // numeric failure: re-mutate and retry, then skip the child
            }
        }
    });

    int best_child = -1;
    for (int i = 0; i < cfg.mutation_times; ++i) {
        if (!ok[static_cast<std::size_t>(i)]) continue;
        if (best_child < 0 ||
            children[static_cast<std::size_t>(i)].score >
                children[static_cast<std::size_t>(best_child)].score) {
            best_child = i;
        }
    }
    for (int i = 0; i < cfg.mutation_times; ++i) {
        if (ok[static_cast<std::size_t>(i)]) state.history.push_back(children[static_cast<std::size_t>(i)]);
    }

    if (best_child >= 0) {
        Member add = children[static_cast<std::size_t>(best_child)];
        add.age = state.next_age++;
        state.population.push_back(add);
        if (add.score > state.best.score) state.best = add;
        // Remove the worst; ties break toward the oldest member.
        std::size_t worst = 0;
        for (std::size_t i = 1; i < state.population.size(); ++i) {
            const auto& m = state.population[i];
            const auto& wm = state.population[worst];
            if (m.score < wm.score || (m.score == wm.score && m.age < wm.age)) worst = i;
        }
        state.population.erase(state.population.begin() + static_cast<std::ptrdiff_t>(worst));
    }

    state.cycle = next_cycle;
    if (state.reg.mode == score::RegularisationParams::Mode::Adaptive) {
        state.reg = score::adaptive_update(theta_history(state), state.reg);
    }
    log_cycle(state, next_cycle);
}

SearchResult run_search(const SearchConfig& cfg) {
    SearchState state = init_population(cfg);
    for (int c = 0; c < cfg.cycles; ++c) run_cycle(state, cfg);
    SearchResult result;
    result.best_genome = state.best.genome;
    result.best_report = state.best.report;
    result.state = std::move(state);
    return result;
}

void write_history_jsonl(const std::string& path, const SearchState& state) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& m : state.history) {
        nlohmann::ordered_json j = score::report_to_json(m.report);
        j["cycle"] = m.cycle;
        j["score"] = m.score;
        out << j.dump() << "\n";
    }
}

void write_best_txt(const std::string& path, const graph::Genome& best) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << graph::encode(best) << "\n";
}

}  // namespace swapnas::evo
