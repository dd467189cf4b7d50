// Evolutionary architecture search driven by the regularised SWAP score:
// tournament parent selection with optional crossover, mutation-generated
// offspring, steady-state replacement (add best child, drop the worst).
//
// The whole run is a pure function of the config: every rng stream is
// derived from (master_seed, cycle, child index), so children may be scored
// concurrently without changing any outcome.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swapnas/batch.hpp"
#include "swapnas/genome.hpp"
#include "swapnas/network.hpp"
#include "swapnas/pattern.hpp"

namespace swapnas::evo {

struct SearchConfig {
    graph::SpaceId space = graph::SpaceId::NB201;
    graph::SpaceParams space_params = graph::SpaceParams::defaults(graph::SpaceId::NB201);
    int population_size = 10;
    int cycles = 20;
    int tournament_size = 0;  // 0 -> population_size / 2, floor 2
    int mutation_times = 5;
    double crossover_prob = 0.5;
    score::RegularisationParams reg;
    std::uint64_t master_seed = 1;
    engine::BatchSpec batch;
    engine::EngineOptions engine_opts;
    int threads = 1;
    int score_retries = 2;

    int effective_tournament() const;
    void check() const;  // throws std::invalid_argument on bad values
};

struct Member {
    graph::Genome genome;
    score::ScoreReport report;
    double score = 0.0;
    std::int64_t age = 0;  // insertion order, lower = older
    int cycle = 0;         // cycle that produced it (0 = initial population)
};

struct CycleStats {
    int cycle = 0;
    double mu = 0.0;
    double sigma = 0.0;
    double best_score = 0.0;
};

struct SearchState {
    std::vector<Member> population;
    std::vector<Member> history;  // every scored genome
    std::vector<CycleStats> cycle_log;
    score::RegularisationParams reg;  // current parameters
    int cycle = 0;
    std::int64_t next_age = 0;
    Member best;
};

SearchState init_population(const SearchConfig& cfg);
void run_cycle(SearchState& state, const SearchConfig& cfg);

struct SearchResult {
    graph::Genome best_genome;
    score::ScoreReport best_report;
    SearchState state;
};

SearchResult run_search(const SearchConfig& cfg);

// history.jsonl: one score report per scored genome, with its cycle and the
// regularisation parameters in effect. best.txt: the encoded best genome.
void write_history_jsonl(const std::string& path, const SearchState& state);
void write_best_txt(const std::string& path, const graph::Genome& best);

}  // namespace swapnas::evo
