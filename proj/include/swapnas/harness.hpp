// Evaluation harness: rank correlation against ground-truth accuracy
// tables, batch-size / input-dimension ablations, and the brute-force
// oracle that certifies the hash-set pattern counts.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "swapnas/batch.hpp"
#include "swapnas/genome.hpp"
#include "swapnas/network.hpp"
#include "swapnas/pattern.hpp"

namespace swapnas::eval {

struct GroundTruthRow {
    std::string arch_id;
    std::string encoding;
    double accuracy = 0.0;
};

struct GroundTruthTable {
    std::vector<GroundTruthRow> rows;
};

// CSV with required header: arch_id,encoding,accuracy. RFC-4180 style
// quoting (encodings contain commas).
GroundTruthTable load_ground_truth_csv(const std::string& path);
void write_ground_truth_csv(const std::string& path, const GroundTruthTable& table);

struct CorrelationReport {
    std::string metric;
    std::vector<std::uint64_t> seeds;  // seeds with a reported rho
    std::vector<double> per_seed;      // rho per reported seed
    double mean_rho = 0.0;
    double std_err = 0.0;
    int n = 0;          // architectures scored
    int skipped = 0;    // undecodable rows
    std::string error;  // nonempty when some seed produced no rho
                        // (e.g. a constant metric column)
};

struct EvalOptions {
    score::RegularisationParams reg;
    engine::EngineOptions engine_opts;
    int threads = 1;
};

// The metric columns every correlation run reports, in order.
const std::vector<std::string>& metric_names();

// For each seed: score every architecture on the same batch, then rank-
// correlate each metric against accuracy. Undecodable rows are skipped
// with a warning on stderr and counted.
std::vector<CorrelationReport> correlate_metrics(const GroundTruthTable& table,
                                                 const engine::BatchSpec& batch,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 const EvalOptions& opts = {});

// Long-format observation: one metric value for one setting and seed.
struct LongRow {
    std::string metric;
    std::string setting;
    std::uint64_t seed = 0;
    double value = 0.0;
};

struct AblationResult {
    std::vector<LongRow> rows;                  // plot-ready long format
    std::vector<CorrelationReport> correlations;  // only when ground truth given
};

// Batch-size sweep. With a ground-truth table: correlations per size.
// Without: score distributions of n_nets random genomes per size.
AblationResult ablate_batch_size(graph::SpaceId space, const graph::SpaceParams& params,
                                 const engine::BatchSpec& base_batch,
                                 const std::vector<int>& sizes,
                                 const std::vector<std::uint64_t>& seeds, int n_nets,
                                 const std::optional<GroundTruthTable>& table,
                                 const EvalOptions& opts = {});

// Input-dimension sweep over CxHxW crops (image kind crops a source batch;
// noise kind generates at each dimension). Records V per dimension.
AblationResult ablate_input_dims(graph::SpaceId space, const graph::SpaceParams& params,
                                 const engine::BatchSpec& base_batch,
                                 const std::vector<engine::InputDims>& dims_list,
                                 const std::vector<std::uint64_t>& seeds, int n_nets,
                                 const std::optional<GroundTruthTable>& table,
                                 const EvalOptions& opts = {});

void write_long_csv(const std::string& path, const std::vector<LongRow>& rows);
void write_correlation_csv(const std::string& path,
                           const std::vector<CorrelationReport>& reports);
void write_correlation_jsonl(const std::string& path,
                             const std::vector<CorrelationReport>& reports);

// Mean and standard error per (metric, setting) group, pooling seeds, in
// first-appearance order. Mirrors the mean +- std-err sweep plots.
struct SummaryRow {
    std::string metric;
    std::string setting;
    double mean = 0.0;
    double std_err = 0.0;
    int n = 0;
};
std::vector<SummaryRow> summarise_long_rows(const std::vector<LongRow>& rows);
void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);

// Reference pattern counts computed straight off the int8 matrix by
// pairwise comparison; deliberately independent of the bit-packing +
// hash-set path they certify.
std::int64_t naive_distinct_rows(const engine::ActivationRecord& rec);
std::int64_t naive_distinct_columns(const engine::ActivationRecord& rec);

struct OracleFailure {
    std::string genome;
    std::uint64_t seed = 0;
    std::string batch;
    std::string what;
};

struct OracleReport {
    int nets_checked = 0;
    int comparisons = 0;
    bool vacuous = false;  // site cap of 0 checks nothing
    std::vector<OracleFailure> failures;
    bool passed() const { return failures.empty(); }
};

struct OracleOptions {
    std::vector<int> batch_sizes = {4, 8, 16};
    engine::EngineOptions engine_opts;
    std::uint64_t seed = 1;
    // Test hook: lets a fixture corrupt the record seen by the fast path
    // to prove the oracle detects mismatches. Never set in production.
    std::function<void(engine::ActivationRecord&)> tamper_fast_path;
};

// Random small networks (V capped at site_cap) captured in 64-bit mode;
// asserts hash-set counts equal the naive pairwise counts exactly.
OracleReport oracle_check(graph::SpaceId space, int n_nets, std::int64_t site_cap,
                          const OracleOptions& opts = {});

}  // namespace swapnas::eval
