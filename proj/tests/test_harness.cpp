#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"

#include "swapnas/harness.hpp"
#include "swapnas/rng.hpp"
#include "swapnas/stats.hpp"

using namespace swapnas;

namespace {

std::string temp_file(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

graph::SpaceParams tiny_cell_params() {
    auto p = graph::SpaceParams::defaults(graph::SpaceId::NB201);
    p.stem_channels = 4;
    return p;
}

// Ground truth whose accuracy column is the tool's own swap score.
eval::GroundTruthTable self_consistent_table(const engine::BatchSpec& spec, int n,
                                             std::uint64_t run_seed) {
    eval::GroundTruthTable table;
    const auto batch = engine::make_batch(spec, run_seed);
    for (int i = 0; i < n; ++i) {
        const auto g = graph::random_genome(graph::SpaceId::NB201,
                                            derive_seed(500, "tbl", static_cast<std::uint64_t>(i)),
                                            tiny_cell_params());
        const std::string enc = graph::encode(g);
        engine::InputDims dims{batch.channels, batch.height, batch.width};
        const auto inst = engine::instantiate(g, derive_seed(run_seed, "weights", fnv1a64(enc)),
                                              dims);
        const auto rep = score::score_all(inst, batch, {});
        table.rows.push_back({"arch-" + std::to_string(i), enc,
                              static_cast<double>(rep.swap)});
    }
    return table;
}

}  // namespace

TEST_SUITE_BEGIN("harness");

TEST_CASE("ground-truth csv round-trips with quoting") {
    eval::GroundTruthTable table;
    table.rows.push_back({"a1", "space=TFORM;L=1,H=1,DM=32,DF=64,T=8,V=32", 0.75});
    table.rows.push_back({"a2", graph::encode(graph::random_genome(graph::SpaceId::NB201, 3)),
                          0.5});
    const auto path = temp_file("swapnas_gt.csv");
    eval::write_ground_truth_csv(path, table);
    const auto loaded = eval::load_ground_truth_csv(path);
    REQUIRE(loaded.rows.size() == 2);
    CHECK(loaded.rows[0].encoding == table.rows[0].encoding);  // commas survive quoting
    CHECK(loaded.rows[0].accuracy == 0.75);
    std::filesystem::remove(path);
}

TEST_CASE("csv loader rejects malformed tables") {
    const auto path = temp_file("swapnas_bad.csv");
    {
        std::ofstream out(path);
        out << "wrong,header,here\n";
    }
    CHECK_THROWS_AS(eval::load_ground_truth_csv(path), std::runtime_error);
    {
        std::ofstream out(path);
        out << "arch_id,encoding,accuracy\nx,enc,notanumber\n";
    }
    CHECK_THROWS_AS(eval::load_ground_truth_csv(path), std::runtime_error);
    {
        std::ofstream out(path);
        out << "arch_id,encoding,accuracy\nx,enc,1.0\nx,enc,2.0\n";
    }
    CHECK_THROWS_AS(eval::load_ground_truth_csv(path), std::runtime_error);  // duplicate id
    std::filesystem::remove(path);
}

TEST_CASE("correlate_metrics is self-consistent and order-invariant") {
    engine::BatchSpec spec = engine::parse_batch_spec("corr:s=8,dims=3x8x8,seed=7");
    auto table = self_consistent_table(spec, 8, 21);
    const std::vector<std::uint64_t> seeds = {21};
    const auto reports = eval::correlate_metrics(table, spec, seeds, {});
    const auto* swap_rep = &reports[0];
    for (const auto& r : reports) {
        if (r.metric == "swap") swap_rep = &r;
    }
    REQUIRE(swap_rep->per_seed.size() == 1);
    CHECK(swap_rep->per_seed[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(swap_rep->n == 8);
    CHECK(swap_rep->skipped == 0);

    // shuffled row order produces identical reports
    auto shuffled = table;
    std::rotate(shuffled.rows.begin(), shuffled.rows.begin() + 3, shuffled.rows.end());
    const auto reports2 = eval::correlate_metrics(shuffled, spec, seeds, {});
    for (std::size_t i = 0; i < reports.size(); ++i) {
        CHECK(reports[i].metric == reports2[i].metric);
        if (!reports[i].per_seed.empty() && !reports2[i].per_seed.empty()) {
            CHECK(reports[i].per_seed[0] == doctest::Approx(reports2[i].per_seed[0]).epsilon(1e-12));
        } else {
            CHECK(reports[i].error == reports2[i].error);
        }
    }

    // five seeds -> five per-seed values and their mean
    const std::vector<std::uint64_t> five = {1, 2, 3, 4, 5};
    const auto multi = eval::correlate_metrics(table, spec, five, {});
    for (const auto& r : multi) {
        if (r.metric == "swap") {
            CHECK(r.per_seed.size() == 5);
            CHECK(r.mean_rho == doctest::Approx(eval::mean_of(r.per_seed)).epsilon(1e-12));
        }
    }

    // per-seed evaluation order does not change any reported rho
    const auto fwd = eval::correlate_metrics(table, spec, {1, 2}, {});
    const auto rev = eval::correlate_metrics(table, spec, {2, 1}, {});
    for (std::size_t i = 0; i < fwd.size(); ++i) {
        REQUIRE(fwd[i].per_seed.size() == rev[i].per_seed.size());
        if (fwd[i].per_seed.size() == 2) {
            CHECK(fwd[i].per_seed[0] == rev[i].per_seed[1]);
            CHECK(fwd[i].per_seed[1] == rev[i].per_seed[0]);
        }
    }

    // worker threads never change a reported value
    eval::EvalOptions threaded;
    threaded.threads = 3;
    const auto par = eval::correlate_metrics(table, spec, seeds, threaded);
    for (std::size_t i = 0; i < reports.size(); ++i) {
        REQUIRE(par[i].per_seed.size() == reports[i].per_seed.size());
        for (std::size_t k = 0; k < par[i].per_seed.size(); ++k) {
            CHECK(par[i].per_seed[k] == reports[i].per_seed[k]);
        }
    }
}

TEST_CASE("long-row summaries pool seeds per metric and setting") {
    std::vector<eval::LongRow> rows = {
        {"swap", "8", 1, 10.0}, {"swap", "8", 2, 14.0}, {"swap", "16", 1, 20.0},
        {"standard", "8", 1, 8.0},
    };
    const auto summary = eval::summarise_long_rows(rows);
    REQUIRE(summary.size() == 3);
    CHECK(summary[0].metric == "swap");
    CHECK(summary[0].setting == "8");
    CHECK(summary[0].mean == 12.0);
    CHECK(summary[0].n == 2);
    CHECK(summary[1].setting == "16");
    CHECK(summary[2].metric == "standard");
}

TEST_CASE("undecodable rows are skipped and counted") {
    engine::BatchSpec spec = engine::parse_batch_spec("corr:s=8,dims=3x8x8,seed=7");
    auto table = self_consistent_table(spec, 6, 33);
    table.rows.push_back({"broken", "not-a-genome", 0.1});
    const auto reports = eval::correlate_metrics(table, spec, {33}, {});
    CHECK(reports[0].n == 6);
    CHECK(reports[0].skipped == 1);
}

TEST_CASE("constant metric columns yield an explicit per-metric error") {
    engine::BatchSpec spec = engine::parse_batch_spec("corr:s=8,dims=3x8x8,seed=7");
    // the same genome repeated makes every metric column constant
    const std::string enc =
        graph::encode(graph::random_genome(graph::SpaceId::NB201, 4, tiny_cell_params()));
    eval::GroundTruthTable table;
    for (int i = 0; i < 4; ++i) {
        table.rows.push_back({"arch-" + std::to_string(i), enc, 0.1 * i});
    }
    const auto reports = eval::correlate_metrics(table, spec, {21}, {});
    for (const auto& r : reports) {
        CHECK(r.per_seed.empty());
        CHECK(r.error.find("undefined correlation") != std::string::npos);
    }
}

TEST_CASE("batch-size ablation emits one set of rows per size") {
    engine::BatchSpec spec = engine::parse_batch_spec("noise:s=8,dims=3x8x8,seed=5");
    const auto result = eval::ablate_batch_size(graph::SpaceId::NB201, tiny_cell_params(), spec,
                                                {2, 4}, {1}, 3, std::nullopt, {});
    std::set<std::string> settings;
    for (const auto& row : result.rows) settings.insert(row.setting);
    CHECK(settings == std::set<std::string>{"2", "4"});
    // 3 nets x 2 sizes x 1 seed x 4 metrics
    CHECK(result.rows.size() == 24);
    CHECK_THROWS_AS(eval::ablate_batch_size(graph::SpaceId::NB201, tiny_cell_params(), spec, {},
                                            {1}, 3, std::nullopt, {}),
                    std::invalid_argument);
}

TEST_CASE("batch-size ablation with ground truth reports correlations per size") {
    engine::BatchSpec spec = engine::parse_batch_spec("corr:s=8,dims=3x8x8,seed=7");
    const auto table = self_consistent_table(spec, 6, 11);
    const auto result = eval::ablate_batch_size(graph::SpaceId::NB201, tiny_cell_params(), spec,
                                                {4, 8}, {11}, 0, table, {});
    REQUIRE(!result.correlations.empty());
    bool saw_tagged = false;
    for (const auto& rep : result.correlations) {
        if (rep.metric == "swap@S=8") {
            saw_tagged = true;
            REQUIRE(rep.per_seed.size() == 1);
            // accuracy column was produced at S=8, so it must match there
            CHECK(rep.per_seed[0] == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    CHECK(saw_tagged);
    // long rows carry one rho per (metric, size, seed)
    bool saw_row = false;
    for (const auto& row : result.rows) {
        if (row.metric == "swap" && row.setting == "4") saw_row = true;
    }
    CHECK(saw_row);
}

TEST_CASE("swap is non-decreasing in nested batches without cross-sample coupling") {
    // Batch statistics couple samples, so the nesting property is exercised
    // with normalisation off; token networks are uncoupled by construction.
    engine::EngineOptions no_bn;
    no_bn.batch_norm = false;
    eval::EvalOptions opts;
    opts.engine_opts = no_bn;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto g = graph::random_genome(graph::SpaceId::NB201, derive_seed(1, "mono", seed),
                                            tiny_cell_params());
        const auto inst = engine::instantiate(g, seed, {3, 8, 8}, no_bn);
        std::int64_t prev = 0;
        for (int s : {2, 4, 8, 16}) {
            const auto batch = engine::make_noise_batch(9, s, 3, 8, 8);  // nested by design
            const auto rec = engine::forward_capture(inst, batch);
            const auto swap = score::swap_score(rec).distinct_count;
            CHECK(swap >= prev);
            prev = swap;
        }
    }
}

TEST_CASE("input-dim ablation reports sites per dimension and rejects big crops") {
    engine::BatchSpec spec = engine::parse_batch_spec("noise:s=4,dims=3x16x16,seed=5");
    std::vector<engine::InputDims> dims = {{3, 4, 4}, {3, 8, 8}};
    const auto result = eval::ablate_input_dims(graph::SpaceId::NB201, tiny_cell_params(), spec,
                                                dims, {1}, 2, std::nullopt, {});
    // V strictly larger at the larger dimension for the same nets
    double v_small = 0, v_large = 0;
    for (const auto& row : result.rows) {
        if (row.metric == "sites" && row.setting == "3x4x4") v_small += row.value;
        if (row.metric == "sites" && row.setting == "3x8x8") v_large += row.value;
    }
    CHECK(v_large > v_small);

    // file-backed crops: a crop larger than the stored image must throw
    const auto path = temp_file("swapnas_crop_src.bin");
    engine::save_batch_file(path, engine::make_noise_batch(3, 4, 3, 8, 8));
    engine::BatchSpec file_spec;
    file_spec.kind = "image";
    file_spec.path = path;
    std::vector<engine::InputDims> too_big = {{3, 32, 32}};
    CHECK_THROWS_AS(eval::ablate_input_dims(graph::SpaceId::NB201, tiny_cell_params(), file_spec,
                                            too_big, {1}, 2, std::nullopt, {}),
                    std::invalid_argument);
    std::filesystem::remove(path);
}

TEST_CASE("oracle check passes on real networks and catches tampering") {
    eval::OracleOptions opts;
    opts.batch_sizes = {4, 8};
    const auto report = eval::oracle_check(graph::SpaceId::NB201, 4, 5000, opts);
    CHECK(report.passed());
    CHECK(report.nets_checked == 4);
    CHECK(report.comparisons == 16);

    // vacuous cap
    const auto vac = eval::oracle_check(graph::SpaceId::NB201, 4, 0, opts);
    CHECK(vac.vacuous);
    CHECK(vac.passed());
    CHECK(vac.nets_checked == 0);

    // negative control: corrupt the fast path's view of the matrix
    eval::OracleOptions tampered = opts;
    tampered.tamper_fast_path = [](engine::ActivationRecord& rec) {
        rec.matrix[rec.matrix.size() / 2] ^= 1;
    };
    const auto bad = eval::oracle_check(graph::SpaceId::NB201, 2, 5000, tampered);
    CHECK_FALSE(bad.passed());
    CHECK_FALSE(bad.failures.empty());
    CHECK(!bad.failures[0].genome.empty());

    // transformer space runs under the same oracle
    const auto tf = eval::oracle_check(graph::SpaceId::Transformer, 2, 5000, opts);
    CHECK(tf.passed());

    CHECK_THROWS_AS(eval::oracle_check(graph::SpaceId::NB201, 1, 50000, opts),
                    std::invalid_argument);
}

TEST_CASE("long csv writer emits the documented four columns") {
    std::vector<eval::LongRow> rows = {{"swap", "8", 1, 42.0}, {"metric,with,commas", "x", 2, 1.0}};
    const auto path = temp_file("swapnas_long.csv");
    eval::write_long_csv(path, rows);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "metric,setting,seed,value");
    std::getline(in, line);
    CHECK(line == "swap,8,1,42");
    std::getline(in, line);
    CHECK(line.find("\"metric,with,commas\"") == 0);
    std::filesystem::remove(path);
}

TEST_SUITE_END();
