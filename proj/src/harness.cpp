#include "swapnas/harness.hpp"

#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "swapnas/parallel.hpp"
#include "swapnas/rng.hpp"
#include "swapnas/stats.hpp"

namespace swapnas::eval {

namespace {

// ---------------------------------------------------------------------------
// Minimal RFC-4180 CSV
// ---------------------------------------------------------------------------

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c == '\r') {
            // tolerate CRLF
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

GroundTruthTable load_ground_truth_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open ground-truth csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty ground-truth csv: " + path);
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "arch_id" || header[1] != "encoding" ||
        header[2] != "accuracy") {
        throw std::runtime_error("ground-truth csv needs header arch_id,encoding,accuracy");
    }
    GroundTruthTable table;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() < 3) {
            throw std::runtime_error("ground-truth csv line " + std::to_string(lineno) +
                                     ": expected 3 fields");
        }
        GroundTruthRow row;
        row.arch_id = fields[0];
        row.encoding = fields[1];
        try {
            row.accuracy = std::stod(fields[2]);
        } catch (const std::exception&) {
            throw std::runtime_error("ground-truth csv line " + std::to_string(lineno) +
                                     ": bad accuracy value");
        }
        if (!std::isfinite(row.accuracy)) {
            throw std::runtime_error("ground-truth csv line " + std::to_string(lineno) +
                                     ": accuracy not finite");
        }
        for (const auto& existing : table.rows) {
            if (existing.arch_id == row.arch_id) {
                throw std::runtime_error("duplicate arch_id: " + row.arch_id);
            }
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

void write_ground_truth_csv(const std::string& path, const GroundTruthTable& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "arch_id,encoding,accuracy\n";
    for (const auto& r : table.rows) {
        out << csv_quote(r.arch_id) << "," << csv_quote(r.encoding) << ","
            << format_double(r.accuracy) << "\n";
    }
}

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names = {
        "swap", "reg_swap", "standard", "params_m", "flops", "reg_params", "reg_flops",
    };
    return names;
}

namespace {

std::vector<double> metric_column(const std::vector<score::ScoreReport>& reports,
                                  const std::string& metric) {
    std::vector<double> out;
    out.reserve(reports.size());
    for (const auto& r : reports) {
        if (metric == "swap") out.push_back(static_cast<double>(r.swap));
        else if (metric == "reg_swap") out.push_back(r.reg_swap);
        else if (metric == "standard") out.push_back(static_cast<double>(r.standard));
        else if (metric == "params_m") out.push_back(r.params_m);
        else if (metric == "flops") out.push_back(static_cast<double>(r.flops));
        else if (metric == "reg_params") out.push_back(r.reg_params);
        else if (metric == "reg_flops") out.push_back(r.reg_flops);
        else throw std::logic_error("unknown metric: " + metric);
    }
    return out;
}

score::ScoreReport score_encoded(const std::string& encoding, std::uint64_t run_seed,
                                 const engine::InputBatch& batch, const EvalOptions& opts) {
    const auto genome = graph::decode(encoding);
    engine::InputDims dims{batch.channels, batch.height, batch.width};
    const std::uint64_t init_seed = derive_seed(run_seed, "weights", fnv1a64(encoding));
    const auto inst = engine::instantiate(genome, init_seed, dims, opts.engine_opts);
    return score::score_all(inst, batch, opts.reg);
}

}  // namespace

std::vector<CorrelationReport> correlate_metrics(const GroundTruthTable& table,
                                                 const engine::BatchSpec& batch,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 const EvalOptions& opts) {
    if (seeds.empty()) throw std::invalid_argument("need at least one seed");

    // Decode once; undecodable rows are skipped with a warning.
    std::vector<const GroundTruthRow*> usable;
    int skipped = 0;
    for (const auto& row : table.rows) {
        try {
            graph::decode(row.encoding);
            usable.push_back(&row);
        } catch (const graph::GenomeParseError& e) {
            std::cerr << "warning: skipping arch " << row.arch_id << ": " << e.what() << "\n";
            ++skipped;
        }
    }
    if (usable.size() < 3) throw std::runtime_error("fewer than 3 decodable architectures");

    std::vector<CorrelationReport> reports;
    for (const auto& name : metric_names()) {
        CorrelationReport r;
        r.metric = name;
        r.n = static_cast<int>(usable.size());
        r.skipped = skipped;
        reports.push_back(std::move(r));
    }

    for (const std::uint64_t seed : seeds) {
        const engine::InputBatch b = engine::make_batch(batch, seed);
        std::vector<score::ScoreReport> scored(usable.size());
        parallel_indexed(static_cast<int>(usable.size()), opts.threads, [&](int i) {
            scored[static_cast<std::size_t>(i)] =
                score_encoded(usable[static_cast<std::size_t>(i)]->encoding, seed, b, opts);
        });
        std::vector<double> accuracy;
        accuracy.reserve(usable.size());
        for (const auto* row : usable) accuracy.push_back(row->accuracy);
        for (auto& report : reports) {
            const auto values = metric_column(scored, report.metric);
            try {
                report.per_seed.push_back(spearman(values, accuracy));
                report.seeds.push_back(seed);
            } catch (const std::invalid_argument& e) {
                // An explicit per-metric error (e.g. constant column) rather
                // than a silent rho of zero.
                if (!report.error.empty()) report.error += "; ";
                report.error += "seed " + std::to_string(seed) + ": " + e.what();
            }
        }
    }
    for (auto& report : reports) {
        if (!report.per_seed.empty()) {
            report.mean_rho = mean_of(report.per_seed);
            report.std_err = std_error(report.per_seed);
        }
    }
    return reports;
}

namespace {

std::vector<graph::Genome> sample_space(graph::SpaceId space, const graph::SpaceParams& params,
                                        int n_nets, std::uint64_t seed) {
    std::vector<graph::Genome> out;
    out.reserve(static_cast<std::size_t>(n_nets));
    for (int i = 0; i < n_nets; ++i) {
        out.push_back(graph::random_genome(
            space, derive_seed(seed, "net", static_cast<std::uint64_t>(i)), params));
    }
    return out;
}

void append_distribution_rows(AblationResult& result, const std::string& setting,
                              std::uint64_t seed,
                              const std::vector<score::ScoreReport>& scored) {
    for (const auto& rep : scored) {
        result.rows.push_back({"swap", setting, seed, static_cast<double>(rep.swap)});
        result.rows.push_back({"reg_swap", setting, seed, rep.reg_swap});
        result.rows.push_back({"standard", setting, seed, static_cast<double>(rep.standard)});
        result.rows.push_back({"sites", setting, seed, static_cast<double>(rep.sites)});
    }
}

}  // namespace

AblationResult ablate_batch_size(graph::SpaceId space, const graph::SpaceParams& params,
                                 const engine::BatchSpec& base_batch,
                                 const std::vector<int>& sizes,
                                 const std::vector<std::uint64_t>& seeds, int n_nets,
                                 const std::optional<GroundTruthTable>& table,
                                 const EvalOptions& opts) {
    if (sizes.empty()) throw std::invalid_argument("need at least one batch size");
    for (int s : sizes) {
        if (s < 1) throw std::invalid_argument("batch sizes must be >= 1");
    }
    AblationResult result;
    if (table) {
        for (int size : sizes) {
            engine::BatchSpec spec = base_batch;
            spec.samples = size;
            auto reports = correlate_metrics(*table, spec, seeds, opts);
            for (const auto& rep : reports) {
                for (std::size_t k = 0; k < rep.per_seed.size(); ++k) {
                    result.rows.push_back({rep.metric, std::to_string(size), rep.seeds[k],
                                           rep.per_seed[k]});
                }
                CorrelationReport tagged = rep;
                tagged.metric = rep.metric + "@S=" + std::to_string(size);
                result.correlations.push_back(std::move(tagged));
            }
        }
        return result;
    }
    // No ground truth: score distributions over a fixed sample of genomes.
    const auto genomes = sample_space(space, params, n_nets, base_batch.seed);
    for (int size : sizes) {
        engine::BatchSpec spec = base_batch;
        spec.samples = size;
        for (const std::uint64_t seed : seeds) {
            const engine::InputBatch b = engine::make_batch(spec, seed);
            std::vector<score::ScoreReport> scored(genomes.size());
            parallel_indexed(static_cast<int>(genomes.size()), opts.threads, [&](int i) {
                const auto& g = genomes[static_cast<std::size_t>(i)];
                engine::InputDims dims{b.channels, b.height, b.width};
                const auto inst = engine::instantiate(
                    g, derive_seed(seed, "weights", fnv1a64(graph::encode(g))), dims,
                    opts.engine_opts);
                scored[static_cast<std::size_t>(i)] = score::score_all(inst, b, opts.reg);
            });
            append_distribution_rows(result, std::to_string(size), seed, scored);
        }
    }
    return result;
}

AblationResult ablate_input_dims(graph::SpaceId space, const graph::SpaceParams& params,
                                 const engine::BatchSpec& base_batch,
                                 const std::vector<engine::InputDims>& dims_list,
                                 const std::vector<std::uint64_t>& seeds, int n_nets,
                                 const std::optional<GroundTruthTable>& table,
                                 const EvalOptions& opts) {
    if (dims_list.empty()) throw std::invalid_argument("need at least one input dimension");
    if (space == graph::SpaceId::Transformer) {
        throw std::invalid_argument("input-dimension ablation applies to image networks");
    }
    AblationResult result;
    const bool from_file = !base_batch.path.empty();
    const auto genomes = table ? std::vector<graph::Genome>{}
                               : sample_space(space, params, n_nets, base_batch.seed);
    for (const auto& dims : dims_list) {
        std::string setting = std::to_string(dims.channels) + "x" +
                              std::to_string(dims.height) + "x" + std::to_string(dims.width);
        for (const std::uint64_t seed : seeds) {
            engine::InputBatch b;
            if (from_file) {
                b = engine::crop_image_batch(engine::make_batch(base_batch, 0), dims.channels,
                                             dims.height, dims.width);
            } else {
                engine::BatchSpec spec = base_batch;
                spec.channels = dims.channels;
                spec.height = dims.height;
                spec.width = dims.width;
                b = engine::make_batch(spec, seed);
            }
            if (table) {
                std::vector<const GroundTruthRow*> usable;
                for (const auto& row : table->rows) {
                    try {
                        graph::decode(row.encoding);
                        usable.push_back(&row);
                    } catch (const graph::GenomeParseError&) {
                    }
                }
                std::vector<score::ScoreReport> scored(usable.size());
                parallel_indexed(static_cast<int>(usable.size()), opts.threads, [&](int i) {
                    scored[static_cast<std::size_t>(i)] =
                        score_encoded(usable[static_cast<std::size_t>(i)]->encoding, seed, b, opts);
                });
                std::vector<double> accuracy;
                for (const auto* row : usable) accuracy.push_back(row->accuracy);
                for (const auto& name : metric_names()) {
                    try {
                        const double rho = spearman(metric_column(scored, name), accuracy);
                        result.rows.push_back({name, setting, seed, rho});
                    } catch (const std::invalid_argument& e) {
                        std::cerr << "warning: metric " << name << " at " << setting << ": "
                                  << e.what() << "\n";
                    }
                }
                append_distribution_rows(result, setting, seed, scored);
            } else {
                std::vector<score::ScoreReport> scored(genomes.size());
                parallel_indexed(static_cast<int>(genomes.size()), opts.threads, [&](int i) {
                    const auto& g = genomes[static_cast<std::size_t>(i)];
                    engine::InputDims d{b.channels, b.height, b.width};
                    const auto inst = engine::instantiate(
                        g, derive_seed(seed, "weights", fnv1a64(graph::encode(g))), d,
                        opts.engine_opts);
                    scored[static_cast<std::size_t>(i)] = score::score_all(inst, b, opts.reg);
                });
                append_distribution_rows(result, setting, seed, scored);
            }
        }
    }
    return result;
}

void write_long_csv(const std::string& path, const std::vector<LongRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "metric,setting,seed,value\n";
    for (const auto& r : rows) {
        out << csv_quote(r.metric) << "," << csv_quote(r.setting) << "," << r.seed << ","
            << format_double(r.value) << "\n";
    }
}

void write_correlation_csv(const std::string& path,
                           const std::vector<CorrelationReport>& reports) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "metric,seed,rho,mean_rho,std_err,n,skipped,error\n";
    for (const auto& rep : reports) {
        for (std::size_t k = 0; k < rep.per_seed.size(); ++k) {
            out << csv_quote(rep.metric) << "," << rep.seeds[k] << ","
                << format_double(rep.per_seed[k]) << "," << format_double(rep.mean_rho) << ","
                << format_double(rep.std_err) << "," << rep.n << "," << rep.skipped << ","
                << csv_quote(rep.error) << "\n";
        }
        if (rep.per_seed.empty()) {
            out << csv_quote(rep.metric) << ",,,,," << rep.n << "," << rep.skipped << ","
                << csv_quote(rep.error) << "\n";
        }
    }
}

void write_correlation_jsonl(const std::string& path,
                             const std::vector<CorrelationReport>& reports) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& rep : reports) {
        nlohmann::ordered_json j;
        j["metric"] = rep.metric;
        j["seeds"] = rep.seeds;
        j["per_seed"] = rep.per_seed;
        j["mean_rho"] = rep.mean_rho;
        j["std_err"] = rep.std_err;
        j["n"] = rep.n;
        j["skipped"] = rep.skipped;
        if (!rep.error.empty()) j["error"] = rep.error;
        out << j.dump() << "\n";
    }
}

std::vector<SummaryRow> summarise_long_rows(const std::vector<LongRow>& rows) {
    std::vector<SummaryRow> out;
    std::vector<std::vector<double>> groups;
    for (const auto& row : rows) {
        std::size_t idx = out.size();
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (out[i].metric == row.metric && out[i].setting == row.setting) {
                idx = i;
                break;
            }
        }
        if (idx == out.size()) {
            out.push_back({row.metric, row.setting, 0.0, 0.0, 0});
            groups.emplace_back();
        }
        groups[idx].push_back(row.value);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].mean = mean_of(groups[i]);
        out[i].std_err = std_error(groups[i]);
        out[i].n = static_cast<int>(groups[i].size());
    }
    return out;
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "metric,setting,mean,std_err,n\n";
    for (const auto& r : rows) {
        out << csv_quote(r.metric) << "," << csv_quote(r.setting) << ","
            << format_double(r.mean) << "," << format_double(r.std_err) << "," << r.n << "\n";
    }
}

std::int64_t naive_distinct_rows(const engine::ActivationRecord& rec) {
    const std::int64_t sites = rec.site_count;
    const int samples = rec.sample_count;
    std::int64_t distinct = 0;
    for (std::int64_t i = 0; i < sites; ++i) {
        const std::int8_t* ri = rec.matrix.data() + static_cast<std::size_t>(i) * samples;
        bool duplicate = false;
        for (std::int64_t j = 0; j < i; ++j) {
            const std::int8_t* rj = rec.matrix.data() + static_cast<std::size_t>(j) * samples;
            if (std::memcmp(ri, rj, static_cast<std::size_t>(samples)) == 0) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) ++distinct;
    }
    return distinct;
}

std::int64_t naive_distinct_columns(const engine::ActivationRecord& rec) {
    const std::int64_t sites = rec.site_count;
    const int samples = rec.sample_count;
    std::int64_t distinct = 0;
    for (int i = 0; i < samples; ++i) {
        bool duplicate = false;
        for (int j = 0; j < i && !duplicate; ++j) {
            bool equal = true;
            for (std::int64_t v = 0; v < sites; ++v) {
                if (rec.at(v, i) != rec.at(v, j)) {
                    equal = false;
                    break;
                }
            }
            duplicate = equal;
        }
        if (!duplicate) ++distinct;
    }
    return distinct;
}

OracleReport oracle_check(graph::SpaceId space, int n_nets, std::int64_t site_cap,
                          const OracleOptions& opts) {
    OracleReport report;
    if (site_cap <= 0) {
        report.vacuous = true;
        return report;
    }
    if (site_cap > 5000) throw std::invalid_argument("oracle site cap must be <= 5000");

    // Space parameters chosen so random networks land under the site cap.
    graph::SpaceParams params = graph::SpaceParams::defaults(space);
    engine::BatchSpec batch_spec;
    if (space == graph::SpaceId::Transformer) {
        params.seq_len = 8;
        params.vocab = 64;
        params.layer_choices = {1, 2};
        params.head_choices = {1, 2, 4};
        params.d_model_choices = {16, 32};
        params.d_ff_choices = {32, 64, 128};
        batch_spec.kind = "tokens";
        batch_spec.seq_len = 8;
        batch_spec.vocab = 64;
    } else {
        params.stem_channels = 4;
        params.stack_depth = 1;
        batch_spec.kind = "noise";
        batch_spec.channels = 3;
        batch_spec.height = 8;
        batch_spec.width = 8;
    }
    batch_spec.seed = opts.seed;

    for (int i = 0; i < n_nets; ++i) {
        graph::Genome genome;
        engine::NetworkInstance inst;
        engine::ActivationRecord probe;
        bool found = false;
        for (int attempt = 0; attempt < 20 && !found; ++attempt) {
            genome = graph::random_genome(
                space, derive_seed(opts.seed, "oracle-net", static_cast<std::uint64_t>(i),
                                   static_cast<std::uint64_t>(attempt)),
                params);
            engine::InputDims dims{batch_spec.channels, batch_spec.height, batch_spec.width};
            inst = engine::instantiate(genome, derive_seed(opts.seed, "oracle-init",
                                                           static_cast<std::uint64_t>(i)),
                                       dims, opts.engine_opts);
            engine::BatchSpec one = batch_spec;
            one.samples = 1;
            probe = engine::forward_capture(inst, engine::make_batch(one), engine::Precision::Float64);
            found = probe.site_count <= site_cap && probe.site_count > 0;
        }
        if (!found) {
            throw std::runtime_error("could not sample a network under the site cap");
        }
        ++report.nets_checked;
        for (int samples : opts.batch_sizes) {
            engine::BatchSpec spec = batch_spec;
            spec.samples = samples;
            const engine::InputBatch b = engine::make_batch(spec);
            const auto rec = engine::forward_capture(inst, b, engine::Precision::Float64);

            engine::ActivationRecord fast = rec;
            if (opts.tamper_fast_path) opts.tamper_fast_path(fast);
            const std::int64_t fast_swap = score::swap_score(fast).distinct_count;
            const std::int64_t fast_standard = score::standard_pattern_score(fast).distinct_count;
            const std::int64_t naive_swap = naive_distinct_rows(rec);
            const std::int64_t naive_standard = naive_distinct_columns(rec);
            report.comparisons += 2;
            if (fast_swap != naive_swap) {
                report.failures.push_back({graph::encode(genome), inst.init_seed, b.descriptor(),
                                           "swap " + std::to_string(fast_swap) + " != naive " +
                                               std::to_string(naive_swap)});
            }
            if (fast_standard != naive_standard) {
                report.failures.push_back({graph::encode(genome), inst.init_seed, b.descriptor(),
                                           "standard " + std::to_string(fast_standard) +
                                               " != naive " + std::to_string(naive_standard)});
            }
        }
    }
    return report;
}

}  // namespace swapnas::eval
