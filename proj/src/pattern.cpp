#include "swapnas/pattern.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

#include "swapnas/rng.hpp"

namespace swapnas::score {

namespace {

// Two bits per entry: 0 -> 00, 1 -> 01, -1 -> 10.
inline std::uint64_t entry_code(std::int8_t v) {
    if (v > 0) return 1;
    if (v < 0) return 2;
    return 0;
}

// Deduplicates `count` vectors packed contiguously as `words` u64s each.
std::int64_t distinct_packed(const std::vector<std::uint64_t>& packed, std::int64_t count,
                             std::size_t words) {
    struct Hash {
        const std::vector<std::uint64_t>* buf;
        std::size_t words;
        std::size_t operator()(std::int64_t idx) const {
            const std::uint64_t* p = buf->data() + static_cast<std::size_t>(idx) * words;
            std::uint64_t h = 0x9AE16A3B2F90404FULL;
            for (std::size_t i = 0; i < words; ++i) h = mix64(h ^ p[i]);
            return static_cast<std::size_t>(h);
        }
    };
    struct Eq {
        const std::vector<std::uint64_t>* buf;
        std::size_t words;
        bool operator()(std::int64_t a, std::int64_t b) const {
            const std::uint64_t* pa = buf->data() + static_cast<std::size_t>(a) * words;
            const std::uint64_t* pb = buf->data() + static_cast<std::size_t>(b) * words;
            for (std::size_t i = 0; i < words; ++i) {
                if (pa[i] != pb[i]) return false;
            }
            return true;
        }
    };
    std::unordered_set<std::int64_t, Hash, Eq> set(
        16, Hash{&packed, words}, Eq{&packed, words});
    set.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) set.insert(i);
    return static_cast<std::int64_t>(set.size());
}

void require_nonempty(const engine::ActivationRecord& rec) {
    if (rec.site_count == 0 || rec.sample_count == 0) {
        throw std::invalid_argument("empty activation matrix");
    }
}

}  // namespace

PatternSet swap_score(const engine::ActivationRecord& rec) {
    require_nonempty(rec);
    const std::int64_t sites = rec.site_count;
    const int samples = rec.sample_count;
    const std::size_t words = (static_cast<std::size_t>(samples) + 31) / 32;
    std::vector<std::uint64_t> packed(static_cast<std::size_t>(sites) * words, 0);
    for (std::int64_t v = 0; v < sites; ++v) {
        std::uint64_t* row = packed.data() + static_cast<std::size_t>(v) * words;
        const std::int8_t* src = rec.matrix.data() + static_cast<std::size_t>(v) * samples;
        for (int s = 0; s < samples; ++s) {
            row[s / 32] |= entry_code(src[s]) << (2 * (s % 32));
        }
    }
    PatternSet out;
    out.orientation = Orientation::SampleWise;
    out.row_length = samples;
    out.distinct_count = distinct_packed(packed, sites, words);
    return out;
}

PatternSet standard_pattern_score(const engine::ActivationRecord& rec) {
    require_nonempty(rec);
    const std::int64_t sites = rec.site_count;
    const int samples = rec.sample_count;
    const std::size_t words = (static_cast<std::size_t>(sites) + 31) / 32;
    std::vector<std::uint64_t> packed(static_cast<std::size_t>(samples) * words, 0);
    for (int s = 0; s < samples; ++s) {
        std::uint64_t* col = packed.data() + static_cast<std::size_t>(s) * words;
        for (std::int64_t v = 0; v < sites; ++v) {
            col[v / 32] |= entry_code(rec.at(v, s)) << (2 * (v % 32));
        }
    }
    PatternSet out;
    out.orientation = Orientation::ValueWise;
    out.row_length = sites;
    out.distinct_count = distinct_packed(packed, samples, words);
    return out;
}

std::int64_t pattern_cardinality_bound(std::int64_t sites, int samples, int alphabet) {
    // alphabet^samples with early exit once it exceeds the site count
    std::int64_t power = 1;
    for (int i = 0; i < samples; ++i) {
        if (power > sites / alphabet + 1) return sites;
        power *= alphabet;
        if (power >= sites) return sites;
    }
    return power < sites ? power : sites;
}

double regulariser(double theta_m, const RegularisationParams& p) {
    if (p.mode == RegularisationParams::Mode::Off) {
        throw std::invalid_argument("regulariser called with mode=off");
    }
    if (!(p.sigma >= kSigmaMin)) throw std::invalid_argument("degenerate sigma");
    const double d = theta_m - p.mu;
    const double f = std::exp(-(d * d) / p.sigma);
    return f > std::numeric_limits<double>::min() ? f : std::numeric_limits<double>::min();
}

double regularised_swap(std::int64_t swap, double theta_m, const RegularisationParams& p) {
    if (swap < 0) throw std::invalid_argument("negative pattern count");
    if (p.mode == RegularisationParams::Mode::Off) return static_cast<double>(swap);
    return static_cast<double>(swap) * regulariser(theta_m, p);
}

RegularisationParams adaptive_update(const std::vector<double>& theta_history,
                                     const RegularisationParams& p) {
    if (p.mode != RegularisationParams::Mode::Adaptive) {
        throw std::invalid_argument("adaptive_update requires adaptive mode");
    }
    if (theta_history.empty()) throw std::invalid_argument("no history");
    double sum = 0.0;
    for (double t : theta_history) sum += t;
    const double mean = sum / static_cast<double>(theta_history.size());
    double sq = 0.0;
    for (double t : theta_history) sq += (t - mean) * (t - mean);
    double std_dev = 0.0;
    if (theta_history.size() > 1) {
        std_dev = std::sqrt(sq / static_cast<double>(theta_history.size() - 1));
    }
    RegularisationParams out = p;
    out.mu = mean;
    out.sigma = std_dev > kSigmaMin ? std_dev : kSigmaMin;
    return out;
}

ScoreReport score_all(const engine::NetworkInstance& n, const engine::InputBatch& b,
                      const RegularisationParams& p) {
    const engine::ActivationRecord rec = engine::forward_capture(n, b);
    ScoreReport r;
    if (n.genome) r.genome = graph::encode(*n.genome);
    r.seed = n.init_seed;
    r.samples = rec.sample_count;
    r.sites = rec.site_count;
    r.swap = swap_score(rec).distinct_count;
    r.standard = standard_pattern_score(rec).distinct_count;
    r.params_m = n.params_m;
    engine::InputDims dims{b.channels, b.height, b.width};
    r.flops = engine::count_flops(n, dims);
    r.reg_off = (p.mode == RegularisationParams::Mode::Off);
    r.f_theta = r.reg_off
                    ? 1.0
                    : regulariser(static_cast<double>(n.param_count) / p.theta_scale, p);
    r.reg_swap = static_cast<double>(r.swap) * r.f_theta;
    r.reg_params = r.params_m * r.f_theta;
    r.reg_flops = static_cast<double>(r.flops) * r.f_theta;
    r.mu = p.mu;
    r.sigma = p.sigma;
    r.batch = b.descriptor();
    return r;
}

nlohmann::ordered_json report_to_json(const ScoreReport& r) {
    nlohmann::ordered_json j;
    j["genome"] = r.genome;
    j["seed"] = r.seed;
    j["S"] = r.samples;
    j["V"] = r.sites;
    j["swap"] = r.swap;
    j["reg_swap"] = r.reg_swap;
    j["standard"] = r.standard;
    j["params_m"] = r.params_m;
    j["flops"] = r.flops;
    j["f_theta"] = r.f_theta;
    j["reg_params"] = r.reg_params;
    j["reg_flops"] = r.reg_flops;
    j["reg_mode"] = r.reg_off ? "off" : "on";
    j["mu"] = r.mu;
    j["sigma"] = r.sigma;
    j["batch"] = r.batch;
    return j;
}

}  // namespace swapnas::score
