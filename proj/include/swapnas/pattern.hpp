// Activation-pattern scores and the size-regularised variants.
//
// Two orientations of the same matrix:
//   value-wise  (standard score) — distinct columns, one vector per sample,
//                                  cardinality bounded by S;
//   sample-wise (SWAP score)     — distinct rows, one vector per site,
//                                  cardinality bounded by min(V, alphabet^S).
// Rows are bit-packed two bits per entry and deduplicated through a hash
// set with full-row equality on collision, so counts are exact.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swapnas/batch.hpp"
#include "swapnas/network.hpp"

#include "json.hpp"

namespace swapnas::score {

enum class Orientation { SampleWise, ValueWise };

struct PatternSet {
    Orientation orientation = Orientation::SampleWise;
    std::int64_t distinct_count = 0;
    std::int64_t row_length = 0;  // S for sample-wise, V for value-wise
};

// Distinct rows (one per activation site). Throws on an empty matrix.
PatternSet swap_score(const engine::ActivationRecord& rec);

// Distinct columns (one per sample). Throws on an empty matrix.
PatternSet standard_pattern_score(const engine::ActivationRecord& rec);

// min(V, alphabet^S) without overflow; alphabet is 2 for ReLU nets and 3
// for GELU nets.
std::int64_t pattern_cardinality_bound(std::int64_t sites, int samples, int alphabet);

inline constexpr double kSigmaMin = 1e-3;

struct RegularisationParams {
    enum class Mode { Off, Static, Adaptive };
    Mode mode = Mode::Off;
    double mu = 0.0;     // units of param_count / theta_scale
    double sigma = 1.0;  // same units, >= kSigmaMin
    // Divisor applied to the raw parameter count before the bell curve.
    // The default works in millions of parameters; the scale is exposed
    // because published mu values do not pin the units down.
    double theta_scale = 1e6;
};

// exp(-(theta_m - mu)^2 / sigma), clamped to the smallest positive double
// so the factor stays positive under extreme exponents. Callers use 1.0
// when the mode is off.
double regulariser(double theta_m, const RegularisationParams& p);

double regularised_swap(std::int64_t swap, double theta_m, const RegularisationParams& p);

// mu <- mean(history), sigma <- max(kSigmaMin, sample std). Invoked at the
// end of each search cycle in adaptive mode. Throws on empty history.
RegularisationParams adaptive_update(const std::vector<double>& theta_history,
                                     const RegularisationParams& p);

struct ScoreReport {
    std::string genome;     // encoded genome ("" for plain conv stacks)
    std::uint64_t seed = 0; // init seed
    int samples = 0;        // S
    std::int64_t sites = 0; // V
    std::int64_t swap = 0;
    double reg_swap = 0.0;
    std::int64_t standard = 0;
    double params_m = 0.0;
    std::int64_t flops = 0;
    double f_theta = 1.0;
    double reg_params = 0.0;
    double reg_flops = 0.0;
    double mu = 0.0;
    double sigma = 0.0;
    bool reg_off = true;
    std::string batch;      // batch descriptor
};

// One forward capture, then every metric from the same record. Regularised
// baselines apply the same factor f to params and flops.
ScoreReport score_all(const engine::NetworkInstance& n, const engine::InputBatch& b,
                      const RegularisationParams& p);

// Fixed field order: genome, seed, S, V, swap, reg_swap, standard,
// params_m, flops, f_theta, then auxiliary fields.
nlohmann::ordered_json report_to_json(const ScoreReport& r);

}  // namespace swapnas::score
