// Deterministic instantiation and forward execution of decoded genomes.
//
// Three network families share one instance type: cell stacks decoded from
// CellGenome, encoder transformers decoded from TransformerGenome, and
// plain feedforward conv stacks built directly from layer shapes (the
// testbed for the closed-form activation-site count, which only applies
// to unpadded convolutions).
//
// A forward pass captures the Signum indicator of every post-activation
// value: ReLU sites yield {0,1}, GELU sites yield {-1,0,1}. A single
// capture call is single-threaded; that is the determinism contract.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "swapnas/batch.hpp"
#include "swapnas/genome.hpp"

namespace swapnas::engine {

struct EngineOptions {
    // Batch-statistics normalisation inside cell networks. Untrained
    // networks have no running stats, so the batch mode is the default;
    // turning it off removes all cross-sample coupling.
    bool batch_norm = true;
    // Weight std = init_gain / sqrt(fan_in) for conv layers. sqrt(2) keeps
    // pre-activation variance stable through ReLUs at depth.
    double init_gain = 1.4142135623730951;
};

struct InputDims {
    int channels = 3;
    int height = 32;
    int width = 32;
};

// Binarised/ternarised post-activation values: one row per scalar
// activation site, one column per sample (Signum of the value).
struct ActivationRecord {
    std::int64_t site_count = 0;  // V
    int sample_count = 0;         // S
    std::vector<std::int8_t> matrix;  // site-major, V*S entries in {-1,0,1}
    std::vector<std::pair<int, std::int64_t>> per_layer_sites;  // (layer id, sites)

    std::int8_t at(std::int64_t site, int sample) const {
        return matrix[static_cast<std::size_t>(site) * sample_count + sample];
    }
};

enum class Precision { Float32, Float64 };

struct NetworkImpl;  // weights + execution plan

struct NetworkInstance {
    std::optional<graph::Genome> genome;  // empty for plain conv stacks
    std::uint64_t init_seed = 0;
    std::int64_t param_count = 0;  // exact
    double params_m = 0.0;         // millions
    std::int64_t flop_count = 0;   // per-sample MACs at the build dims
    std::shared_ptr<const NetworkImpl> impl;
};

// Plain feedforward net: valid or padded convs (each followed by ReLU),
// then an optional flatten + dense head. Convs carry a bias here (there is
// no normalisation layer in this family).
struct PlainConvSpec {
    int in_channels = 1;
    int in_height = 8;
    int in_width = 8;
    struct Conv {
        int out_channels = 1;
        int kernel = 3;
        int stride = 1;
        int pad = 0;
    };
    std::vector<Conv> convs;
    std::optional<int> dense_out;  // flatten -> linear, no activation
};

// Cell and transformer genomes. `dims` is ignored for transformers.
// Throws "degenerate shape" when a feature map collapses to zero size.
NetworkInstance instantiate(const graph::Genome& g, std::uint64_t init_seed,
                            InputDims dims = {}, const EngineOptions& opts = {});

NetworkInstance instantiate_plain(const PlainConvSpec& spec, std::uint64_t init_seed,
                                  const EngineOptions& opts = {});

// Runs the forward pass once and captures every activation site. Throws on
// batch/genome shape mismatch and on non-finite activations ("numeric
// overflow"). Bit-identical output for identical inputs.
ActivationRecord forward_capture(const NetworkInstance& n, const InputBatch& b,
                                 Precision precision = Precision::Float32);

// Closed-form V from layer shapes: sum of c * out_w * out_h over unpadded
// conv layers, or layers * seq_len * d_ff for transformers. Throws when a
// padded convolution makes the closed form inapplicable (use the
// instrumented count from forward_capture instead).
std::int64_t count_sites_closed_form(const NetworkInstance& n);

// Per-sample multiply-accumulate count for arbitrary input dims
// (transformers take their dims from the genome). Conventions are listed
// in docs/FORMATS.md.
std::int64_t count_flops(const NetworkInstance& n, InputDims dims);

// Conv-layer geometry of a plain conv net, one LayerShape per conv.
std::vector<graph::LayerShape> plain_layer_shapes(const PlainConvSpec& spec);

// First-layer weight checksum (sum of raw float bits); reinstantiation
// with the same seed must reproduce it exactly.
std::uint64_t first_layer_checksum(const NetworkInstance& n);

}  // namespace swapnas::engine
