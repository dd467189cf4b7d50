// Searchable architecture spaces: cell DAGs (NB201-style and a reduced
// DARTS cell) and a small BERT-like transformer config space, plus the
// mutation and crossover operators used by the evolutionary search.
//
// Genomes are plain values. Every operator takes an explicit rng seed and
// is a pure function of (inputs, seed).

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace swapnas::graph {

enum class SpaceId { NB201, DartsLite, Transformer };

std::string space_name(SpaceId space);
std::optional<SpaceId> space_from_name(std::string_view name);

enum class OpLabel : std::uint8_t {
    None,
    Skip,
    Conv1x1,
    Conv3x3,
    AvgPool3x3,
    MaxPool3x3,
    SepConv3x3,
    SepConv5x5,
    DilConv3x3,
    DilConv5x5,
};

// Fixed operation alphabet of a cell space.
const std::vector<OpLabel>& op_alphabet(SpaceId space);
std::string_view op_name(OpLabel op);
std::optional<OpLabel> op_from_name(std::string_view name);

// One directed cell edge. src < dst always; node 0 is the cell input and
// nodes 1..n are intermediate nodes evaluated in index order.
struct CellEdge {
    int src = 0;
    int dst = 0;
    OpLabel op = OpLabel::None;
    bool operator==(const CellEdge&) const = default;
};

struct CellGenome {
    SpaceId space = SpaceId::NB201;  // NB201 or DartsLite
    int nodes = 3;                   // intermediate node count
    int stem_channels = 16;
    int stack_depth = 1;             // cells per stage
    std::vector<CellEdge> edges;     // grouped by dst in ascending dst order
    bool operator==(const CellGenome&) const = default;
};

struct TransformerGenome {
    int layers = 2;
    int heads = 2;
    int d_model = 64;
    int d_ff = 128;
    int seq_len = 32;
    int vocab = 256;
    bool operator==(const TransformerGenome&) const = default;
};

using Genome = std::variant<CellGenome, TransformerGenome>;

SpaceId space_of(const Genome& g);

// Feature-map geometry of one conv layer (c output channels, kernel k,
// stride t, input w x h, padding). Used by the plain conv networks and
// the closed-form activation-site count.
struct LayerShape {
    int c = 1;
    int k = 1;
    int t = 1;
    int w = 1;
    int h = 1;
    int pad = 0;
    bool operator==(const LayerShape&) const = default;
};

// Knobs for random sampling. The per-space defaults give networks small
// enough to score on a CPU in milliseconds-to-seconds.
struct SpaceParams {
    // cell spaces
    int nodes = 3;
    int stem_channels = 16;
    int stack_depth = 1;
    // transformer space (seq_len and vocab are space constants: they are
    // tied to the input batch and therefore not mutated)
    int seq_len = 32;
    int vocab = 256;
    std::vector<int> layer_choices = {1, 2, 3, 4};
    std::vector<int> head_choices = {1, 2, 4, 8};
    std::vector<int> d_model_choices = {32, 64, 128, 256};
    std::vector<int> d_ff_choices = {64, 128, 256, 512, 1024};

    static SpaceParams defaults(SpaceId space);
};

// Number of incoming edge slots of intermediate node dst. NB201 cells are
// densely wired (node d has d slots); DARTS-lite nodes have 2 slots.
int edge_slots(SpaceId space, int dst);

// Throws std::invalid_argument with a reason if g violates an invariant.
void validate(const Genome& g);

Genome random_genome(SpaceId space, std::uint64_t rng_seed);
Genome random_genome(SpaceId space, std::uint64_t rng_seed, const SpaceParams& params);

// Changes exactly one edge op (cells) or steps one config field (transformer).
Genome mutate_operation(const Genome& g, std::uint64_t rng_seed);

// Rewires exactly one edge to a different earlier source node. Throws
// std::invalid_argument("no connectivity freedom") when no edge can move.
CellGenome mutate_connectivity(const CellGenome& g, std::uint64_t rng_seed);

// Position-wise uniform crossover. Parents must come from the same space
// and have the same shape; otherwise throws ("space mismatch").
Genome crossover(const Genome& a, const Genome& b, std::uint64_t rng_seed);

// Parse failure with the byte offset of the first offending character.
class GenomeParseError : public std::runtime_error {
  public:
    GenomeParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at offset " + std::to_string(offset)),
          offset_(offset) {}
    std::size_t offset() const { return offset_; }

  private:
    std::size_t offset_;
};

// Single-line token encoding; decode(encode(g)) == g. Grammar is documented
// in docs/FORMATS.md and the parser is byte-exact.
std::string encode(const Genome& g);
Genome decode(std::string_view text);

}  // namespace swapnas::graph
