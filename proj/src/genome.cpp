#include "swapnas/genome.hpp"

#include <algorithm>
#include <array>
#include <charconv>

#include "swapnas/rng.hpp"

namespace swapnas::graph {

namespace {

const std::vector<OpLabel> kNb201Alphabet = {
    OpLabel::None, OpLabel::Skip, OpLabel::Conv1x1, OpLabel::Conv3x3, OpLabel::AvgPool3x3,
};

const std::vector<OpLabel> kDartsLiteAlphabet = {
    OpLabel::None,       OpLabel::Skip,       OpLabel::MaxPool3x3, OpLabel::AvgPool3x3,
    OpLabel::SepConv3x3, OpLabel::SepConv5x5, OpLabel::DilConv3x3, OpLabel::DilConv5x5,
};

struct OpName {
    OpLabel op;
    std::string_view name;
};

constexpr std::array<OpName, 10> kOpNames = {{
    {OpLabel::None, "none"},
    {OpLabel::Skip, "skip"},
    {OpLabel::Conv1x1, "conv1x1"},
    {OpLabel::Conv3x3, "conv3x3"},
    {OpLabel::AvgPool3x3, "avgpool3x3"},
    {OpLabel::MaxPool3x3, "maxpool3x3"},
    {OpLabel::SepConv3x3, "sepconv3x3"},
    {OpLabel::SepConv5x5, "sepconv5x5"},
    {OpLabel::DilConv3x3, "dilconv3x3"},
    {OpLabel::DilConv5x5, "dilconv5x5"},
}};

int ladder_index(const std::vector<int>& ladder, int value) {
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        if (ladder[i] == value) return static_cast<int>(i);
    }
    return -1;
}

}  // namespace

std::string space_name(SpaceId space) {
    switch (space) {
        case SpaceId::NB201: return "NB201";
        case SpaceId::DartsLite: return "DLITE";
        case SpaceId::Transformer: return "TFORM";
    }
    return "?";
}

std::optional<SpaceId> space_from_name(std::string_view name) {
    if (name == "NB201") return SpaceId::NB201;
    if (name == "DLITE") return SpaceId::DartsLite;
    if (name == "TFORM") return SpaceId::Transformer;
    return std::nullopt;
}

const std::vector<OpLabel>& op_alphabet(SpaceId space) {
    switch (space) {
        case SpaceId::NB201: return kNb201Alphabet;
        case SpaceId::DartsLite: return kDartsLiteAlphabet;
        default: throw std::invalid_argument("unknown space");
    }
}

std::string_view op_name(OpLabel op) {
    for (const auto& e : kOpNames) {
        if (e.op == op) return e.name;
    }
    return "?";
}

std::optional<OpLabel> op_from_name(std::string_view name) {
    for (const auto& e : kOpNames) {
        if (e.name == name) return e.op;
    }
    return std::nullopt;
}

SpaceId space_of(const Genome& g) {
    if (std::holds_alternative<TransformerGenome>(g)) return SpaceId::Transformer;
    return std::get<CellGenome>(g).space;
}

SpaceParams SpaceParams::defaults(SpaceId space) {
    SpaceParams p;
    switch (space) {
        case SpaceId::NB201:
            p.nodes = 3;
            p.stem_channels = 16;
            p.stack_depth = 1;
            break;
        case SpaceId::DartsLite:
            p.nodes = 4;
            p.stem_channels = 16;
            p.stack_depth = 1;
            break;
        case SpaceId::Transformer:
            break;
    }
    return p;
}

int edge_slots(SpaceId space, int dst) {
    switch (space) {
        case SpaceId::NB201: return dst;  // densely wired
        case SpaceId::DartsLite: return 2;
        default: throw std::invalid_argument("unknown space");
    }
}

void validate(const Genome& g) {
    if (const auto* t = std::get_if<TransformerGenome>(&g)) {
        if (t->layers < 1 || t->heads < 1 || t->d_model < 1 || t->d_ff < 1 ||
            t->seq_len < 1 || t->vocab < 1) {
            throw std::invalid_argument("transformer genome field < 1");
        }
        if (t->d_model % t->heads != 0) {
            throw std::invalid_argument("d_model not divisible by heads");
        }
        return;
    }
    const auto& c = std::get<CellGenome>(g);
    if (c.space == SpaceId::Transformer) throw std::invalid_argument("cell genome with transformer space id");
    if (c.nodes < 1) throw std::invalid_argument("cell needs at least one intermediate node");
    if (c.stem_channels < 1 || c.stack_depth < 1) {
        throw std::invalid_argument("stem_channels and stack_depth must be positive");
    }
    const auto& alphabet = op_alphabet(c.space);
    std::vector<int> incoming(static_cast<std::size_t>(c.nodes) + 1, 0);
    int prev_dst = 0;
    for (const auto& e : c.edges) {
        if (e.dst < 1 || e.dst > c.nodes) throw std::invalid_argument("edge dst out of range");
        if (e.src < 0 || e.src >= e.dst) throw std::invalid_argument("edge src must precede dst");
        if (e.dst < prev_dst) throw std::invalid_argument("edges not in dst order");
        prev_dst = e.dst;
        if (std::find(alphabet.begin(), alphabet.end(), e.op) == alphabet.end()) {
            throw std::invalid_argument("op not in space alphabet");
        }
        ++incoming[static_cast<std::size_t>(e.dst)];
    }
    for (int d = 1; d <= c.nodes; ++d) {
        if (incoming[static_cast<std::size_t>(d)] < 1) {
            throw std::invalid_argument("intermediate node without incoming edge");
        }
        // the slot layout is part of the space definition; the positional
        // encoding relies on it
        if (incoming[static_cast<std::size_t>(d)] != edge_slots(c.space, d)) {
            throw std::invalid_argument("edge count does not match the space's slot layout");
        }
    }
}

Genome random_genome(SpaceId space, std::uint64_t rng_seed) {
    return random_genome(space, rng_seed, SpaceParams::defaults(space));
}

Genome random_genome(SpaceId space, std::uint64_t rng_seed, const SpaceParams& params) {
    Rng rng(rng_seed);
    if (space == SpaceId::Transformer) {
        TransformerGenome t;
        t.layers = params.layer_choices[rng.next_below(params.layer_choices.size())];
        t.heads = params.head_choices[rng.next_below(params.head_choices.size())];
        t.d_model = params.d_model_choices[rng.next_below(params.d_model_choices.size())];
        t.d_ff = params.d_ff_choices[rng.next_below(params.d_ff_choices.size())];
        t.seq_len = params.seq_len;
        t.vocab = params.vocab;
        Genome g = t;
        validate(g);
        return g;
    }
    if (space != SpaceId::NB201 && space != SpaceId::DartsLite) {
        throw std::invalid_argument("unknown space");
    }
    CellGenome c;
    c.space = space;
    c.nodes = params.nodes;
    c.stem_channels = params.stem_channels;
    c.stack_depth = params.stack_depth;
    const auto& alphabet = op_alphabet(space);
    for (int dst = 1; dst <= c.nodes; ++dst) {
        const int slots = edge_slots(space, dst);
        for (int s = 0; s < slots; ++s) {
            CellEdge e;
            e.dst = dst;
            // NB201 slots connect to every predecessor once; DARTS-lite slots
            // pick a random predecessor (parallel edges allowed).
            e.src = (space == SpaceId::NB201) ? s : static_cast<int>(rng.next_below(static_cast<std::uint64_t>(dst)));
            e.op = alphabet[rng.next_below(alphabet.size())];
            c.edges.push_back(e);
        }
    }
    Genome g = c;
    validate(g);
    return g;
}

Genome mutate_operation(const Genome& g, std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    if (const auto* t = std::get_if<TransformerGenome>(&g)) {
        const SpaceParams params = SpaceParams::defaults(SpaceId::Transformer);
        TransformerGenome out = *t;
        // Step one config field by one ladder position, staying in bounds.
        // seq_len and vocab are space constants (tied to the input batch).
        for (int attempt = 0; attempt < 16; ++attempt) {
            const int field = static_cast<int>(rng.next_below(4));
            const std::vector<int>* ladder = nullptr;
            int* value = nullptr;
            switch (field) {
                case 0: ladder = &params.layer_choices; value = &out.layers; break;
                case 1: ladder = &params.head_choices; value = &out.heads; break;
                case 2: ladder = &params.d_model_choices; value = &out.d_model; break;
                case 3: ladder = &params.d_ff_choices; value = &out.d_ff; break;
            }
            const int idx = ladder_index(*ladder, *value);
            if (idx < 0 || ladder->size() < 2) continue;  // field not on its ladder or frozen
            int next = idx;
            if (idx == 0) {
                next = 1;
            } else if (idx + 1 == static_cast<int>(ladder->size())) {
                next = idx - 1;
            } else {
                next = rng.next_bool() ? idx + 1 : idx - 1;
            }
            *value = (*ladder)[static_cast<std::size_t>(next)];
            Genome res = out;
            validate(res);
            return res;
        }
        throw std::invalid_argument("no mutable configuration field");
    }
    const auto& c = std::get<CellGenome>(g);
    if (c.edges.empty()) throw std::invalid_argument("genome has no edges");
    const auto& alphabet = op_alphabet(c.space);
    CellGenome out = c;
    // Resample the edge position when the alphabet leaves no label choice.
    for (int attempt = 0; attempt < 64; ++attempt) {
        const std::size_t pos = rng.next_below(out.edges.size());
        const OpLabel current = out.edges[pos].op;
        std::vector<OpLabel> others;
        others.reserve(alphabet.size());
        for (OpLabel op : alphabet) {
            if (op != current) others.push_back(op);
        }
        if (others.empty()) continue;
        out.edges[pos].op = others[rng.next_below(others.size())];
        Genome res = out;
        validate(res);
        return res;
    }
    throw std::invalid_argument("no mutable operation");
}

CellGenome mutate_connectivity(const CellGenome& g, std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    std::vector<std::size_t> rewirable;
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
        if (g.edges[i].dst >= 2) rewirable.push_back(i);  // >= 2 candidate sources
    }
    if (rewirable.empty()) throw std::invalid_argument("no connectivity freedom");
    CellGenome out = g;
    const std::size_t pos = rewirable[rng.next_below(rewirable.size())];
    CellEdge& e = out.edges[pos];
    // Pick a different earlier node: dst choices minus the current src.
    const int pick = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(e.dst - 1)));
    e.src = (pick >= e.src) ? pick + 1 : pick;
    validate(Genome{out});
    return out;
}

Genome crossover(const Genome& a, const Genome& b, std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    if (space_of(a) != space_of(b)) throw std::invalid_argument("space mismatch");
    if (const auto* ta = std::get_if<TransformerGenome>(&a)) {
        const auto& tb = std::get<TransformerGenome>(b);
        TransformerGenome child;
        child.layers = rng.next_bool() ? ta->layers : tb.layers;
        child.heads = rng.next_bool() ? ta->heads : tb.heads;
        child.d_model = rng.next_bool() ? ta->d_model : tb.d_model;
        child.d_ff = rng.next_bool() ? ta->d_ff : tb.d_ff;
        child.seq_len = rng.next_bool() ? ta->seq_len : tb.seq_len;
        child.vocab = rng.next_bool() ? ta->vocab : tb.vocab;
        Genome res = child;
        validate(res);
        return res;
    }
    const auto& ca = std::get<CellGenome>(a);
    const auto& cb = std::get<CellGenome>(b);
    if (ca.nodes != cb.nodes || ca.edges.size() != cb.edges.size()) {
        throw std::invalid_argument("space mismatch");
    }
    CellGenome child = ca;
    child.stem_channels = rng.next_bool() ? ca.stem_channels : cb.stem_channels;
    child.stack_depth = rng.next_bool() ? ca.stack_depth : cb.stack_depth;
    for (std::size_t i = 0; i < child.edges.size(); ++i) {
        if (ca.edges[i].dst != cb.edges[i].dst) throw std::invalid_argument("space mismatch");
        child.edges[i] = rng.next_bool() ? ca.edges[i] : cb.edges[i];
    }
    Genome res = child;
    validate(res);
    return res;
}

// ---------------------------------------------------------------------------
// Encoding. See docs/FORMATS.md for the grammar.
// ---------------------------------------------------------------------------

std::string encode(const Genome& g) {
    validate(g);
    std::string out = "space=" + space_name(space_of(g)) + ";";
    if (const auto* t = std::get_if<TransformerGenome>(&g)) {
        out += "L=" + std::to_string(t->layers);
        out += ",H=" + std::to_string(t->heads);
        out += ",DM=" + std::to_string(t->d_model);
        out += ",DF=" + std::to_string(t->d_ff);
        out += ",T=" + std::to_string(t->seq_len);
        out += ",V=" + std::to_string(t->vocab);
        return out;
    }
    const auto& c = std::get<CellGenome>(g);
    out += "nodes=" + std::to_string(c.nodes) + ";";
    out += "stem=" + std::to_string(c.stem_channels) + ";";
    out += "stack=" + std::to_string(c.stack_depth) + ";";
    out += "|";
    for (const auto& e : c.edges) {
        out += std::string(op_name(e.op)) + "~" + std::to_string(e.src) + "|";
    }
    return out;
}

namespace {

// Minimal cursor-based parser so every error carries a byte offset.
class Cursor {
  public:
    explicit Cursor(std::string_view text) : text_(text) {}

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ >= text_.size(); }

    void expect(std::string_view token) {
        if (text_.substr(pos_, token.size()) != token) {
            throw GenomeParseError("expected '" + std::string(token) + "'", pos_);
        }
        pos_ += token.size();
    }

    bool consume(char c) {
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    int integer() {
        int value = 0;
        const char* begin = text_.data() + pos_;
        const char* end = text_.data() + text_.size();
        auto [ptr, ec] = std::from_chars(begin, end, value);
        if (ec != std::errc() || ptr == begin) {
            throw GenomeParseError("expected integer", pos_);
        }
        pos_ += static_cast<std::size_t>(ptr - begin);
        return value;
    }

    std::string_view until(char delim) {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && text_[pos_] != delim) ++pos_;
        return text_.substr(start, pos_ - start);
    }

  private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

}  // namespace

Genome decode(std::string_view text) {
    Cursor cur(text);
    if (text.empty()) throw GenomeParseError("empty genome string", 0);
    cur.expect("space=");
    const std::size_t name_pos = cur.pos();
    const std::string_view name = cur.until(';');
    const auto space = space_from_name(name);
    if (!space) throw GenomeParseError("unknown space", name_pos);
    cur.expect(";");

    if (*space == SpaceId::Transformer) {
        TransformerGenome t;
        cur.expect("L=");
        t.layers = cur.integer();
        cur.expect(",H=");
        t.heads = cur.integer();
        cur.expect(",DM=");
        t.d_model = cur.integer();
        cur.expect(",DF=");
        t.d_ff = cur.integer();
        cur.expect(",T=");
        t.seq_len = cur.integer();
        cur.expect(",V=");
        t.vocab = cur.integer();
        if (!cur.done()) throw GenomeParseError("trailing characters", cur.pos());
        Genome g = t;
        try {
            validate(g);
        } catch (const std::invalid_argument& e) {
            throw GenomeParseError(e.what(), cur.pos());
        }
        return g;
    }

    CellGenome c;
    c.space = *space;
    cur.expect("nodes=");
    c.nodes = cur.integer();
    cur.expect(";stem=");
    c.stem_channels = cur.integer();
    cur.expect(";stack=");
    c.stack_depth = cur.integer();
    cur.expect(";|");
    if (c.nodes < 1) throw GenomeParseError("node count must be positive", cur.pos());
    for (int dst = 1; dst <= c.nodes; ++dst) {
        const int slots = edge_slots(c.space, dst);
        for (int s = 0; s < slots; ++s) {
            const std::size_t tok_pos = cur.pos();
            const std::string_view op_tok = cur.until('~');
            const auto op = op_from_name(op_tok);
            if (!op) throw GenomeParseError("unknown op", tok_pos);
            cur.expect("~");
            CellEdge e;
            e.dst = dst;
            e.src = cur.integer();
            e.op = *op;
            cur.expect("|");
            c.edges.push_back(e);
        }
    }
    if (!cur.done()) throw GenomeParseError("trailing characters", cur.pos());
    Genome g = c;
    try {
        validate(g);
    } catch (const std::invalid_argument& e) {
        throw GenomeParseError(e.what(), cur.pos());
    }
    return g;
}

}  // namespace swapnas::graph
