#include "swapnas/network.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <variant>

#include "swapnas/rng.hpp"

namespace swapnas::engine {

namespace {

constexpr int kNumClasses = 10;
constexpr int kStages = 3;
constexpr double kBnEps = 1e-5;
constexpr double kLnEps = 1e-5;

template <class T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;
    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {}
    T at(int ni, int ci, int yi, int xi) const {
        return v[((static_cast<std::size_t>(ni) * c + ci) * h + yi) * w + xi];
    }
    T& at(int ni, int ci, int yi, int xi) {
        return v[((static_cast<std::size_t>(ni) * c + ci) * h + yi) * w + xi];
    }
    std::int64_t sites_per_sample() const { return static_cast<std::int64_t>(c) * h * w; }
};

struct ConvWeights {
    int c_in = 0, c_out = 0, k = 1, stride = 1, pad = 0, dilation = 1, groups = 1;
    bool bias = false;
    std::vector<float> w;  // [c_out][c_in/groups][k][k]
    std::vector<float> b;  // [c_out] when bias
};

struct LinearWeights {
    int in = 0, out = 0;
    std::vector<float> w;  // [out][in]
    std::vector<float> b;  // [out], zero-initialised
};

struct EdgePlan {
    graph::CellEdge edge;
    std::vector<ConvWeights> convs;  // ReLU-conv(-conv)-BN pipelines
};

struct CellPlan {
    std::vector<EdgePlan> edges;
};

struct CellNetwork {
    graph::CellGenome genome;
    InputDims dims;
    ConvWeights stem;
    std::vector<std::vector<CellPlan>> stages;  // [stage][cell]
    std::vector<ConvWeights> reductions;        // between stages
    LinearWeights classifier;
};

struct TransformerLayerWeights {
    LinearWeights wq, wk, wv, wo, ff1, ff2;
};

struct TransformerNetwork {
    graph::TransformerGenome genome;
    std::vector<float> tok_emb;  // [vocab][d_model]
    std::vector<float> pos_emb;  // [seq_len][d_model]
    std::vector<TransformerLayerWeights> layers;
};

struct PlainNetwork {
    PlainConvSpec spec;
    std::vector<ConvWeights> convs;
    std::optional<LinearWeights> dense;
};

int conv_out_extent(int in, int k, int stride, int pad, int dilation) {
    const int eff_k = (k - 1) * dilation + 1;
    return (in + 2 * pad - eff_k) / stride + 1;
}

}  // namespace

struct NetworkImpl {
    std::variant<CellNetwork, TransformerNetwork, PlainNetwork> net;
    EngineOptions opts;
};

namespace {

// ---------------------------------------------------------------------------
// Weight initialisation. Draw order is fixed by construction order; biases
// are zero and never consume rng draws.
// ---------------------------------------------------------------------------

ConvWeights make_conv(Rng& rng, const EngineOptions& opts, int c_in, int c_out, int k,
                      int stride, int pad, int dilation, int groups, bool bias) {
    ConvWeights cw;
    cw.c_in = c_in;
    cw.c_out = c_out;
    cw.k = k;
    cw.stride = stride;
    cw.pad = pad;
    cw.dilation = dilation;
    cw.groups = groups;
    cw.bias = bias;
    const int fan_in = (c_in / groups) * k * k;
    const double std_dev = opts.init_gain / std::sqrt(static_cast<double>(fan_in));
    cw.w.resize(static_cast<std::size_t>(c_out) * (c_in / groups) * k * k);
    for (auto& x : cw.w) x = static_cast<float>(rng.next_normal() * std_dev);
    if (bias) cw.b.assign(static_cast<std::size_t>(c_out), 0.0f);
    return cw;
}

LinearWeights make_linear(Rng& rng, double gain, int in, int out) {
    LinearWeights lw;
    lw.in = in;
    lw.out = out;
    const double std_dev = gain / std::sqrt(static_cast<double>(in));
    lw.w.resize(static_cast<std::size_t>(out) * in);
    for (auto& x : lw.w) x = static_cast<float>(rng.next_normal() * std_dev);
    lw.b.assign(static_cast<std::size_t>(out), 0.0f);
    return lw;
}

std::int64_t conv_params(const ConvWeights& cw, bool with_bn) {
    std::int64_t p = static_cast<std::int64_t>(cw.w.size());
    if (cw.bias) p += cw.c_out;
    if (with_bn) p += 2LL * cw.c_out;  // affine scale and shift
    return p;
}

std::int64_t linear_params(const LinearWeights& lw) {
    return static_cast<std::int64_t>(lw.in) * lw.out + lw.out;
}

// Builds the per-edge conv pipeline for a cell op at `channels` width.
EdgePlan make_edge_plan(Rng& rng, const EngineOptions& opts, const graph::CellEdge& e,
                        int channels) {
    EdgePlan plan;
    plan.edge = e;
    using graph::OpLabel;
    switch (e.op) {
        case OpLabel::Conv1x1:
            plan.convs.push_back(make_conv(rng, opts, channels, channels, 1, 1, 0, 1, 1, false));
            break;
        case OpLabel::Conv3x3:
            plan.convs.push_back(make_conv(rng, opts, channels, channels, 3, 1, 1, 1, 1, false));
            break;
        case OpLabel::SepConv3x3:
            plan.convs.push_back(make_conv(rng, opts, channels, channels, 3, 1, 1, 1, channels, false));
            plan.convs.push_back(make_conv(rng, opts, channels, channels, 1, 1, 0, 1, 1, false));
            break;
        case OpLabel::SepConv5x5:
            plan.convs.push_back(make_conv(rng, opts, channels, channels, 5, 1, 2, 1, channels, false));
            plan.convs.push_back(make_conv(rng, opts, channels, channels, 1, 1, 0, 1, 1, false));
            break;
        case OpLabel::DilConv3x3:
            plan.convs.push_back(make_conv(rng, opts, channels, channels, 3, 1, 2, 2, channels, false));
            plan.convs.push_back(make_conv(rng, opts, channels, channels, 1, 1, 0, 1, 1, false));
            break;
        case OpLabel::DilConv5x5:
            plan.convs.push_back(make_conv(rng, opts, channels, channels, 5, 1, 4, 2, channels, false));
            plan.convs.push_back(make_conv(rng, opts, channels, channels, 1, 1, 0, 1, 1, false));
            break;
        case OpLabel::None:
        case OpLabel::Skip:
        case OpLabel::AvgPool3x3:
        case OpLabel::MaxPool3x3:
            break;
    }
    return plan;
}

bool edge_has_relu(graph::OpLabel op) {
    using graph::OpLabel;
    switch (op) {
        case OpLabel::Conv1x1:
        case OpLabel::Conv3x3:
        case OpLabel::SepConv3x3:
        case OpLabel::SepConv5x5:
        case OpLabel::DilConv3x3:
        case OpLabel::DilConv5x5:
            return true;
        default:
            return false;
    }
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> conv2d(const Tensor<T>& in, const ConvWeights& cw) {
    const int oh = conv_out_extent(in.h, cw.k, cw.stride, cw.pad, cw.dilation);
    const int ow = conv_out_extent(in.w, cw.k, cw.stride, cw.pad, cw.dilation);
    if (oh < 1 || ow < 1) throw std::invalid_argument("degenerate shape");
    if (in.c != cw.c_in) throw std::invalid_argument("channel mismatch in conv");
    Tensor<T> out(in.n, cw.c_out, oh, ow);
    const int cpg_in = cw.c_in / cw.groups;
    const int cpg_out = cw.c_out / cw.groups;
    for (int ni = 0; ni < in.n; ++ni) {
        for (int g = 0; g < cw.groups; ++g) {
            for (int ocl = 0; ocl < cpg_out; ++ocl) {
                const int oc = g * cpg_out + ocl;
                const float* wbase = cw.w.data() + static_cast<std::size_t>(oc) * cpg_in * cw.k * cw.k;
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        T acc = cw.bias ? static_cast<T>(cw.b[oc]) : T(0);
                        for (int icl = 0; icl < cpg_in; ++icl) {
                            const int ic = g * cpg_in + icl;
                            const float* wrow = wbase + static_cast<std::size_t>(icl) * cw.k * cw.k;
                            for (int ky = 0; ky < cw.k; ++ky) {
                                const int iy = oy * cw.stride - cw.pad + ky * cw.dilation;
                                if (iy < 0 || iy >= in.h) continue;
                                for (int kx = 0; kx < cw.k; ++kx) {
                                    const int ix = ox * cw.stride - cw.pad + kx * cw.dilation;
                                    if (ix < 0 || ix >= in.w) continue;
                                    acc += static_cast<T>(wrow[ky * cw.k + kx]) * in.at(ni, ic, iy, ix);
                                }
                            }
                        }
                        out.at(ni, oc, oy, ox) = acc;
                    }
                }
            }
        }
    }
    return out;
}

// Batch-statistics normalisation (population variance), affine identity.
template <class T>
void batchnorm_inplace(Tensor<T>& t) {
    const std::int64_t count = static_cast<std::int64_t>(t.n) * t.h * t.w;
    for (int ci = 0; ci < t.c; ++ci) {
        double sum = 0.0;
        for (int ni = 0; ni < t.n; ++ni)
            for (int y = 0; y < t.h; ++y)
                for (int x = 0; x < t.w; ++x) sum += static_cast<double>(t.at(ni, ci, y, x));
        const double mean = sum / static_cast<double>(count);
        double sq = 0.0;
        for (int ni = 0; ni < t.n; ++ni)
            for (int y = 0; y < t.h; ++y)
                for (int x = 0; x < t.w; ++x) {
                    const double d = static_cast<double>(t.at(ni, ci, y, x)) - mean;
                    sq += d * d;
                }
        const double inv = 1.0 / std::sqrt(sq / static_cast<double>(count) + kBnEps);
        for (int ni = 0; ni < t.n; ++ni)
            for (int y = 0; y < t.h; ++y)
                for (int x = 0; x < t.w; ++x) {
                    t.at(ni, ci, y, x) =
                        static_cast<T>((static_cast<double>(t.at(ni, ci, y, x)) - mean) * inv);
                }
    }
}

template <class T>
Tensor<T> pool3x3_same(const Tensor<T>& in, bool max_pool) {
    Tensor<T> out(in.n, in.c, in.h, in.w);
    for (int ni = 0; ni < in.n; ++ni) {
        for (int ci = 0; ci < in.c; ++ci) {
            for (int oy = 0; oy < in.h; ++oy) {
                for (int ox = 0; ox < in.w; ++ox) {
                    T best = T(0);
                    double sum = 0.0;
                    int cnt = 0;
                    bool first = true;
                    for (int ky = -1; ky <= 1; ++ky) {
                        const int iy = oy + ky;
                        if (iy < 0 || iy >= in.h) continue;
                        for (int kx = -1; kx <= 1; ++kx) {
                            const int ix = ox + kx;
                            if (ix < 0 || ix >= in.w) continue;
                            const T v = in.at(ni, ci, iy, ix);
                            if (max_pool) {
                                if (first || v > best) best = v;
                                first = false;
                            } else {
                                sum += static_cast<double>(v);
                                ++cnt;
                            }
                        }
                    }
                    out.at(ni, ci, oy, ox) = max_pool ? best : static_cast<T>(sum / cnt);
                }
            }
        }
    }
    return out;
}

template <class T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& rhs) {
    for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += rhs.v[i];
}

// Applies the activation in place over sample-major blocks and appends the
// Signum of each post-activation value to the record (one row per site).
template <class T>
void activation_capture(T* data, int samples, std::int64_t sites, bool gelu,
                        ActivationRecord& rec) {
    if (sites == 0) return;
    const std::int64_t row0 = rec.site_count;
    rec.matrix.resize(static_cast<std::size_t>(row0 + sites) * samples);
    for (int s = 0; s < samples; ++s) {
        T* x = data + static_cast<std::size_t>(s) * sites;
        for (std::int64_t j = 0; j < sites; ++j) {
            const double raw = static_cast<double>(x[j]);
            if (!std::isfinite(raw)) throw std::runtime_error("numeric overflow");
            T y;
            if (gelu) {
                y = static_cast<T>(0.5 * raw * (1.0 + std::erf(raw * 0.7071067811865475)));
            } else {
                y = x[j] > T(0) ? x[j] : T(0);
            }
            x[j] = y;
            std::int8_t code = 0;
            if (y > T(0)) code = 1;
            else if (y < T(0)) code = -1;
            rec.matrix[static_cast<std::size_t>(row0 + j) * samples + s] = code;
        }
    }
    rec.per_layer_sites.emplace_back(static_cast<int>(rec.per_layer_sites.size()), sites);
    rec.site_count += sites;
}

template <class T>
void relu_capture(Tensor<T>& t, ActivationRecord& rec) {
    activation_capture(t.v.data(), t.n, t.sites_per_sample(), false, rec);
}

// ---------------------------------------------------------------------------
// Cell network forward
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> edge_forward(const EdgePlan& plan, const Tensor<T>& src, bool batch_norm,
                       ActivationRecord& rec) {
    using graph::OpLabel;
    switch (plan.edge.op) {
        case OpLabel::Skip:
            return src;
        case OpLabel::AvgPool3x3:
            return pool3x3_same(src, false);
        case OpLabel::MaxPool3x3:
            return pool3x3_same(src, true);
        case OpLabel::None:
            return Tensor<T>(src.n, src.c, src.h, src.w);
        default: {
            Tensor<T> t = src;
            relu_capture(t, rec);
            for (const auto& cw : plan.convs) t = conv2d(t, cw);
            if (batch_norm) batchnorm_inplace(t);
            return t;
        }
    }
}

template <class T>
Tensor<T> cell_forward(const CellPlan& cell, int nodes, const Tensor<T>& input,
                       bool batch_norm, ActivationRecord& rec) {
    std::vector<Tensor<T>> values(static_cast<std::size_t>(nodes) + 1);
    values[0] = input;
    for (int d = 1; d <= nodes; ++d) values[d] = Tensor<T>(input.n, input.c, input.h, input.w);
    for (const auto& plan : cell.edges) {
        if (plan.edge.op == graph::OpLabel::None) continue;  // contributes zero
        Tensor<T> out = edge_forward(plan, values[static_cast<std::size_t>(plan.edge.src)],
                                     batch_norm, rec);
        add_inplace(values[static_cast<std::size_t>(plan.edge.dst)], out);
    }
    return values[static_cast<std::size_t>(nodes)];
}

template <class T>
void cell_network_forward(const CellNetwork& net, const EngineOptions& opts,
                          const InputBatch& b, ActivationRecord& rec) {
    Tensor<T> x(b.samples, b.channels, b.height, b.width);
    for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] = static_cast<T>(b.image_data[i]);
    x = conv2d(x, net.stem);
    if (opts.batch_norm) batchnorm_inplace(x);
    for (int stage = 0; stage < kStages; ++stage) {
        for (const auto& cell : net.stages[static_cast<std::size_t>(stage)]) {
            x = cell_forward(cell, net.genome.nodes, x, opts.batch_norm, rec);
        }
        if (stage + 1 < kStages) {
            relu_capture(x, rec);
            x = conv2d(x, net.reductions[static_cast<std::size_t>(stage)]);
            if (opts.batch_norm) batchnorm_inplace(x);
        }
    }
    relu_capture(x, rec);
    // global average pool + classifier head
    const std::int64_t hw = static_cast<std::int64_t>(x.h) * x.w;
    std::vector<T> pooled(static_cast<std::size_t>(x.c));
    for (int ni = 0; ni < x.n; ++ni) {
        for (int ci = 0; ci < x.c; ++ci) {
            double sum = 0.0;
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) sum += static_cast<double>(x.at(ni, ci, y, xx));
            pooled[static_cast<std::size_t>(ci)] = static_cast<T>(sum / static_cast<double>(hw));
        }
        for (int oc = 0; oc < net.classifier.out; ++oc) {
            T acc = static_cast<T>(net.classifier.b[oc]);
            for (int ci = 0; ci < x.c; ++ci) {
                acc += static_cast<T>(net.classifier.w[static_cast<std::size_t>(oc) * x.c + ci]) *
                       pooled[static_cast<std::size_t>(ci)];
            }
            (void)acc;  // logits are not consumed; scoring reads activations only
        }
    }
}

// ---------------------------------------------------------------------------
// Transformer forward (post-LN encoder; GELU sites in the FFN are captured)
// ---------------------------------------------------------------------------

template <class T>
void layer_norm_rows(std::vector<T>& x, std::int64_t rows, int dim) {
    for (std::int64_t r = 0; r < rows; ++r) {
        T* row = x.data() + static_cast<std::size_t>(r) * dim;
        double sum = 0.0;
        for (int i = 0; i < dim; ++i) sum += static_cast<double>(row[i]);
        const double mean = sum / dim;
        double sq = 0.0;
        for (int i = 0; i < dim; ++i) {
            const double d = static_cast<double>(row[i]) - mean;
            sq += d * d;
        }
        const double inv = 1.0 / std::sqrt(sq / dim + kLnEps);
        for (int i = 0; i < dim; ++i) {
            row[i] = static_cast<T>((static_cast<double>(row[i]) - mean) * inv);
        }
    }
}

// y[rows x out] = x[rows x in] * W^T + b
template <class T>
void linear_rows(const std::vector<T>& x, std::int64_t rows, const LinearWeights& lw,
                 std::vector<T>& y) {
    y.assign(static_cast<std::size_t>(rows) * lw.out, T(0));
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + static_cast<std::size_t>(r) * lw.in;
        T* yr = y.data() + static_cast<std::size_t>(r) * lw.out;
        for (int o = 0; o < lw.out; ++o) {
            const float* wr = lw.w.data() + static_cast<std::size_t>(o) * lw.in;
            T acc = static_cast<T>(lw.b[o]);
            for (int i = 0; i < lw.in; ++i) acc += static_cast<T>(wr[i]) * xr[i];
            yr[o] = acc;
        }
    }
}

template <class T>
void transformer_forward(const TransformerNetwork& net, const InputBatch& b,
                         ActivationRecord& rec) {
    const auto& g = net.genome;
    const int S = b.samples;
    const int Tn = g.seq_len;
    const int dm = g.d_model;
    const int heads = g.heads;
    const int dh = dm / heads;
    const std::int64_t rows = static_cast<std::int64_t>(S) * Tn;

    std::vector<T> x(static_cast<std::size_t>(rows) * dm);
    for (int s = 0; s < S; ++s) {
        for (int t = 0; t < Tn; ++t) {
            const std::uint32_t id = b.token_data[static_cast<std::size_t>(s) * Tn + t];
            if (id >= static_cast<std::uint32_t>(g.vocab)) {
                throw std::invalid_argument("token id outside genome vocabulary");
            }
            T* row = x.data() + (static_cast<std::size_t>(s) * Tn + t) * dm;
            const float* te = net.tok_emb.data() + static_cast<std::size_t>(id) * dm;
            const float* pe = net.pos_emb.data() + static_cast<std::size_t>(t) * dm;
            for (int i = 0; i < dm; ++i) row[i] = static_cast<T>(te[i]) + static_cast<T>(pe[i]);
        }
    }
    layer_norm_rows(x, rows, dm);

    std::vector<T> q, k, v, attn_out, h1, h2;
    std::vector<T> scores(static_cast<std::size_t>(Tn) * Tn);
    for (const auto& layer : net.layers) {
        linear_rows(x, rows, layer.wq, q);
        linear_rows(x, rows, layer.wk, k);
        linear_rows(x, rows, layer.wv, v);
        std::vector<T> ctx(static_cast<std::size_t>(rows) * dm, T(0));
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int s = 0; s < S; ++s) {
            const std::size_t base = static_cast<std::size_t>(s) * Tn;
            for (int hd = 0; hd < heads; ++hd) {
                const int off = hd * dh;
                for (int ti = 0; ti < Tn; ++ti) {
                    const T* qi = q.data() + (base + ti) * dm + off;
                    double mx = -1e300;
                    for (int tj = 0; tj < Tn; ++tj) {
                        const T* kj = k.data() + (base + tj) * dm + off;
                        double dot = 0.0;
                        for (int i = 0; i < dh; ++i) dot += static_cast<double>(qi[i]) * static_cast<double>(kj[i]);
                        const double sc = dot * scale;
                        scores[static_cast<std::size_t>(ti) * Tn + tj] = static_cast<T>(sc);
                        if (sc > mx) mx = sc;
                    }
                    double denom = 0.0;
                    for (int tj = 0; tj < Tn; ++tj) {
                        const double e = std::exp(static_cast<double>(scores[static_cast<std::size_t>(ti) * Tn + tj]) - mx);
                        scores[static_cast<std::size_t>(ti) * Tn + tj] = static_cast<T>(e);
                        denom += e;
                    }
                    T* out = ctx.data() + (base + ti) * dm + off;
                    for (int tj = 0; tj < Tn; ++tj) {
                        const T wgt = static_cast<T>(static_cast<double>(scores[static_cast<std::size_t>(ti) * Tn + tj]) / denom);
                        const T* vj = v.data() + (base + tj) * dm + off;
                        for (int i = 0; i < dh; ++i) out[i] += wgt * vj[i];
                    }
                }
            }
        }
        linear_rows(ctx, rows, layer.wo, attn_out);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += attn_out[i];
        layer_norm_rows(x, rows, dm);

        linear_rows(x, rows, layer.ff1, h1);
        // GELU sites: seq_len * d_ff per layer, sample-major blocks
        activation_capture(h1.data(), S, static_cast<std::int64_t>(Tn) * g.d_ff, true, rec);
        linear_rows(h1, rows, layer.ff2, h2);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += h2[i];
        layer_norm_rows(x, rows, dm);
    }
}

// ---------------------------------------------------------------------------
// Plain conv stack forward
// ---------------------------------------------------------------------------

template <class T>
void plain_forward(const PlainNetwork& net, const InputBatch& b, ActivationRecord& rec) {
    Tensor<T> x(b.samples, b.channels, b.height, b.width);
    for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] = static_cast<T>(b.image_data[i]);
    for (const auto& cw : net.convs) {
        x = conv2d(x, cw);
        relu_capture(x, rec);
    }
    if (net.dense) {
        const auto& lw = *net.dense;
        const std::int64_t flat = x.sites_per_sample();
        if (flat != lw.in) throw std::invalid_argument("dense input mismatch");
        for (int ni = 0; ni < x.n; ++ni) {
            const T* xr = x.v.data() + static_cast<std::size_t>(ni) * flat;
            for (int o = 0; o < lw.out; ++o) {
                T acc = static_cast<T>(lw.b[o]);
                const float* wr = lw.w.data() + static_cast<std::size_t>(o) * lw.in;
                for (int i = 0; i < flat; ++i) acc += static_cast<T>(wr[i]) * xr[i];
                (void)acc;  // head output is not consumed
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Shape/flop walks
// ---------------------------------------------------------------------------

struct CellWalk {
    std::int64_t flops = 0;
};

// Spatial extents per stage for given input dims; reductions use stride 2.
std::vector<std::pair<int, int>> stage_extents(int h, int w) {
    std::vector<std::pair<int, int>> out;
    for (int stage = 0; stage < kStages; ++stage) {
        out.emplace_back(h, w);
        h = conv_out_extent(h, 3, 2, 1, 1);
        w = conv_out_extent(w, 3, 2, 1, 1);
    }
    return out;
}

std::int64_t cell_flops(const graph::CellGenome& g, int in_channels, int h, int w) {
    if (h < 1 || w < 1 || in_channels < 1) throw std::invalid_argument("degenerate shape");
    const auto extents = stage_extents(h, w);
    std::int64_t flops = static_cast<std::int64_t>(in_channels) * g.stem_channels * 9 * h * w;
    for (int stage = 0; stage < kStages; ++stage) {
        const std::int64_t c = static_cast<std::int64_t>(g.stem_channels) << stage;
        const std::int64_t hw = static_cast<std::int64_t>(extents[stage].first) * extents[stage].second;
        std::int64_t cell = 0;
        for (const auto& e : g.edges) {
            using graph::OpLabel;
            switch (e.op) {
                case OpLabel::Conv1x1: cell += c * c * hw; break;
                case OpLabel::Conv3x3: cell += c * c * 9 * hw; break;
                case OpLabel::SepConv3x3: cell += (c * 9 + c * c) * hw; break;
                case OpLabel::SepConv5x5: cell += (c * 25 + c * c) * hw; break;
                case OpLabel::DilConv3x3: cell += (c * 9 + c * c) * hw; break;
                case OpLabel::DilConv5x5: cell += (c * 25 + c * c) * hw; break;
                default: break;
            }
        }
        flops += cell * g.stack_depth;
        if (stage + 1 < kStages) {
            const std::int64_t nhw =
                static_cast<std::int64_t>(extents[stage + 1].first) * extents[stage + 1].second;
            flops += c * (2 * c) * 9 * nhw;
        }
    }
    const std::int64_t c_last = static_cast<std::int64_t>(g.stem_channels) << (kStages - 1);
    flops += c_last * kNumClasses;
    return flops;
}

std::int64_t transformer_flops(const graph::TransformerGenome& g) {
    const std::int64_t T = g.seq_len, dm = g.d_model, dff = g.d_ff;
    std::int64_t per_layer = 0;
    per_layer += 3 * T * dm * dm;  // q, k, v projections
    per_layer += 2 * T * T * dm;   // attention scores + weighted values
    per_layer += T * dm * dm;      // output projection
    per_layer += 2 * T * dm * dff; // feed-forward
    return per_layer * g.layers;
}

std::int64_t plain_flops(const PlainNetwork& net) {
    std::int64_t flops = 0;
    int c = net.spec.in_channels, h = net.spec.in_height, w = net.spec.in_width;
    for (const auto& conv : net.spec.convs) {
        const int oh = conv_out_extent(h, conv.kernel, conv.stride, conv.pad, 1);
        const int ow = conv_out_extent(w, conv.kernel, conv.stride, conv.pad, 1);
        flops += static_cast<std::int64_t>(c) * conv.out_channels * conv.kernel * conv.kernel * oh * ow;
        c = conv.out_channels;
        h = oh;
        w = ow;
    }
    if (net.spec.dense_out) {
        flops += static_cast<std::int64_t>(c) * h * w * *net.spec.dense_out;
    }
    return flops;
}

}  // namespace

std::vector<graph::LayerShape> plain_layer_shapes(const PlainConvSpec& spec) {
    std::vector<graph::LayerShape> shapes;
    int h = spec.in_height, w = spec.in_width;
    for (const auto& conv : spec.convs) {
        graph::LayerShape s;
        s.c = conv.out_channels;
        s.k = conv.kernel;
        s.t = conv.stride;
        s.w = w;
        s.h = h;
        s.pad = conv.pad;
        shapes.push_back(s);
        const int oh = conv_out_extent(h, conv.kernel, conv.stride, conv.pad, 1);
        const int ow = conv_out_extent(w, conv.kernel, conv.stride, conv.pad, 1);
        if (oh < 1 || ow < 1) throw std::invalid_argument("degenerate shape");
        h = oh;
        w = ow;
    }
    return shapes;
}

NetworkInstance instantiate(const graph::Genome& g, std::uint64_t init_seed, InputDims dims,
                            const EngineOptions& opts) {
    graph::validate(g);
    NetworkInstance inst;
    inst.genome = g;
    inst.init_seed = init_seed;
    Rng rng(init_seed);

    if (const auto* tg = std::get_if<graph::TransformerGenome>(&g)) {
        TransformerNetwork net;
        net.genome = *tg;
        const double emb_std = 1.0 / std::sqrt(static_cast<double>(tg->d_model));
        net.tok_emb.resize(static_cast<std::size_t>(tg->vocab) * tg->d_model);
        for (auto& x : net.tok_emb) x = static_cast<float>(rng.next_normal() * emb_std);
        net.pos_emb.resize(static_cast<std::size_t>(tg->seq_len) * tg->d_model);
        for (auto& x : net.pos_emb) x = static_cast<float>(rng.next_normal() * emb_std);
        std::int64_t params = static_cast<std::int64_t>(net.tok_emb.size()) +
                              static_cast<std::int64_t>(net.pos_emb.size()) + 2LL * tg->d_model;
        for (int l = 0; l < tg->layers; ++l) {
            TransformerLayerWeights layer;
            layer.wq = make_linear(rng, 1.0, tg->d_model, tg->d_model);
            layer.wk = make_linear(rng, 1.0, tg->d_model, tg->d_model);
            layer.wv = make_linear(rng, 1.0, tg->d_model, tg->d_model);
            layer.wo = make_linear(rng, 1.0, tg->d_model, tg->d_model);
            layer.ff1 = make_linear(rng, 1.0, tg->d_model, tg->d_ff);
            layer.ff2 = make_linear(rng, 1.0, tg->d_ff, tg->d_model);
            params += linear_params(layer.wq) + linear_params(layer.wk) + linear_params(layer.wv) +
                      linear_params(layer.wo) + linear_params(layer.ff1) + linear_params(layer.ff2);
            params += 4LL * tg->d_model;  // two layer norms
            net.layers.push_back(std::move(layer));
        }
        inst.param_count = params;
        inst.params_m = static_cast<double>(params) / 1e6;
        inst.flop_count = transformer_flops(*tg);
        auto impl = std::make_shared<NetworkImpl>();
        impl->net = std::move(net);
        impl->opts = opts;
        inst.impl = std::move(impl);
        return inst;
    }

    const auto& cg = std::get<graph::CellGenome>(g);
    if (dims.channels < 1 || dims.height < 1 || dims.width < 1) {
        throw std::invalid_argument("degenerate shape");
    }
    CellNetwork net;
    net.genome = cg;
    net.dims = dims;
    net.stem = make_conv(rng, opts, dims.channels, cg.stem_channels, 3, 1, 1, 1, 1, false);
    std::int64_t params = conv_params(net.stem, true);
    for (int stage = 0; stage < kStages; ++stage) {
        const int c = cg.stem_channels << stage;
        std::vector<CellPlan> cells;
        for (int rep = 0; rep < cg.stack_depth; ++rep) {
            CellPlan plan;
            for (const auto& e : cg.edges) {
                EdgePlan ep = make_edge_plan(rng, opts, e, c);
                for (const auto& cw : ep.convs) params += static_cast<std::int64_t>(cw.w.size());
                if (edge_has_relu(e.op)) params += 2LL * c;  // trailing batch norm
                plan.edges.push_back(std::move(ep));
            }
            cells.push_back(std::move(plan));
        }
        net.stages.push_back(std::move(cells));
        if (stage + 1 < kStages) {
            ConvWeights red = make_conv(rng, opts, c, 2 * c, 3, 2, 1, 1, 1, false);
            params += conv_params(red, true);
            net.reductions.push_back(std::move(red));
        }
    }
    const int c_last = cg.stem_channels << (kStages - 1);
    net.classifier = make_linear(rng, 1.0, c_last, kNumClasses);
    params += linear_params(net.classifier);

    inst.param_count = params;
    inst.params_m = static_cast<double>(params) / 1e6;
    inst.flop_count = cell_flops(cg, dims.channels, dims.height, dims.width);
    auto impl = std::make_shared<NetworkImpl>();
    impl->net = std::move(net);
    impl->opts = opts;
    inst.impl = std::move(impl);
    return inst;
}

NetworkInstance instantiate_plain(const PlainConvSpec& spec, std::uint64_t init_seed,
                                  const EngineOptions& opts) {
    if (spec.in_channels < 1 || spec.in_height < 1 || spec.in_width < 1) {
        throw std::invalid_argument("degenerate shape");
    }
    plain_layer_shapes(spec);  // validates extents
    NetworkInstance inst;
    inst.init_seed = init_seed;
    Rng rng(init_seed);
    PlainNetwork net;
    net.spec = spec;
    std::int64_t params = 0;
    int c = spec.in_channels, h = spec.in_height, w = spec.in_width;
    for (const auto& conv : spec.convs) {
        ConvWeights cw = make_conv(rng, opts, c, conv.out_channels, conv.kernel, conv.stride,
                                   conv.pad, 1, 1, true);
        params += conv_params(cw, false);
        net.convs.push_back(std::move(cw));
        h = conv_out_extent(h, conv.kernel, conv.stride, conv.pad, 1);
        w = conv_out_extent(w, conv.kernel, conv.stride, conv.pad, 1);
        c = conv.out_channels;
    }
    if (spec.dense_out) {
        const std::int64_t flat = static_cast<std::int64_t>(c) * h * w;
        net.dense = make_linear(rng, 1.0, static_cast<int>(flat), *spec.dense_out);
        params += linear_params(*net.dense);
    }
    if (params == 0) {
        // a network with no parameters cannot be instantiated meaningfully
        throw std::invalid_argument("network has no parameters");
    }
    inst.param_count = params;
    inst.params_m = static_cast<double>(params) / 1e6;
    inst.flop_count = plain_flops(net);
    auto impl = std::make_shared<NetworkImpl>();
    impl->net = std::move(net);
    impl->opts = opts;
    inst.impl = std::move(impl);
    return inst;
}

namespace {

void check_image_batch(const InputBatch& b, int channels, const char* what) {
    if (b.kind == BatchKind::Tokens) {
        throw std::invalid_argument(std::string(what) + " expects an image-shaped batch");
    }
    if (b.samples < 1) throw std::invalid_argument("empty batch");
    if (b.channels != channels) {
        throw std::invalid_argument(std::string(what) + ": batch channel count mismatch");
    }
}

template <class T>
ActivationRecord run_capture(const NetworkImpl& impl, const InputBatch& b) {
    ActivationRecord rec;
    rec.sample_count = b.samples;
    if (const auto* cell = std::get_if<CellNetwork>(&impl.net)) {
        check_image_batch(b, cell->stem.c_in, "cell network");
        cell_network_forward<T>(*cell, impl.opts, b, rec);
    } else if (const auto* tf = std::get_if<TransformerNetwork>(&impl.net)) {
        if (b.kind != BatchKind::Tokens) {
            throw std::invalid_argument("transformer expects a token batch");
        }
        if (b.seq_len != tf->genome.seq_len) {
            throw std::invalid_argument("token batch seq_len mismatch");
        }
        if (b.samples < 1) throw std::invalid_argument("empty batch");
        transformer_forward<T>(*tf, b, rec);
    } else {
        const auto& plain = std::get<PlainNetwork>(impl.net);
        check_image_batch(b, plain.spec.in_channels, "conv stack");
        if (b.height != plain.spec.in_height || b.width != plain.spec.in_width) {
            throw std::invalid_argument("conv stack: batch spatial dims mismatch");
        }
        plain_forward<T>(plain, b, rec);
    }
    return rec;
}

}  // namespace

ActivationRecord forward_capture(const NetworkInstance& n, const InputBatch& b,
                                 Precision precision) {
    if (!n.impl) throw std::invalid_argument("empty network instance");
    if (precision == Precision::Float64) return run_capture<double>(*n.impl, b);
    return run_capture<float>(*n.impl, b);
}

std::int64_t count_sites_closed_form(const NetworkInstance& n) {
    if (!n.impl) throw std::invalid_argument("empty network instance");
    if (const auto* tf = std::get_if<TransformerNetwork>(&n.impl->net)) {
        const auto& g = tf->genome;
        return static_cast<std::int64_t>(g.layers) * g.seq_len * g.d_ff;
    }
    if (const auto* plain = std::get_if<PlainNetwork>(&n.impl->net)) {
        std::int64_t v = 0;
        for (const auto& s : plain_layer_shapes(plain->spec)) {
            if (s.pad != 0) {
                throw std::invalid_argument(
                    "closed-form site count inapplicable: padded convolution present; "
                    "use the instrumented count");
            }
            const std::int64_t ow = (s.w - s.k) / s.t + 1;
            const std::int64_t oh = (s.h - s.k) / s.t + 1;
            v += static_cast<std::int64_t>(s.c) * ow * oh;
        }
        return v;
    }
    throw std::invalid_argument(
        "closed-form site count inapplicable: padded convolution present; "
        "use the instrumented count");
}

std::int64_t count_flops(const NetworkInstance& n, InputDims dims) {
    if (!n.impl) throw std::invalid_argument("empty network instance");
    if (const auto* tf = std::get_if<TransformerNetwork>(&n.impl->net)) {
        return transformer_flops(tf->genome);
    }
    if (const auto* plain = std::get_if<PlainNetwork>(&n.impl->net)) {
        return plain_flops(*plain);
    }
    const auto& cell = std::get<CellNetwork>(n.impl->net);
    if (dims.channels != cell.stem.c_in) {
        throw std::invalid_argument("flop count: channel mismatch with stem");
    }
    return cell_flops(cell.genome, dims.channels, dims.height, dims.width);
}

std::uint64_t first_layer_checksum(const NetworkInstance& n) {
    if (!n.impl) throw std::invalid_argument("empty network instance");
    const std::vector<float>* weights = nullptr;
    if (const auto* cell = std::get_if<CellNetwork>(&n.impl->net)) {
        weights = &cell->stem.w;
    } else if (const auto* tf = std::get_if<TransformerNetwork>(&n.impl->net)) {
        weights = &tf->tok_emb;
    } else {
        const auto& plain = std::get<PlainNetwork>(n.impl->net);
        if (!plain.convs.empty()) {
            weights = &plain.convs.front().w;
        } else if (plain.dense) {
            weights = &plain.dense->w;
        } else {
            return 0;
        }
    }
    std::uint64_t sum = 0;
    for (float f : *weights) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        sum += bits;
    }
    return sum;
}

}  // namespace swapnas::engine
