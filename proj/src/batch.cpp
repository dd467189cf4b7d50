#include "swapnas/batch.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "swapnas/rng.hpp"

namespace swapnas::engine {

namespace {

constexpr std::uint32_t kImageMagic = 0x42495753;  // "SWIB" little-endian
constexpr std::uint32_t kTokenMagic = 0x4B545753;  // "SWTK" little-endian

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(static_cast<std::uint32_t>(p[0]) |
                                      (static_cast<std::uint32_t>(p[1]) << 8));
}

void check_image_dims(int samples, int c, int h, int w) {
    if (samples < 1 || c < 1 || h < 1 || w < 1) {
        throw std::invalid_argument("batch dimensions must be positive");
    }
}

}  // namespace

std::string InputBatch::descriptor() const {
    std::ostringstream os;
    switch (kind) {
        case BatchKind::Image: os << "image"; break;
        case BatchKind::Tokens: os << "tokens"; break;
        case BatchKind::GaussianNoise: os << "noise"; break;
    }
    os << ":S=" << samples;
    if (kind == BatchKind::Tokens) {
        os << ",T=" << seq_len;
    } else {
        os << ",dims=" << channels << "x" << height << "x" << width;
    }
    if (!source_path.empty()) {
        os << ",path=" << source_path;
    } else {
        os << ",seed=" << data_seed;
        if (!generator.empty()) os << ",gen=" << generator;
    }
    return os.str();
}

InputBatch make_noise_batch(std::uint64_t seed, int samples, int c, int h, int w) {
    check_image_dims(samples, c, h, w);
    InputBatch b;
    b.kind = BatchKind::GaussianNoise;
    b.samples = samples;
    b.channels = c;
    b.height = h;
    b.width = w;
    b.data_seed = seed;
    b.generator = "noise";
    const std::size_t per_sample = static_cast<std::size_t>(c) * h * w;
    b.image_data.resize(static_cast<std::size_t>(samples) * per_sample);
    for (int s = 0; s < samples; ++s) {
        for (std::size_t i = 0; i < per_sample; ++i) {
            const std::uint64_t counter = static_cast<std::uint64_t>(s) * per_sample + i;
            b.image_data[static_cast<std::size_t>(s) * per_sample + i] =
                static_cast<float>(normal_at(seed, counter));
        }
    }
    return b;
}

InputBatch make_correlated_image_batch(std::uint64_t seed, int samples, int c, int h,
                                       int w, double rho) {
    check_image_dims(samples, c, h, w);
    if (rho < 0.0 || rho >= 1.0) throw std::invalid_argument("rho must be in [0, 1)");
    InputBatch b;
    b.kind = BatchKind::Image;
    b.samples = samples;
    b.channels = c;
    b.height = h;
    b.width = w;
    b.data_seed = seed;
    b.generator = "corr";
    const std::uint64_t common_seed = derive_seed(seed, "common");
    const double wc = std::sqrt(rho);
    const double wi = std::sqrt(1.0 - rho);
    const std::size_t per_sample = static_cast<std::size_t>(c) * h * w;
    b.image_data.resize(static_cast<std::size_t>(samples) * per_sample);
    for (int s = 0; s < samples; ++s) {
        for (std::size_t i = 0; i < per_sample; ++i) {
            const double common = normal_at(common_seed, i);
            const double indiv = normal_at(seed, static_cast<std::uint64_t>(s) * per_sample + i);
            b.image_data[static_cast<std::size_t>(s) * per_sample + i] =
                static_cast<float>(wc * common + wi * indiv);
        }
    }
    return b;
}

InputBatch make_token_batch(std::uint64_t seed, int samples, int seq_len, int vocab) {
    if (samples < 1 || seq_len < 1 || vocab < 1) {
        throw std::invalid_argument("batch dimensions must be positive");
    }
    InputBatch b;
    b.kind = BatchKind::Tokens;
    b.samples = samples;
    b.seq_len = seq_len;
    b.data_seed = seed;
    b.generator = "uniform-ids";
    b.token_data.resize(static_cast<std::size_t>(samples) * seq_len);
    for (int s = 0; s < samples; ++s) {
        for (int t = 0; t < seq_len; ++t) {
            const std::uint64_t counter = static_cast<std::uint64_t>(s) * seq_len + t;
            const std::uint64_t raw = stream_u64(seed, counter);
            b.token_data[static_cast<std::size_t>(s) * seq_len + t] = static_cast<std::uint32_t>(
                (static_cast<unsigned __int128>(raw) * static_cast<std::uint64_t>(vocab)) >> 64);
        }
    }
    return b;
}

void save_batch_file(const std::string& path, const InputBatch& batch) {
    std::string header;
    if (batch.kind == BatchKind::Tokens) {
        put_u32(header, kTokenMagic);
        put_u32(header, static_cast<std::uint32_t>(batch.samples));
        put_u32(header, static_cast<std::uint32_t>(batch.seq_len));
        put_u32(header, 0);
    } else {
        put_u32(header, kImageMagic);
        put_u32(header, static_cast<std::uint32_t>(batch.samples));
        put_u16(header, static_cast<std::uint16_t>(batch.channels));
        put_u16(header, static_cast<std::uint16_t>(batch.height));
        put_u16(header, static_cast<std::uint16_t>(batch.width));
        put_u16(header, 0);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    if (batch.kind == BatchKind::Tokens) {
        for (std::uint32_t id : batch.token_data) {
            std::string w;
            put_u32(w, id);
            out.write(w.data(), 4);
        }
    } else {
        for (float v : batch.image_data) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            std::string w;
            put_u32(w, bits);
            out.write(w.data(), 4);
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

InputBatch load_batch_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open batch file: " + path);
    unsigned char header[16];
    in.read(reinterpret_cast<char*>(header), 16);
    if (in.gcount() != 16) throw std::runtime_error("truncated batch header: " + path);
    const std::uint32_t magic = get_u32(header);
    InputBatch b;
    b.source_path = path;
    b.generator = "file";
    std::size_t payload = 0;
    if (magic == kImageMagic) {
        b.kind = BatchKind::Image;
        b.samples = static_cast<int>(get_u32(header + 4));
        b.channels = get_u16(header + 8);
        b.height = get_u16(header + 10);
        b.width = get_u16(header + 12);
        check_image_dims(b.samples, b.channels, b.height, b.width);
        payload = static_cast<std::size_t>(b.samples) * b.channels * b.height * b.width;
        b.image_data.resize(payload);
    } else if (magic == kTokenMagic) {
        b.kind = BatchKind::Tokens;
        b.samples = static_cast<int>(get_u32(header + 4));
        b.seq_len = static_cast<int>(get_u32(header + 8));
        if (b.samples < 1 || b.seq_len < 1) throw std::runtime_error("bad token batch header");
        payload = static_cast<std::size_t>(b.samples) * b.seq_len;
        b.token_data.resize(payload);
    } else {
        throw std::runtime_error("unrecognised batch magic in " + path);
    }
    std::vector<unsigned char> raw(payload * 4);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
        throw std::runtime_error("truncated batch payload: " + path);
    }
    for (std::size_t i = 0; i < payload; ++i) {
        const std::uint32_t bits = get_u32(raw.data() + 4 * i);
        if (b.kind == BatchKind::Tokens) {
            b.token_data[i] = bits;
        } else {
            float v;
            std::memcpy(&v, &bits, 4);
            b.image_data[i] = v;
        }
    }
    return b;
}

InputBatch crop_image_batch(const InputBatch& batch, int c, int h, int w) {
    if (batch.kind == BatchKind::Tokens) throw std::invalid_argument("cannot crop a token batch");
    if (c > batch.channels || h > batch.height || w > batch.width) {
        throw std::invalid_argument("crop exceeds source dimensions");
    }
    check_image_dims(batch.samples, c, h, w);
    InputBatch out = batch;
    out.channels = c;
    out.height = h;
    out.width = w;
    out.image_data.assign(static_cast<std::size_t>(batch.samples) * c * h * w, 0.0f);
    const int y0 = (batch.height - h) / 2;
    const int x0 = (batch.width - w) / 2;
    for (int s = 0; s < batch.samples; ++s) {
        for (int ci = 0; ci < c; ++ci) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    out.image_data[static_cast<std::size_t>(((s * c + ci) * h + y) * w + x)] =
                        batch.image_at(s, ci, y0 + y, x0 + x);
                }
            }
        }
    }
    out.generator += "+crop";
    return out;
}

InputBatch take_samples(const InputBatch& batch, int samples) {
    if (samples < 1 || samples > batch.samples) {
        throw std::invalid_argument("sample count out of range");
    }
    InputBatch out = batch;
    out.samples = samples;
    if (batch.kind == BatchKind::Tokens) {
        out.token_data.assign(batch.token_data.begin(),
                              batch.token_data.begin() + static_cast<std::ptrdiff_t>(samples) * batch.seq_len);
    } else {
        const std::ptrdiff_t per = static_cast<std::ptrdiff_t>(batch.channels) * batch.height * batch.width;
        out.image_data.assign(batch.image_data.begin(), batch.image_data.begin() + per * samples);
    }
    return out;
}

std::string BatchSpec::to_string() const {
    std::ostringstream os;
    os << kind << ":";
    if (!path.empty()) {
        os << "path=" << path;
        if (samples > 0) os << ",s=" << samples;
        return os.str();
    }
    os << "s=" << samples;
    if (kind == "tokens") {
        os << ",t=" << seq_len << ",seed=" << seed << ",vocab=" << vocab;
    } else {
        os << ",dims=" << channels << "x" << height << "x" << width << ",seed=" << seed;
        if (kind == "corr") os << ",rho=" << rho;
    }
    return os.str();
}

BatchSpec parse_batch_spec(const std::string& text) {
    BatchSpec spec;
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("batch spec needs 'kind:...'");
    spec.kind = text.substr(0, colon);
    if (spec.kind != "noise" && spec.kind != "corr" && spec.kind != "image" &&
        spec.kind != "tokens") {
        throw std::invalid_argument("unknown batch kind: " + spec.kind);
    }
    spec.path.clear();
    std::string rest = text.substr(colon + 1);
    std::istringstream fields(rest);
    std::string field;
    bool have_samples = false;
    while (std::getline(fields, field, ',')) {
        if (field.empty()) continue;
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("batch field needs key=value: " + field);
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "s") {
            spec.samples = std::stoi(value);
            have_samples = true;
        } else if (key == "t") {
            spec.seq_len = std::stoi(value);
        } else if (key == "seed") {
            spec.seed = std::stoull(value);
        } else if (key == "vocab") {
            spec.vocab = std::stoi(value);
        } else if (key == "rho") {
            spec.rho = std::stod(value);
        } else if (key == "path") {
            spec.path = value;
        } else if (key == "dims") {
            int c = 0, h = 0, w = 0;
            if (std::sscanf(value.c_str(), "%dx%dx%d", &c, &h, &w) != 3) {
                throw std::invalid_argument("dims must be CxHxW: " + value);
            }
            spec.channels = c;
            spec.height = h;
            spec.width = w;
        } else {
            throw std::invalid_argument("unknown batch field: " + key);
        }
    }
    if (!spec.path.empty() && !have_samples) spec.samples = 0;  // 0 = all samples in file
    if (spec.path.empty()) {
        if (spec.samples < 1) throw std::invalid_argument("batch needs s >= 1");
        if (spec.kind == "tokens") {
            if (spec.seq_len < 1 || spec.vocab < 1) {
                throw std::invalid_argument("token batch needs t >= 1 and vocab >= 1");
            }
        } else if (spec.channels < 1 || spec.height < 1 || spec.width < 1) {
            throw std::invalid_argument("batch dims must be positive");
        }
    }
    return spec;
}

InputBatch make_batch(const BatchSpec& spec, std::uint64_t run_seed) {
    if (!spec.path.empty()) {
        InputBatch b = load_batch_file(spec.path);
        if (spec.samples > 0 && spec.samples < b.samples) b = take_samples(b, spec.samples);
        return b;
    }
    const std::uint64_t seed = (run_seed == 0) ? spec.seed : hash_combine(spec.seed, run_seed);
    if (spec.kind == "noise") {
        return make_noise_batch(seed, spec.samples, spec.channels, spec.height, spec.width);
    }
    if (spec.kind == "corr") {
        return make_correlated_image_batch(seed, spec.samples, spec.channels, spec.height,
                                           spec.width, spec.rho);
    }
    if (spec.kind == "tokens") {
        return make_token_batch(seed, spec.samples, spec.seq_len, spec.vocab);
    }
    throw std::invalid_argument("batch kind '" + spec.kind + "' requires path=");
}

}  // namespace swapnas::engine
