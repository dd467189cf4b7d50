// Input batches: image tensors, token-id sequences, and synthetic Gaussian
// batches generated from a documented counter-based RNG. Binary file
// formats are byte-exact (see docs/FORMATS.md).

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace swapnas::engine {

enum class BatchKind { Image, Tokens, GaussianNoise };

struct InputBatch {
    BatchKind kind = BatchKind::GaussianNoise;
    int samples = 0;  // S
    // image-shaped data (Image, GaussianNoise)
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> image_data;  // S*C*H*W, sample-major
    // token data (Tokens)
    int seq_len = 0;
    std::vector<std::uint32_t> token_data;  // S*T, sample-major
    // provenance
    std::uint64_t data_seed = 0;
    std::string source_path;
    std::string generator;  // "noise", "corr", "uniform-ids", "file"

    // Canonical one-line description recorded in score reports.
    std::string descriptor() const;

    float image_at(int s, int c, int y, int x) const {
        return image_data[static_cast<std::size_t>(
            ((s * channels + c) * height + y) * width + x)];
    }
};

// Elements of sample s occupy counter positions s*C*H*W + i, so a batch of
// size S is a strict prefix of the batch of size S' > S for the same seed.
InputBatch make_noise_batch(std::uint64_t seed, int samples, int c, int h, int w);

// Image-like batch: every sample shares a common component with weight
// sqrt(rho), plus an independent component with weight sqrt(1-rho). All
// marginals are standard normal; pairwise sample correlation is rho.
// Mirrors the cross-sample correlation of natural image batches.
InputBatch make_correlated_image_batch(std::uint64_t seed, int samples, int c, int h,
                                       int w, double rho);

// Uniform token ids in [0, vocab).
InputBatch make_token_batch(std::uint64_t seed, int samples, int seq_len, int vocab);

// Byte-exact binary IO. Image files: 16-byte header (magic "SWIB", S u32,
// C u16, H u16, W u16, pad u16) + float32 LE payload. Token files: 16-byte
// header (magic "SWTK", S u32, T u32, reserved u32) + uint32 LE ids.
InputBatch load_batch_file(const std::string& path);
void save_batch_file(const std::string& path, const InputBatch& batch);

// Center crop of an image batch. Throws if the crop exceeds the source.
InputBatch crop_image_batch(const InputBatch& batch, int c, int h, int w);

// Keep the first `samples` samples.
InputBatch take_samples(const InputBatch& batch, int samples);

// Parsed form of the CLI batch descriptor, e.g.
//   noise:s=8,dims=3x32x32,seed=1
//   corr:s=8,dims=3x32x32,seed=1,rho=0.95
//   tokens:s=8,t=32,seed=1,vocab=256
//   image:path=batch.bin           (optionally ,s=N to truncate)
//   tokens:path=batch.bin
struct BatchSpec {
    std::string kind = "noise";
    int samples = 8;
    int channels = 3, height = 32, width = 32;
    int seq_len = 32;
    int vocab = 256;
    std::uint64_t seed = 1;
    double rho = 0.9999;
    std::string path;

    std::string to_string() const;
};

BatchSpec parse_batch_spec(const std::string& text);

// Realise a spec. For generated kinds the effective seed is
// hash(spec.seed, run_seed) so independent runs see independent batches;
// file-backed batches are identical across runs. run_seed = 0 keeps the
// spec seed untouched.
InputBatch make_batch(const BatchSpec& spec, std::uint64_t run_seed = 0);

}  // namespace swapnas::engine
