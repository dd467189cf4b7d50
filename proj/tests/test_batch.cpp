#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "doctest.h"

#include "swapnas/batch.hpp"
#include "swapnas/rng.hpp"

using namespace swapnas;
using engine::BatchKind;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE_BEGIN("batch");

TEST_CASE("counter rng is pure and order-free") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    CHECK(stream_u64(42, 5) == stream_u64(42, 5));
    CHECK(normal_at(7, 3) == normal_at(7, 3));
    // bounded draws stay in range
    Rng c(1);
    for (int i = 0; i < 1000; ++i) CHECK(c.next_below(7) < 7);
}

TEST_CASE("noise batches nest: smaller batch is a prefix of a larger one") {
    const auto small = engine::make_noise_batch(9, 4, 3, 5, 5);
    const auto large = engine::make_noise_batch(9, 16, 3, 5, 5);
    for (std::size_t i = 0; i < small.image_data.size(); ++i) {
        CHECK(small.image_data[i] == large.image_data[i]);
    }
    const auto tok_small = engine::make_token_batch(9, 2, 8, 64);
    const auto tok_large = engine::make_token_batch(9, 6, 8, 64);
    for (std::size_t i = 0; i < tok_small.token_data.size(); ++i) {
        CHECK(tok_small.token_data[i] == tok_large.token_data[i]);
    }
}

TEST_CASE("correlated batches share structure across samples") {
    const auto b = engine::make_correlated_image_batch(5, 8, 3, 8, 8, 0.99);
    // adjacent samples correlate strongly element-wise
    double dot = 0, na = 0, nb = 0;
    for (int i = 0; i < 3 * 8 * 8; ++i) {
        const double x = b.image_at(0, i / 64, (i / 8) % 8, i % 8);
        const double y = b.image_at(1, i / 64, (i / 8) % 8, i % 8);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    CHECK(dot / std::sqrt(na * nb) > 0.9);
    CHECK_THROWS_AS(engine::make_correlated_image_batch(5, 8, 3, 8, 8, 1.5),
                    std::invalid_argument);
}

TEST_CASE("token ids stay below the vocabulary") {
    const auto b = engine::make_token_batch(3, 16, 32, 100);
    for (auto id : b.token_data) CHECK(id < 100);
}

TEST_CASE("image batch files round-trip byte-exactly") {
    const auto path = temp_path("swapnas_test_image.bin");
    const auto b = engine::make_noise_batch(11, 3, 2, 4, 5);
    engine::save_batch_file(path, b);
    CHECK(std::filesystem::file_size(path) == 16 + 4ull * b.image_data.size());
    const auto loaded = engine::load_batch_file(path);
    CHECK(loaded.kind == BatchKind::Image);
    CHECK(loaded.samples == 3);
    CHECK(loaded.channels == 2);
    CHECK(loaded.height == 4);
    CHECK(loaded.width == 5);
    REQUIRE(loaded.image_data.size() == b.image_data.size());
    for (std::size_t i = 0; i < b.image_data.size(); ++i) {
        CHECK(loaded.image_data[i] == b.image_data[i]);
    }
    std::filesystem::remove(path);
}

TEST_CASE("token batch files round-trip byte-exactly") {
    const auto path = temp_path("swapnas_test_tokens.bin");
    const auto b = engine::make_token_batch(13, 4, 6, 50);
    engine::save_batch_file(path, b);
    CHECK(std::filesystem::file_size(path) == 16 + 4ull * b.token_data.size());
    const auto loaded = engine::load_batch_file(path);
    CHECK(loaded.kind == BatchKind::Tokens);
    CHECK(loaded.samples == 4);
    CHECK(loaded.seq_len == 6);
    CHECK(loaded.token_data == b.token_data);
    std::filesystem::remove(path);
}

TEST_CASE("crop takes the centre and rejects oversize requests") {
    const auto b = engine::make_noise_batch(2, 2, 3, 8, 8);
    const auto c = engine::crop_image_batch(b, 3, 4, 4);
    CHECK(c.height == 4);
    CHECK(c.image_at(0, 0, 0, 0) == b.image_at(0, 0, 2, 2));
    CHECK_THROWS_WITH_AS(engine::crop_image_batch(b, 3, 16, 16),
                         "crop exceeds source dimensions", std::invalid_argument);
}

TEST_CASE("batch specs parse, print and realise deterministically") {
    const auto spec = engine::parse_batch_spec("noise:s=8,dims=3x16x16,seed=4");
    CHECK(spec.samples == 8);
    CHECK(spec.channels == 3);
    CHECK(spec.height == 16);
    const auto b1 = engine::make_batch(spec);
    const auto b2 = engine::make_batch(spec);
    CHECK(b1.image_data == b2.image_data);
    // run seeds shift generated batches
    const auto b3 = engine::make_batch(spec, 99);
    CHECK(b1.image_data != b3.image_data);

    const auto tok = engine::parse_batch_spec("tokens:s=4,t=16,seed=2,vocab=32");
    CHECK(engine::make_batch(tok).seq_len == 16);

    CHECK_THROWS_AS(engine::parse_batch_spec("nonsense:s=1"), std::invalid_argument);
    CHECK_THROWS_AS(engine::parse_batch_spec("noise"), std::invalid_argument);
    CHECK_THROWS_AS(engine::parse_batch_spec("noise:dims=0x0x0,s=1"), std::invalid_argument);

    // image batches cannot be synthesised: they need a file
    const auto img = engine::parse_batch_spec("image:s=4,dims=3x8x8,seed=1");
    CHECK_THROWS_AS(engine::make_batch(img), std::invalid_argument);
}

TEST_CASE("file-backed specs honour the sample truncation") {
    const auto path = temp_path("swapnas_trunc.bin");
    engine::save_batch_file(path, engine::make_noise_batch(2, 8, 3, 4, 4));
    const auto all = engine::make_batch(engine::parse_batch_spec("image:path=" + path));
    CHECK(all.samples == 8);
    const auto four = engine::make_batch(engine::parse_batch_spec("image:path=" + path + ",s=4"));
    CHECK(four.samples == 4);
    for (std::size_t i = 0; i < four.image_data.size(); ++i) {
        CHECK(four.image_data[i] == all.image_data[i]);
    }
    std::filesystem::remove(path);
}

TEST_SUITE_END();
