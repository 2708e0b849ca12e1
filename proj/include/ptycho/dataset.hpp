#pragma once

#include "ptycho/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ptycho::dataset {

/// Small corpus of real handwritten digit glyphs (8x8, 0..255) used to
/// synthesize an MNIST-format dataset when no IDX files are available.
struct GlyphCorpus {
    int count = 0;
    std::vector<std::uint8_t> images; // count * 64
    std::vector<std::uint8_t> labels; // count
};

GlyphCorpus load_corpus(const std::string& images_ptyb, const std::string& labels_ptyb);

/// Writes train/t10k IDX pairs (28x28, standard magics) produced by random
/// affine + elastic augmentation of the corpus glyphs. Deterministic in seed.
void make_idx_dataset(const GlyphCorpus& corpus, const std::string& out_dir, int n_train,
                      int n_test, std::uint64_t seed);

/// Neutral (un-augmented) rendering of the k-th glyph of a digit class into a
/// centered out_size x out_size image in [0,1].
RealImage render_digit(const GlyphCorpus& corpus, int digit, int glyph_rank, int out_size);

void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      std::uint32_t n, std::uint32_t rows, std::uint32_t cols);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

} // namespace ptycho::dataset
