#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "certiformer/model.hpp"

namespace certiformer {

// Token table backing vocabulary enumeration. Row indices are dense in
// [0, vocab) and match the model's embedding rows; row 0 is the reserved
// unknown token.
struct Vocab {
    std::vector<std::string> tokens;              // row -> token
    std::unordered_map<std::string, int> index;   // token -> row
    int unk_id = 0;

    int size() const { return static_cast<int>(tokens.size()); }
};

inline constexpr const char* kUnkToken = "<unk>";

// model.json + model.bin. The manifest carries the hyperparameters and a
// tensor directory (name, shape, byte offset into the blob); the blob is
// little-endian float32 in directory order, widened to double on load.
TransformerModel load_model(const std::string& manifest_path, const std::string& weights_path);
void save_model(const TransformerModel& m, const std::string& manifest_path,
                const std::string& weights_path);

// vocab.tsv: UTF-8 lines of "token<TAB>row".
Vocab load_vocab(const std::string& path);
void save_vocab(const Vocab& v, const std::string& path);

// Lowercased whitespace tokenization with unknown-token fallback; sequences
// longer than max_len are clipped (flagged via clipped when given).
std::vector<int> tokenize(const std::string& text, const Vocab& v, int max_len,
                          bool* clipped = nullptr);

// Deterministic synthetic model: unit-norm embedding rows, 1/sqrt(fan_in)
// projections, and a classifier head rescaled so clean margins on random
// inputs are of order one. Weights are quantized to float32 at generation,
// making generate -> save -> load an identity.
TransformerModel generate_fixture(uint64_t seed, const ModelHyper& hyper);

// Vocabulary to pair with generated fixtures: a small built-in word list
// padded with synthetic tokens up to the requested size.
Vocab builtin_vocab(int vocab_size);

// FNV-1a over the serialized weight blob; pins generator determinism.
uint64_t weights_checksum(const TransformerModel& m);

}  // namespace certiformer
