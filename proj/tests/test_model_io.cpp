#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "certiformer/errors.hpp"
#include "certiformer/model_io.hpp"
#include "certiformer/program.hpp"

using namespace certiformer;

namespace {

struct TempFiles {
    std::string manifest = "tmp_model_io.json";
    std::string weights = "tmp_model_io.bin";
    std::string vocab = "tmp_model_io.tsv";

    ~TempFiles() {
        std::remove(manifest.c_str());
        std::remove(weights.c_str());
        std::remove(vocab.c_str());
    }
};

ModelHyper tiny_hyper() {
    ModelHyper h;
    h.num_layers = 1;
    h.heads = 2;
    h.d_model = 8;
    h.d_ff = 16;
    h.max_len = 16;
    h.vocab_size = 24;
    h.num_classes = 2;
    h.layernorm = LayerNormMode::Modified;
    return h;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

bool models_identical(const TransformerModel& a, const TransformerModel& b) {
    auto same_vec = [](const Vec& x, const Vec& y) { return x == y; };
    auto same_mat = [](const Matrix& x, const Matrix& y) {
        return x.rows == y.rows && x.cols == y.cols && x.a == y.a;
    };
    if (!same_mat(a.embed, b.embed) || !same_mat(a.pos_enc, b.pos_enc)) return false;
    if (a.layers.size() != b.layers.size()) return false;
    for (size_t l = 0; l < a.layers.size(); ++l) {
        const TransformerLayer& x = a.layers[l];
        const TransformerLayer& y = b.layers[l];
        if (!same_mat(x.wq, y.wq) || !same_mat(x.wk, y.wk) || !same_mat(x.wv, y.wv) ||
            !same_mat(x.wo, y.wo))
            return false;
        if (!same_vec(x.bq, y.bq) || !same_vec(x.bk, y.bk) || !same_vec(x.bv, y.bv) ||
            !same_vec(x.bo, y.bo))
            return false;
        if (!same_vec(x.ln1.w, y.ln1.w) || !same_vec(x.ln1.b, y.ln1.b)) return false;
        if (!same_vec(x.ln2.w, y.ln2.w) || !same_vec(x.ln2.b, y.ln2.b)) return false;
        if (!same_mat(x.ffn.w1, y.ffn.w1) || !same_mat(x.ffn.w2, y.ffn.w2)) return false;
        if (!same_vec(x.ffn.b1, y.ffn.b1) || !same_vec(x.ffn.b2, y.ffn.b2)) return false;
    }
    return same_mat(a.head_w, b.head_w) && same_vec(a.head_b, b.head_b);
}

}  // namespace

TEST_CASE("save and load round trip every tensor bit-exactly") {
    TempFiles tmp;
    const TransformerModel m = generate_fixture(42, tiny_hyper());
    save_model(m, tmp.manifest, tmp.weights);
    const TransformerModel back = load_model(tmp.manifest, tmp.weights);
    CHECK(models_identical(m, back));
    CHECK(back.hyper.heads == 2);
    CHECK(back.hyper.d_qk == 4);
    CHECK(back.hyper.layernorm == LayerNormMode::Modified);
    CHECK(weights_checksum(m) == weights_checksum(back));

    // loaded model compiles and evaluates
    const SublayerProgram prog = compile(back, 4);
    const Vec logits = forward_eval(back, prog, {1, 2, 3, 4});
    CHECK(logits.size() == 2);
    CHECK(std::isfinite(logits[0]));
}

TEST_CASE("generator is deterministic and seed-sensitive") {
    const TransformerModel a = generate_fixture(42, tiny_hyper());
    const TransformerModel b = generate_fixture(42, tiny_hyper());
    const TransformerModel c = generate_fixture(43, tiny_hyper());
    CHECK(models_identical(a, b));
    CHECK(weights_checksum(a) == weights_checksum(b));
    CHECK(weights_checksum(a) != weights_checksum(c));
}

TEST_CASE("generated weights are float32-exact") {
    const TransformerModel m = generate_fixture(9, tiny_hyper());
    for (double v : m.embed.a) CHECK(v == static_cast<double>(static_cast<float>(v)));
    for (double v : m.layers[0].wq.a) CHECK(v == static_cast<double>(static_cast<float>(v)));
    for (double v : m.head_w.a) CHECK(v == static_cast<double>(static_cast<float>(v)));
}

TEST_CASE("generated models give confident but unsaturated clean predictions") {
    for (uint64_t seed : {7ull, 11ull, 23ull}) {
        const TransformerModel m = generate_fixture(seed, tiny_hyper());
        const SublayerProgram prog = compile(m, 6);
        std::mt19937_64 g(seed * 1000 + 1);
        int in_band = 0;
        const int trials = 100;
        for (int i = 0; i < trials; ++i) {
            std::vector<int> ids(6);
            for (int& id : ids)
                id = static_cast<int>(g() % static_cast<uint64_t>(m.hyper.vocab_size));
            const Vec logits = forward_eval(m, prog, ids);
            const double margin = std::abs(logits[0] - logits[1]);
            const double confidence = 1.0 / (1.0 + std::exp(-margin));
            if (confidence > 0.5 && confidence < 0.999) ++in_band;
        }
        CAPTURE(seed);
        CHECK(in_band >= 80);
    }
}

TEST_CASE("loader rejects malformed artifacts") {
    TempFiles tmp;
    const TransformerModel m = generate_fixture(5, tiny_hyper());
    save_model(m, tmp.manifest, tmp.weights);
    const std::string manifest = slurp(tmp.manifest);
    const std::string weights = slurp(tmp.weights);

    SUBCASE("wrong format version") {
        auto j = nlohmann::json::parse(manifest);
        j["format_version"] = 2;
        spit(tmp.manifest, j.dump());
        CHECK_THROWS_AS(load_model(tmp.manifest, tmp.weights), VersionError);
    }
    SUBCASE("mismatched tensor shape names the tensor") {
        auto j = nlohmann::json::parse(manifest);
        for (auto& t : j["tensors"])
            if (t["name"] == "layers.0.wq") t["shape"] = {8, 4};
        spit(tmp.manifest, j.dump());
        try {
            load_model(tmp.manifest, tmp.weights);
            FAIL("expected ShapeError");
        } catch (const ShapeError& e) {
            CHECK(std::string(e.what()).find("layers.0.wq") != std::string::npos);
        }
    }
    SUBCASE("NaN weight rejected") {
        std::string bad = weights;
        // quiet NaN, little-endian f32, planted in the first tensor
        bad[0] = 0x00;
        bad[1] = 0x00;
        bad[2] = static_cast<char>(0xc0);
        bad[3] = static_cast<char>(0x7f);
        spit(tmp.weights, bad);
        CHECK_THROWS_AS(load_model(tmp.manifest, tmp.weights), FormatError);
    }
    SUBCASE("truncated weights rejected") {
        spit(tmp.weights, weights.substr(0, weights.size() - 4));
        CHECK_THROWS_AS(load_model(tmp.manifest, tmp.weights), FormatError);
    }
    SUBCASE("dropped tensor entry rejected") {
        auto j = nlohmann::json::parse(manifest);
        j["tensors"].erase(3);
        spit(tmp.manifest, j.dump());
        CHECK_THROWS_AS(load_model(tmp.manifest, tmp.weights), FormatError);
    }
    SUBCASE("manifest that is not JSON") {
        spit(tmp.manifest, "not json {");
        CHECK_THROWS_AS(load_model(tmp.manifest, tmp.weights), FormatError);
    }
    SUBCASE("missing weights file") {
        CHECK_THROWS_AS(load_model(tmp.manifest, "no_such_file.bin"), FormatError);
    }
}

TEST_CASE("vocabulary round trip and validation") {
    TempFiles tmp;
    const Vocab v = builtin_vocab(24);
    REQUIRE(v.size() == 24);
    CHECK(v.tokens[0] == kUnkToken);
    CHECK(v.unk_id == 0);
    CHECK(v.index.size() == 24);

    save_vocab(v, tmp.vocab);
    const Vocab back = load_vocab(tmp.vocab);
    CHECK(back.tokens == v.tokens);
    CHECK(back.unk_id == 0);

    SUBCASE("missing unk token") {
        spit(tmp.vocab, "good\t0\nbad\t1\n");
        CHECK_THROWS_AS(load_vocab(tmp.vocab), FormatError);
    }
    SUBCASE("duplicate token") {
        spit(tmp.vocab, "<unk>\t0\ngood\t1\ngood\t2\n");
        CHECK_THROWS_AS(load_vocab(tmp.vocab), FormatError);
    }
    SUBCASE("non-dense rows") {
        spit(tmp.vocab, "<unk>\t0\ngood\t2\n");
        CHECK_THROWS_AS(load_vocab(tmp.vocab), FormatError);
    }
    SUBCASE("missing tab") {
        spit(tmp.vocab, "<unk> 0\n");
        CHECK_THROWS_AS(load_vocab(tmp.vocab), FormatError);
    }
}

TEST_CASE("tokenizer lowercases, falls back to unk and clips") {
    const Vocab v = builtin_vocab(24);
    const std::vector<int> a = tokenize("Good food .", v, 16);
    REQUIRE(a.size() == 3);
    CHECK(a[0] == v.index.at("good"));
    CHECK(a[1] == v.index.at("food"));
    CHECK(a[2] == v.unk_id);

    CHECK(tokenize("GREAT Movie", v, 16) == tokenize("great movie", v, 16));
    CHECK(tokenize("", v, 16).empty());
    CHECK(tokenize("   \t \n ", v, 16).empty());

    bool clipped = false;
    const std::vector<int> b = tokenize("good bad good bad good", v, 3, &clipped);
    CHECK(b.size() == 3);
    CHECK(clipped);
    clipped = true;
    tokenize("good bad", v, 3, &clipped);
    CHECK_FALSE(clipped);
}

TEST_CASE("fixture checksum is frozen") {
    ModelHyper h = tiny_hyper();
    const TransformerModel m = generate_fixture(42, h);
    // pinned once from the generator; any change to the draw sequence or
    // quantization breaks committed fixtures and must be deliberate
    CHECK(weights_checksum(m) == 13068470422422423504ull);
}
