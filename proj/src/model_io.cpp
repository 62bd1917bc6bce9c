#include "certiformer/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "certiformer/errors.hpp"
#include "certiformer/program.hpp"

namespace certiformer {

namespace {

constexpr int kFormatVersion = 1;

struct TensorRef {
    std::string name;
    std::vector<int> shape;
    double* data;
    size_t count;
};

TensorRef ref_of(std::string name, Matrix& m) {
    return {std::move(name), {m.rows, m.cols}, m.a.data(), m.a.size()};
}

TensorRef ref_of(std::string name, Vec& v) {
    return {std::move(name), {static_cast<int>(v.size())}, v.data(), v.size()};
}

// Canonical tensor order of the weight blob. Containers must already match
// the hyperparameters.
std::vector<TensorRef> tensor_directory(TransformerModel& m) {
    std::vector<TensorRef> dir;
    dir.push_back(ref_of("embed", m.embed));
    dir.push_back(ref_of("pos_enc", m.pos_enc));
    for (size_t l = 0; l < m.layers.size(); ++l) {
        TransformerLayer& lay = m.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        dir.push_back(ref_of(p + "ln1.w", lay.ln1.w));
        dir.push_back(ref_of(p + "ln1.b", lay.ln1.b));
        dir.push_back(ref_of(p + "wq", lay.wq));
        dir.push_back(ref_of(p + "bq", lay.bq));
        dir.push_back(ref_of(p + "wk", lay.wk));
        dir.push_back(ref_of(p + "bk", lay.bk));
        dir.push_back(ref_of(p + "wv", lay.wv));
        dir.push_back(ref_of(p + "bv", lay.bv));
        dir.push_back(ref_of(p + "wo", lay.wo));
        dir.push_back(ref_of(p + "bo", lay.bo));
        dir.push_back(ref_of(p + "ln2.w", lay.ln2.w));
        dir.push_back(ref_of(p + "ln2.b", lay.ln2.b));
        dir.push_back(ref_of(p + "ffn.w1", lay.ffn.w1));
        dir.push_back(ref_of(p + "ffn.b1", lay.ffn.b1));
        dir.push_back(ref_of(p + "ffn.w2", lay.ffn.w2));
        dir.push_back(ref_of(p + "ffn.b2", lay.ffn.b2));
    }
    dir.push_back(ref_of("head.w", m.head_w));
    dir.push_back(ref_of("head.b", m.head_b));
    return dir;
}

void size_containers(TransformerModel& m) {
    const ModelHyper& h = m.hyper;
    m.embed = Matrix(h.vocab_size, h.d_model);
    m.pos_enc = Matrix(h.max_len, h.d_model);
    m.layers.assign(h.num_layers, TransformerLayer{});
    for (TransformerLayer& lay : m.layers) {
        lay.wq = lay.wk = lay.wv = lay.wo = Matrix(h.d_model, h.d_model);
        lay.bq = lay.bk = lay.bv = lay.bo = Vec(h.d_model, 0.0);
        lay.ln1.w = lay.ln1.b = lay.ln2.w = lay.ln2.b = Vec(h.d_model, 0.0);
        lay.ffn.w1 = Matrix(h.d_ff, h.d_model);
        lay.ffn.b1 = Vec(h.d_ff, 0.0);
        lay.ffn.w2 = Matrix(h.d_model, h.d_ff);
        lay.ffn.b2 = Vec(h.d_model, 0.0);
    }
    m.head_w = Matrix(h.num_classes, h.d_model);
    m.head_b = Vec(h.num_classes, 0.0);
}

std::string serialize_weights(const TransformerModel& m) {
    auto dir = tensor_directory(const_cast<TransformerModel&>(m));
    std::string blob;
    size_t total = 0;
    for (const TensorRef& t : dir) total += t.count;
    blob.reserve(total * 4);
    for (const TensorRef& t : dir)
        for (size_t i = 0; i < t.count; ++i) {
            const uint32_t u = std::bit_cast<uint32_t>(static_cast<float>(t.data[i]));
            blob.push_back(static_cast<char>(u & 0xff));
            blob.push_back(static_cast<char>((u >> 8) & 0xff));
            blob.push_back(static_cast<char>((u >> 16) & 0xff));
            blob.push_back(static_cast<char>((u >> 24) & 0xff));
        }
    return blob;
}

std::string read_file(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(std::string(what) + " not readable: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes, const char* what) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(std::string(what) + " not writable: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(std::string(what) + " write failed: " + path);
}

int require_int(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_number_integer())
        throw FormatError(std::string("manifest hyper field missing or non-integer: ") + key);
    return j[key].get<int>();
}

// Deterministic generator primitives for fixtures; one value per call so the
// draw sequence is independent of any library distribution internals.
struct Draw {
    std::mt19937_64 g;

    explicit Draw(uint64_t seed) : g(seed) {}

    double uniform() { return ((g() >> 11) + 0.5) * 0x1.0p-53; }  // (0, 1)

    double gaussian() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    int uniform_int(int n) { return std::min(n - 1, static_cast<int>(uniform() * n)); }
};

double quant(double x) { return static_cast<double>(static_cast<float>(x)); }

void fill_gauss(Draw& d, Matrix& m, double scale) {
    for (double& v : m.a) v = quant(d.gaussian() * scale);
}

void fill_gauss(Draw& d, Vec& v, double scale) {
    for (double& x : v) x = quant(d.gaussian() * scale);
}

}  // namespace

TransformerModel load_model(const std::string& manifest_path, const std::string& weights_path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(manifest_path, "manifest"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
    }

    if (!j.contains("format_version") || !j["format_version"].is_number_integer())
        throw FormatError("manifest missing format_version");
    if (j["format_version"].get<int>() != kFormatVersion)
        throw VersionError("unsupported format_version " + j["format_version"].dump() +
                           " (expected " + std::to_string(kFormatVersion) + ")");
    if (!j.contains("pooling") || j["pooling"] != "mean")
        throw FormatError("manifest pooling must be \"mean\"");
    if (!j.contains("hyper") || !j["hyper"].is_object())
        throw FormatError("manifest missing hyper object");
    if (!j.contains("tensors") || !j["tensors"].is_array())
        throw FormatError("manifest missing tensors array");

    const nlohmann::json& h = j["hyper"];
    TransformerModel m;
    m.hyper.num_layers = require_int(h, "num_layers");
    m.hyper.heads = require_int(h, "heads");
    m.hyper.d_model = require_int(h, "d_model");
    m.hyper.d_ff = require_int(h, "d_ff");
    m.hyper.d_qk = require_int(h, "d_qk");
    m.hyper.max_len = require_int(h, "max_len");
    m.hyper.vocab_size = require_int(h, "vocab_size");
    m.hyper.num_classes = require_int(h, "num_classes");
    if (!h.contains("layernorm") || !h["layernorm"].is_string())
        throw FormatError("manifest hyper field missing: layernorm");
    m.hyper.layernorm = parse_layernorm(h["layernorm"].get<std::string>());
    if (!h.contains("ln_eps") || !h["ln_eps"].is_number())
        throw FormatError("manifest hyper field missing: ln_eps");
    m.hyper.ln_eps = h["ln_eps"].get<double>();
    if (m.hyper.num_layers < 1 || m.hyper.d_model < 1 || m.hyper.heads < 1 ||
        m.hyper.vocab_size < 1 || m.hyper.num_classes < 2 || m.hyper.max_len < 1 ||
        m.hyper.d_ff < 1)
        throw FormatError("manifest hyperparameters out of range");

    size_containers(m);
    auto dir = tensor_directory(m);
    const nlohmann::json& tensors = j["tensors"];
    if (tensors.size() != dir.size())
        throw FormatError("manifest tensor count " + std::to_string(tensors.size()) +
                          " does not match expected " + std::to_string(dir.size()));
    size_t offset = 0;
    for (size_t i = 0; i < dir.size(); ++i) {
        const nlohmann::json& t = tensors[i];
        const TensorRef& want = dir[i];
        if (!t.contains("name") || t["name"] != want.name)
            throw FormatError("tensor " + std::to_string(i) + ": expected name \"" + want.name +
                              "\", got " + (t.contains("name") ? t["name"].dump() : "none"));
        if (!t.contains("dtype") || t["dtype"] != "f32")
            throw FormatError(want.name + ": dtype must be \"f32\"");
        const std::vector<int> shape = t.value("shape", std::vector<int>{});
        if (shape != want.shape) {
            auto fmt = [](const std::vector<int>& s) {
                std::string out = "[";
                for (size_t k = 0; k < s.size(); ++k)
                    out += (k ? "," : "") + std::to_string(s[k]);
                return out + "]";
            };
            throw ShapeError(want.name + ": manifest shape " + fmt(shape) + ", expected " +
                             fmt(want.shape));
        }
        if (!t.contains("offset") || t["offset"].get<size_t>() != offset * 4)
            throw FormatError(want.name + ": unexpected byte offset");
        offset += want.count;
    }

    const std::string blob = read_file(weights_path, "weights");
    if (blob.size() != offset * 4)
        throw FormatError("weights size " + std::to_string(blob.size()) + " bytes, expected " +
                          std::to_string(offset * 4));
    const unsigned char* p = reinterpret_cast<const unsigned char*>(blob.data());
    for (TensorRef& t : dir)
        for (size_t i = 0; i < t.count; ++i, p += 4) {
            const uint32_t u = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                               (static_cast<uint32_t>(p[2]) << 16) |
                               (static_cast<uint32_t>(p[3]) << 24);
            const double v = static_cast<double>(std::bit_cast<float>(u));
            if (!std::isfinite(v))
                throw FormatError(t.name + ": non-finite value at index " + std::to_string(i));
            t.data[i] = v;
        }

    m.validate();
    return m;
}

void save_model(const TransformerModel& m, const std::string& manifest_path,
                const std::string& weights_path) {
    m.validate();
    nlohmann::ordered_json j;
    j["format_version"] = kFormatVersion;
    j["hyper"] = {{"num_layers", m.hyper.num_layers},
                  {"heads", m.hyper.heads},
                  {"d_model", m.hyper.d_model},
                  {"d_ff", m.hyper.d_ff},
                  {"d_qk", m.hyper.d_qk},
                  {"max_len", m.hyper.max_len},
                  {"vocab_size", m.hyper.vocab_size},
                  {"num_classes", m.hyper.num_classes},
                  {"layernorm", layernorm_name(m.hyper.layernorm)},
                  {"ln_eps", m.hyper.ln_eps}};
    j["pooling"] = "mean";
    j["tensors"] = nlohmann::ordered_json::array();
    auto dir = tensor_directory(const_cast<TransformerModel&>(m));
    size_t offset = 0;
    for (const TensorRef& t : dir) {
        j["tensors"].push_back({{"name", t.name},
                                {"shape", t.shape},
                                {"dtype", "f32"},
                                {"offset", offset * 4}});
        offset += t.count;
    }
    write_file(manifest_path, j.dump(2) + "\n", "manifest");
    write_file(weights_path, serialize_weights(m), "weights");
}

Vocab load_vocab(const std::string& path) {
    const std::string text = read_file(path, "vocabulary");
    Vocab v;
    std::vector<std::string> by_row;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0)
            throw FormatError("vocabulary line " + std::to_string(lineno) +
                              ": expected token<TAB>row");
        const std::string token = line.substr(0, tab);
        int row = -1;
        try {
            size_t used = 0;
            row = std::stoi(line.substr(tab + 1), &used);
            if (used != line.size() - tab - 1) row = -1;
        } catch (const std::exception&) {
            row = -1;
        }
        if (row < 0)
            throw FormatError("vocabulary line " + std::to_string(lineno) + ": bad row index");
        if (row >= static_cast<int>(by_row.size())) by_row.resize(row + 1);
        if (!by_row[row].empty())
            throw FormatError("vocabulary row " + std::to_string(row) + " assigned twice");
        by_row[row] = token;
        if (!v.index.emplace(token, row).second)
            throw FormatError("vocabulary token \"" + token + "\" appears twice");
    }
    for (size_t r = 0; r < by_row.size(); ++r)
        if (by_row[r].empty())
            throw FormatError("vocabulary rows not dense: row " + std::to_string(r) + " missing");
    const auto unk = v.index.find(kUnkToken);
    if (unk == v.index.end())
        throw FormatError(std::string("vocabulary has no reserved \"") + kUnkToken + "\" token");
    v.tokens = std::move(by_row);
    v.unk_id = unk->second;
    return v;
}

void save_vocab(const Vocab& v, const std::string& path) {
    std::string out;
    for (int r = 0; r < v.size(); ++r) out += v.tokens[r] + "\t" + std::to_string(r) + "\n";
    write_file(path, out, "vocabulary");
}

std::vector<int> tokenize(const std::string& text, const Vocab& v, int max_len, bool* clipped) {
    if (clipped) *clipped = false;
    std::vector<int> ids;
    std::string word;
    auto flush = [&]() {
        if (word.empty()) return;
        const auto it = v.index.find(word);
        ids.push_back(it == v.index.end() ? v.unk_id : it->second);
        word.clear();
    };
    for (char ch : text) {
        const unsigned char u = static_cast<unsigned char>(ch);
        if (std::isspace(u))
            flush();
        else
            word.push_back(static_cast<char>(std::tolower(u)));
    }
    flush();
    if (static_cast<int>(ids.size()) > max_len) {
        ids.resize(max_len);
        if (clipped) *clipped = true;
    }
    return ids;
}

TransformerModel generate_fixture(uint64_t seed, const ModelHyper& hyper) {
    TransformerModel m;
    m.hyper = hyper;
    m.hyper.d_qk = hyper.d_model / std::max(1, hyper.heads);
    size_containers(m);

    Draw d(seed);
    const int dm = m.hyper.d_model;
    const double sd = 1.0 / std::sqrt(static_cast<double>(dm));
    const double sf = 1.0 / std::sqrt(static_cast<double>(m.hyper.d_ff));

    fill_gauss(d, m.embed, 1.0);
    for (int r = 0; r < m.embed.rows; ++r) {
        const double nrm = std::sqrt(std::max(1e-12, dot(m.embed.row(r), m.embed.row(r), dm)));
        for (int j = 0; j < dm; ++j) m.embed(r, j) = quant(m.embed(r, j) / nrm);
    }
    m.pos_enc = sinusoidal_positions(m.hyper.max_len, dm);
    for (double& v : m.pos_enc.a) v = quant(v);

    for (TransformerLayer& lay : m.layers) {
        for (Vec* w : {&lay.ln1.w, &lay.ln2.w})
            for (double& x : *w) x = quant(1.0 + 0.1 * d.gaussian());
        for (Vec* b : {&lay.ln1.b, &lay.ln2.b}) fill_gauss(d, *b, 0.01);
        fill_gauss(d, lay.wq, sd);
        fill_gauss(d, lay.bq, 0.01);
        fill_gauss(d, lay.wk, sd);
        fill_gauss(d, lay.bk, 0.01);
        fill_gauss(d, lay.wv, sd);
        fill_gauss(d, lay.bv, 0.01);
        fill_gauss(d, lay.wo, sd);
        fill_gauss(d, lay.bo, 0.01);
        fill_gauss(d, lay.ffn.w1, sd);
        fill_gauss(d, lay.ffn.b1, 0.01);
        fill_gauss(d, lay.ffn.w2, sf);
        fill_gauss(d, lay.ffn.b2, 0.01);
    }

    fill_gauss(d, m.head_w, sd);
    fill_gauss(d, m.head_b, 0.01);

    // Rescale the head so clean margins land around +-3 at the 90th
    // percentile: large enough to certify, small enough that softmax
    // confidence stays clear of saturation.
    const int probe_len = std::min(6, m.hyper.max_len);
    const SublayerProgram prog = compile(m, probe_len);
    Vec mags;
    for (int trial = 0; trial < 64; ++trial) {
        std::vector<int> ids(probe_len);
        for (int& id : ids) id = d.uniform_int(m.hyper.vocab_size);
        const Vec logits = forward_eval(m, prog, ids);
        Vec sorted = logits;
        std::sort(sorted.begin(), sorted.end());
        mags.push_back(std::abs(sorted.back() - sorted[sorted.size() - 2]));
    }
    std::sort(mags.begin(), mags.end());
    const double q90 = std::max(1e-6, mags[static_cast<size_t>(0.9 * (mags.size() - 1))]);
    const double scale = 3.0 / q90;
    for (double& v : m.head_w.a) v = quant(v * scale);
    for (double& v : m.head_b) v = quant(v * scale);

    m.validate();
    return m;
}

Vocab builtin_vocab(int vocab_size) {
    static const char* kWords[] = {
        "good",     "bad",    "great",   "terrible", "food",     "movie", "service",
        "plot",     "acting", "story",   "staff",    "price",    "fun",   "boring",
        "amazing",  "awful",  "fine",    "slow",     "friendly", "fresh", "stale",
        "delicious", "dull",  "nice",    "poor",     "tasty",    "bland", "crisp",
        "rude",     "cozy",   "noisy",   "clean",
    };
    Vocab v;
    v.tokens.push_back(kUnkToken);
    for (const char* w : kWords) {
        if (v.size() >= vocab_size) break;
        v.tokens.push_back(w);
    }
    while (v.size() < vocab_size) v.tokens.push_back("w" + std::to_string(v.size()));
    for (int r = 0; r < v.size(); ++r) v.index.emplace(v.tokens[r], r);
    v.unk_id = 0;
    return v;
}

uint64_t weights_checksum(const TransformerModel& m) {
    const std::string blob = serialize_weights(m);
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : blob) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace certiformer
