#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "certiformer/errors.hpp"
#include "certiformer/model_io.hpp"
#include "certiformer/parallel.hpp"
#include "certiformer/program.hpp"
#include "certiformer/report.hpp"
#include "certiformer/verifier.hpp"

namespace cf = certiformer;

namespace {

struct Options {
    std::string model;
    std::string weights;
    std::string vocab;
    std::string text;
    std::string input_file;
    std::string out;
    std::string format = "json";
    std::string p = "2";
    std::string method = "bf";
    std::string positions;
    int t = 1;
    int max_sets = 128;
    int threads = 1;
    double eps_max = 10.0;
    std::uint64_t seed = 0;
    std::optional<int> label;
    bool timings = false;
};

struct FixtureOptions {
    std::string out_dir = ".";
    std::string layernorm = "modified";
    std::uint64_t seed = 42;
    int layers = 1;
    int heads = 2;
    int d_model = 8;
    int d_ff = 16;
    int d_qk = 0;  // 0 = d_model / heads
    int max_len = 16;
    int vocab_size = 24;
    int classes = 2;
    double ln_eps = 1e-3;
};

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string weights_path_for(const Options& o) {
    if (!o.weights.empty()) return o.weights;
    std::string w = o.model;
    const std::string suffix = ".json";
    if (w.size() > suffix.size() && w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0)
        w.resize(w.size() - suffix.size());
    return w + ".bin";
}

std::vector<std::string> gather_texts(const Options& o) {
    const bool have_text = !o.text.empty();
    const bool have_file = !o.input_file.empty();
    if (have_text == have_file)
        throw cf::ConfigError("give exactly one of --text and --input-file");
    if (have_text) return {o.text};
    std::ifstream in(o.input_file);
    if (!in) throw cf::ConfigError("cannot read input file '" + o.input_file + "'");
    std::vector<std::string> texts;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) texts.push_back(line);
    }
    if (texts.empty()) throw cf::EmptyInput("input file '" + o.input_file + "' holds no text");
    return texts;
}

std::vector<int> parse_positions(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw cf::ConfigError("bad --positions entry '" + item + "' (expected integers)");
        }
    }
    if (out.empty()) throw cf::ConfigError("--positions is empty");
    return out;
}

cf::RunSettings settings_from(const Options& o) {
    cf::RunSettings s;
    s.p = cf::parse_norm(o.p);
    s.t = o.t;
    s.method = cf::parse_method(o.method);
    s.eps_max = o.eps_max;
    s.max_sets = o.max_sets;
    s.seed = o.seed;
    s.threads = o.threads;
    s.timings = o.timings;
    return s;
}

cf::CertifyOptions certify_options(const cf::RunSettings& s) {
    cf::CertifyOptions co;
    co.method = s.method;
    co.eps_max = s.eps_max;
    return co;
}

cf::InputEcho make_echo(const std::string& text, const std::vector<int>& ids, const cf::Vocab& v,
                        bool clipped) {
    cf::InputEcho echo;
    echo.text = text;
    echo.ids = ids;
    echo.clipped = clipped;
    echo.tokens.reserve(ids.size());
    for (int id : ids) echo.tokens.push_back(v.tokens.at(static_cast<size_t>(id)));
    return echo;
}

void emit(const cf::json& report, const Options& o) {
    const std::string payload = cf::dump_report(report);
    if (!o.out.empty()) {
        std::ofstream f(o.out, std::ios::binary);
        if (!f) throw cf::ConfigError("cannot write output file '" + o.out + "'");
        f << payload;
    }
    if (o.format == "table") {
        if (report.is_array()) {
            for (const cf::json& r : report) std::cout << cf::render_table(r);
        } else {
            std::cout << cf::render_table(report);
        }
    } else if (o.out.empty()) {
        std::cout << payload;
    }
}

cf::json collapse(std::vector<cf::json>&& reports) {
    if (reports.size() == 1) return std::move(reports.front());
    return cf::json(std::move(reports));
}

struct LoadedRun {
    cf::TransformerModel model;
    cf::Vocab vocab;
    std::vector<std::string> texts;
    cf::RunSettings settings;
};

LoadedRun prepare(const Options& o) {
    if (o.model.empty()) throw cf::ConfigError("--model is required");
    if (o.vocab.empty()) throw cf::ConfigError("--vocab is required");
    if (o.t < 1) throw cf::ConfigError("--t must be >= 1");
    if (o.max_sets < 1) throw cf::ConfigError("--max-sets must be >= 1");
    if (o.threads < 1) throw cf::ConfigError("--threads must be >= 1");
    if (!(o.eps_max > 0.0)) throw cf::ConfigError("--eps-max must be > 0");
    if (o.format != "json" && o.format != "table")
        throw cf::ConfigError("--format must be 'json' or 'table'");
    LoadedRun run;
    run.settings = settings_from(o);
    cf::par::set_threads(o.threads);
    run.model = cf::load_model(o.model, weights_path_for(o));
    run.vocab = cf::load_vocab(o.vocab);
    run.texts = gather_texts(o);
    return run;
}

struct TextInstance {
    cf::InputEcho echo;
    std::vector<int> ids;
    cf::SublayerProgram prog;
    cf::Matrix x0;
    cf::CleanResult clean;
};

TextInstance instantiate(const LoadedRun& run, const std::string& text) {
    TextInstance ti;
    bool clipped = false;
    ti.ids = cf::tokenize(text, run.vocab, run.model.hyper.max_len, &clipped);
    if (ti.ids.empty()) throw cf::EmptyInput("no tokens in '" + text + "'");
    ti.echo = make_echo(text, ti.ids, run.vocab, clipped);
    ti.prog = cf::compile(run.model, static_cast<int>(ti.ids.size()));
    ti.x0 = run.model.input_embeddings(ti.ids);
    ti.clean = cf::evaluate_clean(run.model, ti.prog, ti.x0);
    return ti;
}

bool label_mismatch(const Options& o, const TextInstance& ti) {
    return o.label.has_value() && *o.label != ti.clean.predicted;
}

int run_certify(const Options& o) {
    const LoadedRun run = prepare(o);
    std::vector<cf::json> reports;
    for (const std::string& text : run.texts) {
        const TextInstance ti = instantiate(run, text);
        const int n = static_cast<int>(ti.ids.size());
        std::vector<cf::SetCertificate> sets;
        bool truncated = false;
        cf::Counters counters;
        const double t0 = now_seconds();
        if (!label_mismatch(o, ti)) {
            const int target = o.label.value_or(ti.clean.predicted);
            std::vector<std::vector<int>> position_sets;
            if (!o.positions.empty()) {
                position_sets.push_back(parse_positions(o.positions));
            } else {
                position_sets = cf::enumerate_position_sets(n, std::min(o.t, n), o.max_sets,
                                                            truncated);
            }
            const cf::CertifyOptions co = certify_options(run.settings);
            for (const std::vector<int>& positions : position_sets) {
                cf::PerturbationSpec spec;
                spec.p = run.settings.p;
                spec.positions = positions;
                spec.validate(n);
                cf::SetCertificate sc;
                sc.positions = positions;
                sc.cert = cf::certify_epsilon(run.model, ti.prog, ti.x0, target, spec, co,
                                              &counters);
                sets.push_back(std::move(sc));
            }
        }
        reports.push_back(cf::certify_report(o.model, ti.echo, run.settings, ti.clean, o.label,
                                             sets, truncated, counters, now_seconds() - t0));
    }
    emit(collapse(std::move(reports)), o);
    return 0;
}

int run_importance(const Options& o) {
    const LoadedRun run = prepare(o);
    std::vector<cf::json> reports;
    for (const std::string& text : run.texts) {
        const TextInstance ti = instantiate(run, text);
        cf::ImportanceReport ranking;
        const double t0 = now_seconds();
        if (!label_mismatch(o, ti))
            ranking = cf::importance_ranking(run.model, ti.prog, ti.ids, run.settings.p,
                                             certify_options(run.settings));
        reports.push_back(cf::importance_report(o.model, ti.echo, run.settings, ti.clean, o.label,
                                                ranking, now_seconds() - t0));
    }
    emit(collapse(std::move(reports)), o);
    return 0;
}

int run_ablate(const Options& o) {
    const LoadedRun run = prepare(o);
    std::vector<cf::json> reports;
    for (const std::string& text : run.texts) {
        const TextInstance ti = instantiate(run, text);
        const int n = static_cast<int>(ti.ids.size());
        std::vector<cf::AblationRow> rows;
        if (!label_mismatch(o, ti)) {
            cf::PerturbationSpec spec;
            spec.p = run.settings.p;
            if (!o.positions.empty()) {
                spec.positions = parse_positions(o.positions);
            } else {
                for (int i = 1; i <= std::min(o.t, n); ++i) spec.positions.push_back(i);
            }
            spec.validate(n);
            const int target = o.label.value_or(ti.clean.predicted);
            rows = cf::run_ablation(run.model, ti.prog, ti.x0, target, spec,
                                    certify_options(run.settings));
        }
        reports.push_back(cf::ablate_report(o.model, ti.echo, run.settings, ti.clean, o.label,
                                            rows));
    }
    emit(collapse(std::move(reports)), o);
    return 0;
}

int run_gen_fixture(const FixtureOptions& fo, const Options& o) {
    cf::ModelHyper hyper;
    hyper.num_layers = fo.layers;
    hyper.heads = fo.heads;
    hyper.d_model = fo.d_model;
    hyper.d_ff = fo.d_ff;
    hyper.d_qk = fo.d_qk > 0 ? fo.d_qk : fo.d_model / std::max(fo.heads, 1);
    hyper.max_len = fo.max_len;
    hyper.vocab_size = fo.vocab_size;
    hyper.num_classes = fo.classes;
    hyper.layernorm = cf::parse_layernorm(fo.layernorm);
    hyper.ln_eps = fo.ln_eps;

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fo.out_dir, ec);
    if (ec) throw cf::ConfigError("cannot create output directory '" + fo.out_dir + "'");
    const std::string manifest = (fs::path(fo.out_dir) / "model.json").string();
    const std::string weights = (fs::path(fo.out_dir) / "model.bin").string();
    const std::string vocab = (fs::path(fo.out_dir) / "vocab.tsv").string();

    const cf::TransformerModel m = cf::generate_fixture(fo.seed, hyper);
    cf::save_model(m, manifest, weights);
    cf::save_vocab(cf::builtin_vocab(hyper.vocab_size), vocab);

    cf::json summary;
    summary["tool"] = "certiformer";
    summary["format_version"] = 1;
    summary["command"] = "gen-fixture";
    summary["model"] = manifest;
    summary["weights"] = weights;
    summary["vocab"] = vocab;
    summary["seed"] = fo.seed;
    summary["weights_checksum"] = cf::weights_checksum(m);
    const std::string payload = cf::dump_report(summary);
    if (!o.out.empty()) {
        std::ofstream f(o.out, std::ios::binary);
        if (!f) throw cf::ConfigError("cannot write output file '" + o.out + "'");
        f << payload;
    } else {
        std::cout << payload;
    }
    return 0;
}

void add_common_flags(CLI::App* cmd, Options& o, bool with_t) {
    cmd->add_option("--model", o.model, "model manifest (model.json; weights default to .bin)");
    cmd->add_option("--weights", o.weights, "weights blob (defaults to the manifest with .bin)");
    cmd->add_option("--vocab", o.vocab, "vocabulary tsv");
    cmd->add_option("--text", o.text, "input text");
    cmd->add_option("--input-file", o.input_file, "file with one input text per line");
    cmd->add_option("--p", o.p, "perturbation norm: 1, 2 or inf");
    if (with_t) cmd->add_option("--t", o.t, "number of simultaneously perturbed words");
    cmd->add_option("--eps-max", o.eps_max, "radius search upper end");
    cmd->add_option("--seed", o.seed, "run seed recorded in the report");
    cmd->add_option("--threads", o.threads, "worker threads (1 = serial reference)");
    cmd->add_option("--label", o.label, "expected class; mismatch reports misclassified");
    cmd->add_option("--out", o.out, "write the JSON report to this path");
    cmd->add_option("--format", o.format, "stdout format: json or table");
    cmd->add_flag("--timings", o.timings, "include wall-clock fields in the report");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"certified lp-robustness bounds for small Transformer text classifiers"};
    app.require_subcommand(1);

    Options o;
    FixtureOptions fo;

    CLI::App* certify = app.add_subcommand("certify", "certified radius per perturbed position set");
    add_common_flags(certify, o, true);
    certify->add_option("--method", o.method, "bound method: bf, ff, fb or ibp");
    certify->add_option("--max-sets", o.max_sets, "cap on enumerated position sets");
    certify->add_option("--positions", o.positions, "fixed 1-based position set, e.g. 1,3");

    CLI::App* importance = app.add_subcommand("importance", "rank words by certified sensitivity");
    add_common_flags(importance, o, false);
    importance->add_option("--method", o.method, "bound method: bf, ff, fb or ibp");

    CLI::App* ablate = app.add_subcommand("ablate", "compare ff, fb and bf on one input");
    add_common_flags(ablate, o, true);
    ablate->add_option("--positions", o.positions, "fixed 1-based position set, e.g. 1,3");

    CLI::App* gen = app.add_subcommand("gen-fixture", "write a seeded model + vocabulary");
    gen->add_option("--out-dir", fo.out_dir, "directory for model.json/model.bin/vocab.tsv");
    gen->add_option("--seed", fo.seed, "generator seed");
    gen->add_option("--layers", fo.layers, "encoder layers");
    gen->add_option("--heads", fo.heads, "attention heads");
    gen->add_option("--d-model", fo.d_model, "model width");
    gen->add_option("--d-ff", fo.d_ff, "feed-forward width");
    gen->add_option("--d-qk", fo.d_qk, "per-head width (default d-model/heads)");
    gen->add_option("--max-len", fo.max_len, "maximum sequence length");
    gen->add_option("--vocab-size", fo.vocab_size, "vocabulary rows");
    gen->add_option("--classes", fo.classes, "output classes");
    gen->add_option("--layernorm", fo.layernorm, "modified, standard or none");
    gen->add_option("--ln-eps", fo.ln_eps, "variance floor for standard layer norm");
    gen->add_option("--out", o.out, "write the summary JSON to this path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (certify->parsed()) return run_certify(o);
        if (importance->parsed()) return run_importance(o);
        if (ablate->parsed()) return run_ablate(o);
        if (gen->parsed()) return run_gen_fixture(fo, o);
    } catch (const certiformer::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const certiformer::EmptyInput& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const certiformer::FormatError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const certiformer::ShapeError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const certiformer::VersionError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const certiformer::VerifyError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
