#include "certiformer/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace certiformer {

namespace {

json number_or_null(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

json header(const char* command, const std::string& model_path) {
    json j;
    j["tool"] = "certiformer";
    j["format_version"] = 1;
    j["command"] = command;
    j["model"] = model_path;
    return j;
}

json input_block(const InputEcho& in) {
    json j;
    j["text"] = in.text;
    j["tokens"] = in.tokens;
    j["ids"] = in.ids;
    j["clipped"] = in.clipped;
    return j;
}

json clean_block(const CleanResult& clean, std::optional<int> label) {
    json j;
    j["logits"] = clean.logits;
    j["predicted_class"] = clean.predicted;
    j["margin"] = clean.margin;
    if (label) j["label"] = *label;
    j["misclassified"] = label.has_value() && *label != clean.predicted;
    return j;
}

json counters_block(const Counters& c) {
    json j;
    j["backward_blocks"] = c.backward_blocks;
    j["forward_rows"] = c.forward_rows;
    return j;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string fmt_cell(const json& v) {
    if (v.is_null()) return "-";
    if (v.is_number_float()) return fmt(v.get<double>());
    if (v.is_number()) return std::to_string(v.get<long long>());
    return v.dump();
}

std::string positions_cell(const json& positions) {
    std::string s = "{";
    for (size_t i = 0; i < positions.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(positions[i].get<int>());
    }
    return s + "}";
}

void render_rows(std::ostringstream& out, const std::vector<std::vector<std::string>>& rows) {
    std::vector<size_t> width;
    for (const auto& row : rows)
        for (size_t c = 0; c < row.size(); ++c) {
            if (width.size() <= c) width.resize(c + 1, 0);
            width[c] = std::max(width[c], row[c].size());
        }
    for (const auto& row : rows) {
        for (size_t c = 0; c < row.size(); ++c) {
            if (c) out << "  ";
            out << row[c];
            if (c + 1 < row.size())
                out << std::string(width[c] - row[c].size(), ' ');
        }
        out << "\n";
    }
}

void render_preamble(std::ostringstream& out, const json& r) {
    out << r.at("command").get<std::string>() << "  model=" << r.at("model").get<std::string>();
    const json& cfg = r.at("config");
    if (cfg.contains("method")) out << "  method=" << cfg.at("method").get<std::string>();
    out << "  p=" << cfg.at("p").get<std::string>();
    if (cfg.contains("t")) out << "  t=" << cfg.at("t").get<int>();
    out << "\n";
    const json& clean = r.at("clean");
    out << "clean: predicted=" << clean.at("predicted_class").get<int>()
        << "  margin=" << fmt(clean.at("margin").get<double>());
    if (clean.at("misclassified").get<bool>()) out << "  MISCLASSIFIED";
    out << "\n";
}

}  // namespace

json certify_report(const std::string& model_path, const InputEcho& input,
                    const RunSettings& cfg, const CleanResult& clean, std::optional<int> label,
                    const std::vector<SetCertificate>& sets, bool truncated,
                    const Counters& counters, double wall_seconds) {
    json r = header("certify", model_path);
    r["input"] = input_block(input);
    json c;
    c["p"] = norm_name(cfg.p);
    c["t"] = cfg.t;
    c["method"] = method_name(cfg.method);
    c["eps_max"] = cfg.eps_max;
    c["max_sets"] = cfg.max_sets;
    c["seed"] = cfg.seed;
    c["threads"] = cfg.threads;
    r["config"] = std::move(c);
    r["clean"] = clean_block(clean, label);
    json list = json::array();
    double min_eps = 0.0, sum_eps = 0.0;
    for (size_t i = 0; i < sets.size(); ++i) {
        json s;
        s["positions"] = sets[i].positions;
        s["certified_epsilon"] = sets[i].cert.epsilon;
        s["delta_lower_at_certified"] = sets[i].cert.delta_at_epsilon;
        list.push_back(std::move(s));
        min_eps = i == 0 ? sets[i].cert.epsilon : std::min(min_eps, sets[i].cert.epsilon);
        sum_eps += sets[i].cert.epsilon;
    }
    r["position_sets"] = std::move(list);
    r["truncated"] = truncated;
    json agg;
    agg["min_epsilon"] = sets.empty() ? json(nullptr) : json(min_eps);
    agg["avg_epsilon"] = sets.empty() ? json(nullptr) : json(sum_eps / double(sets.size()));
    r["aggregates"] = std::move(agg);
    r["counters"] = counters_block(counters);
    if (cfg.timings) r["timings"] = json{{"wall_seconds", wall_seconds}};
    return r;
}

json importance_report(const std::string& model_path, const InputEcho& input,
                       const RunSettings& cfg, const CleanResult& clean, std::optional<int> label,
                       const ImportanceReport& ranking, double wall_seconds) {
    json r = header("importance", model_path);
    r["input"] = input_block(input);
    json c;
    c["p"] = norm_name(cfg.p);
    c["method"] = method_name(cfg.method);
    c["eps_max"] = cfg.eps_max;
    c["seed"] = cfg.seed;
    c["threads"] = cfg.threads;
    r["config"] = std::move(c);
    r["clean"] = clean_block(clean, label);
    json words = json::array();
    for (size_t i = 0; i < ranking.certified.size(); ++i) {
        json w;
        w["position"] = int(i) + 1;
        w["token"] = i < input.tokens.size() ? input.tokens[i] : std::string();
        w["certified_score"] = number_or_null(ranking.certified[i]);
        w["upper_score"] = number_or_null(ranking.upper[i]);
        w["gradient_score"] = number_or_null(ranking.gradient[i]);
        words.push_back(std::move(w));
    }
    r["words"] = std::move(words);
    json ranks;
    ranks["certified"] = ranking.certified_order;
    ranks["upper"] = ranking.upper_order;
    ranks["gradient"] = ranking.gradient_order;
    r["rankings"] = std::move(ranks);
    if (cfg.timings) r["timings"] = json{{"wall_seconds", wall_seconds}};
    return r;
}

json ablate_report(const std::string& model_path, const InputEcho& input,
                   const RunSettings& cfg, const CleanResult& clean, std::optional<int> label,
                   const std::vector<AblationRow>& rows) {
    json r = header("ablate", model_path);
    r["input"] = input_block(input);
    json c;
    c["p"] = norm_name(cfg.p);
    c["t"] = cfg.t;
    c["eps_max"] = cfg.eps_max;
    c["seed"] = cfg.seed;
    c["threads"] = cfg.threads;
    r["config"] = std::move(c);
    r["clean"] = clean_block(clean, label);
    json list = json::array();
    for (const AblationRow& row : rows) {
        json m;
        m["method"] = method_name(row.method);
        m["certified_epsilon"] = row.certified_epsilon;
        m["delta_at_epsilon"] = row.delta_at_epsilon;
        m["counters"] = counters_block(row.counters);
        if (cfg.timings) m["wall_seconds"] = row.wall_seconds;
        list.push_back(std::move(m));
    }
    r["methods"] = std::move(list);
    return r;
}

std::string render_table(const json& r) {
    std::ostringstream out;
    render_preamble(out, r);
    const std::string command = r.at("command").get<std::string>();
    std::vector<std::vector<std::string>> rows;
    if (command == "certify") {
        rows.push_back({"positions", "certified_eps", "delta_lower"});
        for (const json& s : r.at("position_sets"))
            rows.push_back({positions_cell(s.at("positions")),
                            fmt_cell(s.at("certified_epsilon")),
                            fmt_cell(s.at("delta_lower_at_certified"))});
        render_rows(out, rows);
        const json& agg = r.at("aggregates");
        out << "min=" << fmt_cell(agg.at("min_epsilon"))
            << "  avg=" << fmt_cell(agg.at("avg_epsilon")) << "\n";
        if (r.at("truncated").get<bool>()) out << "(position sets truncated)\n";
    } else if (command == "importance") {
        rows.push_back({"rank", "pos", "token", "certified", "upper", "gradient"});
        const json& words = r.at("words");
        const json& order = r.at("rankings").at("certified");
        for (size_t rank = 0; rank < order.size(); ++rank) {
            const json& w = words.at(order[rank].get<size_t>() - 1);
            rows.push_back({std::to_string(rank + 1),
                            std::to_string(w.at("position").get<int>()),
                            w.at("token").get<std::string>(),
                            fmt_cell(w.at("certified_score")),
                            fmt_cell(w.at("upper_score")),
                            fmt_cell(w.at("gradient_score"))});
        }
        render_rows(out, rows);
    } else if (command == "ablate") {
        const bool timed = !r.at("methods").empty() && r.at("methods")[0].contains("wall_seconds");
        std::vector<std::string> head = {"method", "certified_eps", "delta", "backward_blocks",
                                         "forward_rows"};
        if (timed) head.push_back("wall_seconds");
        rows.push_back(std::move(head));
        for (const json& m : r.at("methods")) {
            std::vector<std::string> row = {m.at("method").get<std::string>(),
                                            fmt_cell(m.at("certified_epsilon")),
                                            fmt_cell(m.at("delta_at_epsilon")),
                                            fmt_cell(m.at("counters").at("backward_blocks")),
                                            fmt_cell(m.at("counters").at("forward_rows"))};
            if (timed) row.push_back(fmt_cell(m.at("wall_seconds")));
            rows.push_back(std::move(row));
        }
        render_rows(out, rows);
    } else {
        out << r.dump(2) << "\n";
    }
    return out.str();
}

std::string dump_report(const json& report) { return report.dump(2) + "\n"; }

}  // namespace certiformer
