#include "sta/eval.hpp"

#include "json.hpp"

#include <cstdio>
#include <ostream>

namespace sta {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string top_tokens_cell(const std::vector<TokenProb>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) {
            out += '|';
        }
        out += std::to_string(t.token) + ':' + num(t.probability);
    }
    return out;
}

}  // namespace

void write_sweep_csv(std::ostream& out, const SweepReport& report) {
    out << "version,kind,row_type,lambda,seed,behavior_score,fluency,fluency_min,fluency_max,mean_length,length_min,"
           "length_max,fluency_count,top_tokens\n";
    for (const auto& row : report.rows) {
        const std::string score = row.behavior_score ? num(*row.behavior_score) : "";
        for (const auto& c : row.cells) {
            out << kSweepCsvVersion << ',' << report.kind << ",cell," << num(row.lambda) << ',' << c.seed << ','
                << score << ',' << num(c.fluency) << ",,," << num(c.mean_length) << ",,," << c.fluency_count << ",\n";
        }
        out << kSweepCsvVersion << ',' << report.kind << ",aggregate," << num(row.lambda) << ",," << score << ','
            << num(row.fluency) << ',' << num(row.fluency_min) << ',' << num(row.fluency_max) << ','
            << num(row.mean_length) << ',' << num(row.length_min) << ',' << num(row.length_max) << ",,"
            << top_tokens_cell(row.top_tokens) << '\n';
    }
}

std::string sweep_json(const SweepReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : report.rows) {
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& c : row.cells) {
            cells.push_back({{"seed", c.seed},
                             {"fluency", c.fluency},
                             {"fluency_count", c.fluency_count},
                             {"mean_length", c.mean_length}});
        }
        nlohmann::json top = nlohmann::json::array();
        for (const auto& t : row.top_tokens) {
            top.push_back({{"token", t.token}, {"probability", t.probability}});
        }
        rows.push_back({{"lambda", row.lambda},
                        {"behavior_score", row.behavior_score ? nlohmann::json(*row.behavior_score) : nlohmann::json()},
                        {"fluency", {{"mean", row.fluency}, {"min", row.fluency_min}, {"max", row.fluency_max}}},
                        {"mean_length", {{"mean", row.mean_length}, {"min", row.length_min}, {"max", row.length_max}}},
                        {"top_tokens", top},
                        {"cells", cells}});
    }
    const nlohmann::json doc{{"version", kSweepCsvVersion}, {"kind", report.kind}, {"rows", rows}};
    return doc.dump(2) + "\n";
}

void write_ablation_csv(std::ostream& out, const std::vector<PositionScore>& scores, double vanilla) {
    out << "version,position,behavior_score\n";
    out << kSweepCsvVersion << ",none," << num(vanilla) << '\n';
    for (const auto& s : scores) {
        out << kSweepCsvVersion << ',' << to_string(s.position) << ',' << num(s.behavior_score) << '\n';
    }
}

}  // namespace sta
