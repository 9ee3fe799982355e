#include "vlt/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace vlt {

double iou(const ByteMask& pred, const ByteMask& target) {
    if (pred.h != target.h || pred.w != target.w) {
        throw std::invalid_argument("iou: dimension mismatch " + std::to_string(pred.h) + "x" +
                                    std::to_string(pred.w) + " vs " + std::to_string(target.h) + "x" +
                                    std::to_string(target.w));
    }
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
        const bool p = pred.pixels[i] != 0, t = target.pixels[i] != 0;
        inter += p && t;
        uni += p || t;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> precision_at(const std::vector<double>& thresholds, const std::vector<double>& ious) {
    if (ious.empty()) throw std::invalid_argument("precision_at: empty sample list");
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
        throw std::invalid_argument("precision_at: thresholds must be sorted ascending");
    }
    std::vector<double> out;
    out.reserve(thresholds.size());
    for (double x : thresholds) {
        std::size_t hits = 0;
        for (double v : ious) hits += v > x;  // strict inequality
        out.push_back(static_cast<double>(hits) / static_cast<double>(ious.size()));
    }
    return out;
}

namespace {

std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int argmax_valid_word(const std::vector<double>& importance, int length) {
    int best = 0;
    for (int i = 1; i < length; ++i) {
        if (importance[static_cast<std::size_t>(i)] > importance[static_cast<std::size_t>(best)]) best = i;
    }
    return best;
}

}  // namespace

EvalReport evaluate(const Model& model, const Dataset& ds, const Config& cfg, bool mask_eval) {
    if (mask_eval && cfg.query_kind != QueryKind::Qgm) {
        throw std::invalid_argument("evaluate: --mask-eval requires query.kind=qgm");
    }
    EvalReport report;
    report.thresholds = default_thresholds();
    report.fingerprint = cfg.fingerprint();
    report.seed = cfg.seed;

    std::vector<double> ious;
    for (const DataSample& s : ds.samples()) {
        std::vector<int> tokens = s.token_ids;
        if (mask_eval) {
            const ModelOutput probe = model.forward(ds.image(s), tokens);
            const int length = std::min<int>(static_cast<int>(tokens.size()), cfg.nt);
            const int idx = argmax_valid_word(probe.word_importance.values(), length);
            tokens[static_cast<std::size_t>(idx)] = ds.vocab().mask_id();
        }
        const ModelOutput out = model.forward(ds.image(s), tokens);
        ByteMask pred;
        pred.h = out.logits.dim(0);
        pred.w = out.logits.dim(1);
        pred.pixels = binarize_logits(out.logits, cfg.mask_threshold);
        const double v = iou(pred, ds.mask(s));
        ious.push_back(v);
        report.per_sample.emplace_back(std::to_string(s.image_id) + "_" + std::to_string(s.object_id) + "_" +
                                           std::to_string(s.expression_id),
                                       v);
    }
    double total = 0.0;
    for (double v : ious) total += v;
    report.mean_iou = total / static_cast<double>(ious.size());
    report.precision = precision_at(report.thresholds, ious);
    return report;
}

std::string format_report(const EvalReport& report) {
    std::ostringstream os;
    char fp[32];
    std::snprintf(fp, sizeof(fp), "%016llx", static_cast<unsigned long long>(report.fingerprint));
    os << "# config_fingerprint " << fp << '\n';
    os << "# seed " << report.seed << '\n';
    os << "# precision uses strict inequality iou > threshold\n";
    os << "mean_iou\t" << g17(report.mean_iou) << '\n';
    for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
        os << "pr@" << report.thresholds[i] << '\t' << g17(report.precision[i]) << '\n';
    }
    for (const auto& [key, v] : report.per_sample) {
        os << "sample\t" << key << '\t' << g17(v) << '\n';
    }
    return os.str();
}

void save_report(const std::string& path, const EvalReport& report) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("save_report: cannot open '" + path + "'");
    os << format_report(report);
}

EvalReport load_report(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_report: cannot open '" + path + "'");
    EvalReport report;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ls(line);
            std::string hash, key;
            ls >> hash >> key;
            if (key == "config_fingerprint") {
                std::string hex;
                ls >> hex;
                report.fingerprint = std::stoull(hex, nullptr, 16);
            } else if (key == "seed") {
                ls >> report.seed;
            }
            continue;
        }
        std::istringstream ls(line);
        std::string key;
        std::getline(ls, key, '\t');
        if (key == "mean_iou") {
            std::string v;
            std::getline(ls, v);
            report.mean_iou = std::stod(v);
        } else if (key.rfind("pr@", 0) == 0) {
            std::string v;
            std::getline(ls, v);
            report.thresholds.push_back(std::stod(key.substr(3)));
            report.precision.push_back(std::stod(v));
        } else if (key == "sample") {
            std::string id, v;
            std::getline(ls, id, '\t');
            std::getline(ls, v);
            report.per_sample.emplace_back(id, std::stod(v));
        } else {
            throw std::runtime_error("load_report: unexpected line '" + line + "'");
        }
    }
    return report;
}

}  // namespace vlt
