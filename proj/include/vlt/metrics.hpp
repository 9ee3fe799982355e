#pragma once

#include <string>
#include <vector>

#include "vlt/data.hpp"
#include "vlt/model.hpp"

namespace vlt {

// |a ∩ b| / |a ∪ b|; two empty masks count as a perfect match (1.0).
double iou(const ByteMask& pred, const ByteMask& target);

// Fraction of samples with IoU strictly greater than each threshold;
// thresholds must be sorted ascending, the sample list non-empty.
std::vector<double> precision_at(const std::vector<double>& thresholds, const std::vector<double>& ious);

inline const std::vector<double>& default_thresholds() {
    static const std::vector<double> t = {0.5, 0.6, 0.7, 0.8, 0.9};
    return t;
}

struct EvalReport {
    double mean_iou = 0.0;
    std::vector<double> thresholds;
    std::vector<double> precision;
    std::vector<std::pair<std::string, double>> per_sample;  // "image_object_expression" -> IoU
    std::uint64_t fingerprint = 0;
    std::uint64_t seed = 0;

    bool operator==(const EvalReport&) const = default;
};

// Runs the model over every sample in id order. With mask_eval, the word with
// the highest global importance (lowest index on ties) is replaced by the
// mask token before prediction; requires query.kind=qgm.
EvalReport evaluate(const Model& model, const Dataset& ds, const Config& cfg, bool mask_eval);

// Tab-separated report with a '#' header block; doubles round-trip exactly.
void save_report(const std::string& path, const EvalReport& report);
EvalReport load_report(const std::string& path);
std::string format_report(const EvalReport& report);

}  // namespace vlt
