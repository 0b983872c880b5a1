#include "viser/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace viser {

double classification_error(const std::vector<double>& scores, const LabelVector& truth) {
    if (scores.empty()) throw EmptyEvaluationError("classification_error: no predictions");
    if (scores.size() != truth.size()) {
        throw DimensionMismatchError("classification_error: scores/truth length mismatch");
    }
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] > 0.5;
        if (predicted != (truth[i] != 0)) ++wrong;
    }
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(scores.size());
}

double classification_accuracy(const std::vector<double>& scores, const LabelVector& truth) {
    return 100.0 - classification_error(scores, truth);
}

double average_precision(const std::vector<double>& scores, const LabelVector& truth) {
    if (scores.size() != truth.size()) {
        throw DimensionMismatchError("average_precision: scores/truth length mismatch");
    }
    const std::size_t positives =
        static_cast<std::size_t>(std::count(truth.begin(), truth.end(), 1));
    if (positives == 0) throw UndefinedAPError("average_precision: class has no positives");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (truth[order[rank]]) {
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    return ap / static_cast<double>(positives);
}

MeanApResult mean_average_precision(const std::vector<std::vector<double>>& scores_per_class,
                                    const std::vector<LabelVector>& truth_per_class) {
    if (scores_per_class.size() != truth_per_class.size()) {
        throw DimensionMismatchError("mean_average_precision: class count mismatch");
    }
    MeanApResult result;
    double sum = 0.0;
    for (std::size_t c = 0; c < scores_per_class.size(); ++c) {
        try {
            const double ap = average_precision(scores_per_class[c], truth_per_class[c]);
            result.per_class.push_back(ap);
            sum += ap;
            ++result.classes_evaluated;
        } catch (const UndefinedAPError&) {
            result.per_class.push_back(std::nullopt);
            ++result.classes_skipped;
        }
    }
    result.mean_ap = result.classes_evaluated > 0
                         ? sum / static_cast<double>(result.classes_evaluated)
                         : 0.0;
    return result;
}

bool point_localization_correct(double row, double col, const std::vector<Box>& boxes,
                                double tolerance) {
    if (tolerance < 0.0) throw ShapeError("point_localization_correct: negative tolerance");
    for (const Box& b : boxes) {
        if (row >= b.row0 - tolerance && row <= b.row1 + tolerance &&
            col >= b.col0 - tolerance && col <= b.col1 + tolerance) {
            return true;
        }
    }
    return false;
}

MetricReport evaluate(const std::vector<PredictionRecord>& records, double tolerance) {
    if (records.empty()) throw EmptyEvaluationError("evaluate: no prediction records");
    const std::size_t classes = records.front().scores.size();
    for (const auto& rec : records) {
        if (rec.scores.size() != classes || rec.truth.size() != classes) {
            throw DimensionMismatchError("evaluate: inconsistent class counts across records");
        }
    }

    MetricReport report;
    report.tolerance = tolerance;

    std::vector<std::vector<double>> scores(classes);
    std::vector<LabelVector> truth(classes);
    for (const auto& rec : records) {
        for (std::size_t c = 0; c < classes; ++c) {
            scores[c].push_back(rec.scores[c]);
            truth[c].push_back(rec.truth[c]);
        }
    }
    report.ap = mean_average_precision(scores, truth);

    std::size_t wrong = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        report.per_class_error.push_back(classification_error(scores[c], truth[c]));
    }
    for (const auto& rec : records) {
        for (std::size_t c = 0; c < classes; ++c) {
            if ((rec.scores[c] > 0.5) != (rec.truth[c] != 0)) ++wrong;
        }
    }
    report.overall_error =
        100.0 * static_cast<double>(wrong) / static_cast<double>(records.size() * classes);

    std::size_t loc_total = 0, loc_correct = 0;
    for (const auto& rec : records) {
        for (std::size_t c = 0; c < classes; ++c) {
            if (!rec.truth[c]) continue;
            auto bit = rec.boxes.find(c);
            auto pit = rec.points.find(c);
            if (bit == rec.boxes.end() && pit == rec.points.end()) continue;
            ++loc_total;
            if (bit == rec.boxes.end() || pit == rec.points.end()) continue;  // counted, missed
            if (point_localization_correct(pit->second.first, pit->second.second, bit->second,
                                           tolerance)) {
                ++loc_correct;
            }
        }
    }
    if (loc_total > 0) {
        report.localization_accuracy =
            100.0 * static_cast<double>(loc_correct) / static_cast<double>(loc_total);
    }
    return report;
}

nlohmann::ordered_json report_json(const MetricReport& report) {
    nlohmann::ordered_json obj;
    nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
    for (const auto& ap : report.ap.per_class) {
        if (ap) {
            per_class.push_back(*ap);
        } else {
            per_class.push_back(nullptr);
        }
    }
    obj["per_class_ap"] = per_class;
    obj["mean_ap"] = report.ap.mean_ap;
    obj["classes_evaluated"] = report.ap.classes_evaluated;
    obj["classes_skipped"] = report.ap.classes_skipped;
    obj["per_class_error"] = report.per_class_error;
    obj["overall_error"] = report.overall_error;
    if (report.localization_accuracy) {
        obj["localization_accuracy"] = *report.localization_accuracy;
        obj["localization_tolerance"] = report.tolerance;
    }
    return obj;
}

}  // namespace viser
