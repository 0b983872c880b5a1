#pragma once

#include <map>
#include <optional>
#include <vector>

#include "json.hpp"
#include "viser/embedding.hpp"

namespace viser {

// Percentage of samples misclassified by thresholding sigmoid scores at 0.5.
double classification_error(const std::vector<double>& scores, const LabelVector& truth);
double classification_accuracy(const std::vector<double>& scores, const LabelVector& truth);

// Non-interpolated average precision over the descending-score ranking;
// ties resolve by ascending sample index. Throws UndefinedAPError when the
// class has no positives.
double average_precision(const std::vector<double>& scores, const LabelVector& truth);

struct MeanApResult {
    double mean_ap = 0.0;
    std::size_t classes_evaluated = 0;
    std::size_t classes_skipped = 0;                 // classes with no positives
    std::vector<std::optional<double>> per_class;    // nullopt where undefined
};

MeanApResult mean_average_precision(const std::vector<std::vector<double>>& scores_per_class,
                                    const std::vector<LabelVector>& truth_per_class);

// Axis-aligned rectangle in pixel units, edges inclusive.
struct Box {
    double row0 = 0.0, col0 = 0.0, row1 = 0.0, col1 = 0.0;
};

// True iff the point lies inside any box expanded by `tolerance` on all
// four sides. An empty box list is never a hit.
bool point_localization_correct(double row, double col, const std::vector<Box>& boxes,
                                double tolerance = 18.0);

// Evaluation inputs for one sample: per-class scores and truth, plus the
// optional predicted peak and ground-truth boxes per class.
struct PredictionRecord {
    std::vector<double> scores;
    LabelVector truth;
    std::map<std::size_t, std::pair<double, double>> points;  // class -> (row, col)
    std::map<std::size_t, std::vector<Box>> boxes;            // class -> ground truth
};

struct MetricReport {
    MeanApResult ap;
    std::vector<double> per_class_error;
    double overall_error = 0.0;  // micro error over all (sample, class) cells
    std::optional<double> localization_accuracy;  // over truth-positive cells with boxes/points
    double tolerance = 18.0;
};

MetricReport evaluate(const std::vector<PredictionRecord>& records, double tolerance = 18.0);
nlohmann::ordered_json report_json(const MetricReport& report);

}  // namespace viser
