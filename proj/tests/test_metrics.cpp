#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "viser/metrics.hpp"
#include "viser/model.hpp"
#include "viser/synthetic.hpp"

using namespace viser;

TEST_CASE("classification_error basics") {
    CHECK(classification_error({0.9, 0.1}, {1, 0}) == 0.0);
    CHECK(classification_error({0.9, 0.8, 0.1, 0.2}, {1, 0, 0, 1}) == 50.0);
    CHECK_THROWS_AS(classification_error({}, {}), EmptyEvaluationError);
    CHECK_THROWS_AS(classification_error({0.5}, {1, 0}), DimensionMismatchError);
}

TEST_CASE("error and accuracy sum to exactly 100") {
    Rng rng(81);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.uniform_int(300);
        std::vector<double> scores(n);
        LabelVector truth(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = rng.uniform();
            truth[i] = static_cast<std::uint8_t>(rng.uniform_int(2));
        }
        CHECK(classification_error(scores, truth) + classification_accuracy(scores, truth) ==
              100.0);
    }
}

TEST_CASE("classification_error on a seed-0 model run matches a recount") {
    SyntheticSpec spec;
    const SyntheticDataset ds = generate(spec);
    std::vector<LabeledSample> data;
    for (const auto& s : ds.train) {
        data.push_back({s.ambient, {static_cast<std::uint8_t>(s.cls)}});
    }
    TrainConfig cfg;
    cfg.iterations = 300;
    cfg.decay_steps = {};
    cfg.dropout_p = 0.0;
    const TrainResult trained = train(data, {100, 100, 1}, cfg);

    std::vector<FeatureVector> inputs;
    LabelVector truth;
    for (const auto& s : ds.test) {
        inputs.push_back(s.ambient);
        truth.push_back(static_cast<std::uint8_t>(s.cls));
    }
    const auto scores = predict_scores(trained.params, inputs);
    const double reported = classification_error(scores, truth);

    std::size_t wrong = 0;  // independent recount
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int predicted = scores[i] > 0.5 ? 1 : 0;
        if (predicted != static_cast<int>(truth[i])) ++wrong;
    }
    CHECK(reported == 100.0 * static_cast<double>(wrong) / 1000.0);
}

TEST_CASE("average_precision reference values") {
    CHECK(average_precision({0.9, 0.8, 0.7, 0.3, 0.2, 0.1}, {1, 1, 1, 0, 0, 0}) == 1.0);
    CHECK(average_precision({0.2, 0.9}, {1, 0}) == 0.5);  // single positive ranked 2nd
    CHECK_THROWS_AS(average_precision({0.5, 0.6}, {0, 0}), UndefinedAPError);
}

TEST_CASE("average_precision ties break by ascending sample index") {
    // equal scores: sample 0 (negative) precedes sample 1 (positive)
    CHECK(average_precision({0.5, 0.5}, {0, 1}) == 0.5);
    CHECK(average_precision({0.5, 0.5}, {1, 0}) == 1.0);
}

TEST_CASE("average_precision equals the quadratic definition on random data") {
    Rng rng(83);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.uniform_int(150);
        std::vector<double> scores(n);
        LabelVector truth(n);
        bool has_positive = false;
        for (std::size_t i = 0; i < n; ++i) {
            // coarse scores so ties actually occur
            scores[i] = std::round(rng.uniform() * 8.0) / 8.0;
            truth[i] = static_cast<std::uint8_t>(rng.uniform_int(2));
            has_positive |= truth[i] != 0;
        }
        if (!has_positive) truth[0] = 1;
        const double fast = average_precision(scores, truth);
        const double slow = oracles::average_precision_quadratic(scores, truth);
        CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
    }
}

TEST_CASE("average_precision is invariant under strictly monotone transforms") {
    Rng rng(85);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 2 + rng.uniform_int(60);
        std::vector<double> scores(n), warped(n);
        LabelVector truth(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = rng.uniform(-3.0, 3.0);
            warped[i] = std::atan(scores[i] * 2.0) * 5.0 + 1.0;
            truth[i] = static_cast<std::uint8_t>(rng.uniform_int(2));
        }
        if (!std::count(truth.begin(), truth.end(), 1)) truth[n / 2] = 1;
        CHECK(average_precision(scores, truth) == average_precision(warped, truth));
    }
}

TEST_CASE("mean AP skips undefined classes and reports the count") {
    const std::vector<std::vector<double>> scores{{0.9, 0.1}, {0.2, 0.8}, {0.5, 0.5}};
    const std::vector<LabelVector> truth{{1, 0}, {0, 0}, {0, 1}};
    const MeanApResult r = mean_average_precision(scores, truth);
    CHECK(r.classes_evaluated == 2);
    CHECK(r.classes_skipped == 1);
    REQUIRE(r.per_class.size() == 3);
    CHECK(r.per_class[0] == 1.0);
    CHECK(!r.per_class[1].has_value());
    CHECK(r.per_class[2] == 0.5);
    CHECK(r.mean_ap == doctest::Approx(0.75));

    // identical per-class inputs: mean equals the single-class value
    const MeanApResult same = mean_average_precision({scores[0], scores[0]}, {truth[0], truth[0]});
    CHECK(same.mean_ap == average_precision(scores[0], truth[0]));
}

TEST_CASE("point localization tolerance boundary") {
    const std::vector<Box> boxes{{100.0, 200.0, 150.0, 260.0}};

    CHECK(point_localization_correct(125.0, 230.0, boxes));        // center
    CHECK(point_localization_correct(100.0, 200.0, boxes));        // corner, inclusive
    CHECK(point_localization_correct(82.0, 230.0, boxes));         // 18 px above the top edge
    CHECK(!point_localization_correct(81.0, 230.0, boxes));        // 19 px above
    CHECK(point_localization_correct(125.0, 278.0, boxes));        // 18 px right
    CHECK(!point_localization_correct(125.0, 279.0, boxes));       // 19 px right
    CHECK(point_localization_correct(168.0, 278.0, boxes));        // corner + 18 on both axes
    CHECK(!point_localization_correct(125.0, 230.0, {}));          // no boxes, no hit
    CHECK(point_localization_correct(99.0, 230.0, boxes, 1.0));    // custom tolerance
    CHECK(!point_localization_correct(98.0, 230.0, boxes, 1.0));
    CHECK_THROWS_AS(point_localization_correct(0, 0, boxes, -1.0), ShapeError);
}

TEST_CASE("evaluate assembles the full report") {
    std::vector<PredictionRecord> records(4);
    for (std::size_t i = 0; i < 4; ++i) {
        records[i].scores = {i < 2 ? 0.9 : 0.1, 0.4};
        records[i].truth = {static_cast<std::uint8_t>(i < 2), 0};
    }
    records[0].points[0] = {10.0, 10.0};
    records[0].boxes[0] = {{5.0, 5.0, 15.0, 15.0}};
    records[1].points[0] = {90.0, 90.0};
    records[1].boxes[0] = {{5.0, 5.0, 15.0, 15.0}};

    const MetricReport report = evaluate(records);
    CHECK(report.per_class_error[0] == 0.0);
    CHECK(report.per_class_error[1] == 0.0);
    CHECK(report.overall_error == 0.0);
    CHECK(report.ap.classes_evaluated == 1);
    CHECK(report.ap.classes_skipped == 1);
    REQUIRE(report.localization_accuracy.has_value());
    CHECK(*report.localization_accuracy == 50.0);

    const auto json = report_json(report);
    CHECK(json["mean_ap"] == 1.0);
    CHECK(json["localization_accuracy"] == 50.0);
    CHECK(json["per_class_ap"][1].is_null());
}
