#pragma once

#include <string>
#include <vector>

#include "gnnpp/metrics.hpp"
#include "gnnpp/model.hpp"

namespace gnnpp {

struct EvalOptions {
    // central interval level as a fraction; negative derives (N-1)/(N+1)
    // from the evaluated member count
    double nominal = -1.0;
    // predict each day on the whole member set even when it is wider than
    // the training ensemble (reference point for the grouping rule)
    bool force_single_group = false;
};

struct EvalResult {
    ScoreSeries crps;                        // per day and station
    std::vector<double> pit;                 // day-major, Gaussian models only
    PiMetrics pi;
    double nominal = 0.0;                    // level actually used
    std::vector<int> group_sizes;            // member grouping applied per day
    std::vector<DayPrediction> predictions;  // one per test day
};

// Scores a model over every dataset day inside `test`. Gaussian models are
// predicted through the member-grouping rule (a no-op when the test ensemble
// is no wider than the training one); the ensemble baseline is scored on its
// raw members.
EvalResult evaluate_model(const PostModel& model, const ForecastDataset& raw,
                          const DayRange& test, const EvalOptions& opts = {});

// Scores the deep-ensemble prediction: the arithmetic mean of the member
// (mu, sigma) outputs, each member predicted through the grouping rule.
EvalResult evaluate_ensemble(const std::vector<PostModel>& members, const ForecastDataset& raw,
                             const DayRange& test, const EvalOptions& opts = {});

// day,station_id,mu,sigma rows; Gaussian predictions only
void write_predictions_csv(const std::vector<DayPrediction>& predictions,
                           const std::vector<int>& station_ids, const std::string& path);

// station_id,crps rows of per-station mean scores
void write_station_crps_csv(const ScoreSeries& crps, const std::string& path);

// Full day,station_id,crps series; the round trip is exact because values
// are printed in shortest round-trip form.
void write_scores_csv(const ScoreSeries& scores, const std::string& path);
ScoreSeries read_scores_csv(const std::string& path);

}  // namespace gnnpp
