#pragma once

#include <string>
#include <vector>

#include "gnnpp/eval.hpp"
#include "gnnpp/metrics.hpp"
#include "gnnpp/model.hpp"

namespace gnnpp {

struct DmResult {
    int station_id = 0;
    double t = 0.0;
    double p = 1.0;
    bool degenerate = false;  // every per-day score difference is zero
};

// Tests equal predictive performance from two aligned per-day score series:
// t = sqrt(n) * mean(d) / sigma_hat with sigma_hat^2 = mean(d^2) as printed
// in the source formula; `demeaned` switches to the conventional centered
// variance. Two-sided p from the standard normal.
DmResult dm_test(const std::vector<double>& scores_f, const std::vector<double>& scores_g,
                 int station_id = 0, bool demeaned = false);

struct BhResult {
    std::vector<bool> rejected;  // aligned with the input order
    int n_rejected = 0;
    double p_star = 0.0;  // largest qualifying p, meaningful when n_rejected > 0
};

// Benjamini-Hochberg step-up: reject all p at or below the largest sorted
// p_(i) with p_(i) <= alpha * i / M.
BhResult bh_correct(const std::vector<double>& p_values, double alpha = 0.05);

struct DmReport {
    std::vector<DmResult> stations;
    BhResult bh;
};

// Per-station tests between two aligned score series, BH-corrected across
// stations. Degenerate stations keep p = 1 and are never rejected.
DmReport dm_station_tests(const ScoreSeries& f, const ScoreSeries& g, double alpha = 0.05,
                          bool demeaned = false);

// station,t,p,rejected rows
void write_dm_csv(const DmReport& report, const std::string& path);

// Two-stage permutation of one feature column with explicit index maps over
// the selected day positions: day_map[j] is the source position (index into
// day_positions) the j-th selected day reads from; within[j] maps the
// flattened (station, member) index per destination day.
ForecastDataset apply_permutation(const ForecastDataset& ds,
                                  const std::vector<int>& day_positions, int feature_pos,
                                  const std::vector<int>& day_map,
                                  const std::vector<std::vector<int>>& within);

// Random draw of both stages.
ForecastDataset permute_feature(const ForecastDataset& ds, const std::vector<int>& day_positions,
                                int feature_pos, Rng& rng);

// The station-id input feeds graph construction, so it is never permuted as
// a column; its importance shuffles the id assignment (and with it the
// learned embedding rows) among the stations instead.
ForecastDataset shuffle_station_ids(const ForecastDataset& ds, Rng& rng);

struct FeatureImportance {
    std::string feature;
    double imp_mean = 0.0;  // relative CRPS inflation over the baseline
    double imp_std = 0.0;   // sample std over repetitions
};

struct ImportanceReport {
    double base_crps = 0.0;
    std::vector<FeatureImportance> rows;      // every feature, then station_id
    std::vector<double> normalized;           // over positive means, sums to 1
};

// Permutation importance of every input feature plus the station-id
// assignment, each repeated `repetitions` times on the test days.
ImportanceReport permutation_importance(const std::vector<PostModel>& members,
                                        const ForecastDataset& raw, const DayRange& test,
                                        int repetitions, std::uint64_t seed);

// feature,imp_mean,imp_std,imp_normalized rows
void write_importance_csv(const ImportanceReport& report, const std::string& path);

}  // namespace gnnpp
