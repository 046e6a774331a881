#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gnnpp/model.hpp"

namespace gnnpp {

struct TrainConfig {
    int batch_size = 8;  // days per optimizer step
    int max_epochs = 100;
    double learning_rate = 2e-4;
    double weight_decay = 1e-4;
    int patience = 10;  // epochs without validation improvement
    int ensemble_size = 10;
    std::uint64_t seed = 1;
    bool retrain_on_valid = false;  // fold validation days into the training set

    void validate() const;
};

// Published hyperparameter columns, keyed by forecast lead time.
struct Preset {
    ModelConfig model;
    TrainConfig train;
};
Preset preset(const std::string& lead_time);  // 24h, 72h, 120h

// Adam moments per parameter tensor.
struct AdamWState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long step = 0;
};
AdamWState make_adamw_state(const ParameterStore& params);

// Decoupled weight decay first (theta *= 1 - lr * wd), then the
// bias-corrected Adam update with betas (0.9, 0.999) and eps 1e-8.
void adamw_step(ParameterStore& params, const GradBuffer& grads, AdamWState& state, double lr,
                double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

// Stops after `patience` consecutive epochs without strict improvement.
class EarlyStopper {
  public:
    explicit EarlyStopper(int patience);
    bool record(double valid_score);  // true when training should stop
    int best_epoch() const { return best_epoch_; }
    double best_score() const { return best_score_; }
    int epochs_seen() const { return epochs_seen_; }

  private:
    int patience_;
    int best_epoch_ = -1;
    int epochs_seen_ = 0;
    double best_score_ = 0.0;
};

struct TrainResult {
    std::vector<double> train_crps;  // per epoch, mean over training days
    std::vector<double> valid_crps;
    int best_epoch = -1;  // 0-based index into the traces
    double best_valid = 0.0;
    bool aborted = false;  // hit a non-finite loss or gradient
};

struct TrainedModel {
    PostModel model;
    TrainResult log;
};

// One training run: shuffled day batches, AdamW, early stopping, revert to
// the best validation epoch. The returned parameters are the best epoch's
// (the last finite ones when aborted).
TrainedModel train_one(const ModelConfig& mc, const ForecastDataset& ds, const SplitSpec& split,
                       const TrainConfig& tc, std::uint64_t seed);

struct EnsembleModel {
    std::vector<PostModel> members;  // survivors, in seed order
    std::vector<TrainResult> logs;   // one per attempted member
    std::vector<std::uint64_t> seeds;
    std::vector<int> aborted;  // attempted-member indices that hit non-finite loss
};

// Trains ensemble_size independent runs seeded seed+0 .. seed+size-1.
// Aborted members are dropped; all aborting raises NumericError.
EnsembleModel train_ensemble(const ModelConfig& mc, const ForecastDataset& ds,
                             const SplitSpec& split, const TrainConfig& tc);

// Arithmetic mean of the member (mu, sigma) outputs, each member predicted
// through the member-grouping rule.
DayPrediction ensemble_predict(const std::vector<PostModel>& members, const ForecastDataset& raw,
                               int day_id);

// epoch,train_crps,valid_crps rows, epochs 1-based
void write_training_log(const TrainResult& log, const std::string& path);

// member_<k>.json files under dir
void save_ensemble(const EnsembleModel& ens, const std::string& dir);
std::vector<PostModel> load_ensemble(const std::string& dir);

}  // namespace gnnpp
