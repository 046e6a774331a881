#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <unistd.h>
#include <vector>

#include "doctest.h"
#include "gnnpp/eval.hpp"
#include "gnnpp/synth.hpp"
#include "gnnpp/training.hpp"

using namespace gnnpp;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("gnnpp_tr_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

ForecastDataset tiny_task(int n_stations, int n_days, int n_members, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n_stations = n_stations;
    cfg.n_days = n_days;
    cfg.n_members = n_members;
    cfg.seed = seed;
    return generate(cfg);
}

ModelConfig tiny_model(ModelKind kind) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.hidden = 6;
    cfg.heads = 2;
    cfg.k_blocks = 1;
    cfg.embed_dim = 3;
    cfg.d_max = 150.0;
    return cfg;
}

TrainConfig tiny_train(int epochs, double lr) {
    TrainConfig tc;
    tc.max_epochs = epochs;
    tc.learning_rate = lr;
    tc.batch_size = 8;
    tc.patience = 10;
    tc.ensemble_size = 1;
    return tc;
}

const SplitSpec kSplit{{0, 24}, {24, 32}, {32, 40}, "R2R"};

bool params_equal(const ParameterStore& a, const ParameterStore& b) {
    if (a.count() != b.count()) return false;
    for (int pid = 0; pid < a.count(); ++pid) {
        const Tensor& x = a.value(pid);
        const Tensor& y = b.value(pid);
        if (x.n_rows != y.n_rows || x.n_cols != y.n_cols) return false;
        if (std::memcmp(x.v.data(), y.v.data(), x.v.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("adamw leaves parameters fixed under zero gradient and zero decay") {
    ParameterStore store;
    const int pid = store.add("w", Tensor(2, 2, {0.5, -1.5, 2.0, 0.25}));
    const Tensor before = store.value(pid);
    AdamWState st = make_adamw_state(store);
    GradBuffer grads(store);
    for (int i = 0; i < 3; ++i) adamw_step(store, grads, st, 1e-3, 0.0);
    CHECK(params_equal(store, store));
    for (std::size_t i = 0; i < before.v.size(); ++i)
        CHECK(store.value(pid).v[i] == before.v[i]);
}

TEST_CASE("the first adamw step matches hand arithmetic") {
    ParameterStore store;
    const int pid = store.add("w", Tensor(1, 1, {0.0}));
    AdamWState st = make_adamw_state(store);
    GradBuffer grads(store);
    grads.grad(pid).v[0] = 1.0;
    adamw_step(store, grads, st, 1e-3, 0.0);
    // m_hat = v_hat = 1 after bias correction, so the step is -lr / (1 + eps)
    CHECK(store.value(pid).v[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(st.step == 1);
}

TEST_CASE("decoupled decay shrinks weights multiplicatively") {
    ParameterStore store;
    const int pid = store.add("w", Tensor(1, 1, {1.0}));
    AdamWState st = make_adamw_state(store);
    GradBuffer grads(store);
    adamw_step(store, grads, st, 1e-3, 1e-2);
    const double expected = 1.0 * (1.0 - 1e-3 * 1e-2);
    CHECK(store.value(pid).v[0] == expected);
}

TEST_CASE("adamw rejects mismatched optimizer state") {
    ParameterStore store;
    store.add("w", Tensor(1, 1, {0.0}));
    ParameterStore other;
    other.add("a", Tensor(1, 1, {0.0}));
    other.add("b", Tensor(1, 1, {0.0}));
    AdamWState st = make_adamw_state(other);
    GradBuffer grads(store);
    CHECK_THROWS_AS(adamw_step(store, grads, st, 1e-3, 0.0), ShapeError);
}

TEST_CASE("the stopper fires after ten non-improving epochs and keeps the best") {
    EarlyStopper stopper(10);
    CHECK_FALSE(stopper.record(1.0));
    CHECK_FALSE(stopper.record(0.9));
    for (int i = 0; i < 9; ++i) CHECK_FALSE(stopper.record(0.95));
    CHECK(stopper.record(0.95));  // twelfth epoch
    CHECK(stopper.epochs_seen() == 12);
    CHECK(stopper.best_epoch() == 1);
    CHECK(stopper.best_score() == 0.9);
}

TEST_CASE("a strictly improving trace never triggers the stopper") {
    EarlyStopper stopper(10);
    for (int i = 0; i < 50; ++i) CHECK_FALSE(stopper.record(1.0 / (i + 1)));
    CHECK(stopper.best_epoch() == 49);
}

TEST_CASE("training is deterministic in the seed") {
    const ForecastDataset ds = tiny_task(3, 40, 4, 201);
    const TrainConfig tc = tiny_train(3, 1e-3);
    TrainedModel a = train_one(tiny_model(ModelKind::Gat), ds, kSplit, tc, 5);
    TrainedModel b = train_one(tiny_model(ModelKind::Gat), ds, kSplit, tc, 5);
    CHECK(params_equal(a.model.params(), b.model.params()));
    CHECK(a.log.train_crps == b.log.train_crps);
    CHECK(a.log.valid_crps == b.log.valid_crps);

    TrainedModel c = train_one(tiny_model(ModelKind::Gat), ds, kSplit, tc, 6);
    CHECK_FALSE(params_equal(a.model.params(), c.model.params()));
}

TEST_CASE("training loss falls over the first epochs") {
    const ForecastDataset ds = tiny_task(4, 40, 5, 202);
    for (ModelKind kind : {ModelKind::Gat, ModelKind::Drn}) {
        const TrainedModel tm = train_one(tiny_model(kind), ds, kSplit, tiny_train(5, 5e-3), 7);
        REQUIRE(tm.log.train_crps.size() == 5);
        CHECK(tm.log.train_crps[4] < tm.log.train_crps[0]);
        for (double v : tm.log.train_crps) CHECK(std::isfinite(v));
    }
}

TEST_CASE("the returned parameters score the best validation epoch") {
    const ForecastDataset ds = tiny_task(3, 40, 4, 203);
    const TrainedModel tm =
        train_one(tiny_model(ModelKind::Drn), ds, kSplit, tiny_train(6, 5e-3), 9);
    REQUIRE_FALSE(tm.log.aborted);

    double best = std::numeric_limits<double>::infinity();
    for (double v : tm.log.valid_crps) best = std::min(best, v);
    CHECK(tm.log.best_valid == best);
    CHECK(tm.log.best_epoch >= 0);
    CHECK(tm.log.valid_crps[static_cast<std::size_t>(tm.log.best_epoch)] == best);

    // recompute the validation score of the returned parameters
    const EvalResult r = evaluate_model(tm.model, ds, kSplit.valid);
    CHECK(r.crps.mean() == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("a non-finite observation aborts training onto finite parameters") {
    ForecastDataset ds = tiny_task(3, 40, 4, 204);
    ds.obs(2, 1) = std::numeric_limits<double>::quiet_NaN();
    const TrainedModel tm =
        train_one(tiny_model(ModelKind::Drn), ds, kSplit, tiny_train(4, 1e-3), 11);
    CHECK(tm.log.aborted);
    const ParameterStore& store = tm.model.params();
    for (int pid = 0; pid < store.count(); ++pid)
        for (double v : store.value(pid).v) CHECK(std::isfinite(v));

    TrainConfig tc = tiny_train(2, 1e-3);
    tc.ensemble_size = 2;
    CHECK_THROWS_AS(train_ensemble(tiny_model(ModelKind::Drn), ds, kSplit, tc), NumericError);
}

TEST_CASE("a singleton ensemble equals one training run") {
    const ForecastDataset ds = tiny_task(3, 40, 4, 205);
    TrainConfig tc = tiny_train(3, 1e-3);
    tc.seed = 13;
    const EnsembleModel ens = train_ensemble(tiny_model(ModelKind::Drn), ds, kSplit, tc);
    REQUIRE(ens.members.size() == 1);
    CHECK(ens.aborted.empty());
    CHECK(ens.seeds == std::vector<std::uint64_t>{13});

    const TrainedModel solo = train_one(tiny_model(ModelKind::Drn), ds, kSplit, tc, 13);
    CHECK(params_equal(ens.members[0].params(), solo.model.params()));
}

TEST_CASE("ensemble predictions average the member outputs") {
    const ForecastDataset ds = tiny_task(3, 40, 4, 206);
    TrainConfig tc = tiny_train(2, 1e-3);
    tc.ensemble_size = 2;
    tc.seed = 17;
    const EnsembleModel ens = train_ensemble(tiny_model(ModelKind::Drn), ds, kSplit, tc);
    REQUIRE(ens.members.size() == 2);

    const int day = 35;
    const DayPrediction p0 = ens.members[0].predict_grouped(ds, day);
    const DayPrediction p1 = ens.members[1].predict_grouped(ds, day);
    const DayPrediction avg = ensemble_predict(ens.members, ds, day);
    for (std::size_t s = 0; s < avg.mu.size(); ++s) {
        CHECK(avg.mu[s] == doctest::Approx((p0.mu[s] + p1.mu[s]) / 2.0).epsilon(1e-15));
        CHECK(avg.sigma[s] == doctest::Approx((p0.sigma[s] + p1.sigma[s]) / 2.0).epsilon(1e-15));
    }

    // identical members average to the member itself
    std::vector<PostModel> twins;
    twins.push_back(ens.members[0]);
    twins.push_back(ens.members[0]);
    const DayPrediction twin_avg = ensemble_predict(twins, ds, day);
    for (std::size_t s = 0; s < avg.mu.size(); ++s) {
        CHECK(twin_avg.mu[s] == p0.mu[s]);
        CHECK(twin_avg.sigma[s] == p0.sigma[s]);
    }
}

TEST_CASE("the ensemble scores no worse than its worst member") {
    const ForecastDataset ds = tiny_task(4, 40, 5, 207);
    TrainConfig tc = tiny_train(4, 5e-3);
    tc.ensemble_size = 3;
    tc.seed = 19;
    const EnsembleModel ens = train_ensemble(tiny_model(ModelKind::Drn), ds, kSplit, tc);
    REQUIRE(ens.members.size() == 3);

    const EvalResult together = evaluate_ensemble(ens.members, ds, kSplit.valid);
    double worst = 0.0;
    for (const PostModel& m : ens.members)
        worst = std::max(worst, evaluate_model(m, ds, kSplit.valid).crps.mean());
    CHECK(together.crps.mean() <= worst + 1e-12);
}

TEST_CASE("training logs round trip through CSV") {
    TrainResult log;
    log.train_crps = {1.5, 1.2, 1.1};
    log.valid_crps = {1.6, 1.3, 1.25};
    TempDir tmp;
    write_training_log(log, tmp.file("log.csv"));

    std::ifstream in(tmp.file("log.csv"));
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "epoch,train_crps,valid_crps");
    REQUIRE(std::getline(in, line));
    CHECK(line == "1,1.5,1.6");
    int rows = 1;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);
}

TEST_CASE("ensemble checkpoints restore every member") {
    const ForecastDataset ds = tiny_task(3, 40, 4, 208);
    TrainConfig tc = tiny_train(2, 1e-3);
    tc.ensemble_size = 2;
    const EnsembleModel ens = train_ensemble(tiny_model(ModelKind::Gat), ds, kSplit, tc);

    TempDir tmp;
    save_ensemble(ens, tmp.file("ens"));
    const std::vector<PostModel> loaded = load_ensemble(tmp.file("ens"));
    REQUIRE(loaded.size() == 2);
    for (std::size_t k = 0; k < loaded.size(); ++k)
        CHECK(params_equal(loaded[k].params(), ens.members[k].params()));

    const DayPrediction before = ensemble_predict(ens.members, ds, 36);
    const DayPrediction after = ensemble_predict(loaded, ds, 36);
    CHECK(before.mu == after.mu);
    CHECK(before.sigma == after.sigma);

    CHECK_THROWS_AS(load_ensemble(tmp.file("empty")), ParseError);
}

TEST_CASE("presets carry their frozen hyperparameter values") {
    const Preset p24 = preset("24h");
    CHECK(p24.model.hidden == 265);
    CHECK(p24.model.heads == 8);
    CHECK(p24.model.k_blocks == 2);
    CHECK(p24.train.learning_rate == 2e-4);
    CHECK(p24.train.batch_size == 8);
    CHECK(p24.train.patience == 10);
    CHECK(p24.train.ensemble_size == 10);
    CHECK(p24.model.d_max == 100.0);

    const Preset p72 = preset("72h");
    CHECK(p72.model.hidden == 128);
    CHECK(p72.model.k_blocks == 2);
    CHECK(p72.train.learning_rate == 1e-4);

    const Preset p120 = preset("120h");
    CHECK(p120.model.hidden == 64);
    CHECK(p120.model.k_blocks == 1);
    CHECK(p120.train.learning_rate == 5e-4);

    CHECK_THROWS_AS(preset("48h"), ConfigError);
}

TEST_CASE("bad training configs are rejected") {
    TrainConfig tc;
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.learning_rate = 0.0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.patience = 0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    CHECK_THROWS_AS(EarlyStopper(0), ConfigError);

    const ForecastDataset ds = tiny_task(3, 40, 4, 209);
    ModelConfig ens_cfg;
    ens_cfg.kind = ModelKind::Ens;
    CHECK_THROWS_AS(train_one(ens_cfg, ds, kSplit, TrainConfig{}, 1), ConfigError);

    SplitSpec empty_train{{0, 0}, {24, 32}, {32, 40}, "R2R"};
    CHECK_THROWS_AS(train_one(tiny_model(ModelKind::Drn), ds, empty_train, TrainConfig{}, 1),
                    ConfigError);
}

TEST_CASE("folding validation days into training is an explicit flag") {
    const ForecastDataset ds = tiny_task(3, 40, 4, 210);
    TrainConfig tc = tiny_train(2, 1e-3);
    tc.retrain_on_valid = true;
    const TrainedModel tm = train_one(tiny_model(ModelKind::Drn), ds, kSplit, tc, 21);
    REQUIRE_FALSE(tm.log.aborted);
    CHECK(tm.log.train_crps.size() == 2);

    tc.retrain_on_valid = false;
    const TrainedModel base = train_one(tiny_model(ModelKind::Drn), ds, kSplit, tc, 21);
    // more training days shift the normalizer, so the traces differ
    CHECK(tm.log.train_crps[0] != base.log.train_crps[0]);
}

}  // TEST_SUITE
