#include "gnnpp/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>

namespace gnnpp {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (max_epochs < 1) throw ConfigError("need at least one epoch");
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (ensemble_size < 1) throw ConfigError("ensemble size must be at least 1");
}

Preset preset(const std::string& lead_time) {
    Preset p;
    p.model.heads = 8;
    if (lead_time == "24h") {
        p.model.hidden = 265;
        p.model.k_blocks = 2;
        p.train.learning_rate = 2e-4;
    } else if (lead_time == "72h") {
        p.model.hidden = 128;
        p.model.k_blocks = 2;
        p.train.learning_rate = 1e-4;
    } else if (lead_time == "120h") {
        p.model.hidden = 64;
        p.model.k_blocks = 1;
        p.train.learning_rate = 5e-4;
    } else {
        throw ConfigError("unknown preset '" + lead_time + "' (expected 24h, 72h, 120h)");
    }
    return p;
}

AdamWState make_adamw_state(const ParameterStore& params) {
    AdamWState st;
    for (int pid = 0; pid < params.count(); ++pid) {
        const Tensor& v = params.value(pid);
        st.m.emplace_back(v.n_rows, v.n_cols);
        st.v.emplace_back(v.n_rows, v.n_cols);
    }
    return st;
}

void adamw_step(ParameterStore& params, const GradBuffer& grads, AdamWState& state, double lr,
                double weight_decay, double beta1, double beta2, double eps) {
    if (static_cast<int>(state.m.size()) != params.count() || grads.count() != params.count())
        throw ShapeError("optimizer state does not match the parameter set");
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (int pid = 0; pid < params.count(); ++pid) {
        Tensor& theta = params.value(pid);
        const Tensor& g = grads.grad(pid);
        Tensor& m = state.m[static_cast<std::size_t>(pid)];
        Tensor& v = state.v[static_cast<std::size_t>(pid)];
        if (!theta.same_shape(g) || !theta.same_shape(m))
            throw ShapeError("gradient shape does not match parameter " + params.name(pid));
        for (std::size_t i = 0; i < theta.v.size(); ++i) {
            theta.v[i] *= 1.0 - lr * weight_decay;
            m.v[i] = beta1 * m.v[i] + (1.0 - beta1) * g.v[i];
            v.v[i] = beta2 * v.v[i] + (1.0 - beta2) * g.v[i] * g.v[i];
            const double m_hat = m.v[i] / bc1;
            const double v_hat = v.v[i] / bc2;
            theta.v[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
    if (patience < 1) throw ConfigError("patience must be at least 1");
}

bool EarlyStopper::record(double valid_score) {
    if (best_epoch_ < 0 || valid_score < best_score_) {
        best_score_ = valid_score;
        best_epoch_ = epochs_seen_;
    }
    ++epochs_seen_;
    return epochs_seen_ - 1 - best_epoch_ >= patience_;
}

namespace {

double softplus_inv(double x) { return x + std::log1p(-std::exp(-x)); }

std::vector<Tensor> snapshot(const ParameterStore& store) {
    std::vector<Tensor> snap;
    for (int pid = 0; pid < store.count(); ++pid) snap.push_back(store.value(pid));
    return snap;
}

void restore(ParameterStore& store, const std::vector<Tensor>& snap) {
    for (int pid = 0; pid < store.count(); ++pid)
        store.value(pid) = snap[static_cast<std::size_t>(pid)];
}

// mean CRPS over the given days, forward passes only
double mean_day_loss(const PostModel& model, const ForecastDataset& view,
                     const std::vector<int>& day_ids) {
    ParameterStore& store = const_cast<ParameterStore&>(model.params());
    std::vector<double> losses(day_ids.size(), 0.0);
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < day_ids.size(); ++i) {
        try {
            const DayBatch batch = model.make_batch(view, day_ids[i]);
            GradBuffer scratch(store);
            Tape tape(&store, &scratch);
            losses[i] = tape.val(model.build_loss(tape, batch)).v[0];
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    double sum = 0.0;
    for (double l : losses) sum += l;
    return sum / static_cast<double>(day_ids.size());
}

}  // namespace

TrainedModel train_one(const ModelConfig& mc, const ForecastDataset& ds, const SplitSpec& split,
                       const TrainConfig& tc, std::uint64_t seed) {
    mc.validate();
    tc.validate();
    split.validate();
    if (mc.kind == ModelKind::Ens) throw ConfigError("the ensemble baseline is not trained");

    std::vector<int> train_pos = ds.day_positions(split.train);
    const std::vector<int> valid_pos = ds.day_positions(split.valid);
    if (tc.retrain_on_valid)
        for (int p : valid_pos) train_pos.push_back(p);
    std::sort(train_pos.begin(), train_pos.end());
    if (train_pos.empty()) throw ConfigError("training range selects no days");
    if (valid_pos.empty()) throw ConfigError("validation range selects no days");

    TrainedModel out{PostModel::create(mc, ds, train_pos, seed), {}};
    PostModel& model = out.model;
    TrainResult& log = out.log;
    ParameterStore& store = model.params();

    // prime the output layer with the training-day climatology so mu and
    // sigma start at the right scale
    {
        double sum = 0.0, sq = 0.0;
        std::size_t n = 0;
        for (int t : train_pos)
            for (int s = 0; s < ds.n_stations(); ++s) {
                const double y = ds.obs(t, s);
                if (!std::isfinite(y)) continue;
                sum += y;
                sq += y * y;
                ++n;
            }
        if (n > 0) {
            const double mean = sum / static_cast<double>(n);
            const double sd = std::max(
                std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean)), 1e-3);
            Tensor& bias = store.value(model.output_bias_param());
            bias.at(0, 0) = mean;
            bias.at(0, 1) = softplus_inv(sd);
        }
    }

    ForecastDataset storage;
    const ForecastDataset& view = model_view(model, ds, storage);
    std::vector<int> train_ids, valid_ids;
    for (int p : train_pos) train_ids.push_back(ds.days[static_cast<std::size_t>(p)]);
    for (int p : valid_pos) valid_ids.push_back(ds.days[static_cast<std::size_t>(p)]);

    AdamWState opt = make_adamw_state(store);
    EarlyStopper stopper(tc.patience);
    std::vector<Tensor> best = snapshot(store);
    Rng shuffle_rng(splitmix64(seed ^ 0x65706f6368ULL));

    std::vector<int> order = train_ids;
    for (int epoch = 0; epoch < tc.max_epochs && !log.aborted; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t lo = 0; lo < order.size() && !log.aborted; lo += tc.batch_size) {
            const std::size_t hi = std::min(lo + tc.batch_size, order.size());
            const int B = static_cast<int>(hi - lo);
            std::vector<GradBuffer> bufs;
            std::vector<double> losses(static_cast<std::size_t>(B), 0.0);
            for (int i = 0; i < B; ++i) bufs.emplace_back(store);
            std::exception_ptr error;
            int numeric_fail = 0;
#pragma omp parallel for schedule(dynamic)
            for (int i = 0; i < B; ++i) {
                try {
                    const DayBatch batch = model.make_batch(view, order[lo + i]);
                    Tape tape(&store, &bufs[static_cast<std::size_t>(i)]);
                    const int loss = model.build_loss(tape, batch);
                    losses[static_cast<std::size_t>(i)] = tape.val(loss).v[0];
                    tape.backward(loss, 1.0 / static_cast<double>(B));
                } catch (const NumericError&) {
#pragma omp atomic write
                    numeric_fail = 1;
                } catch (...) {
#pragma omp critical
                    if (!error) error = std::current_exception();
                }
            }
            if (error) std::rethrow_exception(error);
            if (numeric_fail) {
                log.aborted = true;
                break;
            }

            // reduce per-day buffers in day order; bitwise equal to a serial
            // shared-buffer accumulation
            GradBuffer grads(store);
            bool finite = true;
            for (int i = 0; i < B; ++i) {
                grads.add_from(bufs[static_cast<std::size_t>(i)]);
                if (!std::isfinite(losses[static_cast<std::size_t>(i)])) finite = false;
            }
            if (!finite || !grads.all_finite()) {
                log.aborted = true;
                break;
            }
            for (int i = 0; i < B; ++i) epoch_loss += losses[static_cast<std::size_t>(i)];
            adamw_step(store, grads, opt, tc.learning_rate, tc.weight_decay);
        }
        if (log.aborted) break;

        log.train_crps.push_back(epoch_loss / static_cast<double>(order.size()));
        double valid;
        try {
            valid = mean_day_loss(model, view, valid_ids);
        } catch (const NumericError&) {
            log.aborted = true;
            break;
        }
        log.valid_crps.push_back(valid);
        if (!std::isfinite(valid)) {
            log.aborted = true;
            break;
        }
        const bool stop = stopper.record(valid);
        if (stopper.best_epoch() == epoch) best = snapshot(store);
        if (stop) break;
    }

    restore(store, best);
    log.best_epoch = stopper.best_epoch();
    log.best_valid = stopper.best_score();
    return out;
}

EnsembleModel train_ensemble(const ModelConfig& mc, const ForecastDataset& ds,
                             const SplitSpec& split, const TrainConfig& tc) {
    tc.validate();
    EnsembleModel ens;
    for (int k = 0; k < tc.ensemble_size; ++k) {
        const std::uint64_t seed = tc.seed + static_cast<std::uint64_t>(k);
        TrainedModel tm = train_one(mc, ds, split, tc, seed);
        ens.logs.push_back(tm.log);
        if (tm.log.aborted) {
            ens.aborted.push_back(k);
            continue;
        }
        ens.members.push_back(std::move(tm.model));
        ens.seeds.push_back(seed);
    }
    if (ens.members.empty())
        throw NumericError("all ensemble members hit non-finite losses");
    return ens;
}

DayPrediction ensemble_predict(const std::vector<PostModel>& members, const ForecastDataset& raw,
                               int day_id) {
    if (members.empty()) throw ConfigError("ensemble has no members");
    DayPrediction avg;
    avg.day_id = day_id;
    for (const PostModel& m : members) {
        if (m.is_ensemble()) throw ConfigError("the raw-member baseline cannot be averaged");
        const DayPrediction p = m.predict_grouped(raw, day_id);
        if (avg.mu.empty()) {
            avg.mu.assign(p.mu.size(), 0.0);
            avg.sigma.assign(p.sigma.size(), 0.0);
        }
        for (std::size_t s = 0; s < p.mu.size(); ++s) {
            avg.mu[s] += p.mu[s];
            avg.sigma[s] += p.sigma[s];
        }
    }
    const double k = static_cast<double>(members.size());
    for (std::size_t s = 0; s < avg.mu.size(); ++s) {
        avg.mu[s] /= k;
        avg.sigma[s] /= k;
    }
    return avg;
}

void write_training_log(const TrainResult& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << "epoch,train_crps,valid_crps\n";
    const std::size_t n = std::min(log.train_crps.size(), log.valid_crps.size());
    for (std::size_t e = 0; e < n; ++e)
        out << (e + 1) << ',' << format_double(log.train_crps[e]) << ','
            << format_double(log.valid_crps[e]) << '\n';
}

void save_ensemble(const EnsembleModel& ens, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (std::size_t k = 0; k < ens.members.size(); ++k)
        save_checkpoint(ens.members[k],
                        (std::filesystem::path(dir) / ("member_" + std::to_string(k) + ".json"))
                            .string());
}

std::vector<PostModel> load_ensemble(const std::string& dir) {
    std::vector<PostModel> members;
    for (int k = 0;; ++k) {
        const std::filesystem::path p =
            std::filesystem::path(dir) / ("member_" + std::to_string(k) + ".json");
        if (!std::filesystem::exists(p)) break;
        members.push_back(load_checkpoint(p.string()));
    }
    if (members.empty()) throw ParseError("no member checkpoints under " + dir);
    return members;
}

}  // namespace gnnpp
