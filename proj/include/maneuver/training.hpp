#pragma once

// fit / train / test orchestration over windowed datasets.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "maneuver/error.hpp"
#include "maneuver/nn.hpp"
#include "maneuver/preprocessing.hpp"
#include "maneuver/random.hpp"
#include "maneuver/text.hpp"

namespace maneuver {

enum class LossKind { cross_entropy };
enum class OptimizerKind { adam, sgd };

struct TrainConfig {
    std::size_t epochs = 80;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t shuffle_seed = 0;
    LossKind loss = LossKind::cross_entropy;
    OptimizerKind optimizer = OptimizerKind::adam;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
            throw ConfigError("learning_rate must be a finite non-negative number");
        }
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

using TrainingHistory = std::vector<EpochRecord>;

struct OptimizerState {
    AdamState adam;
};

inline OptimizerState make_optimizer_state(const ModelConfig& cfg) { return {make_adam_state(cfg)}; }

// Stacks the features of the selected samples into [B x T x F].
inline Tensor3 make_batch(std::span<const WindowSample> samples, std::span<const std::size_t> indices) {
    if (indices.empty()) return {};
    const auto& first = samples[indices.front()].features;
    Tensor3 batch(indices.size(), first.rows(), first.cols());
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto& f = samples[indices[b]].features;
        if (f.rows() != first.rows() || f.cols() != first.cols()) {
            throw DimensionError("windows in a batch differ in shape");
        }
        std::copy(f.values().begin(), f.values().end(), batch.item(b).begin());
    }
    return batch;
}

inline std::uint64_t epoch_shuffle_seed(std::uint64_t shuffle_seed, std::size_t epoch) {
    return derive_seed(shuffle_seed, 0x5348, epoch);
}

inline std::uint64_t batch_dropout_seed(std::uint64_t shuffle_seed, std::size_t epoch, std::size_t batch) {
    return derive_seed(derive_seed(shuffle_seed, 0xd80, epoch), batch);
}

// One pass over the shuffled training set; returns the batch-size weighted
// mean training loss.
inline double train_epoch(ManeuverModel& model, OptimizerState& state, std::span<const WindowSample> train_set,
                          const TrainConfig& cfg, std::size_t epoch_index) {
    cfg.validate();
    if (train_set.empty()) {
        throw DataError("training set is empty");
    }
    Rng rng(epoch_shuffle_seed(cfg.shuffle_seed, epoch_index));
    const auto order = rng.permutation(train_set.size());
    double total = 0.0;
    std::vector<int> targets;
    for (std::size_t start = 0, b = 0; start < order.size(); start += cfg.batch_size, ++b) {
        const std::size_t n = std::min(cfg.batch_size, order.size() - start);
        const std::span<const std::size_t> idx(order.data() + start, n);
        const Tensor3 batch = make_batch(train_set, idx);
        targets.clear();
        for (auto i : idx) targets.push_back(train_set[i].label_code);
        auto result = backward(model, batch, targets, batch_dropout_seed(cfg.shuffle_seed, epoch_index, b));
        total += result.loss * static_cast<double>(n);
        switch (cfg.optimizer) {
            case OptimizerKind::adam:
                adam_step(model.params, result.grads, state.adam, {cfg.learning_rate});
                break;
            case OptimizerKind::sgd:
                sgd_step(model.params, result.grads, cfg.learning_rate);
                break;
        }
    }
    return total / static_cast<double>(train_set.size());
}

// Argmax class per window, eval mode; ties go to the lowest code.
inline std::vector<int> predict(const ManeuverModel& model, const Tensor3& windows) {
    if (windows.dim0() == 0) return {};
    const Matrix logits = forward(model, windows, Mode::eval);
    std::vector<int> out(logits.rows());
    for (std::size_t b = 0; b < logits.rows(); ++b) out[b] = argmax(logits.row(b));
    return out;
}

struct EvalResult {
    double mean_loss = 0.0;
    double accuracy = 0.0;
    std::vector<int> predictions;
};

inline EvalResult evaluate(const ManeuverModel& model, std::span<const WindowSample> dataset,
                           std::size_t chunk = 256) {
    if (dataset.empty()) {
        throw DataError("evaluation set is empty");
    }
    EvalResult out;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    std::vector<int> targets;
    for (std::size_t start = 0; start < dataset.size(); start += chunk) {
        const std::size_t n = std::min(chunk, dataset.size() - start);
        idx.resize(n);
        targets.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            idx[i] = start + i;
            targets[i] = dataset[start + i].label_code;
        }
        const Matrix logits = forward(model, make_batch(dataset, idx), Mode::eval);
        out.mean_loss += softmax_cross_entropy(logits, targets).loss * static_cast<double>(n);
        for (std::size_t b = 0; b < n; ++b) {
            const int p = argmax(logits.row(b));
            out.predictions.push_back(p);
            if (p == targets[b]) ++correct;
        }
    }
    out.mean_loss /= static_cast<double>(dataset.size());
    out.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
    return out;
}

// Fixed number of epochs, no early stopping. `on_epoch` observes each record.
template <typename Callback>
TrainingHistory fit_model(ManeuverModel& model, std::span<const WindowSample> train_set,
                          std::span<const WindowSample> val_set, const TrainConfig& cfg, Callback&& on_epoch) {
    cfg.validate();
    if (train_set.empty() || val_set.empty()) {
        throw DataError("training and validation sets must be nonempty");
    }
    OptimizerState state = make_optimizer_state(model.config);
    TrainingHistory history;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const double train_loss = train_epoch(model, state, train_set, cfg, e);
        const auto val = evaluate(model, val_set);
        history.push_back({e + 1, train_loss, val.mean_loss, val.accuracy});
        on_epoch(history.back());
    }
    return history;
}

inline TrainingHistory fit_model(ManeuverModel& model, std::span<const WindowSample> train_set,
                                 std::span<const WindowSample> val_set, const TrainConfig& cfg) {
    return fit_model(model, train_set, val_set, cfg, [](const EpochRecord&) {});
}

inline void write_history_csv(std::ostream& out, const TrainingHistory& history) {
    out << "epoch,train_loss,val_loss,val_accuracy\n";
    for (const auto& r : history) {
        out << r.epoch << ',' << text::format_double(r.train_loss) << ',' << text::format_double(r.val_loss) << ','
            << text::format_double(r.val_accuracy) << '\n';
    }
}

inline void write_history_csv(const std::string& path, const TrainingHistory& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    write_history_csv(out, history);
}

inline TrainingHistory read_history_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || text::trim(line) != "epoch,train_loss,val_loss,val_accuracy") {
        throw DataError("history CSV: unexpected header");
    }
    TrainingHistory h;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        const auto f = text::split_csv_line(line);
        if (f.size() != 4) throw DataError("history CSV: expected 4 fields");
        auto e = text::parse_int(f[0]);
        auto a = text::parse_double(f[1]);
        auto b = text::parse_double(f[2]);
        auto c = text::parse_double(f[3]);
        if (!e || !a || !b || !c) throw DataError("history CSV: unparseable row");
        h.push_back({static_cast<std::size_t>(*e), *a, *b, *c});
    }
    return h;
}

}  // namespace maneuver
