#pragma once

/**
 * Stratified splitting, the mini-batch training loop with per-epoch loss
 * tracking and best-checkpoint retention, evaluation into a confusion
 * matrix, and the CSV report writers.
 */

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "serm/errors.hpp"
#include "serm/features.hpp"
#include "serm/model.hpp"
#include "serm/nn.hpp"
#include "serm/rng.hpp"

namespace serm::train {

// ---------------------------------------------------------------------------
// Splitting

struct SplitPlan {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    double ratio = 0.8;
    std::uint64_t seed = 0;
    bool stratified = true;
};

/// Seeded shuffle within each class; the first ceil(ratio * n_c) samples of
/// each class go to train. Deterministic given (seed, label order).
inline SplitPlan split(const std::vector<audio::Emotion>& labels, double ratio,
                       std::uint64_t seed, bool stratified = true) {
    if (ratio <= 0.0 || ratio > 1.0) {
        throw ConfigError("split: ratio must be in (0, 1]");
    }
    SplitPlan plan;
    plan.ratio = ratio;
    plan.seed = seed;
    plan.stratified = stratified;
    Rng rng(seed);

    if (stratified) {
        std::array<std::vector<std::size_t>, audio::kNumEmotions> by_class;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            by_class[static_cast<std::size_t>(labels[i])].push_back(i);
        }
        for (auto& idx : by_class) {
            if (idx.empty()) continue;
            if (idx.size() < 2) {
                throw InsufficientClassSamples("split: every class needs >= 2 samples");
            }
            rng.shuffle(idx);
            const std::size_t n_train = static_cast<std::size_t>(
                std::ceil(ratio * static_cast<double>(idx.size())));
            for (std::size_t i = 0; i < idx.size(); ++i) {
                (i < n_train ? plan.train_indices : plan.test_indices).push_back(idx[i]);
            }
        }
    } else {
        std::vector<std::size_t> idx(labels.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx);
        const std::size_t n_train =
            static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < n_train ? plan.train_indices : plan.test_indices).push_back(idx[i]);
        }
    }
    if (plan.test_indices.empty()) {
        throw InsufficientClassSamples("split: test set is empty (ratio too high)");
    }
    std::sort(plan.train_indices.begin(), plan.train_indices.end());
    std::sort(plan.test_indices.begin(), plan.test_indices.end());
    return plan;
}

// ---------------------------------------------------------------------------
// Confusion matrix

struct ConfusionMatrix {
    // rows = true label, columns = predicted
    std::array<std::array<long, audio::kNumEmotions>, audio::kNumEmotions> counts{};

    void add(audio::Emotion truth, audio::Emotion predicted) {
        ++counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
    }

    long total() const {
        long t = 0;
        for (const auto& row : counts) {
            for (long c : row) t += c;
        }
        return t;
    }

    long row_sum(std::size_t i) const {
        long t = 0;
        for (long c : counts[i]) t += c;
        return t;
    }

    double class_accuracy(std::size_t i) const {
        const long rs = row_sum(i);
        return rs == 0 ? 0.0 : static_cast<double>(counts[i][i]) / static_cast<double>(rs);
    }

    double overall_accuracy() const {
        const long t = total();
        if (t == 0) return 0.0;
        long diag = 0;
        for (std::size_t i = 0; i < audio::kNumEmotions; ++i) diag += counts[i][i];
        return static_cast<double>(diag) / static_cast<double>(t);
    }

    void merge(const ConfusionMatrix& other) {
        for (std::size_t i = 0; i < audio::kNumEmotions; ++i) {
            for (std::size_t j = 0; j < audio::kNumEmotions; ++j) {
                counts[i][j] += other.counts[i][j];
            }
        }
    }
};

/// Argmax with lowest class index on exact ties.
inline std::size_t argmax_class(const std::vector<double>& logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    std::size_t epochs = 370;
    std::size_t batch = 16;
    std::uint64_t seed = 42;
    nn::RmspropConfig optimizer;
};

struct TrainRun {
    std::vector<std::pair<double, double>> loss_history;  // (train, test) per epoch
    std::size_t best_epoch = 0;
    double best_test_loss = std::numeric_limits<double>::infinity();
    std::vector<nn::Tensor> best_params;  // parallel to model.parameters()
    double wall_time_s = 0.0;
};

namespace detail {

inline double sample_loss(nn::CnnLstmModel& model, const feat::ClipFeatures& cf, nn::Mode mode) {
    std::vector<double> globals(cf.globals.begin(), cf.globals.end());
    auto logits = model.forward(cf.sequence, feat::kTMax, globals, mode);
    auto probs = nn::softmax(logits);
    return nn::cross_entropy(probs, static_cast<std::size_t>(cf.label));
}

inline double mean_loss(nn::CnnLstmModel& model, const std::vector<feat::ClipFeatures>& set) {
    double sum = 0.0;
    for (const auto& cf : set) {
        sum += sample_loss(model, cf, nn::Mode::eval);
    }
    return sum / static_cast<double>(set.size());
}

}  // namespace detail

/// Seeded-shuffle mini-batch training with RMSprop. The final partial batch
/// is trained on. Records (train_loss, test_loss) per epoch and retains the
/// parameters of the best-test-loss epoch.
inline TrainRun train(nn::CnnLstmModel& model, const std::vector<feat::ClipFeatures>& train_set,
                      const std::vector<feat::ClipFeatures>& test_set, const TrainConfig& cfg) {
    TrainRun run;
    if (train_set.empty()) {
        throw DataError("train: empty training set");
    }
    Rng shuffle_rng(cfg.seed);
    nn::Rmsprop opt(cfg.optimizer);
    auto params = model.parameters();

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t n = std::min(cfg.batch, order.size() - start);
            model.zero_grads();
            double batch_loss = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const auto& cf = train_set[order[start + b]];
                std::vector<double> globals(cf.globals.begin(), cf.globals.end());
                auto logits = model.forward(cf.sequence, feat::kTMax, globals, nn::Mode::train);
                auto probs = nn::softmax(logits);
                batch_loss += nn::cross_entropy(probs, static_cast<std::size_t>(cf.label));
                auto grad = nn::softmax_ce_grad(probs, static_cast<std::size_t>(cf.label));
                for (auto& g : grad) g /= static_cast<double>(n);
                model.backward(grad);
            }
            if (!std::isfinite(batch_loss)) {
                throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch starting at sample " + std::to_string(start));
            }
            opt.step(params);
            epoch_loss += batch_loss;
        }
        const double train_loss = epoch_loss / static_cast<double>(train_set.size());
        const double test_loss =
            test_set.empty() ? train_loss : detail::mean_loss(model, test_set);
        run.loss_history.emplace_back(train_loss, test_loss);
        if (test_loss < run.best_test_loss) {
            run.best_test_loss = test_loss;
            run.best_epoch = epoch;
            run.best_params.clear();
            for (const auto& p : params) run.best_params.push_back(*p.value);
        }
    }
    return run;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
    ConfusionMatrix confusion;
    std::array<double, audio::kNumEmotions> class_accuracy{};
    double overall = 0.0;
};

inline EvalResult evaluate(nn::CnnLstmModel& model, const std::vector<feat::ClipFeatures>& test_set) {
    if (test_set.empty()) {
        throw EmptyTestSet("evaluate: test set is empty");
    }
    EvalResult res;
    for (const auto& cf : test_set) {
        std::vector<double> globals(cf.globals.begin(), cf.globals.end());
        auto logits = model.forward(cf.sequence, feat::kTMax, globals, nn::Mode::eval);
        res.confusion.add(cf.label, static_cast<audio::Emotion>(argmax_class(logits)));
    }
    for (std::size_t i = 0; i < audio::kNumEmotions; ++i) {
        res.class_accuracy[i] = res.confusion.class_accuracy(i);
    }
    res.overall = res.confusion.overall_accuracy();
    return res;
}

// ---------------------------------------------------------------------------
// Reports

inline void write_loss_csv(const TrainRun& run, std::ostream& out) {
    out << "epoch,train_loss,test_loss\n";
    char buf[64];
    for (std::size_t e = 0; e < run.loss_history.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e, run.loss_history[e].first,
                      run.loss_history[e].second);
        out << buf;
    }
}

inline void write_confusion_csv(const ConfusionMatrix& cm, std::ostream& out) {
    out << "true\\pred";
    for (int j = 0; j < audio::kNumEmotions; ++j) {
        out << ',' << audio::emotion_name(static_cast<audio::Emotion>(j));
    }
    out << '\n';
    for (int i = 0; i < audio::kNumEmotions; ++i) {
        out << audio::emotion_name(static_cast<audio::Emotion>(i));
        for (int j = 0; j < audio::kNumEmotions; ++j) {
            out << ',' << cm.counts[i][j];
        }
        out << '\n';
    }
}

/// Table layout: `class,accuracy` with one row per emotion plus `overall`.
inline void write_accuracy_csv(const ConfusionMatrix& cm, std::ostream& out) {
    out << "class,accuracy\n";
    char buf[64];
    for (int i = 0; i < audio::kNumEmotions; ++i) {
        std::snprintf(buf, sizeof(buf), "%s,%.4f\n",
                      audio::emotion_name(static_cast<audio::Emotion>(i)),
                      cm.class_accuracy(static_cast<std::size_t>(i)));
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "overall,%.4f\n", cm.overall_accuracy());
    out << buf;
}

inline void write_accuracy_table(const ConfusionMatrix& cm, std::ostream& out) {
    out << "Classification";
    for (int i = 0; i < audio::kNumEmotions; ++i) {
        out << '\t' << audio::emotion_name(static_cast<audio::Emotion>(i));
    }
    out << "\nMean Accuracy";
    char buf[32];
    for (int i = 0; i < audio::kNumEmotions; ++i) {
        std::snprintf(buf, sizeof(buf), "\t%.2f%%",
                      100.0 * cm.class_accuracy(static_cast<std::size_t>(i)));
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "\noverall\t%.2f%%\n", 100.0 * cm.overall_accuracy());
    out << buf;
}

}  // namespace serm::train
