#pragma once

/**
 * The CNN-LSTM classifier: stacked 1-D convolutions with pooling and
 * dropout, three LSTM layers, and a dense head fed by the last hidden
 * state concatenated with the whole-signal global features.
 * Includes the binary checkpoint format (magic "SERM1").
 */

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "serm/errors.hpp"
#include "serm/nn.hpp"
#include "serm/rng.hpp"
#include "serm/tensor.hpp"

namespace serm::nn {

struct ModelConfig {
    std::vector<std::size_t> conv_filters{64, 64, 128, 128};
    std::size_t kernel = 5;
    std::vector<std::size_t> lstm_widths{128, 64, 32};
    double dropout_cnn = 0.1;
    double dropout_lstm = 0.2;
    std::size_t in_channels = 21;
    std::size_t n_globals = 10;
    std::size_t n_classes = 7;
    std::uint64_t seed = 42;

    nlohmann::json to_json() const {
        return {{"conv_filters", conv_filters}, {"kernel", kernel},
                {"lstm_widths", lstm_widths},   {"dropout_cnn", dropout_cnn},
                {"dropout_lstm", dropout_lstm}, {"in_channels", in_channels},
                {"n_globals", n_globals},       {"n_classes", n_classes},
                {"seed", seed}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.conv_filters = j.at("conv_filters").get<std::vector<std::size_t>>();
        c.kernel = j.at("kernel").get<std::size_t>();
        c.lstm_widths = j.at("lstm_widths").get<std::vector<std::size_t>>();
        c.dropout_cnn = j.at("dropout_cnn").get<double>();
        c.dropout_lstm = j.at("dropout_lstm").get<double>();
        c.in_channels = j.at("in_channels").get<std::size_t>();
        c.n_globals = j.at("n_globals").get<std::size_t>();
        c.n_classes = j.at("n_classes").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
        return c;
    }
};

class CnnLstmModel {
public:
    explicit CnnLstmModel(const ModelConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
        if (cfg.conv_filters.empty() || cfg.lstm_widths.empty()) {
            throw ConfigError("model: need at least one conv and one LSTM layer");
        }
        std::size_t c = cfg.in_channels;
        for (std::size_t f : cfg.conv_filters) {
            convs_.emplace_back(std::make_unique<Conv1D>(c, f, cfg.kernel));
            relus_.emplace_back();
            drops_cnn_.emplace_back(cfg.dropout_cnn);
            c = f;
        }
        pools_.resize(convs_.size() / 2);
        for (std::size_t h : cfg.lstm_widths) {
            lstms_.emplace_back(std::make_unique<Lstm>(c, h));
            drops_lstm_.emplace_back(cfg.dropout_lstm);
            c = h;
        }
        head_ = std::make_unique<Dense>(c + cfg.n_globals, cfg.n_classes);
        init();
    }

    void init() {
        rng_ = Rng(cfg_.seed);
        for (auto& conv : convs_) conv->init(rng_);
        for (auto& lstm : lstms_) lstm->init(rng_);
        head_->init(rng_);
    }

    const ModelConfig& config() const { return cfg_; }

    std::vector<ParamRef> parameters() {
        std::vector<ParamRef> out;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            convs_[i]->collect_params("conv" + std::to_string(i), out);
        }
        for (std::size_t i = 0; i < lstms_.size(); ++i) {
            lstms_[i]->collect_params("lstm" + std::to_string(i), out);
        }
        head_->collect_params("head", out);
        return out;
    }

    void zero_grads() {
        for (auto& p : parameters()) p.grad->fill(0.0);
    }

    /// sequence: [t_len x in_channels]; returns raw logits [n_classes].
    std::vector<double> forward(const std::vector<double>& sequence, std::size_t t_len,
                                const std::vector<double>& globals, Mode mode) {
        if (globals.size() != cfg_.n_globals) {
            throw DimensionMismatch("model: globals size mismatch");
        }
        t_lens_.clear();
        std::vector<double> cur = sequence;
        std::size_t t = t_len;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            cur = convs_[i]->forward(cur, t);
            cur = relus_[i].forward(cur);
            cur = drops_cnn_[i].forward(cur, mode, rng_);
            if (i % 2 == 1) {
                t_lens_.push_back(t);
                cur = pools_[i / 2].forward(cur, t, convs_[i]->out_channels());
                t = MaxPool1D::out_len(t);
            }
        }
        for (std::size_t i = 0; i < lstms_.size(); ++i) {
            cur = lstms_[i]->forward(cur, t);
            cur = drops_lstm_[i].forward(cur, mode, rng_);
        }
        t_final_ = t;
        const std::size_t h = lstms_.back()->hidden();
        head_in_.assign(cur.end() - static_cast<std::ptrdiff_t>(h), cur.end());
        head_in_.insert(head_in_.end(), globals.begin(), globals.end());
        return head_->forward(head_in_);
    }

    /// Accumulates parameter gradients from the logit gradient of the most
    /// recent forward pass. Gradients wrt the global features are discarded.
    void backward(const std::vector<double>& grad_logits) {
        std::vector<double> g = head_->backward(grad_logits);
        const std::size_t h = lstms_.back()->hidden();

        // upstream gradient on the LSTM output: only the last time step
        std::vector<double> gseq(t_final_ * h, 0.0);
        std::copy(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(h),
                  gseq.end() - static_cast<std::ptrdiff_t>(h));

        for (std::size_t i = lstms_.size(); i-- > 0;) {
            gseq = drops_lstm_[i].backward(gseq);
            gseq = lstms_[i]->backward(gseq);
        }
        for (std::size_t i = convs_.size(); i-- > 0;) {
            if (i % 2 == 1) {
                gseq = pools_[i / 2].backward(gseq);
            }
            gseq = drops_cnn_[i].backward(gseq);
            gseq = relus_[i].backward(gseq);
            gseq = convs_[i]->backward(gseq);
        }
    }

private:
    ModelConfig cfg_;
    Rng rng_;
    std::vector<std::unique_ptr<Conv1D>> convs_;
    std::vector<Relu> relus_;
    std::vector<Dropout> drops_cnn_;
    std::vector<MaxPool1D> pools_;
    std::vector<std::unique_ptr<Lstm>> lstms_;
    std::vector<Dropout> drops_lstm_;
    std::unique_ptr<Dense> head_;
    std::vector<double> head_in_;
    std::vector<std::size_t> t_lens_;
    std::size_t t_final_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint format: magic "SERM1", length-prefixed config JSON, then named
// tensors as little-endian u32/u64 sizes and raw 64-bit float data.

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

inline std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

}  // namespace detail

struct Checkpoint {
    nlohmann::json config;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : tensors) {
            if (n == name) return &t;
        }
        return nullptr;
    }
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write checkpoint: " + path);
    }
    out.write("SERM1", 5);
    const std::string cfg = ckpt.config.dump();
    detail::write_u32(out, static_cast<std::uint32_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    detail::write_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) detail::write_u64(out, d);
        static_assert(sizeof(double) == 8);
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * 8));
    }
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot read checkpoint: " + path);
    }
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, "SERM1", 5) != 0) {
        throw DataError("bad checkpoint magic: " + path);
    }
    Checkpoint ckpt;
    const std::uint32_t cfg_len = detail::read_u32(in);
    std::string cfg(cfg_len, '\0');
    in.read(cfg.data(), cfg_len);
    ckpt.config = nlohmann::json::parse(cfg);
    const std::uint32_t n = detail::read_u32(in);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t name_len = detail::read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const std::uint32_t ndim = detail::read_u32(in);
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = static_cast<std::size_t>(detail::read_u64(in));
        Tensor t = Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * 8));
        if (!in) {
            throw DataError("truncated checkpoint: " + path);
        }
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

/// Copies the model's parameters (and optional extras) into a checkpoint.
inline Checkpoint model_to_checkpoint(CnnLstmModel& model, nlohmann::json extra_config = {}) {
    Checkpoint ckpt;
    ckpt.config = model.config().to_json();
    if (!extra_config.is_null()) {
        for (auto& [k, v] : extra_config.items()) {
            ckpt.config[k] = v;
        }
    }
    for (const auto& p : model.parameters()) {
        ckpt.tensors.emplace_back(p.name, *p.value);
    }
    return ckpt;
}

/// Rebuilds a model from a checkpoint; throws on missing or misshaped tensors.
inline CnnLstmModel model_from_checkpoint(const Checkpoint& ckpt) {
    CnnLstmModel model(ModelConfig::from_json(ckpt.config));
    for (auto& p : model.parameters()) {
        const Tensor* t = ckpt.find(p.name);
        if (t == nullptr || t->shape != p.value->shape) {
            throw DataError("checkpoint missing or misshaped tensor: " + p.name);
        }
        *p.value = *t;
    }
    return model;
}

}  // namespace serm::nn
