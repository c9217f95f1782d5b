#pragma once

/**
 * Run configuration: JSON document with data/dsp/model/train sections.
 * Unknown keys are rejected; absent keys take defaults; the merged
 * document is echoed verbatim into run.json.
 */

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "serm/errors.hpp"
#include "serm/features.hpp"
#include "serm/model.hpp"
#include "serm/train_eval.hpp"

namespace serm::cli {

inline nlohmann::json default_config() {
    return {
        {"data",
         {{"roots", nlohmann::json::array()},
          {"canonical_rate", 22050},
          {"per_gender", true}}},
        {"dsp",
         {{"frame_len", 2048},
          {"hop", 1024},
          {"n_filters", 26},
          {"n_mfcc", 13},
          {"fmin", 0.0},
          {"fmax", 11025.0},
          {"flatness_hz", 10.0}}},
        {"model",
         {{"conv_filters", {64, 64, 128, 128}},
          {"kernel", 5},
          {"lstm_widths", {128, 64, 32}},
          {"dropout_cnn", 0.1},
          {"dropout_lstm", 0.2}}},
        {"train",
         {{"lr", 1e-5},
          {"decay", 1e-6},
          {"rho", 0.9},
          {"epsilon", 1e-8},
          {"epochs", 370},
          {"batch", 16},
          {"seed", 42},
          {"split_ratio", 0.8}}},
    };
}

namespace detail {

inline void merge_checked(nlohmann::json& base, const nlohmann::json& overlay,
                          const std::string& path) {
    if (!overlay.is_object()) {
        throw ConfigError("config: expected an object at " + (path.empty() ? "root" : path));
    }
    for (auto& [key, value] : overlay.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        if (!base.contains(key)) {
            throw ConfigError("config: unknown key: " + here);
        }
        if (base[key].is_object() && !base[key].empty()) {
            merge_checked(base[key], value, here);
        } else {
            base[key] = value;
        }
    }
}

}  // namespace detail

/// Defaults overlaid with an optional config file and `--set key=value`
/// overrides (dotted paths, values parsed as JSON, falling back to string).
inline nlohmann::json load_config(const std::string& config_path,
                                  const std::vector<std::string>& overrides) {
    nlohmann::json cfg = default_config();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
            throw ConfigError("config: cannot open file: " + config_path);
        }
        nlohmann::json file_cfg;
        try {
            in >> file_cfg;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config: parse error in " + config_path + ": " + e.what());
        }
        detail::merge_checked(cfg, file_cfg, "");
    }
    for (const auto& kv : overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got: " + kv);
        }
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
        if (value.is_discarded()) {
            value = raw;  // plain string
        }
        nlohmann::json* node = &cfg;
        std::size_t start = 0;
        while (true) {
            const std::size_t dot = key.find('.', start);
            const std::string part =
                key.substr(start, dot == std::string::npos ? dot : dot - start);
            if (!node->contains(part)) {
                throw ConfigError("config: unknown key: " + key);
            }
            if (dot == std::string::npos) {
                (*node)[part] = value;
                break;
            }
            node = &(*node)[part];
            start = dot + 1;
        }
    }
    return cfg;
}

inline feat::DspParams dsp_params_from(const nlohmann::json& cfg) {
    const auto& d = cfg.at("dsp");
    feat::DspParams p;
    p.frame_len = d.at("frame_len").get<std::size_t>();
    p.hop = d.at("hop").get<std::size_t>();
    p.n_filters = d.at("n_filters").get<std::size_t>();
    p.n_mfcc = d.at("n_mfcc").get<std::size_t>();
    p.fmin = d.at("fmin").get<double>();
    p.fmax = d.at("fmax").get<double>();
    p.flatness_hz = d.at("flatness_hz").get<double>();
    if (p.n_mfcc != feat::kNumMfcc) {
        throw ConfigError("config: n_mfcc must be " + std::to_string(feat::kNumMfcc) +
                          " (fixed channel layout)");
    }
    return p;
}

inline nn::ModelConfig model_config_from(const nlohmann::json& cfg) {
    const auto& m = cfg.at("model");
    nn::ModelConfig mc;
    mc.conv_filters = m.at("conv_filters").get<std::vector<std::size_t>>();
    mc.kernel = m.at("kernel").get<std::size_t>();
    mc.lstm_widths = m.at("lstm_widths").get<std::vector<std::size_t>>();
    mc.dropout_cnn = m.at("dropout_cnn").get<double>();
    mc.dropout_lstm = m.at("dropout_lstm").get<double>();
    mc.seed = cfg.at("train").at("seed").get<std::uint64_t>();
    return mc;
}

inline train::TrainConfig train_config_from(const nlohmann::json& cfg) {
    const auto& t = cfg.at("train");
    train::TrainConfig tc;
    tc.epochs = t.at("epochs").get<std::size_t>();
    tc.batch = t.at("batch").get<std::size_t>();
    tc.seed = t.at("seed").get<std::uint64_t>();
    tc.optimizer.lr = t.at("lr").get<double>();
    tc.optimizer.decay = t.at("decay").get<double>();
    tc.optimizer.rho = t.at("rho").get<double>();
    tc.optimizer.epsilon = t.at("epsilon").get<double>();
    if (tc.batch == 0) {
        throw ConfigError("config: train.batch must be positive");
    }
    return tc;
}

}  // namespace serm::cli
