// serm: speech-emotion-recognition pipeline driver.
// Subcommands: manifest, extract, train, eval, predict.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "serm/audio_io.hpp"
#include "serm/config.hpp"
#include "serm/dsp.hpp"
#include "serm/errors.hpp"
#include "serm/features.hpp"
#include "serm/model.hpp"
#include "serm/train_eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kExpectedFullDatasetEntries = 2459;

serm::feat::DspParams dsp_params_from_json(const json& d) {
    serm::feat::DspParams p;
    p.frame_len = d.at("frame_len").get<std::size_t>();
    p.hop = d.at("hop").get<std::size_t>();
    p.n_filters = d.at("n_filters").get<std::size_t>();
    p.n_mfcc = d.at("n_mfcc").get<std::size_t>();
    p.fmin = d.at("fmin").get<double>();
    p.fmax = d.at("fmax").get<double>();
    p.flatness_hz = d.at("flatness_hz").get<double>();
    return p;
}

json dsp_params_to_json(const serm::feat::DspParams& p) {
    return {{"frame_len", p.frame_len}, {"hop", p.hop},     {"n_filters", p.n_filters},
            {"n_mfcc", p.n_mfcc},       {"fmin", p.fmin},   {"fmax", p.fmax},
            {"flatness_hz", p.flatness_hz}};
}

void write_text_file(const fs::path& path, const std::function<void(std::ostream&)>& fn) {
    std::ofstream out(path);
    if (!out) {
        throw serm::DataError("cannot write: " + path.string());
    }
    fn(out);
}

int cmd_manifest(const std::vector<std::string>& roots, const std::string& out_path) {
    auto manifest = serm::audio::build_manifest(roots);
    write_text_file(out_path, [&](std::ostream& out) {
        serm::audio::write_manifest_csv(manifest, out);
    });
    std::cout << "entries: " << manifest.entries.size() << " (expected "
              << kExpectedFullDatasetEntries << ")\n";
    if (manifest.skipped_calm > 0) {
        std::cout << "skipped calm files: " << manifest.skipped_calm << "\n";
    }
    if (manifest.skipped_unrecognized > 0) {
        std::cout << "warning: unrecognized filenames skipped: "
                  << manifest.skipped_unrecognized << "\n";
    }
    return 0;
}

int cmd_extract(const std::string& manifest_path, const std::string& out_path, const json& cfg,
                unsigned jobs, const std::string& debug_dir, std::size_t select_k,
                const std::string& selection_report) {
    serm::audio::Manifest manifest;
    {
        std::ifstream in(manifest_path);
        if (!in) {
            throw serm::DataError("cannot open manifest: " + manifest_path);
        }
        manifest = serm::audio::read_manifest_csv(in);
    }
    const auto params = serm::cli::dsp_params_from(cfg);
    const int canonical_rate = cfg.at("data").at("canonical_rate").get<int>();

    const std::size_t n = manifest.entries.size();
    std::vector<serm::feat::ClipFeatures> clips(n);
    std::vector<std::string> errors(n);
    std::atomic<std::size_t> next{0};

    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            const auto& e = manifest.entries[i];
            try {
                auto clip = serm::audio::load_wav(e.path);
                clip = serm::audio::resample_linear(clip, canonical_rate);
                clips[i] = serm::feat::assemble(clip, e.emotion, e.gender, params);
                if (!debug_dir.empty()) {
                    auto frames = serm::dsp::frame_signal(clip, params.frame_len, params.hop);
                    auto spectra = serm::dsp::power_spectra(frames);
                    const std::string stem = fs::path(e.path).stem().string();
                    write_text_file(fs::path(debug_dir) / (stem + "_spectrogram.csv"),
                                    [&](std::ostream& out) {
                                        out << "frame,bin,value\n";
                                        for (std::size_t f = 0; f < spectra.n_frames; ++f) {
                                            auto row = spectra.row(f);
                                            for (std::size_t b = 0; b < row.size(); ++b) {
                                                out << f << ',' << b << ',' << row[b] << '\n';
                                            }
                                        }
                                    });
                    write_text_file(fs::path(debug_dir) / (stem + "_waveplot.csv"),
                                    [&](std::ostream& out) {
                                        out << "sample,value\n";
                                        for (std::size_t s = 0; s < clip.samples.size(); ++s) {
                                            out << s << ',' << clip.samples[s] << '\n';
                                        }
                                    });
                }
            } catch (const std::exception& ex) {
                errors[i] = e.path + ": " + ex.what();
            }
        }
    };

    if (!debug_dir.empty()) {
        fs::create_directories(debug_dir);
    }
    const unsigned n_threads = std::max(1u, jobs);
    std::vector<std::thread> threads;
    for (unsigned t = 1; t < n_threads; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();

    for (const auto& err : errors) {
        if (!err.empty()) {
            throw serm::DataError("extraction failed for " + err);
        }
    }

    auto matrix = serm::feat::to_matrix(clips);
    write_text_file(out_path, [&](std::ostream& out) {
        serm::feat::write_features_csv(matrix, out);
    });
    std::cout << "features: " << matrix.n << " rows x " << matrix.dim << " columns -> "
              << out_path << "\n";

    if (!selection_report.empty()) {
        auto scores = serm::feat::fisher_score(matrix);
        auto report = serm::feat::select_top_k(scores, std::min(select_k, scores.size()));
        write_text_file(selection_report, [&](std::ostream& out) {
            out << "rank,column,score\n";
            for (std::size_t r = 0; r < report.selected.size(); ++r) {
                const std::size_t j = report.selected[r];
                out << r << ',' << matrix.column_names[j] << ',' << scores[j] << '\n';
            }
        });
        std::cout << "selection report: top " << report.k << " -> " << selection_report << "\n";
    }
    return 0;
}

struct GroupArtifacts {
    serm::train::ConfusionMatrix confusion;
    bool evaluated = false;
};

GroupArtifacts train_one_group(const serm::feat::FeatureMatrix& matrix,
                               const std::vector<std::size_t>& group_indices,
                               const std::string& gender_tag, const json& cfg,
                               const fs::path& out_dir) {
    const double ratio = cfg.at("train").at("split_ratio").get<double>();
    auto tc = serm::cli::train_config_from(cfg);
    auto mc = serm::cli::model_config_from(cfg);

    std::vector<serm::audio::Emotion> labels;
    for (std::size_t i : group_indices) labels.push_back(matrix.labels[i]);
    auto plan = serm::train::split(labels, ratio, tc.seed);

    auto take = [&](const std::vector<std::size_t>& local) {
        serm::feat::FeatureMatrix sub;
        sub.dim = matrix.dim;
        sub.column_names = matrix.column_names;
        for (std::size_t li : local) {
            const std::size_t i = group_indices[li];
            auto r = matrix.row(i);
            sub.rows.insert(sub.rows.end(), r.begin(), r.end());
            sub.labels.push_back(matrix.labels[i]);
            sub.genders.push_back(matrix.genders[i]);
            ++sub.n;
        }
        return sub;
    };
    auto train_m = take(plan.train_indices);
    auto test_m = take(plan.test_indices);

    auto nz = serm::feat::fit_normalizer(train_m);
    nz.apply(train_m);
    nz.apply(test_m);

    std::vector<serm::feat::ClipFeatures> train_set, test_set;
    for (std::size_t i = 0; i < train_m.n; ++i) train_set.push_back(serm::feat::from_row(train_m, i));
    for (std::size_t i = 0; i < test_m.n; ++i) test_set.push_back(serm::feat::from_row(test_m, i));

    serm::nn::CnnLstmModel model(mc);
    auto run = serm::train::train(model, train_set, test_set, tc);

    fs::create_directories(out_dir);
    write_text_file(out_dir / "loss.csv", [&](std::ostream& out) {
        serm::train::write_loss_csv(run, out);
    });

    json extra = {{"gender", gender_tag},
                  {"dsp", cfg.at("dsp")},
                  {"canonical_rate", cfg.at("data").at("canonical_rate")}};
    auto add_norm = [&](serm::nn::Checkpoint& ckpt) {
        serm::nn::Tensor mean = serm::nn::Tensor::zeros({nz.means.size()});
        serm::nn::Tensor std_t = serm::nn::Tensor::zeros({nz.stds.size()});
        mean.data = nz.means;
        std_t.data = nz.stds;
        ckpt.tensors.emplace_back("norm/mean", std::move(mean));
        ckpt.tensors.emplace_back("norm/std", std::move(std_t));
    };

    auto final_ckpt = serm::nn::model_to_checkpoint(model, extra);
    add_norm(final_ckpt);
    serm::nn::save_checkpoint((out_dir / "model.ckpt").string(), final_ckpt);

    // best-test-loss parameters, when any epoch completed
    if (!run.best_params.empty()) {
        auto params = model.parameters();
        std::vector<serm::nn::Tensor> final_values;
        for (const auto& p : params) final_values.push_back(*p.value);
        for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = run.best_params[i];
        auto best_ckpt = serm::nn::model_to_checkpoint(model, extra);
        add_norm(best_ckpt);
        serm::nn::save_checkpoint((out_dir / "best.ckpt").string(), best_ckpt);
        for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = final_values[i];
    }

    GroupArtifacts art;
    if (!test_set.empty()) {
        auto eval = serm::train::evaluate(model, test_set);
        art.confusion = eval.confusion;
        art.evaluated = true;
        write_text_file(out_dir / "confusion.csv", [&](std::ostream& out) {
            serm::train::write_confusion_csv(eval.confusion, out);
        });
        write_text_file(out_dir / "accuracy.csv", [&](std::ostream& out) {
            serm::train::write_accuracy_csv(eval.confusion, out);
        });
    }
    return art;
}

int cmd_train(const std::string& features_path, const std::string& out_dir, const json& cfg) {
    serm::feat::FeatureMatrix matrix;
    {
        std::ifstream in(features_path);
        if (!in) {
            throw serm::DataError("cannot open features: " + features_path);
        }
        matrix = serm::feat::read_features_csv(in);
    }
    if (matrix.n == 0) {
        throw serm::DataError("features file has no rows: " + features_path);
    }
    const bool per_gender = cfg.at("data").at("per_gender").get<bool>();
    fs::create_directories(out_dir);

    serm::train::ConfusionMatrix combined;
    bool any_eval = false;
    if (per_gender) {
        for (auto gender : {serm::audio::Gender::male, serm::audio::Gender::female}) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < matrix.n; ++i) {
                if (matrix.genders[i] == gender) idx.push_back(i);
            }
            if (idx.empty()) continue;
            const std::string tag = serm::audio::gender_name(gender);
            auto art = train_one_group(matrix, idx, tag, cfg, fs::path(out_dir) / tag);
            if (art.evaluated) {
                combined.merge(art.confusion);
                any_eval = true;
            }
        }
    } else {
        std::vector<std::size_t> idx(matrix.n);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        auto art = train_one_group(matrix, idx, "pooled", cfg, out_dir);
        combined = art.confusion;
        any_eval = art.evaluated;
    }

    if (any_eval) {
        write_text_file(fs::path(out_dir) / "confusion.csv", [&](std::ostream& out) {
            serm::train::write_confusion_csv(combined, out);
        });
        write_text_file(fs::path(out_dir) / "accuracy.csv", [&](std::ostream& out) {
            serm::train::write_accuracy_csv(combined, out);
        });
        write_text_file(fs::path(out_dir) / "accuracy.txt", [&](std::ostream& out) {
            serm::train::write_accuracy_table(combined, out);
        });
        std::cout << "overall accuracy: " << combined.overall_accuracy() << "\n";
    }
    write_text_file(fs::path(out_dir) / "run.json", [&](std::ostream& out) {
        out << cfg.dump(2) << "\n";
    });
    return 0;
}

void normalize_in_place(serm::feat::FeatureMatrix& m, const serm::nn::Checkpoint& ckpt) {
    const auto* mean = ckpt.find("norm/mean");
    const auto* std_t = ckpt.find("norm/std");
    if (mean == nullptr || std_t == nullptr || mean->size() != m.dim) {
        throw serm::DataError("checkpoint lacks matching normalization tensors");
    }
    serm::feat::Normalizer nz{mean->data, std_t->data};
    nz.apply(m);
}

int cmd_eval(const std::string& features_path, const std::string& ckpt_path,
             const std::string& out_dir) {
    auto ckpt = serm::nn::load_checkpoint(ckpt_path);
    auto model = serm::nn::model_from_checkpoint(ckpt);

    serm::feat::FeatureMatrix matrix;
    {
        std::ifstream in(features_path);
        if (!in) {
            throw serm::DataError("cannot open features: " + features_path);
        }
        matrix = serm::feat::read_features_csv(in);
    }
    const std::string gender_tag = ckpt.config.value("gender", "pooled");
    std::vector<serm::feat::ClipFeatures> test_set;
    normalize_in_place(matrix, ckpt);
    for (std::size_t i = 0; i < matrix.n; ++i) {
        if (gender_tag != "pooled" &&
            gender_tag != serm::audio::gender_name(matrix.genders[i])) {
            continue;
        }
        test_set.push_back(serm::feat::from_row(matrix, i));
    }
    auto eval = serm::train::evaluate(model, test_set);

    fs::create_directories(out_dir);
    write_text_file(fs::path(out_dir) / "confusion.csv", [&](std::ostream& out) {
        serm::train::write_confusion_csv(eval.confusion, out);
    });
    write_text_file(fs::path(out_dir) / "accuracy.csv", [&](std::ostream& out) {
        serm::train::write_accuracy_csv(eval.confusion, out);
    });
    std::cout << "overall accuracy: " << eval.overall << "\n";
    return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::vector<std::string>& wavs) {
    auto ckpt = serm::nn::load_checkpoint(ckpt_path);
    auto model = serm::nn::model_from_checkpoint(ckpt);
    const auto params = dsp_params_from_json(ckpt.config.at("dsp"));
    const int rate = ckpt.config.at("canonical_rate").get<int>();
    const auto* mean = ckpt.find("norm/mean");
    const auto* std_t = ckpt.find("norm/std");
    if (mean == nullptr || std_t == nullptr) {
        throw serm::DataError("checkpoint lacks normalization tensors");
    }

    for (const auto& path : wavs) {
        auto clip = serm::audio::load_wav(path);
        clip = serm::audio::resample_linear(clip, rate);
        auto cf = serm::feat::assemble(clip, serm::audio::Emotion::anger,
                                       serm::audio::Gender::male, params);
        auto flat = serm::feat::flatten(cf);
        if (flat.size() != mean->size()) {
            throw serm::DataError("feature width does not match checkpoint normalizer");
        }
        for (std::size_t j = 0; j < flat.size(); ++j) {
            flat[j] = (flat[j] - mean->data[j]) / std_t->data[j];
        }
        std::vector<double> seq(flat.begin(),
                                flat.begin() + serm::feat::kTMax * serm::feat::kChannels);
        std::vector<double> globals(flat.end() - serm::feat::kNumGlobals, flat.end());
        auto logits = model.forward(seq, serm::feat::kTMax, globals, serm::nn::Mode::eval);
        auto probs = serm::nn::softmax(logits);
        const std::size_t cls = serm::train::argmax_class(logits);
        std::printf("%s,%s,%.4f\n", path.c_str(),
                    serm::audio::emotion_name(static_cast<serm::audio::Emotion>(cls)),
                    probs[cls]);
    }
    return 0;
}

std::string config_help() {
    return "Config keys and defaults:\n" + serm::cli::default_config().dump(2);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"serm: speech emotion recognition pipeline"};
    app.require_subcommand(1);
    app.footer(config_help());

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "JSON config file")->capture_default_str();
    app.add_option("--set", overrides, "override config keys, e.g. --set train.epochs=10");

    // manifest
    auto* sub_manifest = app.add_subcommand("manifest", "scan dataset trees into a manifest CSV");
    std::vector<std::string> roots;
    std::string manifest_out = "manifest.csv";
    sub_manifest->add_option("roots", roots, "dataset root directories")->required();
    sub_manifest->add_option("--out", manifest_out, "output CSV path")->capture_default_str();

    // extract
    auto* sub_extract = app.add_subcommand("extract", "extract features for a manifest");
    std::string extract_manifest, extract_out = "features.csv", debug_dir, selection_report;
    unsigned jobs = 1;
    std::size_t select_k = 100;
    sub_extract->add_option("--manifest", extract_manifest, "manifest CSV")->required();
    sub_extract->add_option("--out", extract_out, "output features CSV")->capture_default_str();
    sub_extract->add_option("--jobs", jobs, "extraction threads")->capture_default_str();
    sub_extract->add_option("--debug-spectrogram", debug_dir,
                            "directory for per-clip spectrogram/waveplot CSV dumps");
    sub_extract->add_option("--selection-report", selection_report,
                            "write a Fisher-score selection report CSV");
    sub_extract->add_option("--select-k", select_k, "columns in the selection report")
        ->capture_default_str();

    // train
    auto* sub_train = app.add_subcommand("train", "train the CNN-LSTM on extracted features");
    std::string train_features, train_out = "run";
    sub_train->add_option("--features", train_features, "features CSV")->required();
    sub_train->add_option("--out-dir", train_out, "run directory")->capture_default_str();

    // eval
    auto* sub_eval = app.add_subcommand("eval", "evaluate a checkpoint on a features CSV");
    std::string eval_features, eval_ckpt, eval_out = "eval";
    sub_eval->add_option("--features", eval_features, "features CSV")->required();
    sub_eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    sub_eval->add_option("--out-dir", eval_out, "output directory")->capture_default_str();

    // predict
    auto* sub_predict = app.add_subcommand("predict", "classify WAV files end-to-end");
    std::string predict_ckpt;
    std::vector<std::string> predict_wavs;
    sub_predict->add_option("--checkpoint", predict_ckpt, "model checkpoint")->required();
    sub_predict->add_option("wavs", predict_wavs, "input WAV files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        const json cfg = serm::cli::load_config(config_path, overrides);
        if (sub_manifest->parsed()) {
            return cmd_manifest(roots, manifest_out);
        }
        if (sub_extract->parsed()) {
            return cmd_extract(extract_manifest, extract_out, cfg, jobs, debug_dir, select_k,
                               selection_report.empty() ? "" : selection_report);
        }
        if (sub_train->parsed()) {
            return cmd_train(train_features, train_out, cfg);
        }
        if (sub_eval->parsed()) {
            return cmd_eval(eval_features, eval_ckpt, eval_out);
        }
        if (sub_predict->parsed()) {
            return cmd_predict(predict_ckpt, predict_wavs);
        }
    } catch (const serm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const serm::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const serm::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
