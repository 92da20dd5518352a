#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "mgd/checkpoint.hpp"
#include "mgd/config.hpp"
#include "mgd/csv.hpp"
#include "mgd/dataset.hpp"
#include "mgd/guidance.hpp"
#include "mgd/metrics.hpp"
#include "mgd/minority.hpp"
#include "mgd/net.hpp"
#include "mgd/schedule.hpp"
#include "mgd/score.hpp"

namespace mgd {

// Stage seeds are derived from the run seed with fixed tags, so stages can
// be rerun individually without disturbing each other.
enum : std::uint64_t {
    kSeedSynth = 101,
    kSeedTrainScore = 102,
    kSeedMinority = 103,
    kSeedClassifier = 104,
    kSeedSample = 105
};

inline NoiseSchedule schedule_from(const ExperimentConfig& cfg) {
    return build_schedule(cfg.schedule_steps, cfg.beta_start, cfg.beta_end);
}

inline GmmSpec gmm_from(const ExperimentConfig& cfg) {
    GmmSpec spec;
    spec.components = cfg.dataset_components;
    return spec;
}

// Minibatch DSM training loop for the noise predictor.
inline DenseNet train_eps_net(const SampleBatch& data, const NoiseSchedule& sched,
                              const std::vector<int>& hidden, int steps, int batch_size,
                              double lr, std::uint64_t seed,
                              int tf_width = kTimeFeatureWidth) {
    check(!data.points.empty(), "train_eps_net: empty dataset");
    Rng rng(seed);
    std::vector<int> widths;
    widths.push_back(data.dim + tf_width);
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(data.dim);
    DenseNet net = make_net(widths, rng);
    OptimizerState opt = make_optimizer(net, lr);
    int n = static_cast<int>(data.points.size());
    for (int step = 0; step < steps; ++step) {
        SampleBatch mini;
        mini.dim = data.dim;
        int bs = std::min(batch_size, n);
        mini.points.reserve(bs);
        for (int i = 0; i < bs; ++i)
            mini.points.push_back(data.points[rng.uniform_int(0, n - 1)]);
        auto [loss, grads] =
            dsm_loss_and_grads(net, mini, sched, derive_seed(seed, 1000 + step), tf_width);
        (void)loss;
        optimizer_step(net, opt, grads);
    }
    return net;
}

namespace detail {

inline std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

inline CsvTable batch_to_table(const SampleBatch& batch) {
    CsvTable t;
    for (int j = 0; j < batch.dim; ++j) t.header.push_back("x" + std::to_string(j));
    for (const auto& p : batch.points) t.rows.push_back(p);
    return t;
}

inline SampleBatch table_to_batch(const CsvTable& t) {
    SampleBatch b;
    b.dim = static_cast<int>(t.header.size());
    for (const auto& row : t.rows) b.points.push_back(row);
    return b;
}

inline std::string scale_tag(double w) {
    std::string s = format_double(w);
    for (char& c : s)
        if (c == '.' || c == '-' || c == '+') c = '_';
    return s;
}

}  // namespace detail

inline void stage_synth(const ExperimentConfig& cfg, const std::string& out) {
    auto ds = synth_dataset(gmm_from(cfg), cfg.dataset_n, derive_seed(cfg.seed, kSeedSynth));
    emit_csv(detail::batch_to_table(ds.data), detail::join_path(out, "dataset.csv"));
    CsvTable labels;
    labels.header = {"mode"};
    for (int m : ds.mode_labels) labels.rows.push_back({static_cast<double>(m)});
    emit_csv(labels, detail::join_path(out, "mode_labels.csv"));
}

inline SampleBatch load_dataset(const std::string& out) {
    return detail::table_to_batch(parse_csv(detail::join_path(out, "dataset.csv")));
}

inline void stage_train_score(const ExperimentConfig& cfg, const std::string& out) {
    if (cfg.score_provider != "network") return;  // oracle provider needs no training
    NoiseSchedule sched = schedule_from(cfg);
    SampleBatch data = load_dataset(out);
    DenseNet net = train_eps_net(data, sched, cfg.net_hidden, cfg.train_score_steps,
                                 cfg.train_score_batch, cfg.train_score_lr,
                                 derive_seed(cfg.seed, kSeedTrainScore));
    save_checkpoint(detail::join_path(out, "eps_net.ckpt"), net, CheckpointRole::EpsNet, sched);
}

inline std::unique_ptr<ScoreProvider> make_provider(const ExperimentConfig& cfg,
                                                    const NoiseSchedule& sched,
                                                    const std::string& out) {
    SampleBatch data = load_dataset(out);
    if (cfg.score_provider == "oracle")
        return std::make_unique<EmpiricalScoreProvider>(std::move(data), sched);
    DenseNet net =
        load_checkpoint(detail::join_path(out, "eps_net.ckpt"), CheckpointRole::EpsNet, sched);
    return std::make_unique<NetworkScoreProvider>(std::move(net), sched);
}

inline void stage_score_minority(const ExperimentConfig& cfg, const std::string& out) {
    NoiseSchedule sched = schedule_from(cfg);
    SampleBatch data = load_dataset(out);
    auto provider = make_provider(cfg, sched, out);
    Vec scores = minority_scores(data, *provider, sched, cfg.minority_t(),
                                 cfg.minority_draws, cfg.minority_distance,
                                 derive_seed(cfg.seed, kSeedMinority));
    CsvTable t;
    t.header = {"index", "raw_score"};
    for (std::size_t i = 0; i < scores.size(); ++i)
        t.rows.push_back({static_cast<double>(i), scores[i]});
    emit_csv(t, detail::join_path(out, "minority_scores.csv"));
}

inline void stage_bin(const ExperimentConfig& cfg, const std::string& out) {
    CsvTable t = parse_csv(detail::join_path(out, "minority_scores.csv"));
    Vec scores;
    for (const auto& row : t.rows) scores.push_back(row[1]);
    auto [bins, labels] = quantile_bins(scores, cfg.minority_classes);
    CsvTable recs;
    recs.header = {"index", "raw_score", "ordinal_class"};
    for (std::size_t i = 0; i < scores.size(); ++i)
        recs.rows.push_back({static_cast<double>(i), scores[i],
                             static_cast<double>(labels[i])});
    emit_csv(recs, detail::join_path(out, "minority_records.csv"));
    CsvTable bt;
    bt.header = {"class", "representative", "upper_edge"};
    for (int c = 0; c < bins.class_count; ++c) {
        double edge = c + 1 < bins.class_count ? bins.edges[c]
                                               : std::numeric_limits<double>::infinity();
        bt.rows.push_back({static_cast<double>(c), bins.representatives[c], edge});
    }
    emit_csv(bt, detail::join_path(out, "binning.csv"));
}

inline std::pair<OrdinalBinning, std::vector<MinorityRecord>> load_binning(
    const std::string& out) {
    CsvTable bt = parse_csv(detail::join_path(out, "binning.csv"));
    OrdinalBinning bins;
    bins.class_count = static_cast<int>(bt.rows.size());
    for (const auto& row : bt.rows) {
        bins.representatives.push_back(row[1]);
        if (std::isfinite(row[2])) bins.edges.push_back(row[2]);
    }
    CsvTable rt = parse_csv(detail::join_path(out, "minority_records.csv"));
    std::vector<MinorityRecord> recs;
    for (const auto& row : rt.rows)
        recs.push_back({static_cast<int>(row[0]), row[1], static_cast<int>(row[2])});
    return {bins, recs};
}

inline void stage_train_classifier(const ExperimentConfig& cfg, const std::string& out) {
    NoiseSchedule sched = schedule_from(cfg);
    SampleBatch data = load_dataset(out);
    auto [bins, recs] = load_binning(out);
    ClassifierTrainOpts opts;
    opts.hidden = cfg.net_hidden;
    opts.batch_size = cfg.train_classifier_batch;
    opts.lr = cfg.train_classifier_lr;
    ClassifierModel clf = train_classifier(recs, data, sched, cfg.train_classifier_epochs,
                                           derive_seed(cfg.seed, kSeedClassifier), opts);
    save_checkpoint(detail::join_path(out, "classifier.ckpt"), clf.net,
                    CheckpointRole::Classifier, sched);
}

inline ClassifierModel load_classifier(const ExperimentConfig& cfg,
                                       const NoiseSchedule& sched, const std::string& out) {
    ClassifierModel clf;
    clf.net = load_checkpoint(detail::join_path(out, "classifier.ckpt"),
                              CheckpointRole::Classifier, sched);
    clf.class_count = clf.net.output_dim();
    clf.total_steps = sched.total_steps;
    return clf;
}

// One generated batch per (target class, scale) grid cell; mixed-density
// mode sweeps scales only.
inline std::vector<std::string> sample_grid_names(const ExperimentConfig& cfg) {
    std::vector<std::string> names;
    if (cfg.guidance_mode == "mixed-density") {
        for (double w : cfg.guidance_scales)
            names.push_back("samples_mixed_w" + detail::scale_tag(w) + ".csv");
    } else {
        for (int l : cfg.guidance_target_classes)
            for (double w : cfg.guidance_scales)
                names.push_back("samples_l" + std::to_string(l) + "_w" +
                                detail::scale_tag(w) + ".csv");
    }
    return names;
}

inline void stage_sample(const ExperimentConfig& cfg, const std::string& out) {
    NoiseSchedule sched = schedule_from(cfg);
    auto provider = make_provider(cfg, sched, out);
    auto [bins, recs] = load_binning(out);
    ClassifierModel clf = load_classifier(cfg, sched, out);
    StepPlan plan = make_plan(cfg.schedule_steps, cfg.sample_plan_steps);
    std::uint64_t seed = derive_seed(cfg.seed, kSeedSample);
    if (cfg.guidance_mode == "mixed-density") {
        for (std::size_t i = 0; i < cfg.guidance_scales.size(); ++i) {
            GuidanceConfig gc{0, cfg.guidance_scales[i], GuidanceMode::MixedDensity};
            SampleBatch b = guided_generate(*provider, clf, bins, sched, plan, gc,
                                            cfg.sample_count, seed);
            emit_csv(detail::batch_to_table(b),
                     detail::join_path(out, "samples_mixed_w" +
                                                detail::scale_tag(cfg.guidance_scales[i]) +
                                                ".csv"));
        }
    } else {
        for (int l : cfg.guidance_target_classes) {
            for (double w : cfg.guidance_scales) {
                GuidanceConfig gc{l, w, GuidanceMode::ClassConditional};
                SampleBatch b = guided_generate(*provider, clf, bins, sched, plan, gc,
                                                cfg.sample_count, seed);
                emit_csv(detail::batch_to_table(b),
                         detail::join_path(out, "samples_l" + std::to_string(l) + "_w" +
                                                    detail::scale_tag(w) + ".csv"));
            }
        }
    }
}

inline void stage_evaluate(const ExperimentConfig& cfg, const std::string& out) {
    SampleBatch real = load_dataset(out);
    CsvTable mt;
    mt.header = {"batch", "mean_avg_knn", "mean_lof", "precision", "recall"};
    int batch_id = 0;
    for (const auto& name : sample_grid_names(cfg)) {
        SampleBatch gen = detail::table_to_batch(parse_csv(detail::join_path(out, name)));
        MetricReport rep = evaluate_batch(real, gen, cfg.metrics_k_avgknn, cfg.metrics_k_lof,
                                          cfg.metrics_k_precision, cfg.metrics_bins);
        double mk = 0.0, ml = 0.0;
        for (double v : rep.avg_knn) mk += v;
        for (double v : rep.lof) ml += v;
        mt.rows.push_back({static_cast<double>(batch_id), mk / rep.avg_knn.size(),
                           ml / rep.lof.size(), rep.precision, rep.recall});
        CsvTable ht;
        ht.header = {"edge_low", "edge_high", "density"};
        for (std::size_t b = 0; b < rep.lof_histogram.densities.size(); ++b)
            ht.rows.push_back({rep.lof_histogram.edges[b], rep.lof_histogram.edges[b + 1],
                               rep.lof_histogram.densities[b]});
        std::string hist_name = "lof_hist_" + name.substr(8);  // strip "samples_"
        emit_csv(ht, detail::join_path(out, hist_name));
        ++batch_id;
    }
    emit_csv(mt, detail::join_path(out, "metrics.csv"));
}

struct StageResult {
    std::string name;
    bool ok = true;
    std::string error;
    double seconds = 0.0;
};

struct PipelineStatus {
    int exit_code = 0;
    std::vector<StageResult> stages;
};

inline void write_status(const PipelineStatus& st, const std::string& out) {
    std::ofstream f(detail::join_path(out, "status.json"), std::ios::binary);
    f << "{\n  \"exit_code\": " << st.exit_code << ",\n  \"stages\": [\n";
    for (std::size_t i = 0; i < st.stages.size(); ++i) {
        const auto& s = st.stages[i];
        f << "    {\"name\": \"" << s.name << "\", \"ok\": " << (s.ok ? "true" : "false")
          << ", \"error\": \"" << s.error << "\", \"seconds\": " << s.seconds << "}"
          << (i + 1 < st.stages.size() ? "," : "") << "\n";
    }
    f << "  ]\n}\n";
}

// Runs every stage in order. Validation failures exit 2 before any stage
// runs; a stage failure records the stage name and exits 1.
inline PipelineStatus run_pipeline(const ExperimentConfig& cfg, const std::string& out) {
    PipelineStatus status;
    std::filesystem::create_directories(out);
    auto errors = validate_config(cfg);
    if (!errors.empty()) {
        status.exit_code = 2;
        StageResult r;
        r.name = "validate";
        r.ok = false;
        for (const auto& e : errors) r.error += (r.error.empty() ? "" : "; ") + e;
        status.stages.push_back(r);
        write_status(status, out);
        return status;
    }
    std::ofstream(detail::join_path(out, "config.txt"), std::ios::binary)
        << serialize_config(cfg);

    using StageFn = void (*)(const ExperimentConfig&, const std::string&);
    std::vector<std::pair<std::string, StageFn>> stages = {
        {"synth", stage_synth},
        {"train-score", stage_train_score},
        {"score-minority", stage_score_minority},
        {"bin", stage_bin},
        {"train-classifier", stage_train_classifier},
        {"sample", stage_sample},
        {"evaluate", stage_evaluate},
    };
    for (const auto& [name, fn] : stages) {
        StageResult r;
        r.name = name;
        auto start = std::chrono::steady_clock::now();
        try {
            fn(cfg, out);
        } catch (const std::exception& e) {
            r.ok = false;
            r.error = e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        status.stages.push_back(r);
        if (!r.ok) {
            status.exit_code = 1;
            break;
        }
    }
    write_status(status, out);
    return status;
}

}  // namespace mgd
