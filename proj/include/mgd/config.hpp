#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mgd/common.hpp"
#include "mgd/csv.hpp"
#include "mgd/minority.hpp"
#include "mgd/score.hpp"

namespace mgd {

// Flat dotted key-value config. Every hyperparameter with a conventional
// default keeps it here: t_frac=0.9, M=1, k_avgknn=5, k_lof=20,
// k_precision=5, 250 sampling steps, w=2.0 class-conditional / 5.0
// mixed-density, L=100 at large N (scaled down for desk datasets).
struct ExperimentConfig {
    std::uint64_t seed = 0;

    int schedule_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    int dataset_dim = 2;
    int dataset_n = 5000;
    std::vector<GmmComponent> dataset_components;

    std::vector<int> net_hidden = {128, 128, 128};

    int train_score_steps = 4000;
    int train_score_batch = 128;
    double train_score_lr = 1e-3;

    int train_classifier_epochs = 40;
    int train_classifier_batch = 128;
    double train_classifier_lr = 1e-3;

    double minority_t_frac = 0.9;
    int minority_draws = 1;
    DistanceKind minority_distance = DistanceKind::L2;
    int minority_classes = 10;

    std::string guidance_mode = "class-conditional";  // or "mixed-density"
    std::vector<int> guidance_target_classes = {0};
    std::vector<double> guidance_scales = {2.0};

    std::string score_provider = "network";  // "oracle" | "network"

    int sample_count = 2000;
    int sample_plan_steps = 250;

    int metrics_k_avgknn = 5;
    int metrics_k_lof = 20;
    int metrics_k_precision = 5;
    int metrics_bins = 40;

    bool operator==(const ExperimentConfig&) const = default;

    int minority_t() const {
        int t = static_cast<int>(std::llround(minority_t_frac * schedule_steps));
        return std::max(1, std::min(schedule_steps, t));
    }
};

inline bool operator==(const GmmComponent& a, const GmmComponent& b) {
    return a.weight == b.weight && a.mean == b.mean && a.variance == b.variance;
}

namespace detail {

inline std::vector<std::string> tokens(const std::string& s) {
    std::istringstream iss(s);
    std::vector<std::string> out;
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

inline DistanceKind parse_distance(const std::string& s) {
    if (s == "l1") return DistanceKind::L1;
    if (s == "l2") return DistanceKind::L2;
    if (s == "feature") return DistanceKind::Feature;
    throw std::invalid_argument("config: unknown distance '" + s + "'");
}

inline std::string distance_name(DistanceKind k) {
    switch (k) {
        case DistanceKind::L1: return "l1";
        case DistanceKind::L2: return "l2";
        default: return "feature";
    }
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::map<int, std::string> components;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            std::size_t a = s.find_first_not_of(" \t\r");
            std::size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.rfind("dataset.component.", 0) == 0) {
            components[std::stoi(key.substr(18))] = value;
        } else {
            kv[key] = value;
        }
    }

    ExperimentConfig cfg;
    auto get = [&](const std::string& key, auto& field) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        using T = std::decay_t<decltype(field)>;
        if constexpr (std::is_same_v<T, double>) field = std::stod(it->second);
        else if constexpr (std::is_same_v<T, int>) field = std::stoi(it->second);
        else if constexpr (std::is_same_v<T, std::uint64_t>) field = std::stoull(it->second);
        else field = it->second;
    };
    auto get_ints = [&](const std::string& key, std::vector<int>& field) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        field.clear();
        for (const auto& t : detail::tokens(it->second)) field.push_back(std::stoi(t));
    };
    auto get_doubles = [&](const std::string& key, std::vector<double>& field) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        field.clear();
        for (const auto& t : detail::tokens(it->second)) field.push_back(std::stod(t));
    };

    get("seed", cfg.seed);
    get("schedule.steps", cfg.schedule_steps);
    get("schedule.beta_start", cfg.beta_start);
    get("schedule.beta_end", cfg.beta_end);
    get("dataset.dim", cfg.dataset_dim);
    get("dataset.n", cfg.dataset_n);
    get_ints("net.hidden", cfg.net_hidden);
    get("train.score.steps", cfg.train_score_steps);
    get("train.score.batch", cfg.train_score_batch);
    get("train.score.lr", cfg.train_score_lr);
    get("train.classifier.epochs", cfg.train_classifier_epochs);
    get("train.classifier.batch", cfg.train_classifier_batch);
    get("train.classifier.lr", cfg.train_classifier_lr);
    get("minority.t_frac", cfg.minority_t_frac);
    get("minority.draws", cfg.minority_draws);
    if (kv.count("minority.distance"))
        cfg.minority_distance = detail::parse_distance(kv.at("minority.distance"));
    get("minority.classes", cfg.minority_classes);
    get("guidance.mode", cfg.guidance_mode);
    get_ints("guidance.target_classes", cfg.guidance_target_classes);
    get_doubles("guidance.scales", cfg.guidance_scales);
    get("score.provider", cfg.score_provider);
    get("sample.count", cfg.sample_count);
    get("sample.plan_steps", cfg.sample_plan_steps);
    get("metrics.k_avgknn", cfg.metrics_k_avgknn);
    get("metrics.k_lof", cfg.metrics_k_lof);
    get("metrics.k_precision", cfg.metrics_k_precision);
    get("metrics.bins", cfg.metrics_bins);

    cfg.dataset_components.clear();
    for (const auto& [idx, value] : components) {
        auto toks = detail::tokens(value);
        check(toks.size() == static_cast<std::size_t>(cfg.dataset_dim) + 2,
              "config: dataset.component needs weight, mean, variance");
        GmmComponent c;
        c.weight = std::stod(toks[0]);
        for (int j = 0; j < cfg.dataset_dim; ++j) c.mean.push_back(std::stod(toks[1 + j]));
        c.variance = std::stod(toks.back());
        cfg.dataset_components.push_back(std::move(c));
    }
    if (cfg.dataset_components.empty()) {
        cfg.dataset_components.push_back({1.0, Vec(cfg.dataset_dim, 0.0), 1.0});
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "config: cannot open " + path);
    return parse_config(in);
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    auto fd = format_double;
    out << "seed = " << cfg.seed << '\n';
    out << "schedule.steps = " << cfg.schedule_steps << '\n';
    out << "schedule.beta_start = " << fd(cfg.beta_start) << '\n';
    out << "schedule.beta_end = " << fd(cfg.beta_end) << '\n';
    out << "dataset.dim = " << cfg.dataset_dim << '\n';
    out << "dataset.n = " << cfg.dataset_n << '\n';
    for (std::size_t i = 0; i < cfg.dataset_components.size(); ++i) {
        const auto& c = cfg.dataset_components[i];
        out << "dataset.component." << i << " = " << fd(c.weight);
        for (double m : c.mean) out << ' ' << fd(m);
        out << ' ' << fd(c.variance) << '\n';
    }
    out << "net.hidden =";
    for (int h : cfg.net_hidden) out << ' ' << h;
    out << '\n';
    out << "train.score.steps = " << cfg.train_score_steps << '\n';
    out << "train.score.batch = " << cfg.train_score_batch << '\n';
    out << "train.score.lr = " << fd(cfg.train_score_lr) << '\n';
    out << "train.classifier.epochs = " << cfg.train_classifier_epochs << '\n';
    out << "train.classifier.batch = " << cfg.train_classifier_batch << '\n';
    out << "train.classifier.lr = " << fd(cfg.train_classifier_lr) << '\n';
    out << "minority.t_frac = " << fd(cfg.minority_t_frac) << '\n';
    out << "minority.draws = " << cfg.minority_draws << '\n';
    out << "minority.distance = " << detail::distance_name(cfg.minority_distance) << '\n';
    out << "minority.classes = " << cfg.minority_classes << '\n';
    out << "guidance.mode = " << cfg.guidance_mode << '\n';
    out << "guidance.target_classes =";
    for (int c : cfg.guidance_target_classes) out << ' ' << c;
    out << '\n';
    out << "guidance.scales =";
    for (double w : cfg.guidance_scales) out << ' ' << fd(w);
    out << '\n';
    out << "score.provider = " << cfg.score_provider << '\n';
    out << "sample.count = " << cfg.sample_count << '\n';
    out << "sample.plan_steps = " << cfg.sample_plan_steps << '\n';
    out << "metrics.k_avgknn = " << cfg.metrics_k_avgknn << '\n';
    out << "metrics.k_lof = " << cfg.metrics_k_lof << '\n';
    out << "metrics.k_precision = " << cfg.metrics_k_precision << '\n';
    out << "metrics.bins = " << cfg.metrics_bins << '\n';
    return out.str();
}

// Total validation: every downstream precondition is checked here, tagged
// with the stage that would otherwise trip over it.
inline std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
    std::vector<std::string> errors;
    auto fail = [&](const std::string& stage, const std::string& msg) {
        errors.push_back(stage + ": " + msg);
    };
    if (cfg.schedule_steps < 1) fail("schedule", "steps must be >= 1");
    if (!(cfg.beta_start > 0.0 && cfg.beta_start <= cfg.beta_end && cfg.beta_end < 1.0))
        fail("schedule", "need 0 < beta_start <= beta_end < 1");
    if (cfg.dataset_dim < 1) fail("synth", "dim must be >= 1");
    if (cfg.dataset_n < 1) fail("synth", "N must be >= 1");
    double wsum = 0.0;
    for (const auto& c : cfg.dataset_components) {
        if (c.weight <= 0.0) fail("synth", "component weight must be positive");
        if (c.variance < 0.0) fail("synth", "component variance must be non-negative");
        if (static_cast<int>(c.mean.size()) != cfg.dataset_dim)
            fail("synth", "component mean dimension mismatch");
        wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9) fail("synth", "component weights must sum to 1");
    for (int h : cfg.net_hidden)
        if (h < 1) fail("train-score", "hidden widths must be positive");
    if (cfg.train_score_steps < 1) fail("train-score", "steps must be >= 1");
    if (cfg.train_score_batch < 1) fail("train-score", "batch must be >= 1");
    if (cfg.train_classifier_epochs < 1) fail("train-classifier", "epochs must be >= 1");
    if (!(cfg.minority_t_frac > 0.0 && cfg.minority_t_frac <= 1.0))
        fail("score-minority", "t_frac must be in (0, 1]");
    if (cfg.minority_draws < 1) fail("score-minority", "draws must be >= 1");
    if (cfg.minority_classes < 1) fail("binning", "L must be >= 1");
    if (cfg.minority_classes > cfg.dataset_n) fail("binning", "L exceeds dataset size");
    if (cfg.guidance_mode != "class-conditional" && cfg.guidance_mode != "mixed-density")
        fail("sample", "unknown guidance mode '" + cfg.guidance_mode + "'");
    for (int c : cfg.guidance_target_classes)
        if (c < 0 || c >= cfg.minority_classes)
            fail("sample", "target class out of range");
    for (double w : cfg.guidance_scales)
        if (!(w >= 0.0) || !std::isfinite(w)) fail("sample", "scale must be finite and >= 0");
    if (cfg.score_provider != "oracle" && cfg.score_provider != "network")
        fail("train-score", "unknown provider '" + cfg.score_provider + "'");
    if (cfg.sample_count < 1) fail("sample", "count must be >= 1");
    if (cfg.sample_plan_steps < 1 || cfg.sample_plan_steps > cfg.schedule_steps)
        fail("sample", "plan steps must be in [1, T]");
    if (cfg.metrics_k_avgknn < 1 || cfg.metrics_k_avgknn >= cfg.sample_count)
        fail("evaluate", "k_avgknn must be in [1, count)");
    if (cfg.metrics_k_lof < 1 || cfg.metrics_k_lof >= cfg.sample_count)
        fail("evaluate", "k_lof must be in [1, count)");
    if (cfg.metrics_k_precision < 1 || cfg.metrics_k_precision >= cfg.sample_count ||
        cfg.metrics_k_precision >= cfg.dataset_n)
        fail("evaluate", "k_precision must be below both set sizes");
    if (cfg.metrics_bins < 1) fail("evaluate", "bins must be >= 1");
    return errors;
}

}  // namespace mgd
