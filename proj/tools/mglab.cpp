// Command-line surface for the minority-guidance laboratory. Subcommands
// map one-to-one onto pipeline stages; `pipeline` runs them all.
//
// Exit codes: 0 success, 2 validation failure, 1 stage failure.

#include <filesystem>
#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mgd/config.hpp"
#include "mgd/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::int64_t seed = -1;  // -1 keeps the config seed
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config file")->required();
    cmd->add_option("--out", args.out_dir, "artifact directory")->required();
    cmd->add_option("--seed", args.seed, "override the config seed");
}

int run_stage(const CommonArgs& args,
              const std::function<void(const mgd::ExperimentConfig&, const std::string&)>& fn) {
    mgd::ExperimentConfig cfg;
    try {
        cfg = mgd::load_config(args.config_path);
        if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    auto errors = mgd::validate_config(cfg);
    if (!errors.empty()) {
        for (const auto& e : errors) std::cerr << "invalid config [" << e << "]\n";
        return 2;
    }
    std::filesystem::create_directories(args.out_dir);
    try {
        fn(cfg, args.out_dir);
    } catch (const std::exception& e) {
        std::cerr << "stage failed: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"minority-score / minority-guidance diffusion laboratory"};
    app.require_subcommand(1);

    struct Sub {
        const char* name;
        const char* desc;
        void (*fn)(const mgd::ExperimentConfig&, const std::string&);
    };
    const Sub subs[] = {
        {"synth", "draw the synthetic GMM dataset", mgd::stage_synth},
        {"train-score", "train the noise-prediction network", mgd::stage_train_score},
        {"score-minority", "compute per-sample minority scores", mgd::stage_score_minority},
        {"bin", "quantile-bin minority scores into ordinal classes", mgd::stage_bin},
        {"train-classifier", "train the noise-conditioned ordinal classifier",
         mgd::stage_train_classifier},
        {"sample", "run guided ancestral sampling over the configured grid",
         mgd::stage_sample},
        {"evaluate", "compute AvgkNN / LOF / precision-recall for sampled batches",
         mgd::stage_evaluate},
    };

    CommonArgs args;
    std::string selected;
    for (const auto& sub : subs) {
        auto* cmd = app.add_subcommand(sub.name, sub.desc);
        add_common(cmd, args);
        cmd->callback([&selected, name = sub.name] { selected = name; });
    }
    auto* pipe = app.add_subcommand("pipeline", "run every stage end-to-end");
    add_common(pipe, args);
    pipe->callback([&selected] { selected = "pipeline"; });

    CLI11_PARSE(app, argc, argv);

    if (selected == "pipeline") {
        mgd::ExperimentConfig cfg;
        try {
            cfg = mgd::load_config(args.config_path);
            if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
        } catch (const std::exception& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return 2;
        }
        auto status = mgd::run_pipeline(cfg, args.out_dir);
        for (const auto& s : status.stages) {
            std::cerr << s.name << ": " << (s.ok ? "ok" : "FAILED " + s.error) << " ("
                      << s.seconds << "s)\n";
        }
        return status.exit_code;
    }
    for (const auto& sub : subs) {
        if (selected == sub.name) return run_stage(args, sub.fn);
    }
    return 2;
}
