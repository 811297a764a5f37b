#pragma once

// Argument parsing and exit-code mapping for the `pae` executable:
//   0 success, 2 usage / configuration / input errors, 3 numerical failure.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "pae/commands.hpp"
#include "pae/error.hpp"

namespace pae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

namespace detail {

template <typename T>
void optional_option(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
    app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

inline std::pair<std::size_t, std::size_t> parse_pair(const std::string& s) {
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw ConfigError("--scatter expects two metric numbers like 1,3");
    try {
        return {std::stoul(s.substr(0, comma)), std::stoul(s.substr(comma + 1))};
    } catch (const std::exception&) {
        throw ConfigError("--scatter expects two metric numbers like 1,3");
    }
}

}  // namespace detail

// `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Paired autoencoders for inverse problems", "pae"};
    app.require_subcommand(1, 1);

    TrainOptions train;
    auto* t = app.add_subcommand("train", "Train a model from a run config and write model.pae + train_log.csv");
    t->add_option("--config", train.config, "Run config (JSON)")->required();
    detail::optional_option(t, "--seed", train.seed, "Override the config seed");
    t->add_option("--out", train.out, "Output directory")->required();
    t->add_option("--data", train.data, "IDX image file replacing the configured data source");

    InvertOptions inv;
    std::string warm_mode = "mean";
    auto* iv = app.add_subcommand("invert", "Direct or LSI estimates for observations");
    iv->add_option("--checkpoint", inv.checkpoint, "Checkpoint (model.pae)")->required();
    iv->add_option("--config", inv.config, "Run config whose lsi section replaces the checkpoint's");
    detail::optional_option(iv, "--seed", inv.seed, "Seed for sampled VPAE warm starts");
    iv->add_option("--out", inv.out, "Output directory")->required();
    iv->add_option("--data", inv.files.data, "IDX observations (default: the checkpoint's validation set)");
    iv->add_option("--truth", inv.files.truth, "IDX ground truth aligned with --data");
    iv->add_option("--mask", inv.files.mask, "IDX observation masks aligned with --data (LSI operator)");
    auto* direct_flag = iv->add_flag("--direct", "One-shot estimate d_x(M_inv(e_y(y))) (default)");
    auto* lsi_flag = iv->add_flag("--lsi", inv.lsi, "Latent-space inversion");
    direct_flag->excludes(lsi_flag);
    iv->add_flag("--cold", inv.cold, "Start LSI from z = 0 instead of the mapped latent");
    detail::optional_option(iv, "--alpha", inv.alpha, "Latent regularization weight");
    detail::optional_option(iv, "--steps", inv.steps, "LSI iterations");
    detail::optional_option(iv, "--lr", inv.lr, "LSI step size");
    iv->add_option("--limit", inv.limit, "Use only the first N samples (0 = all)");
    iv->add_option("--warm-mode", warm_mode, "VPAE warm start: mean, sample or sample_mean")
        ->check(CLI::IsMember({"mean", "sample", "sample_mean"}));

    OodOptions ood;
    std::string scatter = "1,3";
    auto* od = app.add_subcommand("ood", "Baseline metric distributions and OOD scores for probes");
    od->add_option("--checkpoint", ood.checkpoint, "Checkpoint (model.pae)")->required();
    od->add_option("--config", ood.config, "Accepted for uniformity; unused");
    detail::optional_option(od, "--seed", ood.seed, "Accepted for uniformity; outputs do not depend on it");
    od->add_option("--out", ood.out, "Output directory")->required();
    od->add_option("--baseline", ood.baseline, "IDX observations for the baseline (>= 30)");
    od->add_option("--probe", ood.probe, "IDX observations to score");
    od->add_option("--baseline-set", ood.baseline_set, "Procedural baseline: calibration or train");
    od->add_option("--probe-set", ood.probe_set, "Procedural probes: ood or id");
    od->add_option("--scatter", scatter, "Metric pair for scatter.csv, e.g. 1,3");
    od->add_option("--limit", ood.limit, "Use only the first N probes (0 = all)");

    SampleOptions smp;
    auto* sp = app.add_subcommand("sample", "Posterior samples with per-pixel mean and std");
    sp->add_option("--checkpoint", smp.checkpoint, "VPAE or latent_map checkpoint")->required();
    sp->add_option("--config", smp.config, "Accepted for uniformity; unused");
    detail::optional_option(sp, "--seed", smp.seed, "Sampling seed (default: the checkpoint's seed)");
    sp->add_option("--out", smp.out, "Output directory")->required();
    sp->add_option("--data", smp.data, "IDX observations (default: the checkpoint's validation set)");
    sp->add_option("--n", smp.n, "Samples per probe");
    sp->add_option("--limit", smp.limit, "Number of probes (0 = all)");

    ExportOptions exp;
    auto* ex = app.add_subcommand("export-latents", "Latent coordinates as CSV");
    ex->add_option("--checkpoint", exp.checkpoint, "Checkpoint (model.pae)")->required();
    ex->add_option("--config", exp.config, "Accepted for uniformity; unused");
    detail::optional_option(ex, "--seed", exp.seed, "Accepted for uniformity; outputs do not depend on it");
    ex->add_option("--out", exp.out, "Output directory")->required();
    ex->add_option("--data", exp.data, "IDX images to encode (default: the checkpoint's training set)");
    ex->add_option("--labels", exp.labels, "IDX labels appended as a column");
    ex->add_option("--side", exp.side, "Encoder to use: x or y")->check(CLI::IsMember({"x", "y"}));
    ex->add_option("--limit", exp.limit, "Use only the first N samples (0 = all)");

    std::vector<std::string> argv_store{"pae"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*t) {
            cmd_train(train, out);
        } else if (*iv) {
            inv.warm_mode = warm_mode == "sample"        ? VpaeWarmStart::sample
                            : warm_mode == "sample_mean" ? VpaeWarmStart::sample_mean
                                                         : VpaeWarmStart::mapped_mean;
            cmd_invert(inv, out);
        } else if (*od) {
            ood.scatter = detail::parse_pair(scatter);
            cmd_ood(ood, out);
        } else if (*sp) {
            cmd_sample(smp, out);
        } else if (*ex) {
            cmd_export_latents(exp, out);
        }
    } catch (const NumericalError& e) {
        err << "pae: numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "pae: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitOk;
}

}  // namespace pae::cli
