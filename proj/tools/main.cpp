// mmfusion command-line front end.
//
// Exit codes: 0 success, 2 configuration error, 3 data/file error,
// 4 numeric failure (non-finite loss), 5 gradient-check failures.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmfusion/config.hpp"
#include "mmfusion/gradcheck.hpp"
#include "mmfusion/metrics.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitGradcheck = 5;

struct CommonArgs {
    std::optional<std::string> config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Configuration file (key = value lines)");
    cmd->add_option("--set", args.overrides, "Override a config key, e.g. --set train.lr=0.01")
        ->allow_extra_args(false);
    cmd->add_option("--seed", args.seed, "Shorthand that sets both data.seed and train.seed");
}

mmf::Config load_config(const CommonArgs& args) {
    mmf::Config cfg = mmf::Config::load(args.config_path, args.overrides);
    if (args.seed) {
        cfg.set("data.seed", std::to_string(*args.seed));
        cfg.set("train.seed", std::to_string(*args.seed));
    }
    return cfg;
}

// All output files go through a temp-and-rename so a failure mid-write never
// leaves a partial file behind.
void atomic_write(const std::string& path, const std::function<void(std::ostream&)>& emit) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw mmf::IoError("cannot open for writing: " + tmp);
        emit(os);
        os.flush();
        if (!os) {
            std::remove(tmp.c_str());
            throw mmf::IoError("write failed: " + tmp);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::remove(tmp.c_str());
        throw mmf::IoError("cannot rename " + tmp + " to " + path);
    }
}

int classify_error(const std::exception& e) {
    if (dynamic_cast<const mmf::UnknownKey*>(&e) ||
        dynamic_cast<const mmf::ConfigTypeError*>(&e) || dynamic_cast<const mmf::BadSpec*>(&e))
        return kExitConfig;
    if (dynamic_cast<const mmf::NumericFailure*>(&e)) return kExitNumeric;
    return kExitData;
}

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return classify_error(e);
    }
}

int cmd_gen_data(const CommonArgs& common, const std::string& out_path, std::size_t n_mc) {
    const mmf::Config cfg = load_config(common);
    const mmf::DatasetSpec spec = cfg.dataset_spec();
    spec.validate();
    const mmf::Dataset ds = mmf::generate(spec);
    atomic_write(out_path, [&](std::ostream& os) { mmf::save_dataset(os, ds); });

    const mmf::BayesReport bayes = mmf::bayes_report(spec, n_mc);
    std::printf("n_samples: %zu\n", ds.samples.size());
    std::printf("bayes_accuracy image=%.4f tokens=%.4f struct=%.4f joint=%.4f\n",
                bayes.acc_image, bayes.acc_tokens, bayes.acc_struct, bayes.acc_joint);
    std::printf("wrote %s\n", out_path.c_str());
    return kExitOk;
}

int cmd_train(const CommonArgs& common, const std::string& data_path,
              const std::string& checkpoint_out, const std::string& report_out) {
    const mmf::Config cfg = load_config(common);
    const mmf::TrainConfig tcfg = cfg.train_config();
    tcfg.validate();
    const mmf::Dataset ds = mmf::load_dataset(data_path);

    const mmf::PreparedData prep = mmf::prepare_splits(ds, tcfg);
    mmf::MultimodalModel model =
        mmf::MultimodalModel::init(cfg.model_config(), ds, mmf::model_init_seed(tcfg));
    const mmf::TrainReport report = mmf::train(model, prep.train, prep.val, tcfg);

    atomic_write(checkpoint_out, [&](std::ostream& os) { mmf::save_checkpoint(os, model); });
    atomic_write(report_out, [&](std::ostream& os) { mmf::write_report_csv(os, report); });

    const mmf::MetricsRow row =
        mmf::evaluate_model(model, prep.test, mmf::to_string(model.config.fusion));
    mmf::write_metrics_csv(std::cout, {row});
    std::fprintf(stderr, "epochs: %zu best_epoch: %zu best_val_loss: %.6f\n",
                 report.epochs.size(), report.best_epoch, report.best_val_loss);
    return kExitOk;
}

int cmd_table(const CommonArgs& common, const std::string& data_path,
              const std::string& out_path, bool ablation) {
    const mmf::Config cfg = load_config(common);
    const mmf::TrainConfig tcfg = cfg.train_config();
    tcfg.validate();
    const mmf::Dataset ds = mmf::load_dataset(data_path);
    const std::vector<mmf::MetricsRow> rows =
        ablation ? mmf::run_ablation(ds, cfg.model_config(), tcfg)
                 : mmf::compare_baselines(ds, cfg.model_config(), tcfg);
    atomic_write(out_path, [&](std::ostream& os) { mmf::write_metrics_csv(os, rows); });
    mmf::write_metrics_csv(std::cout, rows);
    return kExitOk;
}

int cmd_gradcheck(bool include_broken) {
    mmf::GradCheckOptions opt;
    opt.include_broken_fixture = include_broken;
    const auto results = mmf::run_gradient_checks(opt);
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("%-26s max_rel_err=%.3e %s\n", r.op.c_str(), r.max_rel_error,
                    r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    if (!all_pass) {
        std::fprintf(stderr, "gradient check failures:");
        for (const auto& r : results)
            if (!r.pass) std::fprintf(stderr, " %s", r.op.c_str());
        std::fprintf(stderr, "\n");
        return kExitGradcheck;
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal fusion training toolkit"};
    app.require_subcommand(1);
    app.footer([] {
        std::string out = "Config keys (defaults):\n";
        for (const auto& [key, def] : mmf::Config::schema_help())
            out += "  " + key + " = " + def + "\n";
        return out;
    });

    CommonArgs gen_args;
    std::string gen_out = "data.mmds";
    std::size_t gen_mc = 20000;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic multimodal dataset");
    add_common(gen, gen_args);
    gen->add_option("--out", gen_out, "Output dataset path");
    gen->add_option("--mc", gen_mc, "Monte-Carlo samples for the Bayes accuracy report");

    CommonArgs train_args;
    std::string train_data, train_out = "model.mmf1", train_report = "train_report.csv";
    auto* train = app.add_subcommand("train", "Train a model on a dataset file");
    add_common(train, train_args);
    train->add_option("--data", train_data, "Input dataset (MMDS)")->required();
    train->add_option("--out", train_out, "Checkpoint output path");
    train->add_option("--report", train_report, "Per-epoch CSV output path");

    CommonArgs ablate_args;
    std::string ablate_data, ablate_out = "ablation.csv";
    auto* ablate = app.add_subcommand("ablate", "Run the branch-removal ablation study");
    add_common(ablate, ablate_args);
    ablate->add_option("--data", ablate_data, "Input dataset (MMDS)")->required();
    ablate->add_option("--out", ablate_out, "Metrics CSV output path");

    CommonArgs compare_args;
    std::string compare_data, compare_out = "compare.csv";
    auto* compare = app.add_subcommand("compare", "Compare unimodal baselines to the fused model");
    add_common(compare, compare_args);
    compare->add_option("--data", compare_data, "Input dataset (MMDS)")->required();
    compare->add_option("--out", compare_out, "Metrics CSV output path");

    bool gc_broken = false;
    auto* gradcheck = app.add_subcommand("gradcheck", "Check all op gradients against finite differences");
    gradcheck->add_flag("--include-broken-fixture", gc_broken,
                        "Also run a deliberately broken op to self-test the harness");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    if (gen->parsed())
        return run_guarded([&] { return cmd_gen_data(gen_args, gen_out, gen_mc); });
    if (train->parsed())
        return run_guarded([&] { return cmd_train(train_args, train_data, train_out, train_report); });
    if (ablate->parsed())
        return run_guarded([&] { return cmd_table(ablate_args, ablate_data, ablate_out, true); });
    if (compare->parsed())
        return run_guarded([&] { return cmd_table(compare_args, compare_data, compare_out, false); });
    if (gradcheck->parsed()) return run_guarded([&] { return cmd_gradcheck(gc_broken); });
    return kExitConfig;
}
