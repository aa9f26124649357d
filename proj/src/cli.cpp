#include "was/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "was/checkpoint.hpp"
#include "was/config.hpp"
#include "was/data.hpp"
#include "was/dual_mode.hpp"
#include "was/errors.hpp"
#include "was/metrics.hpp"
#include "was/train.hpp"

namespace was::cli {

namespace {

std::string timestamp_line() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[64];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return std::string("# generated ") + buf + "\n";
}

void write_text(const std::string& path, const std::string& body) {
    if (path == "-") {
        std::cout << body;
        return;
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ConfigError("cannot open output file '" + path + "'");
    f << body;
}

data::DatasetPair load_data(const config::ExperimentConfig& cfg) {
    data::DatasetPair pair = data::read_dataset(cfg.dataset, cfg.resolved_data_root());
    if (cfg.train_subset > 0) {
        pair.train = data::subset(pair.train, cfg.train_subset, cfg.subset_seed);
    }
    if (cfg.test_subset > 0) {
        pair.test = data::subset(pair.test, cfg.test_subset, cfg.subset_seed);
    }
    return pair;
}

model::ArchitectureDef arch_for(const config::ExperimentConfig& cfg, int64_t num_classes) {
    return cfg.arch_id == "custom" ? model::ArchitectureDef::custom(cfg.custom_layers)
                                   : model::ArchitectureDef::named(cfg.arch_id, num_classes);
}

struct TrainArgs {
    std::string config_path;
    std::string out_path = "model.wasw";
    std::string log_path;
    std::optional<uint64_t> seed;
    std::string resume_path;
    int64_t max_steps = -1;
    bool no_timestamp = false;
};

int run_train(const TrainArgs& args) {
    config::ExperimentConfig cfg = config::ExperimentConfig::load(args.config_path);
    if (args.seed) {
        cfg.seed = *args.seed;
        if (!cfg.dom_seed_set) cfg.dom_seed = cfg.seed;
    }

    const data::DatasetPair ds = load_data(cfg);
    const int64_t in_c = ds.train.images.dim(1);
    const int64_t in_h = ds.train.images.dim(2);
    const int64_t in_w = ds.train.images.dim(3);

    train::Model m;
    train::OptimizerState opt;
    int64_t start_step = 0;
    train::TrainConfig tc;
    tc.batch_size = cfg.batch_size;
    tc.epochs = cfg.epochs;
    tc.lr = cfg.lr;
    tc.momentum = cfg.momentum;
    tc.straight_through = cfg.straight_through;
    tc.max_steps = args.max_steps;

    if (!args.resume_path.empty()) {
        const checkpoint::Checkpoint ckpt = checkpoint::load(args.resume_path);
        m = train::from_checkpoint(ckpt, &opt, cfg.lr, cfg.momentum);
        start_step = ckpt.step_count;
        tc.master_seed = ckpt.master_seed;
        tc.dom_seed = ckpt.dom_seed;
    } else {
        const model::ArchitectureDef arch = arch_for(cfg, ds.train.num_classes);
        const model::NetPlan probe = model::make_plan(arch, in_c, in_h, in_w, ds.train.num_classes);
        m = train::Model::build(arch, in_c, in_h, in_w, ds.train.num_classes,
                                cfg.specs_for(probe.params.size()));
        m.init(cfg.seed);
        opt = train::OptimizerState::init(m, cfg.lr, cfg.momentum);
        tc.master_seed = cfg.seed;
        tc.dom_seed = cfg.dom_seed;
    }

    const train::TrainResult result = train::train(m, opt, tc, ds.train, ds.test, start_step);
    checkpoint::save(result.ckpt, args.out_path);

    std::ostringstream csv;
    if (!args.no_timestamp) csv << timestamp_line();
    csv << "epoch,train_loss,test_top1_aom,test_top1_dom\n";
    for (const train::EpochRow& row : result.log) {
        csv << row.epoch << "," << metrics::format_fixed(row.train_loss, 6) << ","
            << metrics::format_fixed(row.test_top1_aom, 4) << ","
            << metrics::format_fixed(row.test_top1_dom, 4) << "\n";
    }
    const std::string log_path =
        args.log_path.empty() ? args.out_path + ".train.csv" : args.log_path;
    write_text(log_path, csv.str());

    std::cout << "trained " << result.steps_run << " steps; checkpoint -> " << args.out_path
              << "; log -> " << log_path << "\n";
    for (const train::EpochRow& row : result.log) {
        std::cout << "epoch " << row.epoch << " loss " << metrics::format_fixed(row.train_loss, 4)
                  << " aom " << metrics::format_fixed(row.test_top1_aom, 2) << " dom "
                  << metrics::format_fixed(row.test_top1_dom, 2) << "\n";
    }
    return 0;
}

struct EvalArgs {
    std::string ckpt_path;
    std::string mode = "aom";
    std::optional<uint64_t> dom_seed;
    std::vector<std::string> perturbs;
    std::string data_root;
    std::string dataset = "cifar10";
    int64_t subset = 0;
    uint64_t subset_seed = 0;
    uint64_t perturb_seed = 0;
    int64_t batch = 256;
    std::string out_path = "-";
    std::string spec_override;
    std::string tag;
    bool no_timestamp = false;
};

int run_eval(const EvalArgs& args) {
    if (args.mode != "aom" && args.mode != "dom") {
        throw ConfigError("--mode must be aom or dom, got '" + args.mode + "'");
    }
    std::vector<data::DataPerturbSpec> perturbs;
    for (const std::string& p : args.perturbs) perturbs.push_back(data::DataPerturbSpec::parse(p));

    const checkpoint::Checkpoint ckpt = checkpoint::load(args.ckpt_path);

    config::ExperimentConfig dcfg;
    dcfg.dataset = args.dataset;
    dcfg.data_root = args.data_root;
    dcfg.test_subset = args.subset;
    dcfg.subset_seed = args.subset_seed;
    data::Dataset test = data::read_dataset(dcfg.dataset, dcfg.resolved_data_root()).test;
    if (args.subset > 0) test = data::subset(test, args.subset, args.subset_seed);

    dual_mode::ModeConfig mc;
    mc.mode = args.mode == "dom" ? dual_mode::Mode::DOM : dual_mode::Mode::AOM;
    mc.dom_seed = args.dom_seed;
    if (!args.spec_override.empty()) {
        mc.dom_spec_override = transforms::parse_spec(args.spec_override);
    }
    const dual_mode::MaterializedModel mm = dual_mode::materialize(ckpt, mc);

    const std::string tag = args.tag.empty() ? ckpt.arch_id : args.tag;
    const double flops_m = metrics::flops_model(mm.plan, mm.layer_sparsity) / 1e6;
    const double sparsity = metrics::sparsity_rate_model(mm.weights);

    std::ostringstream csv;
    if (!args.no_timestamp) csv << timestamp_line();
    csv << metrics::csv_header() << "\n";

    const double clean = dual_mode::evaluate_top1(mm, test, args.batch);
    metrics::MetricsRecord rec;
    rec.tag = tag;
    rec.mode = args.mode;
    rec.perturb = "none";
    rec.top1 = clean;
    rec.drop_rate = 0.0;
    rec.flops_m = flops_m;
    rec.sparsity = sparsity;
    csv << metrics::csv_row(rec) << "\n";

    for (const data::DataPerturbSpec& p : perturbs) {
        const data::Dataset perturbed = data::perturb_testset(test, p, args.perturb_seed);
        rec.perturb = p.to_string();
        rec.top1 = dual_mode::evaluate_top1(mm, perturbed, args.batch);
        rec.drop_rate = metrics::drop_rate(clean, rec.top1);
        csv << metrics::csv_row(rec) << "\n";
    }
    write_text(args.out_path, csv.str());
    return 0;
}

struct SweepArgs {
    std::string config_path;
    std::string out_path = "-";
    std::string md_path;
    bool no_timestamp = false;
};

int run_sweep(const SweepArgs& args) {
    const config::ExperimentConfig cfg = config::ExperimentConfig::load(args.config_path);
    if (cfg.sweep_checkpoint.empty()) {
        throw ConfigError("field 'sweep.checkpoint': required for sweep");
    }
    if (cfg.sweep_was.empty() || cfg.sweep_perturb.empty()) {
        throw ConfigError("sweep grid is empty (fields 'sweep.was' and 'sweep.perturb')");
    }
    const int64_t cells = static_cast<int64_t>(cfg.sweep_was.size()) *
                          static_cast<int64_t>(cfg.sweep_perturb.size());
    if (cells > cfg.sweep_max_cells) {
        throw ConfigError("sweep grid has " + std::to_string(cells) +
                          " cells, exceeding sweep.max_cells = " +
                          std::to_string(cfg.sweep_max_cells));
    }

    const checkpoint::Checkpoint ckpt = checkpoint::load(cfg.sweep_checkpoint);
    data::Dataset test = data::read_dataset(cfg.dataset, cfg.resolved_data_root()).test;
    if (cfg.test_subset > 0) test = data::subset(test, cfg.test_subset, cfg.subset_seed);

    dual_mode::ModeConfig aom_cfg;
    const dual_mode::MaterializedModel aom = dual_mode::materialize(ckpt, aom_cfg);
    const double aom_clean = dual_mode::evaluate_top1(aom, test, 256);
    const double aom_flops_m = metrics::flops_model(aom.plan, aom.layer_sparsity) / 1e6;
    const double aom_sparsity = metrics::sparsity_rate_model(aom.weights);

    std::ostringstream csv, md;
    if (!args.no_timestamp) csv << timestamp_line();
    csv << metrics::csv_header() << "\n";
    md << "| WAS | perturb | AOM drop | DOM drop |\n|---|---|---|---|\n";

    std::vector<data::Dataset> perturbed;
    std::vector<data::DataPerturbSpec> pspecs;
    for (const std::string& p : cfg.sweep_perturb) {
        pspecs.push_back(data::DataPerturbSpec::parse(p));
        perturbed.push_back(data::perturb_testset(test, pspecs.back(), cfg.perturb_seed));
    }
    std::vector<double> aom_pert_top1;
    for (const data::Dataset& pd : perturbed) {
        aom_pert_top1.push_back(dual_mode::evaluate_top1(aom, pd, 256));
    }

    for (const std::string& was_str : cfg.sweep_was) {
        dual_mode::ModeConfig dm;
        dm.mode = dual_mode::Mode::DOM;
        dm.dom_spec_override = transforms::parse_spec(was_str);
        const dual_mode::MaterializedModel dom = dual_mode::materialize(ckpt, dm);
        const double dom_clean = dual_mode::evaluate_top1(dom, test, 256);
        const double dom_flops_m = metrics::flops_model(dom.plan, dom.layer_sparsity) / 1e6;
        const double dom_sparsity = metrics::sparsity_rate_model(dom.weights);

        for (size_t pi = 0; pi < pspecs.size(); ++pi) {
            const std::string pname = pspecs[pi].to_string();
            metrics::MetricsRecord rec;
            rec.tag = was_str;
            rec.mode = "aom";
            rec.perturb = pname;
            rec.top1 = aom_pert_top1[pi];
            rec.drop_rate = metrics::drop_rate(aom_clean, rec.top1);
            rec.flops_m = aom_flops_m;
            rec.sparsity = aom_sparsity;
            csv << metrics::csv_row(rec) << "\n";
            const double aom_drop = rec.drop_rate;

            rec.mode = "dom";
            rec.top1 = dual_mode::evaluate_top1(dom, perturbed[pi], 256);
            rec.drop_rate = metrics::drop_rate(dom_clean, rec.top1);
            rec.flops_m = dom_flops_m;
            rec.sparsity = dom_sparsity;
            csv << metrics::csv_row(rec) << "\n";

            md << "| " << was_str << " | " << pname << " | "
               << metrics::format_fixed(aom_drop, 2) << " | "
               << metrics::format_fixed(rec.drop_rate, 2) << " |\n";
        }
    }
    write_text(args.out_path, csv.str());
    if (!args.md_path.empty()) write_text(args.md_path, md.str());
    return 0;
}

struct FlopsArgs {
    std::string ckpt_path;
    std::string mode = "dom";
    int64_t n_samples = 100;
    std::string spec_override;
    std::optional<uint64_t> dom_seed;
    bool double_count = false;
};

int run_flops(const FlopsArgs& args) {
    if (args.mode != "aom" && args.mode != "dom") {
        throw ConfigError("--mode must be aom or dom, got '" + args.mode + "'");
    }
    const checkpoint::Checkpoint ckpt = checkpoint::load(args.ckpt_path);
    const model::NetPlan plan = ckpt.plan();
    const double scale = args.double_count ? 2.0 : 1.0;
    const double dense =
        metrics::flops_model(plan, std::vector<double>(plan.params.size(), 0.0), args.double_count);
    std::cout << "dense_macs = " << metrics::dense_macs(plan) << "\n";
    std::cout << "dense_flops_m = " << metrics::format_fixed(dense / 1e6, 4) << "\n";
    if (args.mode == "dom") {
        std::optional<transforms::TransformSpec> spec;
        if (!args.spec_override.empty()) spec = transforms::parse_spec(args.spec_override);
        const dual_mode::DomStats stats =
            dual_mode::dom_average_stats(ckpt, spec, args.n_samples, args.dom_seed);
        std::cout << "dom_samples = " << args.n_samples << "\n";
        std::cout << "dom_mean_flops_m = "
                  << metrics::format_fixed(stats.mean_flops * scale / 1e6, 4) << "\n";
        std::cout << "dom_mean_sparsity = " << metrics::format_fixed(stats.mean_sparsity, 6)
                  << "\n";
    }
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"weight-augmented CNN training with dual-mode inference"};
    app.require_subcommand(1);

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "train a model from a config file");
    train_cmd->add_option("--config", train_args.config_path, "experiment config file")
        ->required();
    train_cmd->add_option("--out", train_args.out_path, "output checkpoint path");
    train_cmd->add_option("--log", train_args.log_path, "per-epoch CSV path");
    uint64_t seed_val = 0;
    CLI::Option* seed_opt =
        train_cmd->add_option("--seed", seed_val, "override the config master seed");
    train_cmd->add_option("--resume", train_args.resume_path, "resume from a checkpoint");
    train_cmd->add_option("--steps", train_args.max_steps, "stop after this many total steps");
    train_cmd->add_flag("--no-timestamp", train_args.no_timestamp,
                        "omit the timestamp header in CSV output");

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--ckpt", eval_args.ckpt_path, "checkpoint path")->required();
    eval_cmd->add_option("--mode", eval_args.mode, "aom or dom");
    uint64_t eval_dom_seed = 0;
    CLI::Option* eval_dom_opt =
        eval_cmd->add_option("--dom-seed", eval_dom_seed, "DOM materialization seed");
    eval_cmd->add_option("--perturb", eval_args.perturbs,
                         "test-set perturbation kind:lo,hi (repeatable)");
    eval_cmd->add_option("--data", eval_args.data_root, "dataset root directory");
    eval_cmd->add_option("--dataset", eval_args.dataset, "cifar10|cifar100|mnist");
    eval_cmd->add_option("--subset", eval_args.subset, "stratified test subset size");
    eval_cmd->add_option("--subset-seed", eval_args.subset_seed, "subset seed");
    eval_cmd->add_option("--perturb-seed", eval_args.perturb_seed, "perturbation seed");
    eval_cmd->add_option("--batch", eval_args.batch, "evaluation batch size");
    eval_cmd->add_option("--out", eval_args.out_path, "CSV output path ('-' for stdout)");
    eval_cmd->add_option("--spec", eval_args.spec_override, "DOM transform spec override");
    eval_cmd->add_option("--tag", eval_args.tag, "row tag");
    eval_cmd->add_flag("--no-timestamp", eval_args.no_timestamp,
                       "omit the timestamp header in CSV output");

    SweepArgs sweep_args;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "grid of WAS specs x perturbations");
    sweep_cmd->add_option("--config", sweep_args.config_path, "experiment config file")
        ->required();
    sweep_cmd->add_option("--out", sweep_args.out_path, "CSV output path ('-' for stdout)");
    sweep_cmd->add_option("--md", sweep_args.md_path, "markdown table output path");
    sweep_cmd->add_flag("--no-timestamp", sweep_args.no_timestamp,
                        "omit the timestamp header in CSV output");

    FlopsArgs flops_args;
    CLI::App* flops_cmd = app.add_subcommand("flops", "FLOPs and sparsity report");
    flops_cmd->add_option("--ckpt", flops_args.ckpt_path, "checkpoint path")->required();
    flops_cmd->add_option("--mode", flops_args.mode, "aom or dom");
    flops_cmd->add_option("--n-samples", flops_args.n_samples, "DOM materialization count");
    flops_cmd->add_option("--spec", flops_args.spec_override, "DOM transform spec override");
    uint64_t flops_dom_seed = 0;
    CLI::Option* flops_dom_opt =
        flops_cmd->add_option("--dom-seed", flops_dom_seed, "base DOM seed");
    flops_cmd->add_flag("--double-count", flops_args.double_count, "count one MAC as two FLOPs");

    try {
        app.parse(argc, argv);
        if (*seed_opt) train_args.seed = seed_val;
        if (*eval_dom_opt) eval_args.dom_seed = eval_dom_seed;
        if (*flops_dom_opt) flops_args.dom_seed = flops_dom_seed;
        if (train_cmd->parsed()) return run_train(train_args);
        if (eval_cmd->parsed()) return run_eval(eval_args);
        if (sweep_cmd->parsed()) return run_sweep(sweep_args);
        if (flops_cmd->parsed()) return run_flops(flops_args);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const NonFiniteError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace was::cli
