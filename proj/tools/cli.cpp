#include "cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cmath>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>

#include "cosmix/adaptation.hpp"
#include "cosmix/io.hpp"
#include "cosmix/mix.hpp"
#include "cosmix/toybench.hpp"
#include "run_config.hpp"

namespace cosmix::cli {
namespace {

namespace fs = std::filesystem;

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

struct CommonOptions {
    std::string config_file;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;

    void attach(CLI::App& cmd) {
        cmd.add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
        cmd.add_option("--set", overrides, "override one config key (key=value), repeatable");
        cmd.add_option("--seed", seed, "random seed");
        cmd.add_option("--workers", workers, "parallel workers per batch");
    }

    RunConfig load() const {
        RunConfig cfg;
        if (!config_file.empty()) cfg.load_file(config_file);
        for (const auto& o : overrides) cfg.apply_override(o);
        if (seed) cfg.adapt.seed = *seed;
        if (workers) cfg.adapt.workers = *workers;
        cfg.adapt.check();
        cfg.segmenter.check();
        (void)cfg.class_set();
        return cfg;
    }
};

ParamVector from_checkpoint(const std::vector<float>& values) {
    return ParamVector{std::vector<double>(values.begin(), values.end())};
}

std::vector<float> to_checkpoint(const ParamVector& params) {
    return std::vector<float>(params.values.begin(), params.values.end());
}

// Params as they come back from disk.
ParamVector f32_rounded(const ParamVector& params) { return from_checkpoint(to_checkpoint(params)); }

void save_checkpoint(const ParamVector& params, const fs::path& path) {
    // Write then rename so an interrupted run never leaves a torn file.
    const fs::path tmp = fs::path(path) += ".tmp";
    io::write_checkpoint(to_checkpoint(params), tmp);
    fs::rename(tmp, path);
}

std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream s;
    s << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return s.str();
}

Dataset read_source(const fs::path& dir, const RunConfig& cfg) {
    Dataset ds = io::read_dataset(dir, cfg.unlabeled_id);
    const ClassSet classes = cfg.class_set();
    if (cfg.source_class_map) {
        const auto map = io::load_class_map(*cfg.source_class_map);
        for (auto& scan : ds) scan.labels = io::apply_class_map(scan.labels, map);
    }
    for (const auto& scan : ds) validate(scan.cloud, scan.labels, classes);
    return ds;
}

ToySegmenter make_segmenter(const RunConfig& cfg) {
    ToySegmenter seg(cfg.class_set(), cfg.segmenter);
    seg.set_params(ToySegmenter::initial_params(cfg.class_set().size(), cfg.adapt.seed));
    return seg;
}

void print_eval(const EvalResult& r, const ClassSet& classes, std::ostream& out) {
    out << "class iou\n";
    for (std::size_t c = 0; c < classes.size(); ++c) {
        out << classes.entries()[c].name << ' ' << format_real(r.iou[c]) << '\n';
    }
    out << "mIoU " << format_real(r.miou) << '\n';
}

int cmd_stats(const std::string& dir, const std::string& class_map, const std::string& out_path,
              const RunConfig& cfg, std::ostream& out) {
    Dataset ds = io::read_dataset(dir, cfg.unlabeled_id);
    if (!class_map.empty()) {
        const auto map = io::load_class_map(class_map);
        for (auto& scan : ds) scan.labels = io::apply_class_map(scan.labels, map);
    }
    const auto hist = class_frequency(ds);
    for (const auto& [id, n] : hist.counts) out << id << ' ' << n << '\n';
    if (!out_path.empty()) write_histogram(hist, out_path);
    return kOk;
}

struct MixArgs {
    std::string source_scan, source_labels, target_scan, predictions, out_prefix, histogram;
    bool ply = false;
    bool no_local = false;
    bool no_global = false;
    std::optional<double> keep;
};

void write_mixed(const MixedSample& m, const std::string& stem, bool ply, const RunConfig& cfg) {
    io::write_scan(m.cloud, stem + ".bin");
    io::write_labels(m.labels, stem + ".label", cfg.unlabeled_id);
    std::vector<std::uint8_t> prov(m.provenance.size());
    for (std::size_t i = 0; i < prov.size(); ++i) prov[i] = static_cast<std::uint8_t>(m.provenance[i]);
    io::write_provenance(prov, stem + ".prov");
    if (ply) io::export_ply(m.cloud, m.labels, io::default_palette(cfg.class_set()), stem + ".ply");
}

int cmd_mix(const MixArgs& a, RunConfig cfg, std::ostream& out) {
    if (a.no_local) cfg.adapt.flags.local_aug = false;
    if (a.no_global) cfg.adapt.flags.global_aug = false;
    if (a.keep) {
        cfg.adapt.mix.local.keep_fraction = *a.keep;
        cfg.adapt.check();
    }
    const ClassSet classes = cfg.class_set();

    const PointCloud source = io::read_scan(a.source_scan);
    LabelArray source_labels = io::read_labels(a.source_labels, source.size(), cfg.unlabeled_id);
    if (cfg.source_class_map) source_labels = io::apply_class_map(source_labels, io::load_class_map(*cfg.source_class_map));
    validate(source, source_labels, classes);

    const PointCloud target = io::read_scan(a.target_scan);
    const auto records = io::read_predictions(a.predictions);
    if (records.size() != target.size()) {
        throw Error(ErrorCode::CountMismatch, a.predictions + " has " + std::to_string(records.size()) +
                                                  " records for " + std::to_string(target.size()) + " points");
    }
    Prediction pred;
    for (const auto& r : records) {
        if (!classes.contains(r.class_id)) throw Error(ErrorCode::UnknownClassId, "predicted class " + std::to_string(r.class_id));
        pred.classes.push_back(r.class_id);
        pred.confidence.push_back(r.confidence);
    }

    SelectionConfig selection = cfg.adapt.effective_selection();
    if (cfg.adapt.zeta_target_fraction && !pred.confidence.empty()) {
        selection.zeta = std::clamp(calibrate_zeta(pred.confidence, *cfg.adapt.zeta_target_fraction), 1e-6, 1.0 - 1e-6);
    }
    const ClassHistogram hist =
        a.histogram.empty() ? class_frequency(std::vector<LabelArray>{source_labels}) : read_histogram(a.histogram);

    Rng rng(cfg.adapt.seed);
    const auto pair = cosmix_pair(source, source_labels, target, pred, selection, cfg.adapt.effective_mix(), hist, rng);
    write_mixed(pair.source_to_target, a.out_prefix + "_s2t", a.ply, cfg);
    write_mixed(pair.target_to_source, a.out_prefix + "_t2s", a.ply, cfg);

    out << "zeta " << format_real(selection.zeta) << '\n';
    out << "source_classes";
    for (ClassId c : pair.source_classes) out << ' ' << c;
    out << "\ntarget_classes";
    for (ClassId c : pair.target_classes) out << ' ' << c;
    out << '\n';
    return kOk;
}

struct AdaptArgs {
    std::string source_dir, target_dir, out_dir, eval_dir;
};

int cmd_adapt(const AdaptArgs& a, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const Dataset source = read_source(a.source_dir, cfg);
    const Dataset target_ds = io::read_dataset(a.target_dir, cfg.unlabeled_id, false);
    std::vector<PointCloud> target;
    target.reserve(target_ds.size());
    for (const auto& s : target_ds) target.push_back(s.cloud);

    std::optional<Dataset> eval_set;
    if (!a.eval_dir.empty()) {
        eval_set = io::read_dataset(a.eval_dir, cfg.unlabeled_id);
    } else {
        try {
            eval_set = io::read_dataset(a.target_dir, cfg.unlabeled_id);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::IoFailure) throw;
            err << "note: target labels not found, skipping evaluation\n";
        }
    }

    fs::create_directories(a.out_dir);
    const fs::path dir(a.out_dir);
    std::ofstream log(dir / "metrics.log");
    if (!log) throw Error(ErrorCode::IoFailure, "cannot write " + (dir / "metrics.log").string());
    log << "# iter epoch loss_s2t loss_t2s miou\n";

    const ToySegmenter seg = make_segmenter(cfg);
    auto evaluator = seg.clone();
    // Scored from f32-rounded params so that `eval` on a checkpoint agrees exactly.
    auto score_params = [&](const ParamVector& p) {
        if (!eval_set) return std::numeric_limits<double>::quiet_NaN();
        evaluator->set_params(f32_rounded(p));
        return evaluate(*eval_set, *evaluator, cfg.adapt.iou).miou;
    };
    double last_miou = std::numeric_limits<double>::quiet_NaN();

    RunHooks hooks;
    hooks.stop = &g_stop;
    hooks.on_warmup = [&](const TrainState& s, double zeta) {
        save_checkpoint(s.student, dir / "warmup.ckpt");
        last_miou = score_params(s.student);
        log << "0 0 nan nan " << format_real(last_miou) << '\n' << std::flush;
        out << "warm-up done, zeta " << format_real(zeta) << ", mIoU " << format_real(last_miou) << '\n';
    };
    hooks.on_epoch = [&](const MetricRecord& r, const TrainState& s) {
        save_checkpoint(s.student, dir / "student.ckpt");
        save_checkpoint(s.teacher, dir / "teacher.ckpt");
        if (cfg.checkpoint_every > 0 && r.epoch % cfg.checkpoint_every == 0) {
            std::ostringstream name;
            name << "epoch_" << std::setw(3) << std::setfill('0') << r.epoch << ".ckpt";
            save_checkpoint(s.student, dir / name.str());
        }
        last_miou = score_params(s.student);
        log << r.iteration << ' ' << r.epoch << ' ' << format_real(r.loss_s2t) << ' ' << format_real(r.loss_t2s) << ' '
            << format_real(last_miou) << '\n'
            << std::flush;
        out << "epoch " << r.epoch << " mIoU " << format_real(last_miou) << '\n';
    };

    const auto result = run_pipeline(source, target, seg, cfg.adapt, hooks);
    const TrainState& final_state = result.adapted.state;
    save_checkpoint(final_state.student, dir / "student.ckpt");
    save_checkpoint(final_state.teacher, dir / "teacher.ckpt");
    if (result.adapted.interrupted) {
        err << "interrupted at iteration " << final_state.iteration << ", checkpoint saved\n";
        return kInterrupted;
    }
    out << "final mIoU " << format_real(last_miou) << '\n';
    return kOk;
}

int cmd_eval(const std::string& dataset, const std::string& checkpoint, const RunConfig& cfg, std::ostream& out) {
    const Dataset ds = io::read_dataset(dataset, cfg.unlabeled_id);
    ToySegmenter seg(cfg.class_set(), cfg.segmenter);
    seg.set_params(from_checkpoint(io::read_checkpoint(checkpoint)));
    print_eval(evaluate(ds, seg, cfg.adapt.iou), seg.classes(), out);
    return kOk;
}

int cmd_bench(const std::string& out_dir, std::size_t scans, std::size_t eval_scans, std::uint64_t seed,
              const RunConfig& cfg, std::ostream& out) {
    using namespace toybench;
    const fs::path dir(out_dir);
    const Dataset source = make_dataset(default_source_spec(100 + seed), scans);
    const Dataset target = make_dataset(default_target_spec(200 + seed), scans);
    io::write_dataset(source, dir / "source", cfg.unlabeled_id);
    io::write_dataset(target, dir / "target", cfg.unlabeled_id);
    if (eval_scans > 0) io::write_dataset(make_dataset(default_target_spec(300 + seed), eval_scans), dir / "target_val", cfg.unlabeled_id);
    std::size_t points = 0;
    for (const auto& s : source) points += s.cloud.size();
    out << "source " << source.size() << " scans, " << points << " points\n";
    points = 0;
    for (const auto& s : target) points += s.cloud.size();
    out << "target " << target.size() << " scans, " << points << " points\n";
    return kOk;
}

int cmd_export_ply(const std::string& scan, const std::string& labels, const std::string& out_path,
                   const RunConfig& cfg) {
    const PointCloud cloud = io::read_scan(scan);
    const LabelArray l = labels.empty() ? LabelArray(cloud.size(), kIgnore)
                                        : io::read_labels(labels, cloud.size(), cfg.unlabeled_id);
    io::export_ply(cloud, l, io::default_palette(cfg.class_set()), out_path);
    return kOk;
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidConfig: return kUsage;
        case ErrorCode::NumericFailure:
        case ErrorCode::NonFiniteGradient: return kNumericFailure;
        default: return kDataError;
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Compositional semantic mixing for LiDAR domain adaptation", "cosmix"};
    app.require_subcommand(1);

    CommonOptions common;

    auto* stats = app.add_subcommand("stats", "per-class point counts of a dataset");
    std::string stats_dir, stats_map, stats_out;
    stats->add_option("dataset", stats_dir, "dataset directory")->required();
    stats->add_option("--class-map", stats_map, "class map applied before counting")->check(CLI::ExistingFile);
    stats->add_option("--out", stats_out, "histogram file to write");
    common.attach(*stats);

    auto* mix = app.add_subcommand("mix", "mix one source/target scan pair");
    MixArgs mix_args;
    mix->add_option("--source-scan", mix_args.source_scan)->required();
    mix->add_option("--source-labels", mix_args.source_labels)->required();
    mix->add_option("--target-scan", mix_args.target_scan)->required();
    mix->add_option("--predictions", mix_args.predictions, "teacher predictions for the target scan")->required();
    mix->add_option("--out-prefix", mix_args.out_prefix)->required();
    mix->add_option("--histogram", mix_args.histogram, "source class histogram (default: from source labels)");
    mix->add_flag("--ply", mix_args.ply, "also write colored PLY files");
    mix->add_flag("--no-local-aug", mix_args.no_local);
    mix->add_flag("--no-global-aug", mix_args.no_global);
    mix->add_option("--keep", mix_args.keep, "fraction of patch points kept");
    common.attach(*mix);

    auto* adapt = app.add_subcommand("adapt", "warm-up on source, then adapt to target");
    AdaptArgs adapt_args;
    adapt->add_option("--source", adapt_args.source_dir, "labeled source dataset")->required();
    adapt->add_option("--target", adapt_args.target_dir, "target dataset (labels optional)")->required();
    adapt->add_option("--out", adapt_args.out_dir, "output directory")->required();
    adapt->add_option("--eval", adapt_args.eval_dir, "labeled evaluation set (default: target)");
    common.attach(*adapt);

    auto* eval = app.add_subcommand("eval", "score a checkpoint on a labeled dataset");
    std::string eval_dir, eval_ckpt;
    eval->add_option("--dataset", eval_dir)->required();
    eval->add_option("--checkpoint", eval_ckpt)->required();
    common.attach(*eval);

    auto* bench = app.add_subcommand("bench", "write the synthetic two-domain benchmark");
    std::string bench_out;
    std::size_t bench_scans = toybench::kBenchScans;
    std::size_t bench_eval = toybench::kBenchEvalScans;
    bench->add_option("--out", bench_out)->required();
    bench->add_option("--scans", bench_scans, "scans per domain")->capture_default_str();
    bench->add_option("--eval-scans", bench_eval, "held-out target scans")->capture_default_str();
    common.attach(*bench);

    auto* ply = app.add_subcommand("export-ply", "write a colored PLY of a scan");
    std::string ply_scan, ply_labels, ply_out;
    ply->add_option("--scan", ply_scan)->required();
    ply->add_option("--labels", ply_labels);
    ply->add_option("--out", ply_out)->required();
    common.attach(*ply);

    std::vector<std::string> argv_storage{"cosmix"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : argv_storage) argv.push_back(s.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        const RunConfig cfg = common.load();
        if (*stats) return cmd_stats(stats_dir, stats_map, stats_out, cfg, out);
        if (*mix) return cmd_mix(mix_args, cfg, out);
        if (*adapt) return cmd_adapt(adapt_args, cfg, out, err);
        if (*eval) return cmd_eval(eval_dir, eval_ckpt, cfg, out);
        if (*bench) return cmd_bench(bench_out, bench_scans, bench_eval, cfg.adapt.seed, cfg, out);
        if (*ply) return cmd_export_ply(ply_scan, ply_labels, ply_out, cfg);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        err << "error: IoFailure: " << e.what() << '\n';
        return kDataError;
    }
    return kUsage;
}

int run_main(int argc, char** argv) {
    std::signal(SIGINT, on_sigint);
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace cosmix::cli
