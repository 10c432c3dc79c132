#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cosmix/core.hpp"
#include "cosmix/learning.hpp"
#include "cosmix/mix.hpp"
#include "cosmix/segmenter.hpp"
#include "cosmix/selection.hpp"

namespace cosmix {

/// Component switches of the ablation study. All on is the full method.
struct AblationFlags {
    bool branch_s2t = true;
    bool branch_t2s = true;
    bool local_aug = true;
    bool global_aug = true;
    bool weighted_f = true;
    bool ema = true;
};

enum class IouConvention {
    ExcludeEmpty,  // classes with TP + FP + FN = 0 are left out of the mean
    ZeroEmpty,     // such classes score 0
};

struct AdaptationConfig {
    std::size_t epochs_warmup = 10;
    std::size_t epochs_adapt = 10;
    std::size_t batch_size = 4;
    SelectionConfig selection;
    OptimConfig optim;
    MixConfig mix;
    AblationFlags flags;
    IouConvention iou = IouConvention::ExcludeEmpty;
    // When set, zeta is recomputed after warm-up so that this fraction of the
    // teacher's target pseudo-labels survives filtering.
    std::optional<double> zeta_target_fraction;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    void check() const;

    /// Selection and mixing configs with the ablation flags folded in.
    SelectionConfig effective_selection() const;
    MixConfig effective_mix() const;
};

struct MetricRecord {
    std::size_t iteration = 0;
    std::size_t epoch = 0;
    double loss_s2t = 0.0;
    double loss_t2s = 0.0;
    double miou = 0.0;  // NaN when no evaluation set was given
};

struct TrainState {
    ParamVector student;
    ParamVector teacher;
    std::size_t iteration = 0;
    std::uint64_t seed = 0;  // with `iteration`, fixes every future random draw
    std::vector<MetricRecord> history;
};

struct IterationStats {
    std::optional<double> loss_s2t;  // mean over the batch samples that had labels
    std::optional<double> loss_t2s;
};

/// Source-only training; the teacher starts as a copy of the student.
TrainState warmup(const Dataset& source, const Segmenter& segmenter, const AdaptationConfig& cfg);

/// One teacher-student step on a batch of paired (source, target) scans.
TrainState adapt_iteration(TrainState state, const Segmenter& segmenter, std::span<const LabeledScan* const> source,
                           std::span<const PointCloud* const> target, const ClassHistogram& histogram,
                           const AdaptationConfig& cfg, IterationStats* stats = nullptr);

struct EvalResult {
    std::size_t num_classes = 0;
    std::vector<std::uint64_t> confusion;  // row = ground truth, column = prediction
    std::vector<double> iou;               // NaN for classes excluded from the mean
    double miou = 0.0;

    std::uint64_t at(std::size_t truth, std::size_t pred) const { return confusion[truth * num_classes + pred]; }
};

/// Confusion-matrix IoU over label pairs; ignored ground-truth points are skipped.
EvalResult score(std::span<const LabelArray> truth, std::span<const LabelArray> predicted, const ClassSet& classes,
                 IouConvention convention = IouConvention::ExcludeEmpty);

/// Throws EmptyDataset on an empty dataset.
EvalResult evaluate(const Dataset& dataset, const Segmenter& segmenter,
                    IouConvention convention = IouConvention::ExcludeEmpty);

struct RunHooks {
    const Dataset* eval_set = nullptr;  // scored after every adaptation epoch
    std::function<void(const MetricRecord&, const TrainState&)> on_epoch;
    // Called by run_pipeline once warm-up and zeta calibration are done.
    std::function<void(const TrainState&, double zeta)> on_warmup;
    const std::atomic<bool>* stop = nullptr;  // checked between iterations
};

struct RunResult {
    TrainState state;
    bool interrupted = false;
};

/// Adaptation epochs from a warmed-up state. Each epoch pairs independently
/// shuffled source and target scans; an epoch covers every target scan once.
RunResult adapt(TrainState state, const Dataset& source, std::span<const PointCloud> target,
                const Segmenter& segmenter, const AdaptationConfig& cfg, const RunHooks& hooks = {});

/// Threshold that keeps `target_fraction` of the teacher's pseudo-labels over
/// all points of `target`.
double calibrate_zeta_on(const Segmenter& teacher, std::span<const PointCloud> target, double target_fraction);

struct PipelineResult {
    TrainState warmed;  // state right after warm-up (the source-only model)
    RunResult adapted;
    double zeta = 0.0;  // threshold actually used during adaptation
};

/// Warm-up, optional zeta calibration, then adaptation.
PipelineResult run_pipeline(const Dataset& source, std::span<const PointCloud> target, const Segmenter& segmenter,
                            AdaptationConfig cfg, const RunHooks& hooks = {});

}  // namespace cosmix
