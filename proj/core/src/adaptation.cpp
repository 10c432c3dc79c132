#include "cosmix/adaptation.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "cosmix/rng.hpp"

namespace cosmix {
namespace {

constexpr std::uint64_t kWarmupTag = 0x5741524D55500000ULL;
constexpr std::uint64_t kAdaptTag = 0x4144415054000000ULL;

// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index writes its
// own output slot; reductions happen afterwards in index order.
template <typename Fn>
void for_each_index(std::size_t n, std::size_t workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t threads = std::min(workers, n);
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += threads) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

bool has_labels(const LabelArray& labels) {
    for (ClassId l : labels) {
        if (l != kIgnore) return true;
    }
    return false;
}

void accumulate(ParamVector& sum, const ParamVector& g) {
    if (sum.values.empty()) sum.values.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) sum.values[i] += g.values[i];
}

void check_finite(double loss) {
    if (!std::isfinite(loss)) throw Error(ErrorCode::NumericFailure, "non-finite loss");
}

}  // namespace

void AdaptationConfig::check() const {
    if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
    selection.check();
    optim.check();
    mix.local.check();
    mix.global.check();
    if (zeta_target_fraction && !(*zeta_target_fraction > 0.0 && *zeta_target_fraction < 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "zeta_target_fraction must lie in (0, 1)");
    }
}

SelectionConfig AdaptationConfig::effective_selection() const {
    SelectionConfig s = selection;
    s.weighted = selection.weighted && flags.weighted_f;
    return s;
}

MixConfig AdaptationConfig::effective_mix() const {
    MixConfig m = mix;
    m.local.enabled = mix.local.enabled && flags.local_aug;
    m.global.enabled = mix.global.enabled && flags.global_aug;
    return m;
}

TrainState warmup(const Dataset& source, const Segmenter& segmenter, const AdaptationConfig& cfg) {
    if (source.empty()) throw Error(ErrorCode::EmptyDataset, "no source scans for warm-up");
    cfg.check();

    auto student = segmenter.clone();
    TrainState state;
    state.seed = cfg.seed;
    state.student = segmenter.params();

    for (std::size_t epoch = 0; epoch < cfg.epochs_warmup; ++epoch) {
        Rng shuffle = Rng::stream(cfg.seed ^ kWarmupTag, epoch);
        const auto order = permutation(source.size(), shuffle);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - start);
            student->set_params(state.student);
            std::vector<std::optional<GradResult>> grads(count);
            for_each_index(count, cfg.workers, [&](std::size_t b) {
                const auto& scan = source[order[start + b]];
                if (has_labels(scan.labels)) grads[b] = student->grad(scan.cloud, scan.labels, LossKind::Dice);
            });
            ParamVector sum;
            std::size_t used = 0;
            for (const auto& g : grads) {
                if (!g) continue;
                check_finite(g->loss);
                accumulate(sum, g->grad);
                ++used;
            }
            if (used == 0) continue;
            for (double& v : sum.values) v /= static_cast<double>(count);
            state.student = sgd_step(state.student, sum, cfg.optim.lr);
        }
    }
    state.teacher = state.student;
    return state;
}

TrainState adapt_iteration(TrainState state, const Segmenter& segmenter, std::span<const LabeledScan* const> source,
                           std::span<const PointCloud* const> target, const ClassHistogram& histogram,
                           const AdaptationConfig& cfg, IterationStats* stats) {
    if (source.size() != target.size()) {
        throw Error(ErrorCode::LengthMismatch, "source and target batches differ in size");
    }
    if (state.student.size() != state.teacher.size()) {
        throw Error(ErrorCode::LengthMismatch, "teacher and student differ in length");
    }
    const auto& flags = cfg.flags;
    const SelectionConfig selection = cfg.effective_selection();
    const MixConfig mix = cfg.effective_mix();

    auto teacher = segmenter.clone();
    teacher->set_params(state.teacher);
    auto student = segmenter.clone();
    student->set_params(state.student);

    struct SampleGrads {
        std::optional<GradResult> s2t;
        std::optional<GradResult> t2s;
    };
    const std::size_t batch = source.size();
    std::vector<SampleGrads> per_sample(batch);
    const std::uint64_t iteration_key = mix_seed(state.seed) ^ mix_seed(state.iteration + 1);

    if (flags.branch_s2t || flags.branch_t2s) {
        for_each_index(batch, cfg.workers, [&](std::size_t b) {
            Rng rng = Rng::stream(iteration_key, b);
            const Prediction pseudo = to_prediction(teacher->predict(*target[b]), segmenter.classes());
            const CosmixPair pair = cosmix_pair(source[b]->cloud, source[b]->labels, *target[b], pseudo, selection,
                                                mix, histogram, rng);
            assert((pair.source_to_target.check(), pair.target_to_source.check(), true));
            if (flags.branch_s2t && has_labels(pair.source_to_target.labels)) {
                per_sample[b].s2t =
                    student->grad(pair.source_to_target.cloud, pair.source_to_target.labels, LossKind::Dice);
            }
            if (flags.branch_t2s && has_labels(pair.target_to_source.labels)) {
                per_sample[b].t2s =
                    student->grad(pair.target_to_source.cloud, pair.target_to_source.labels, LossKind::Dice);
            }
        });
    }

    ParamVector sum;
    double loss_s2t = 0.0, loss_t2s = 0.0;
    std::size_t n_s2t = 0, n_t2s = 0;
    for (const auto& s : per_sample) {
        if (s.s2t) {
            check_finite(s.s2t->loss);
            accumulate(sum, s.s2t->grad);
            loss_s2t += s.s2t->loss;
            ++n_s2t;
        }
        if (s.t2s) {
            check_finite(s.t2s->loss);
            accumulate(sum, s.t2s->grad);
            loss_t2s += s.t2s->loss;
            ++n_t2s;
        }
    }
    if (stats) {
        stats->loss_s2t = n_s2t > 0 ? std::optional(loss_s2t / static_cast<double>(n_s2t)) : std::nullopt;
        stats->loss_t2s = n_t2s > 0 ? std::optional(loss_t2s / static_cast<double>(n_t2s)) : std::nullopt;
    }
    if (n_s2t + n_t2s > 0) {
        // Gradient of the batch-mean total loss (sum of both branches).
        for (double& v : sum.values) v /= static_cast<double>(batch);
        state.student = sgd_step(state.student, sum, cfg.optim.lr);
    }

    ++state.iteration;
    if (flags.ema && state.iteration % cfg.optim.gamma == 0) {
        state.teacher = ema_update(state.teacher, state.student, cfg.optim.beta);
    }
    return state;
}

EvalResult score(std::span<const LabelArray> truth, std::span<const LabelArray> predicted, const ClassSet& classes,
                 IouConvention convention) {
    if (truth.size() != predicted.size()) {
        throw Error(ErrorCode::LengthMismatch, "truth and prediction scan counts differ");
    }
    const std::size_t k = classes.size();
    EvalResult r;
    r.num_classes = k;
    r.confusion.assign(k * k, 0);
    std::vector<std::uint64_t> missed(k, 0);  // labeled points predicted as ignore
    for (std::size_t s = 0; s < truth.size(); ++s) {
        if (truth[s].size() != predicted[s].size()) {
            throw Error(ErrorCode::LengthMismatch, "scan " + std::to_string(s));
        }
        const auto gt_cols = label_columns(truth[s], classes);
        const auto pred_cols = label_columns(predicted[s], classes);
        for (std::size_t i = 0; i < gt_cols.size(); ++i) {
            if (!gt_cols[i]) continue;
            if (pred_cols[i]) {
                ++r.confusion[*gt_cols[i] * k + *pred_cols[i]];
            } else {
                ++missed[*gt_cols[i]];
            }
        }
    }
    r.iou.assign(k, std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    std::size_t scored = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const std::uint64_t tp = r.at(c, c);
        std::uint64_t fp = 0, fn = missed[c];
        for (std::size_t o = 0; o < k; ++o) {
            if (o == c) continue;
            fp += r.at(o, c);
            fn += r.at(c, o);
        }
        const std::uint64_t uni = tp + fp + fn;
        if (uni == 0) {
            if (convention == IouConvention::ExcludeEmpty) continue;
            r.iou[c] = 0.0;
        } else {
            r.iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
        }
        sum += r.iou[c];
        ++scored;
    }
    r.miou = scored > 0 ? sum / static_cast<double>(scored) : 0.0;
    return r;
}

EvalResult evaluate(const Dataset& dataset, const Segmenter& segmenter, IouConvention convention) {
    if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "nothing to evaluate");
    std::vector<LabelArray> truth, predicted;
    truth.reserve(dataset.size());
    predicted.reserve(dataset.size());
    for (const auto& scan : dataset) {
        truth.push_back(scan.labels);
        predicted.push_back(to_prediction(segmenter.predict(scan.cloud), segmenter.classes()).classes);
    }
    return score(truth, predicted, segmenter.classes(), convention);
}

RunResult adapt(TrainState state, const Dataset& source, std::span<const PointCloud> target,
                const Segmenter& segmenter, const AdaptationConfig& cfg, const RunHooks& hooks) {
    if (source.empty()) throw Error(ErrorCode::EmptyDataset, "no source scans");
    if (target.empty()) throw Error(ErrorCode::EmptyDataset, "no target scans");
    cfg.check();
    const ClassHistogram histogram = class_frequency(source);
    auto evaluator = segmenter.clone();

    RunResult result;
    for (std::size_t epoch = 0; epoch < cfg.epochs_adapt; ++epoch) {
        Rng shuffle = Rng::stream(cfg.seed ^ kAdaptTag, epoch);
        const auto target_order = permutation(target.size(), shuffle);
        const auto source_order = permutation(source.size(), shuffle);

        double sum_s2t = 0.0, sum_t2s = 0.0;
        std::size_t n_s2t = 0, n_t2s = 0;
        for (std::size_t start = 0; start < target_order.size(); start += cfg.batch_size) {
            if (hooks.stop && hooks.stop->load()) {
                result.interrupted = true;
                result.state = std::move(state);
                return result;
            }
            const std::size_t count = std::min(cfg.batch_size, target_order.size() - start);
            std::vector<const LabeledScan*> src(count);
            std::vector<const PointCloud*> tgt(count);
            for (std::size_t b = 0; b < count; ++b) {
                tgt[b] = &target[target_order[start + b]];
                src[b] = &source[source_order[(start + b) % source_order.size()]];
            }
            IterationStats stats;
            state = adapt_iteration(std::move(state), segmenter, src, tgt, histogram, cfg, &stats);
            if (stats.loss_s2t) {
                sum_s2t += *stats.loss_s2t;
                ++n_s2t;
            }
            if (stats.loss_t2s) {
                sum_t2s += *stats.loss_t2s;
                ++n_t2s;
            }
        }

        MetricRecord record;
        record.iteration = state.iteration;
        record.epoch = epoch + 1;
        record.loss_s2t = n_s2t > 0 ? sum_s2t / static_cast<double>(n_s2t) : 0.0;
        record.loss_t2s = n_t2s > 0 ? sum_t2s / static_cast<double>(n_t2s) : 0.0;
        record.miou = std::numeric_limits<double>::quiet_NaN();
        if (hooks.eval_set) {
            evaluator->set_params(state.student);
            record.miou = evaluate(*hooks.eval_set, *evaluator, cfg.iou).miou;
        }
        state.history.push_back(record);
        if (hooks.on_epoch) hooks.on_epoch(record, state);
    }
    result.state = std::move(state);
    return result;
}

double calibrate_zeta_on(const Segmenter& teacher, std::span<const PointCloud> target, double target_fraction) {
    std::vector<float> confidences;
    for (const auto& cloud : target) {
        const auto pred = to_prediction(teacher.predict(cloud), teacher.classes());
        confidences.insert(confidences.end(), pred.confidence.begin(), pred.confidence.end());
    }
    return calibrate_zeta(confidences, target_fraction);
}

PipelineResult run_pipeline(const Dataset& source, std::span<const PointCloud> target, const Segmenter& segmenter,
                            AdaptationConfig cfg, const RunHooks& hooks) {
    PipelineResult out;
    out.warmed = warmup(source, segmenter, cfg);
    if (cfg.zeta_target_fraction) {
        auto teacher = segmenter.clone();
        teacher->set_params(out.warmed.teacher);
        // Keep zeta inside the open interval the selection config requires.
        cfg.selection.zeta =
            std::clamp(calibrate_zeta_on(*teacher, target, *cfg.zeta_target_fraction), 1e-6, 1.0 - 1e-6);
    }
    out.zeta = cfg.selection.zeta;
    if (hooks.on_warmup) hooks.on_warmup(out.warmed, out.zeta);
    if (hooks.stop && hooks.stop->load()) {
        out.adapted.state = out.warmed;
        out.adapted.interrupted = true;
        return out;
    }
    out.adapted = adapt(out.warmed, source, target, segmenter, cfg, hooks);
    return out;
}

}  // namespace cosmix
