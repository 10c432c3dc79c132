#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cosmix/core.hpp"

namespace cosmix {

/// Row-major per-point probability vectors; columns follow ClassSet order.
struct ProbabilityField {
    std::size_t num_classes = 0;
    std::vector<double> values;

    ProbabilityField() = default;
    ProbabilityField(std::size_t points, std::size_t classes)
        : num_classes(classes), values(points * classes, 0.0) {}

    std::size_t size() const noexcept { return num_classes == 0 ? 0 : values.size() / num_classes; }
    double& at(std::size_t point, std::size_t cls) { return values[point * num_classes + cls]; }
    double at(std::size_t point, std::size_t cls) const { return values[point * num_classes + cls]; }
    std::span<const double> row(std::size_t point) const {
        return {values.data() + point * num_classes, num_classes};
    }
};

struct ParamVector {
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }

    friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

struct OptimConfig {
    double lr = 0.001;
    double beta = 0.99;
    std::size_t gamma = 1;

    void check() const;
};

inline constexpr double kDiceSmoothing = 1e-5;

/// Column index of every label (ignored points map to nullopt). Throws
/// UnknownClassId for labels outside the set.
std::vector<std::optional<std::size_t>> label_columns(const LabelArray& labels, const ClassSet& classes);

/// Soft Dice with squared denominators, averaged over the classes present in
/// `labels`:
///   D_c = (2 sum p*y + eps) / (sum p^2 + sum y^2 + eps),  loss = 1 - mean_c D_c.
/// Ignored points contribute nothing. Throws AllIgnored if no point is labeled.
double dice_loss(const ProbabilityField& probs, const LabelArray& labels, const ClassSet& classes);

/// Analytic d(dice_loss)/d(probs), same layout as `probs`.
ProbabilityField dice_grad(const ProbabilityField& probs, const LabelArray& labels, const ClassSet& classes);

/// Loss value and gradient in one pass.
struct DiceResult {
    double loss = 0.0;
    ProbabilityField grad;
};
DiceResult dice_loss_and_grad(const ProbabilityField& probs, const LabelArray& labels, const ClassSet& classes);

/// Sum of the enabled branch losses; a disabled branch contributes nothing.
double total_loss(std::optional<double> loss_s2t, std::optional<double> loss_t2s);

/// teacher <- beta * teacher + (1 - beta) * student, elementwise.
ParamVector ema_update(const ParamVector& teacher, const ParamVector& student, double beta);

/// params - lr * grads. Throws NonFiniteGradient on NaN/Inf gradients.
ParamVector sgd_step(const ParamVector& params, const ParamVector& grads, double lr);

}  // namespace cosmix
