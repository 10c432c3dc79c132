#include "cosmix/learning.hpp"

#include <cmath>

namespace cosmix {

void OptimConfig::check() const {
    if (!(lr > 0.0 && std::isfinite(lr))) throw Error(ErrorCode::InvalidConfig, "lr must be positive");
    if (!(beta >= 0.0 && beta < 1.0)) throw Error(ErrorCode::InvalidConfig, "beta must lie in [0, 1)");
    if (gamma < 1) throw Error(ErrorCode::InvalidConfig, "gamma must be >= 1");
}

std::vector<std::optional<std::size_t>> label_columns(const LabelArray& labels, const ClassSet& classes) {
    std::vector<std::optional<std::size_t>> cols(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == kIgnore) continue;
        cols[i] = classes.index_of(labels[i]);
        if (!cols[i]) {
            throw Error(ErrorCode::UnknownClassId, "label " + std::to_string(labels[i]));
        }
    }
    return cols;
}

DiceResult dice_loss_and_grad(const ProbabilityField& probs, const LabelArray& labels, const ClassSet& classes) {
    const std::size_t n = labels.size();
    const std::size_t k = probs.num_classes;
    if (probs.size() != n) {
        throw Error(ErrorCode::LengthMismatch, "probabilities and labels differ in length");
    }
    if (k != classes.size()) {
        throw Error(ErrorCode::ShapeMismatch, "probability columns do not match the class set");
    }
    const auto cols = label_columns(labels, classes);

    // Per-class partial sums, accumulated in point order.
    std::vector<double> inter(k, 0.0), p_sq(k, 0.0), y_sq(k, 0.0);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (!cols[i]) continue;
        any = true;
        const std::size_t y = *cols[i];
        for (std::size_t c = 0; c < k; ++c) {
            const double p = probs.at(i, c);
            p_sq[c] += p * p;
        }
        inter[y] += probs.at(i, y);
        y_sq[y] += 1.0;
    }
    if (!any) {
        throw Error(ErrorCode::AllIgnored, "no labeled point to score");
    }

    std::size_t present = 0;
    for (std::size_t c = 0; c < k; ++c) present += y_sq[c] > 0.0 ? 1 : 0;

    DiceResult result;
    result.grad = ProbabilityField(n, k);
    double dice_sum = 0.0;
    // dL/dp_ic = -(1/K) * (2 y_ic (U_c + eps) - 2 p_ic (2 I_c + eps)) / (U_c + eps)^2
    std::vector<double> coef_y(k, 0.0), coef_p(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        if (y_sq[c] == 0.0) continue;
        const double num = 2.0 * inter[c] + kDiceSmoothing;
        const double den = p_sq[c] + y_sq[c] + kDiceSmoothing;
        dice_sum += num / den;
        coef_y[c] = -2.0 / (den * static_cast<double>(present));
        coef_p[c] = 2.0 * num / (den * den * static_cast<double>(present));
    }
    result.loss = 1.0 - dice_sum / static_cast<double>(present);

    for (std::size_t i = 0; i < n; ++i) {
        if (!cols[i]) continue;
        for (std::size_t c = 0; c < k; ++c) {
            result.grad.at(i, c) = coef_p[c] * probs.at(i, c);
        }
        result.grad.at(i, *cols[i]) += coef_y[*cols[i]];
    }
    return result;
}

double dice_loss(const ProbabilityField& probs, const LabelArray& labels, const ClassSet& classes) {
    return dice_loss_and_grad(probs, labels, classes).loss;
}

ProbabilityField dice_grad(const ProbabilityField& probs, const LabelArray& labels, const ClassSet& classes) {
    return dice_loss_and_grad(probs, labels, classes).grad;
}

double total_loss(std::optional<double> loss_s2t, std::optional<double> loss_t2s) {
    return loss_s2t.value_or(0.0) + loss_t2s.value_or(0.0);
}

ParamVector ema_update(const ParamVector& teacher, const ParamVector& student, double beta) {
    if (teacher.size() != student.size()) {
        throw Error(ErrorCode::LengthMismatch, "teacher and student differ in length");
    }
    ParamVector out;
    out.values.resize(teacher.size());
    for (std::size_t i = 0; i < teacher.size(); ++i) {
        // Same as beta * t + (1 - beta) * s, but exact when t == s.
        out.values[i] = teacher.values[i] + (1.0 - beta) * (student.values[i] - teacher.values[i]);
    }
    return out;
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grads, double lr) {
    if (params.size() != grads.size()) {
        throw Error(ErrorCode::LengthMismatch, "parameters and gradients differ in length");
    }
    ParamVector out;
    out.values.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!std::isfinite(grads.values[i])) {
            throw Error(ErrorCode::NonFiniteGradient, "gradient entry " + std::to_string(i));
        }
        out.values[i] = params.values[i] - lr * grads.values[i];
    }
    return out;
}

}  // namespace cosmix
