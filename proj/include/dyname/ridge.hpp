#pragma once

#include "dyname/periods.hpp"
#include "dyname/series.hpp"

#include <functional>

namespace dyname {

/// One channel's ridge problem: rows of `features` are phi of the batch
/// inputs, rows of `targets` the matching horizons.
struct RidgeProblem {
    Matrix features; // n x D
    Matrix targets;  // n x H
    double lambda = 1e-4;
    Vector query;    // D
};

enum class RidgeForm { dual, primal };

/// z (Z^T Z + lambda I)^-1 Z^T Y. The D x D solve dominates. For lambda > 0
/// this is a QR least-squares solve of [Z; sqrt(lambda) I] W = [Y; 0], which
/// avoids squaring the condition number; lambda = 0 uses the normal equations.
Vector solve_primal(const RidgeProblem& problem);

/// The same closed form through a Cholesky factor of Z^T Z + lambda I.
/// Cheaper than solve_primal, noticeably less accurate for small lambda.
Vector solve_primal_normal(const RidgeProblem& problem);

/// (z Z^T)(Z Z^T + lambda I)^-1 Y. The n x n solve dominates.
Vector solve_dual(const RidgeProblem& problem);

Vector solve_ridge(const RidgeProblem& problem, RidgeForm form);

/// Maps stacked lookbacks (n x L) to stacked features (n x D).
using FeatureMap = std::function<Matrix(const Matrix&)>;

struct ExpertPrediction {
    Matrix y_hat; // H x C
    int expert_index = 0;
};

/// Independent per-channel ridge fits on an expert batch, evaluated at the
/// per-channel query features (C x D, one row per channel).
ExpertPrediction predict_expert(const ExpertBatch& batch, const FeatureMap& phi, const Matrix& query_features,
                                double lambda, int expert_index, RidgeForm form = RidgeForm::dual);

} // namespace dyname
