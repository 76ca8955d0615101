#include "dyname/ridge.hpp"

#include "dyname/error.hpp"

#include <cmath>

namespace dyname {

namespace {

void validate(const RidgeProblem& p) {
    if (p.features.rows() < 1 || p.features.cols() < 1) fail(Errc::OutOfRange, "ridge needs n >= 1 and D >= 1");
    if (p.targets.rows() != p.features.rows()) fail(Errc::OutOfRange, "feature and target row counts differ");
    if (p.query.size() != p.features.cols()) fail(Errc::OutOfRange, "query dimension differs from features");
    if (!(p.lambda >= 0.0) || !std::isfinite(p.lambda)) fail(Errc::ConfigError, "lambda must be finite and >= 0");
}

// Solves A X = B for symmetric positive semi-definite A. Cholesky first; a
// failed or numerically rank-deficient factorization falls back to full
// pivoting LU, which reports genuine singularity.
Matrix spd_solve(const Matrix& a, const Matrix& b) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() == Eigen::Success) {
        const Vector diag = llt.matrixLLT().diagonal();
        const double lo = diag.minCoeff();
        const double hi = diag.maxCoeff();
        if (lo > 0.0 && (lo * lo) / (hi * hi) > 1e-15) return llt.solve(b);
    }
    Eigen::FullPivLU<Matrix> lu(a);
    if (!lu.isInvertible()) fail(Errc::SingularSystem, "ridge system is singular (lambda = 0 with rank-deficient Gram)");
    return lu.solve(b);
}

} // namespace

Vector solve_primal(const RidgeProblem& p) {
    validate(p);
    if (p.lambda == 0.0) return solve_primal_normal(p);
    const Index n = p.features.rows(), d = p.features.cols();
    Matrix aug(n + d, d);
    aug.topRows(n) = p.features;
    aug.bottomRows(d) = std::sqrt(p.lambda) * Matrix::Identity(d, d);
    Matrix rhs = Matrix::Zero(n + d, p.targets.cols());
    rhs.topRows(n) = p.targets;
    const Matrix weights = aug.householderQr().solve(rhs); // D x H
    return weights.transpose() * p.query;
}

Vector solve_primal_normal(const RidgeProblem& p) {
    validate(p);
    Matrix cov = p.features.transpose() * p.features;
    cov.diagonal().array() += p.lambda;
    const Matrix weights = spd_solve(cov, p.features.transpose() * p.targets); // D x H
    return weights.transpose() * p.query;
}

Vector solve_dual(const RidgeProblem& p) {
    validate(p);
    Matrix gram = p.features * p.features.transpose();
    gram.diagonal().array() += p.lambda;
    const Matrix coeffs = spd_solve(gram, p.targets); // n x H
    const Vector similarity = p.features * p.query;   // n
    return coeffs.transpose() * similarity;
}

Vector solve_ridge(const RidgeProblem& problem, RidgeForm form) {
    return form == RidgeForm::dual ? solve_dual(problem) : solve_primal(problem);
}

ExpertPrediction predict_expert(const ExpertBatch& batch, const FeatureMap& phi, const Matrix& query_features,
                                double lambda, int expert_index, RidgeForm form) {
    const auto channels = static_cast<Index>(batch.inputs.size());
    if (channels == 0 || query_features.rows() != channels) {
        fail(Errc::OutOfRange, "query features must have one row per batch channel");
    }
    const Index horizon = batch.targets.front().cols();
    ExpertPrediction out{Matrix(horizon, channels), expert_index};
    for (Index c = 0; c < channels; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        RidgeProblem problem{phi(batch.inputs[ci]), batch.targets[ci], lambda, query_features.row(c).transpose()};
        out.y_hat.col(c) = solve_ridge(problem, form);
    }
    if (!out.y_hat.allFinite()) fail(Errc::SingularSystem, "expert prediction is not finite");
    return out;
}

} // namespace dyname
