#pragma once

#include "dyname/engine.hpp"

namespace dyname {

/// Backbone + general expert forecast at anchor t (H x C).
Matrix gd_forecast(const StreamView& view, Index t, const ModelState& state);

/// One SGD step of backbone + general expert on the completed pair at `anchor`.
void gd_update(const StreamView& view, Index anchor, ModelState& state);

/// Plain online fine-tuning (update = true) or the frozen pretrained model.
RunResult run_gd(const SeriesStore& normalized, const EngineConfig& cfg, const ModelState& pretrained,
                 const OnlineRange& range, bool update);

/// Per-channel ridge on raw lookbacks for the given anchors, evaluated at x_t.
Matrix strided_lr_predict(const StreamView& view, Index t, const std::vector<Index>& anchors, Index lookback,
                          Index horizon, double lambda = 1e-4);

/// Fit on the samples taken one, two, ... periods back.
Matrix weekly_lr_predict(const StreamView& view, Index t, Index lookback, Index horizon, Index period = 168,
                         Index samples = 4, double lambda = 1e-4);

/// Fit on the most recent completed windows, anchors t-H, t-2H, ... so the
/// targets never overlap.
Matrix recency_lr_predict(const StreamView& view, Index t, Index lookback, Index horizon, Index samples = 4,
                          double lambda = 1e-4);

RunResult run_lr_baseline(const SeriesStore& normalized, const EngineConfig& cfg, const OnlineRange& range,
                          Method method);

/// The full pipeline with one ablation wired in.
RunResult run_ablation(const SeriesStore& raw, const EngineConfig& cfg, const AblationSpec& spec);

} // namespace dyname
