// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "img/metrics.hpp"
#include "img/model.hpp"

namespace img {

// Decode every sample with the selected branch and score against ground
// truth. For the fusion branch, mean_p_out (if given) receives the mean
// importance weight actually used.
EvalReport evaluate_model(const Model& model, const Dataset& ds, Branch branch,
                          PMode pmode = PMode::Predictor, double p_override = 0.5,
                          double* mean_p_out = nullptr);

struct SweepRow {
    double fraction = 0.0;
    double mean_p = 0.0;
    double miou_with_aip = 0.0;
    double miou_fixed_half = 0.0;
};

// Robustness sweep: for each fraction, replace that share of test samples'
// audio with unit Gaussian noise (seeded, nested prefixes so larger
// fractions extend smaller ones) and evaluate with the predictor-weighted
// and the fixed-0.5 fusion.
std::vector<SweepRow> noise_sweep(const Model& model, const Dataset& test,
                                  const std::vector<double>& fractions, uint64_t seed);

std::string sweep_to_json(const std::vector<SweepRow>& rows);
std::vector<SweepRow> sweep_from_json_text(const std::string& text);

}  // namespace img
