// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "img/annotation.hpp"
#include "img/matrix.hpp"
#include "img/tape.hpp"

namespace img {

using nn::Mask;

// Maximum-likelihood span decode: the unmasked pair (i <= j) maximizing
// softmax(start)[i] * softmax(end)[j]; ties break to the lexicographically
// smallest (i, j). Runs in O(T) via a prefix argmax, and must agree with
// the quadratic brute force exactly.
std::pair<int, int> decode_span(const Matrix& start_logits, const Matrix& end_logits,
                                const Mask& mask);

// Frame index -> seconds under the (T-1) denominator convention; a single
// frame spans the whole duration.
std::pair<double, double> span_to_seconds(std::pair<int, int> span, int frames, double duration_sec);

// Interval IoU; identical zero-length spans count as 1, otherwise a
// zero-length union counts as 0.
double temporal_iou(std::pair<double, double> a, std::pair<double, double> b);

struct QueryResult {
    std::string video_id;
    std::pair<double, double> predicted;
    std::pair<double, double> ground_truth;
    double iou = 0.0;
};

struct EvalReport {
    std::map<int, double> r1_at;  // key mu in {3,5,7}, value in [0,100]
    double miou = 0.0;            // percentage
    std::vector<QueryResult> per_query;

    std::string to_json() const;
    static EvalReport from_json_text(const std::string& text);
};

// R1@mu with the strict ">" threshold (IoU must exceed mu*0.1) and mean
// IoU, both as percentages.
EvalReport evaluate(const std::vector<std::pair<double, double>>& predictions,
                    const std::vector<MomentAnnotation>& ground_truth);

}  // namespace img
