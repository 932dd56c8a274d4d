// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "img/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "img/errors.hpp"

namespace img {

using nlohmann::json;

namespace {

std::vector<double> masked_softmax(const Matrix& logits, const Mask& mask) {
    const int T = logits.cols();
    std::vector<double> p(T, 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < T; ++j)
        if (mask[j]) mx = std::max(mx, logits.at(0, j));
    double denom = 0.0;
    for (int j = 0; j < T; ++j)
        if (mask[j]) denom += std::exp(logits.at(0, j) - mx);
    for (int j = 0; j < T; ++j)
        if (mask[j]) p[j] = std::exp(logits.at(0, j) - mx) / denom;
    return p;
}

}  // namespace

std::pair<int, int> decode_span(const Matrix& start_logits, const Matrix& end_logits,
                                const Mask& mask) {
    const int T = start_logits.cols();
    if (start_logits.rows() != 1 || end_logits.rows() != 1 || end_logits.cols() != T)
        throw ValidationError("decode_span: logits must be [1,T] pairs");
    if (static_cast<int>(mask.size()) != T) throw ValidationError("decode_span: mask length mismatch");
    if (nn::count_true(mask) == 0) throw ValidationError("decode_span: all positions masked");

    const std::vector<double> ps = masked_softmax(start_logits, mask);
    const std::vector<double> pe = masked_softmax(end_logits, mask);

    double best = -1.0;
    int best_i = -1, best_j = -1;
    int arg_i = -1;
    double run_max = -1.0;
    for (int j = 0; j < T; ++j) {
        if (mask[j] && ps[j] > run_max) {
            run_max = ps[j];
            arg_i = j;
        }
        if (!mask[j] || arg_i < 0) continue;
        const double prod = run_max * pe[j];
        if (prod > best ||
            (prod == best && (arg_i < best_i || (arg_i == best_i && j < best_j)))) {
            best = prod;
            best_i = arg_i;
            best_j = j;
        }
    }
    return {best_i, best_j};
}

std::pair<double, double> span_to_seconds(std::pair<int, int> span, int frames, double duration_sec) {
    const auto [i, j] = span;
    if (!(0 <= i && i <= j && j < frames)) throw ValidationError("span_to_seconds: bad span");
    if (frames == 1) return {0.0, duration_sec};
    const double denom = static_cast<double>(frames - 1);
    return {i / denom * duration_sec, j / denom * duration_sec};
}

double temporal_iou(std::pair<double, double> a, std::pair<double, double> b) {
    if (a.first > a.second || b.first > b.second)
        throw ValidationError("temporal_iou: reversed span");
    const double inter = std::min(a.second, b.second) - std::max(a.first, b.first);
    const double uni = std::max(a.second, b.second) - std::min(a.first, b.first);
    if (uni <= 0.0) {
        // Zero-length union: both are points; identical points match fully.
        return (a.first == b.first && a.second == b.second) ? 1.0 : 0.0;
    }
    return std::max(0.0, inter) / uni;
}

EvalReport evaluate(const std::vector<std::pair<double, double>>& predictions,
                    const std::vector<MomentAnnotation>& ground_truth) {
    if (predictions.empty()) throw ValidationError("evaluate: empty prediction list");
    if (predictions.size() != ground_truth.size())
        throw ValidationError("evaluate: prediction/ground-truth length mismatch");

    EvalReport rep;
    const int n = static_cast<int>(predictions.size());
    std::map<int, int> hits = {{3, 0}, {5, 0}, {7, 0}};
    double iou_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto gt_span = std::make_pair(ground_truth[i].start_sec, ground_truth[i].end_sec);
        const double iou = temporal_iou(predictions[i], gt_span);
        iou_sum += iou;
        for (auto& [mu, count] : hits)
            if (iou > mu * 0.1) ++count;  // strict ">", as defined
        rep.per_query.push_back({ground_truth[i].video_id, predictions[i], gt_span, iou});
    }
    for (auto& [mu, count] : hits) rep.r1_at[mu] = 100.0 * count / n;
    rep.miou = 100.0 * iou_sum / n;
    return rep;
}

std::string EvalReport::to_json() const {
    json j;
    for (const auto& [mu, v] : r1_at) j["r1"][std::to_string(mu)] = v;
    j["miou"] = miou;
    j["per_query"] = json::array();
    for (const QueryResult& q : per_query)
        j["per_query"].push_back({{"video_id", q.video_id},
                                  {"pred", {q.predicted.first, q.predicted.second}},
                                  {"gt", {q.ground_truth.first, q.ground_truth.second}},
                                  {"iou", q.iou}});
    return j.dump(2);
}

EvalReport EvalReport::from_json_text(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError("eval report: invalid JSON");
    EvalReport rep;
    try {
        for (auto it = j.at("r1").begin(); it != j.at("r1").end(); ++it)
            rep.r1_at[std::stoi(it.key())] = it.value().get<double>();
        rep.miou = j.at("miou").get<double>();
        if (j.contains("per_query"))
            for (const auto& q : j["per_query"]) {
                QueryResult r;
                r.video_id = q.at("video_id").get<std::string>();
                r.predicted = {q.at("pred")[0].get<double>(), q.at("pred")[1].get<double>()};
                r.ground_truth = {q.at("gt")[0].get<double>(), q.at("gt")[1].get<double>()};
                r.iou = q.at("iou").get<double>();
                rep.per_query.push_back(std::move(r));
            }
    } catch (const json::exception& e) {
        throw FormatError(std::string("eval report: ") + e.what());
    }
    return rep;
}

}  // namespace img
