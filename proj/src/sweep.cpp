// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "img/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "img/errors.hpp"
#include "img/kernels.hpp"

namespace img {

using nlohmann::json;

EvalReport evaluate_model(const Model& model, const Dataset& ds, Branch branch, PMode pmode,
                          double p_override, double* mean_p_out) {
    if (ds.samples.empty()) throw ValidationError("evaluate_model: empty dataset");
    const int n = static_cast<int>(ds.size());
    std::vector<std::pair<double, double>> preds(n);
    std::vector<MomentAnnotation> gts(n);
    std::vector<double> ps(n, 0.0);
    std::vector<std::exception_ptr> errors(n);

    const bool par = kernels::mode() == kernels::Mode::Parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int i = 0; i < n; ++i) {
        try {
            const FeatureBundle& b = ds.samples[i];
            Model::EvalOutput out = model.forward_eval(b, branch, pmode, p_override);
            const auto span = decode_span(out.start_logits, out.end_logits, b.frame_mask);
            preds[i] = span_to_seconds(span, b.frames(), b.annotation.duration_sec);
            gts[i] = b.annotation;
            ps[i] = out.p;
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (int i = 0; i < n; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);

    if (mean_p_out) *mean_p_out = std::accumulate(ps.begin(), ps.end(), 0.0) / n;
    return evaluate(preds, gts);
}

std::vector<SweepRow> noise_sweep(const Model& model, const Dataset& test,
                                  const std::vector<double>& fractions, uint64_t seed) {
    if (test.samples.empty()) throw ValidationError("noise_sweep: empty dataset");
    for (size_t i = 0; i < fractions.size(); ++i) {
        if (fractions[i] < 0.0 || fractions[i] > 1.0)
            throw ValidationError("noise_sweep: fractions must lie in [0,1]");
        if (i > 0 && fractions[i] < fractions[i - 1])
            throw ValidationError("noise_sweep: fractions must be sorted ascending");
    }

    const int n = static_cast<int>(test.size());
    Rng rng(seed);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    // Per-sample replacement audio, fixed across fractions so that larger
    // fractions are strict supersets of smaller ones.
    Dataset noised = test;
    std::vector<SweepRow> rows;
    int already = 0;
    for (double f : fractions) {
        const int want = static_cast<int>(std::lround(f * n));
        for (; already < want; ++already) {
            const int idx = order[already];
            Matrix& audio = noised.samples[idx].audio;
            Rng arng(mix_seed(seed, static_cast<uint64_t>(idx), 0xA0D10ULL));
            for (size_t k = 0; k < audio.size(); ++k) audio[k] = arng.normal();
        }
        SweepRow row;
        row.fraction = f;
        double mean_p = 0.0;
        row.miou_with_aip = evaluate_model(model, noised, Branch::Fusion, PMode::Predictor, 0.5, &mean_p).miou;
        row.mean_p = mean_p;
        row.miou_fixed_half = evaluate_model(model, noised, Branch::Fusion, PMode::FixedHalf).miou;
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_to_json(const std::vector<SweepRow>& rows) {
    json j;
    j["type"] = "noise_sweep";
    j["rows"] = json::array();
    for (const SweepRow& r : rows)
        j["rows"].push_back({{"fraction", r.fraction},
                             {"mean_p", r.mean_p},
                             {"miou_with_aip", r.miou_with_aip},
                             {"miou_fixed_half", r.miou_fixed_half}});
    return j.dump(2);
}

std::vector<SweepRow> sweep_from_json_text(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError("noise sweep: invalid JSON");
    std::vector<SweepRow> rows;
    try {
        for (const auto& rj : j.at("rows")) {
            SweepRow r;
            r.fraction = rj.at("fraction").get<double>();
            r.mean_p = rj.at("mean_p").get<double>();
            r.miou_with_aip = rj.at("miou_with_aip").get<double>();
            r.miou_fixed_half = rj.at("miou_fixed_half").get<double>();
            rows.push_back(r);
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("noise sweep: ") + e.what());
    }
    return rows;
}

}  // namespace img
