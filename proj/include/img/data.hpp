// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "img/annotation.hpp"
#include "img/config.hpp"
#include "img/matrix.hpp"
#include "img/rng.hpp"
#include "img/tape.hpp"

namespace img {

using nn::Mask;

// One sample: per-frame visual features, per-clip audio features, query
// token embeddings, validity masks and the ground-truth moment. Modalities
// that were not requested at load time stay empty.
struct FeatureBundle {
    Matrix visual;  // [T, d_v]
    Matrix audio;   // [T, d_a]
    Matrix query;   // [N, d_q]
    Mask frame_mask;
    Mask token_mask;
    MomentAnnotation annotation;
    std::string carrier;  // synthetic provenance tag, empty for real data

    int frames() const { return static_cast<int>(frame_mask.size()); }
    int tokens() const { return static_cast<int>(token_mask.size()); }
    void validate(int max_frames, int max_tokens) const;
};

struct Dataset {
    std::vector<FeatureBundle> samples;
    int d_v = 0, d_a = 0, d_q = 0;

    size_t size() const { return samples.size(); }
};

// Which modalities a consumer needs; visual-branch inference must never
// touch audio feature files.
struct LoadNeeds {
    bool visual = true;
    bool audio = true;
    bool query = true;
};

// --- IMGF binary feature format ---------------------------------------
// magic "IMGF", u16 version, u32 rows, u32 cols, rows*cols float32 LE
// row-major. Sequences longer than max_frames are uniformly downsampled
// (index round(i*(T-1)/(max-1))).

void save_features(const std::string& path, const Matrix& m);
Matrix load_features(const std::string& path, int max_frames);

// --- Annotations -------------------------------------------------------
// Line-delimited JSON: {"video_id", "duration", "start", "end"} plus
// optionally "query_token_ids" or "query_text", and "carrier".

struct AnnotationRecord {
    std::string video_id;
    double duration = 0.0;
    double start = 0.0;
    double end = 0.0;
    std::vector<int> query_token_ids;
    std::string query_text;
    std::string carrier;
};

std::vector<AnnotationRecord> load_annotations(const std::string& path);

// --- Dataset directory -------------------------------------------------
// dir/annotations.jsonl, dir/features/<id>.{v,a,q}.imgf

void write_dataset(const std::string& dir, const std::vector<FeatureBundle>& samples);
Dataset load_dataset(const std::string& dir, const LoadNeeds& needs, int max_frames, int max_tokens);

// --- Synthetic corpus ---------------------------------------------------
// Plants a per-code pattern inside the moment span of the carrier
// modality; everything else is unit Gaussian noise. "both" plants the
// pattern in both modalities; "neither" plants it in the visual modality
// at 3x the noise level so the task stays solvable while audio is useless.

std::vector<FeatureBundle> generate_synthetic_dataset(const SyntheticSpec& spec);

// Split position used when writing a generated corpus to train/ and test/.
int synthetic_train_count(const SyntheticSpec& spec);

}  // namespace img
