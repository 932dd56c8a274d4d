// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

namespace img {

enum class Branch { Fusion, Visual, Audio };

std::string branch_name(Branch b);
Branch branch_from_name(const std::string& s);

// Pseudo-label thresholds and curriculum schedule for the audio
// importance predictor.
struct ImportanceConfig {
    double gamma = 3.0;     // temperature of the loss softmax
    double eps_min = 0.2;   // below: audio treated as uninformative
    double eps_max = 0.8;   // at or above: audio treated as dominant
    int warmup_epochs = 30; // linear ramp from neutral 0.5 to predicted p

    void validate() const;
};

struct LossWeights {
    double lambda1 = 5.0;   // importance BCE
    double lambda2 = 10.0;  // distillation
    double lambda3 = 0.5;   // saliency
    double tau = 2.0;       // distillation temperature
    double saliency_margin = 0.2;
    int saliency_pairs = 1;

    void validate() const;
};

struct ModelConfig {
    int d = 128;   // common hidden width
    int d_v = 128; // raw visual feature width
    int d_a = 128; // raw audio feature width
    int d_q = 300; // raw query embedding width
    int max_frames = 128;
    int max_tokens = 48;
    int heads = 4;
    std::vector<int> kernel_bank = {1, 3, 5};
    int slots = 3;
    int slot_iters = 3;
    bool event_cross_modal = false;  // attend to the other modality's event slots
    ImportanceConfig importance;
    LossWeights loss;
    double lr = 5e-4;
    double weight_decay = 0.01;
    int epochs = 100;
    int batch_size = 16;
    long seed = 20260810;
    Branch branch_for_inference = Branch::Fusion;

    void validate() const;

    // Paper-scale defaults (the struct initializers above).
    static ModelConfig defaults();
    // Desk-scale defaults sized for the synthetic corpus; this is the
    // config the CLI uses when --config is not given.
    static ModelConfig synthetic_defaults();

    std::string to_json() const;
    static ModelConfig from_json_text(const std::string& text);
    static ModelConfig load(const std::string& path);
};

// Planted-signal synthetic corpus description.
struct SyntheticSpec {
    int n_samples = 2500;
    double train_fraction = 0.8;
    int frames = 32;          // T
    int codebook = 16;        // K
    int d_v = 32;
    int d_a = 32;
    int d_q = 16;
    // Proportions over {audio, visual, both, neither}; must sum to 1.
    double mix_audio = 0.4;
    double mix_visual = 0.4;
    double mix_both = 0.1;
    double mix_neither = 0.1;
    double noise_std = 0.5;
    long seed = 7;

    void validate() const;
    std::string to_json() const;
    static SyntheticSpec from_json_text(const std::string& text);
    static SyntheticSpec load(const std::string& path);
};

}  // namespace img
