// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "img/model.hpp"

namespace img {

// Decoupled weight-decay Adam over a ParamStore.
struct AdamW {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;
    std::vector<Matrix> m, v;

    void init(const ParamStore& ps);
    void step(ParamStore& ps, const GradStore& grads, double lr, double weight_decay);
};

// Serialized training state: parameters, optimizer moments, schedule
// position and the shuffle RNG.
struct Checkpoint {
    ModelConfig cfg;
    int epochs_done = 0;
    long global_step = 0;
    std::string rng_state;
    long adam_t = 0;
    std::vector<std::string> names;
    std::vector<Matrix> values, m, v;
};

void write_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::string& path);

// Model with weights restored from a checkpoint.
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ck);

class Trainer {
public:
    explicit Trainer(const ModelConfig& cfg);
    explicit Trainer(const Checkpoint& ck);

    // Runs epochs [epochs_done, cfg.epochs). Writes one JSONL line per
    // step (loss breakdown) and per epoch (importance statistics) to log;
    // saves a resumable checkpoint into out_dir after every epoch.
    // epoch_limit (if nonnegative) stops early after that epoch index
    // without altering the learning-rate schedule.
    void train(const Dataset& train_ds, const std::string& out_dir, std::ostream* log,
               int epoch_limit = -1);

    Checkpoint to_checkpoint() const;
    const Model& model() const { return *model_; }
    Model& model() { return *model_; }
    int epochs_done() const { return epochs_done_; }

private:
    void run_epoch(const Dataset& train_ds, int epoch, long total_steps, std::ostream* log);

    std::unique_ptr<Model> model_;
    AdamW opt_;
    Rng rng_;
    int epochs_done_ = 0;
    long global_step_ = 0;
};

}  // namespace img
