// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "img/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "img/errors.hpp"

namespace img {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& ctx) {
    if (!j.is_object()) throw ConfigError(ctx + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(ctx + ": unknown key \"" + it.key() + "\"");
}

json parse(const std::string& text, const std::string& ctx) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError(ctx + ": invalid JSON");
    return j;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::string branch_name(Branch b) {
    switch (b) {
        case Branch::Fusion: return "fusion";
        case Branch::Visual: return "visual";
        case Branch::Audio: return "audio";
    }
    return "fusion";
}

Branch branch_from_name(const std::string& s) {
    if (s == "fusion") return Branch::Fusion;
    if (s == "visual") return Branch::Visual;
    if (s == "audio") return Branch::Audio;
    throw ConfigError("unknown branch \"" + s + "\" (expected fusion|visual|audio)");
}

void ImportanceConfig::validate() const {
    if (gamma <= 0.0) throw ConfigError("importance.gamma must be positive");
    if (!(eps_min > 0.0 && eps_min < 0.5)) throw ConfigError("importance.eps_min must lie in (0, 0.5)");
    if (!(eps_max > 0.5 && eps_max < 1.0)) throw ConfigError("importance.eps_max must lie in (0.5, 1)");
    if (eps_min >= eps_max) throw ConfigError("importance.eps_min must be below eps_max");
    if (warmup_epochs <= 0) throw ConfigError("importance.warmup_epochs must be positive");
}

void LossWeights::validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
        throw ConfigError("loss weights must be nonnegative");
    if (tau <= 0.0) throw ConfigError("loss.tau must be positive");
    if (saliency_margin < 0.0) throw ConfigError("loss.saliency_margin must be nonnegative");
    if (saliency_pairs < 1) throw ConfigError("loss.saliency_pairs must be at least 1");
}

void ModelConfig::validate() const {
    if (d <= 0 || d_v <= 0 || d_a <= 0 || d_q <= 0) throw ConfigError("feature widths must be positive");
    if (d % 2 != 0) throw ConfigError("d must be even (bidirectional hidden split)");
    if (heads <= 0 || d % heads != 0) throw ConfigError("heads must divide d");
    if (max_frames <= 0 || max_tokens <= 0) throw ConfigError("max_frames/max_tokens must be positive");
    if (kernel_bank.empty()) throw ConfigError("kernel_bank must not be empty");
    for (int k : kernel_bank)
        if (k <= 0 || k % 2 == 0) throw ConfigError("kernel sizes must be odd and positive");
    if (slots <= 0) throw ConfigError("slots must be positive");
    if (slot_iters < 1) throw ConfigError("slot_iters must be at least 1");
    if (lr <= 0.0) throw ConfigError("lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
    if (epochs <= 0 || batch_size <= 0) throw ConfigError("epochs/batch_size must be positive");
    importance.validate();
    loss.validate();
}

ModelConfig ModelConfig::defaults() { return ModelConfig{}; }

ModelConfig ModelConfig::synthetic_defaults() {
    ModelConfig c;
    c.d = 24;
    c.d_v = 32;
    c.d_a = 32;
    c.d_q = 16;
    c.max_frames = 32;
    c.max_tokens = 8;
    c.heads = 4;
    c.epochs = 50;
    c.importance.warmup_epochs = 15;
    c.seed = 20260810;
    return c;
}

std::string ModelConfig::to_json() const {
    json j;
    j["d"] = d;
    j["d_v"] = d_v;
    j["d_a"] = d_a;
    j["d_q"] = d_q;
    j["max_frames"] = max_frames;
    j["max_tokens"] = max_tokens;
    j["heads"] = heads;
    j["kernel_bank"] = kernel_bank;
    j["slots"] = slots;
    j["slot_iters"] = slot_iters;
    j["event_cross_modal"] = event_cross_modal;
    j["importance"] = {{"gamma", importance.gamma},
                       {"eps_min", importance.eps_min},
                       {"eps_max", importance.eps_max},
                       {"warmup_epochs", importance.warmup_epochs}};
    j["loss"] = {{"lambda1", loss.lambda1},
                 {"lambda2", loss.lambda2},
                 {"lambda3", loss.lambda3},
                 {"tau", loss.tau},
                 {"saliency_margin", loss.saliency_margin},
                 {"saliency_pairs", loss.saliency_pairs}};
    j["lr"] = lr;
    j["weight_decay"] = weight_decay;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    j["branch_for_inference"] = branch_name(branch_for_inference);
    return j.dump(2);
}

ModelConfig ModelConfig::from_json_text(const std::string& text) {
    json j = parse(text, "model config");
    check_keys(j,
               {"d", "d_v", "d_a", "d_q", "max_frames", "max_tokens", "heads", "kernel_bank",
                "slots", "slot_iters", "event_cross_modal", "importance", "loss", "lr",
                "weight_decay", "epochs", "batch_size", "seed", "branch_for_inference"},
               "model config");
    ModelConfig c = synthetic_defaults();
    try {
        if (j.contains("d")) c.d = j["d"].get<int>();
        if (j.contains("d_v")) c.d_v = j["d_v"].get<int>();
        if (j.contains("d_a")) c.d_a = j["d_a"].get<int>();
        if (j.contains("d_q")) c.d_q = j["d_q"].get<int>();
        if (j.contains("max_frames")) c.max_frames = j["max_frames"].get<int>();
        if (j.contains("max_tokens")) c.max_tokens = j["max_tokens"].get<int>();
        if (j.contains("heads")) c.heads = j["heads"].get<int>();
        if (j.contains("kernel_bank")) c.kernel_bank = j["kernel_bank"].get<std::vector<int>>();
        if (j.contains("slots")) c.slots = j["slots"].get<int>();
        if (j.contains("slot_iters")) c.slot_iters = j["slot_iters"].get<int>();
        if (j.contains("event_cross_modal")) c.event_cross_modal = j["event_cross_modal"].get<bool>();
        if (j.contains("importance")) {
            const json& ji = j["importance"];
            check_keys(ji, {"gamma", "eps_min", "eps_max", "warmup_epochs"}, "importance");
            if (ji.contains("gamma")) c.importance.gamma = ji["gamma"].get<double>();
            if (ji.contains("eps_min")) c.importance.eps_min = ji["eps_min"].get<double>();
            if (ji.contains("eps_max")) c.importance.eps_max = ji["eps_max"].get<double>();
            if (ji.contains("warmup_epochs")) c.importance.warmup_epochs = ji["warmup_epochs"].get<int>();
        }
        if (j.contains("loss")) {
            const json& jl = j["loss"];
            check_keys(jl, {"lambda1", "lambda2", "lambda3", "tau", "saliency_margin", "saliency_pairs"}, "loss");
            if (jl.contains("lambda1")) c.loss.lambda1 = jl["lambda1"].get<double>();
            if (jl.contains("lambda2")) c.loss.lambda2 = jl["lambda2"].get<double>();
            if (jl.contains("lambda3")) c.loss.lambda3 = jl["lambda3"].get<double>();
            if (jl.contains("tau")) c.loss.tau = jl["tau"].get<double>();
            if (jl.contains("saliency_margin")) c.loss.saliency_margin = jl["saliency_margin"].get<double>();
            if (jl.contains("saliency_pairs")) c.loss.saliency_pairs = jl["saliency_pairs"].get<int>();
        }
        if (j.contains("lr")) c.lr = j["lr"].get<double>();
        if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"].get<double>();
        if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
        if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
        if (j.contains("seed")) c.seed = j["seed"].get<long>();
        if (j.contains("branch_for_inference"))
            c.branch_for_inference = branch_from_name(j["branch_for_inference"].get<std::string>());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
    return from_json_text(read_file(path));
}

void SyntheticSpec::validate() const {
    if (n_samples <= 0) throw ConfigError("synthetic.n_samples must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("synthetic.train_fraction must lie in (0, 1)");
    if (frames < 8) throw ConfigError("synthetic.frames must be at least 8 (span range T/8..T/2)");
    if (codebook < 2) throw ConfigError("synthetic.codebook must be at least 2");
    if (d_v <= 0 || d_a <= 0 || d_q <= 0) throw ConfigError("synthetic feature widths must be positive");
    const double s = mix_audio + mix_visual + mix_both + mix_neither;
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("synthetic carrier mix must sum to 1");
    if (mix_audio < 0 || mix_visual < 0 || mix_both < 0 || mix_neither < 0)
        throw ConfigError("synthetic carrier mix entries must be nonnegative");
    if (noise_std < 0.0) throw ConfigError("synthetic.noise_std must be nonnegative");
}

std::string SyntheticSpec::to_json() const {
    json j;
    j["n_samples"] = n_samples;
    j["train_fraction"] = train_fraction;
    j["frames"] = frames;
    j["codebook"] = codebook;
    j["d_v"] = d_v;
    j["d_a"] = d_a;
    j["d_q"] = d_q;
    j["carrier_mix"] = {{"audio", mix_audio}, {"visual", mix_visual}, {"both", mix_both}, {"neither", mix_neither}};
    j["noise_std"] = noise_std;
    j["seed"] = seed;
    return j.dump(2);
}

SyntheticSpec SyntheticSpec::from_json_text(const std::string& text) {
    json j = parse(text, "synthetic spec");
    check_keys(j,
               {"n_samples", "train_fraction", "frames", "codebook", "d_v", "d_a", "d_q",
                "carrier_mix", "noise_std", "seed"},
               "synthetic spec");
    SyntheticSpec s;
    try {
        if (j.contains("n_samples")) s.n_samples = j["n_samples"].get<int>();
        if (j.contains("train_fraction")) s.train_fraction = j["train_fraction"].get<double>();
        if (j.contains("frames")) s.frames = j["frames"].get<int>();
        if (j.contains("codebook")) s.codebook = j["codebook"].get<int>();
        if (j.contains("d_v")) s.d_v = j["d_v"].get<int>();
        if (j.contains("d_a")) s.d_a = j["d_a"].get<int>();
        if (j.contains("d_q")) s.d_q = j["d_q"].get<int>();
        if (j.contains("carrier_mix")) {
            const json& jm = j["carrier_mix"];
            check_keys(jm, {"audio", "visual", "both", "neither"}, "carrier_mix");
            if (jm.contains("audio")) s.mix_audio = jm["audio"].get<double>();
            if (jm.contains("visual")) s.mix_visual = jm["visual"].get<double>();
            if (jm.contains("both")) s.mix_both = jm["both"].get<double>();
            if (jm.contains("neither")) s.mix_neither = jm["neither"].get<double>();
        }
        if (j.contains("noise_std")) s.noise_std = j["noise_std"].get<double>();
        if (j.contains("seed")) s.seed = j["seed"].get<long>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("synthetic spec: ") + e.what());
    }
    s.validate();
    return s;
}

SyntheticSpec SyntheticSpec::load(const std::string& path) {
    return from_json_text(read_file(path));
}

}  // namespace img
