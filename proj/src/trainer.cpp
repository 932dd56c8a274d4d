// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "img/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "img/kernels.hpp"

namespace img {

namespace fs = std::filesystem;
using nlohmann::json;

void AdamW::init(const ParamStore& ps) {
    t = 0;
    m.assign(ps.count(), Matrix());
    v.assign(ps.count(), Matrix());
    for (int i = 0; i < ps.count(); ++i) {
        m[i] = Matrix(ps.value(i).rows(), ps.value(i).cols());
        v[i] = Matrix(ps.value(i).rows(), ps.value(i).cols());
    }
}

void AdamW::step(ParamStore& ps, const GradStore& grads, double lr, double weight_decay) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    // Tensors are independent; per-element updates are order-free.
#pragma omp parallel for schedule(static)
    for (int i = 0; i < ps.count(); ++i) {
        Matrix& theta = ps.value(i);
        Matrix& mi = m[i];
        Matrix& vi = v[i];
        const Matrix& g = grads[i];
        for (size_t k = 0; k < theta.size(); ++k) {
            mi[k] = beta1 * mi[k] + (1.0 - beta1) * g[k];
            vi[k] = beta2 * vi[k] + (1.0 - beta2) * g[k] * g[k];
            const double mhat = mi[k] / bc1;
            const double vhat = vi[k] / bc2;
            theta[k] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * theta[k]);
        }
    }
}

// --- checkpoint io -------------------------------------------------------

namespace {

constexpr char kCkptMagic[4] = {'I', 'M', 'G', 'C'};
constexpr uint32_t kCkptVersion = 1;

void write_blob(std::ostream& os, const Matrix& m) {
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void read_blob(std::istream& is, Matrix& m) {
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is) throw FormatError("checkpoint: truncated tensor payload");
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot write checkpoint " + path);
    json header;
    header["config"] = json::parse(ck.cfg.to_json());
    header["epochs_done"] = ck.epochs_done;
    header["global_step"] = ck.global_step;
    header["rng"] = ck.rng_state;
    header["adam_t"] = ck.adam_t;
    header["tensors"] = json::array();
    for (size_t i = 0; i < ck.names.size(); ++i)
        header["tensors"].push_back(
            {{"name", ck.names[i]}, {"rows", ck.values[i].rows()}, {"cols", ck.values[i].cols()}});
    const std::string htext = header.dump();
    os.write(kCkptMagic, 4);
    const uint32_t version = kCkptVersion;
    os.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const uint64_t hlen = htext.size();
    os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const Matrix& mat : ck.values) write_blob(os, mat);
    for (const Matrix& mat : ck.m) write_blob(os, mat);
    for (const Matrix& mat : ck.v) write_blob(os, mat);
    if (!os) throw ValidationError("short write to checkpoint " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open checkpoint " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw FormatError(path + ": not a checkpoint file");
    uint32_t version = 0;
    is.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!is || version != kCkptVersion) throw FormatError(path + ": unsupported checkpoint version");
    uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string htext(hlen, '\0');
    is.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw FormatError(path + ": truncated checkpoint header");
    json header = json::parse(htext, nullptr, false);
    if (header.is_discarded()) throw FormatError(path + ": corrupt checkpoint header");

    Checkpoint ck;
    try {
        ck.cfg = ModelConfig::from_json_text(header.at("config").dump());
        ck.epochs_done = header.at("epochs_done").get<int>();
        ck.global_step = header.at("global_step").get<long>();
        ck.rng_state = header.at("rng").get<std::string>();
        ck.adam_t = header.at("adam_t").get<long>();
        for (const auto& tj : header.at("tensors")) {
            ck.names.push_back(tj.at("name").get<std::string>());
            ck.values.emplace_back(tj.at("rows").get<int>(), tj.at("cols").get<int>());
        }
    } catch (const json::exception& e) {
        throw FormatError(path + ": checkpoint header: " + e.what());
    }
    ck.m = ck.values;
    ck.v = ck.values;
    for (Matrix& mat : ck.values) read_blob(is, mat);
    for (Matrix& mat : ck.m) read_blob(is, mat);
    for (Matrix& mat : ck.v) read_blob(is, mat);
    return ck;
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ck) {
    auto model = std::make_unique<Model>(ck.cfg);
    if (static_cast<int>(ck.names.size()) != model->params.count())
        throw FormatError("checkpoint: parameter count mismatch");
    for (size_t i = 0; i < ck.names.size(); ++i) {
        const int id = model->params.find(ck.names[i]);
        if (id < 0) throw FormatError("checkpoint: unknown parameter " + ck.names[i]);
        if (!model->params.value(id).same_shape(ck.values[i]))
            throw FormatError("checkpoint: shape mismatch for " + ck.names[i]);
        model->params.value(id) = ck.values[i];
    }
    return model;
}

// --- trainer ---------------------------------------------------------------

Trainer::Trainer(const ModelConfig& cfg)
    : model_(std::make_unique<Model>(cfg)),
      rng_(mix_seed(static_cast<uint64_t>(cfg.seed), 0x5f75ffULL)) {}

Trainer::Trainer(const Checkpoint& ck) : model_(model_from_checkpoint(ck)), rng_(0) {
    opt_.init(model_->params);
    if (ck.m.size() != static_cast<size_t>(model_->params.count()))
        throw FormatError("checkpoint: optimizer state missing");
    for (size_t i = 0; i < ck.names.size(); ++i) {
        const int id = model_->params.find(ck.names[i]);
        opt_.m[id] = ck.m[i];
        opt_.v[id] = ck.v[i];
    }
    opt_.t = ck.adam_t;
    rng_.restore(ck.rng_state);
    epochs_done_ = ck.epochs_done;
    global_step_ = ck.global_step;
}

Checkpoint Trainer::to_checkpoint() const {
    Checkpoint ck;
    ck.cfg = model_->cfg;
    ck.epochs_done = epochs_done_;
    ck.global_step = global_step_;
    ck.rng_state = rng_.serialize();
    ck.adam_t = opt_.t;
    for (int i = 0; i < model_->params.count(); ++i) {
        ck.names.push_back(model_->params.name(i));
        ck.values.push_back(model_->params.value(i));
        ck.m.push_back(opt_.m[i]);
        ck.v.push_back(opt_.v[i]);
    }
    return ck;
}

void Trainer::train(const Dataset& train_ds, const std::string& out_dir, std::ostream* log,
                    int epoch_limit) {
    if (train_ds.samples.empty()) throw ValidationError("train: empty dataset");
    const ModelConfig& cfg = model_->cfg;
    if (opt_.m.empty()) opt_.init(model_->params);
    fs::create_directories(out_dir);

    const long steps_per_epoch =
        (static_cast<long>(train_ds.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const long total_steps = steps_per_epoch * cfg.epochs;

    const int last_epoch = epoch_limit >= 0 ? std::min(cfg.epochs, epoch_limit) : cfg.epochs;
    for (int epoch = epochs_done_; epoch < last_epoch; ++epoch) {
        run_epoch(train_ds, epoch, total_steps, log);
        epochs_done_ = epoch + 1;
        write_checkpoint((fs::path(out_dir) / "checkpoint.imgc").string(), to_checkpoint());
    }
}

void Trainer::run_epoch(const Dataset& train_ds, int epoch, long total_steps, std::ostream* log) {
    const ModelConfig& cfg = model_->cfg;
    const int n = static_cast<int>(train_ds.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng_.shuffle(order);

    std::vector<GradStore> slots(cfg.batch_size);
    for (auto& s : slots) s.resize(model_->params);
    GradStore total(model_->params);
    std::vector<Model::SampleForward> results(cfg.batch_size);
    std::vector<std::exception_ptr> errors(cfg.batch_size);
    std::vector<double> epoch_p;
    epoch_p.reserve(n);

    for (int begin = 0; begin < n; begin += cfg.batch_size) {
        const int bs = std::min(cfg.batch_size, n - begin);
        const double inv_b = 1.0 / static_cast<double>(bs);
        const double lr =
            cfg.lr * (1.0 - static_cast<double>(global_step_) / static_cast<double>(total_steps));

        const bool par = kernels::mode() == kernels::Mode::Parallel;
#pragma omp parallel for schedule(static) if (par)
        for (int k = 0; k < bs; ++k) {
            try {
                slots[k].zero();
                Tape tape(&model_->params);
                const int idx = order[begin + k];
                const uint64_t sal_seed = mix_seed(static_cast<uint64_t>(cfg.seed), epoch,
                                                   static_cast<uint64_t>(global_step_), idx);
                results[k] = model_->forward_train(tape, train_ds.samples[idx], epoch, sal_seed, inv_b);
                tape.backward(results[k].contribution, slots[k]);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
        for (int k = 0; k < bs; ++k)
            if (errors[k]) std::rethrow_exception(errors[k]);

        // Deterministic reduction: per parameter, samples added in batch
        // order; parallel only across parameters.
        const int n_params = model_->params.count();
#pragma omp parallel for schedule(static) if (par)
        for (int i = 0; i < n_params; ++i) {
            Matrix& tot = total[i];
            tot.fill(0.0);
            for (int k = 0; k < bs; ++k) {
                const Matrix& gk = slots[k][i];
                for (size_t q = 0; q < tot.size(); ++q) tot[q] += gk[q];
            }
        }

        LossParts parts;
        double kd_v = 0, kd_a = 0, ce_v = 0, ce_a = 0, ce_f = 0;
        for (int k = 0; k < bs; ++k) {
            const auto& r = results[k];
            ce_v += r.ce_v * inv_b;
            ce_a += r.ce_a * inv_b;
            ce_f += r.ce_f * inv_b;
            parts.importance += r.bce * inv_b;
            kd_v += r.kd_v;
            kd_a += r.kd_a;
            parts.saliency += r.saliency * inv_b;
            epoch_p.push_back(r.record.p);
        }
        parts.ret = ce_v + ce_a + ce_f;
        parts.kd = kd_v + kd_a;

        double total_value = 0.0;
        try {
            total_value = total_loss(parts, cfg.loss);
            if (!total.all_finite()) throw TrainingDivergence("non-finite gradient");
        } catch (const TrainingDivergence& e) {
            json diag;
            diag["type"] = "divergence";
            diag["step"] = global_step_;
            diag["epoch"] = epoch;
            diag["what"] = e.what();
            diag["batch"] = json::array();
            for (int k = 0; k < bs; ++k)
                diag["batch"].push_back(
                    {{"video_id", train_ds.samples[order[begin + k]].annotation.video_id},
                     {"ce_v", results[k].ce_v},
                     {"ce_a", results[k].ce_a},
                     {"ce_f", results[k].ce_f},
                     {"kd", results[k].kd_v + results[k].kd_a},
                     {"p", results[k].record.p}});
            if (log) (*log) << diag.dump() << "\n" << std::flush;
            throw TrainingDivergence(diag.dump());
        }

        opt_.step(model_->params, total, lr, cfg.weight_decay);

        if (log) {
            json line;
            line["type"] = "step";
            line["step"] = global_step_;
            line["epoch"] = epoch;
            line["lr"] = lr;
            line["l_ret_v"] = ce_v;
            line["l_ret_a"] = ce_a;
            line["l_ret_f"] = ce_f;
            line["l_p"] = parts.importance;
            line["l_kl_v"] = kd_v;
            line["l_kl_a"] = kd_a;
            line["l_sal"] = parts.saliency;
            line["total"] = total_value;
            (*log) << line.dump() << "\n";
        }
        ++global_step_;
    }

    if (log && !epoch_p.empty()) {
        double mn = epoch_p[0], mx = epoch_p[0], sum = 0.0;
        int h[5] = {0, 0, 0, 0, 0};
        for (double p : epoch_p) {
            mn = std::min(mn, p);
            mx = std::max(mx, p);
            sum += p;
            if (p < 0.15) ++h[0];
            else if (p < 0.25) ++h[1];
            else if (p < 0.35) ++h[2];
            else if (p < 0.45) ++h[3];
            else ++h[4];
        }
        json line;
        line["type"] = "importance_epoch";
        line["epoch"] = epoch;
        line["mean_p"] = sum / static_cast<double>(epoch_p.size());
        line["min_p"] = mn;
        line["max_p"] = mx;
        line["hist"] = {{"lt_0.15", h[0]},
                        {"0.15_0.25", h[1]},
                        {"0.25_0.35", h[2]},
                        {"0.35_0.45", h[3]},
                        {"gt_0.45", h[4]}};
        (*log) << line.dump() << "\n" << std::flush;
    }
}

}  // namespace img
