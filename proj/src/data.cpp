// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "img/data.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <json.hpp>

namespace img {

namespace fs = std::filesystem;
using nlohmann::json;

void FeatureBundle::validate(int max_frames, int max_tokens) const {
    const int T = frames();
    if (T == 0 || T > max_frames)
        throw ValidationError(annotation.video_id + ": frame count " + std::to_string(T) +
                              " outside [1, " + std::to_string(max_frames) + "]");
    if (tokens() == 0 || tokens() > max_tokens)
        throw ValidationError(annotation.video_id + ": token count outside range");
    if (nn::count_true(frame_mask) == 0 || nn::count_true(token_mask) == 0)
        throw ValidationError(annotation.video_id + ": mask has no valid entries");
    for (const Matrix* m : {&visual, &audio, &query})
        if (!m->empty() && !m->all_finite())
            throw ValidationError(annotation.video_id + ": non-finite feature values");
    if (!visual.empty() && visual.rows() != T)
        throw ValidationError(annotation.video_id + ": visual rows do not match mask");
    if (!audio.empty() && audio.rows() != T)
        throw ValidationError(annotation.video_id + ": audio rows do not match mask");
    annotation.validate(T);
}

// --- IMGF --------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'I', 'M', 'G', 'F'};
constexpr uint16_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_le(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return static_cast<bool>(is);
}

}  // namespace

void save_features(const std::string& path, const Matrix& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot write " + path);
    os.write(kMagic, 4);
    write_le<uint16_t>(os, kVersion);
    write_le<uint32_t>(os, static_cast<uint32_t>(m.rows()));
    write_le<uint32_t>(os, static_cast<uint32_t>(m.cols()));
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) write_le<float>(os, static_cast<float>(m.at(r, c)));
    if (!os) throw ValidationError("short write to " + path);
}

Matrix load_features(const std::string& path, int max_frames) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open feature file " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(path + ": bad magic, not an IMGF file");
    uint16_t version = 0;
    uint32_t rows = 0, cols = 0;
    if (!read_le(is, version) || !read_le(is, rows) || !read_le(is, cols))
        throw FormatError(path + ": truncated header");
    if (version != kVersion) throw FormatError(path + ": unsupported version");
    if (rows == 0 || cols == 0) throw FormatError(path + ": empty sequence rejected");

    Matrix full(static_cast<int>(rows), static_cast<int>(cols));
    for (uint32_t r = 0; r < rows; ++r)
        for (uint32_t c = 0; c < cols; ++c) {
            float v;
            if (!read_le(is, v)) throw FormatError(path + ": truncated payload");
            if (std::isnan(v)) throw ValidationError(path + ": NaN in payload");
            full.at(static_cast<int>(r), static_cast<int>(c)) = static_cast<double>(v);
        }

    const int T = static_cast<int>(rows);
    if (T <= max_frames) return full;
    // Uniform index downsample, keeping first and last frames.
    Matrix down(max_frames, static_cast<int>(cols));
    for (int i = 0; i < max_frames; ++i) {
        const int src = static_cast<int>(
            std::lround(static_cast<double>(i) * (T - 1) / static_cast<double>(max_frames - 1)));
        for (int c = 0; c < static_cast<int>(cols); ++c) down.at(i, c) = full.at(src, c);
    }
    return down;
}

// --- Annotations -------------------------------------------------------

std::vector<AnnotationRecord> load_annotations(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open annotations " + path);
    static const std::set<std::string> allowed = {"video_id",        "duration", "start",
                                                  "end",             "query_text", "query_token_ids",
                                                  "carrier"};
    std::vector<AnnotationRecord> out;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw FormatError(path + ":" + std::to_string(line_no) + ": invalid JSON record");
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!allowed.count(it.key()))
                throw FormatError(path + ":" + std::to_string(line_no) + ": unknown key \"" +
                                  it.key() + "\"");
        AnnotationRecord rec;
        try {
            rec.video_id = j.at("video_id").get<std::string>();
            rec.duration = j.at("duration").get<double>();
            rec.start = j.at("start").get<double>();
            rec.end = j.at("end").get<double>();
            if (j.contains("query_token_ids"))
                rec.query_token_ids = j["query_token_ids"].get<std::vector<int>>();
            if (j.contains("query_text")) rec.query_text = j["query_text"].get<std::string>();
            if (j.contains("carrier")) rec.carrier = j["carrier"].get<std::string>();
        } catch (const json::exception& e) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!(rec.start >= 0.0 && rec.start <= rec.end && rec.end <= rec.duration))
            throw ValidationError(path + ":" + std::to_string(line_no) + " (" + rec.video_id +
                                  "): need 0 <= start <= end <= duration");
        out.push_back(std::move(rec));
    }
    if (out.empty())
        std::cerr << "warning: " << path << " contains no annotation records\n";
    return out;
}

// --- Dataset directory ---------------------------------------------------

void write_dataset(const std::string& dir, const std::vector<FeatureBundle>& samples) {
    fs::create_directories(fs::path(dir) / "features");
    std::ofstream ann(fs::path(dir) / "annotations.jsonl");
    if (!ann) throw ValidationError("cannot write annotations in " + dir);
    for (const FeatureBundle& s : samples) {
        const std::string base = (fs::path(dir) / "features" / s.annotation.video_id).string();
        save_features(base + ".v.imgf", s.visual);
        save_features(base + ".a.imgf", s.audio);
        save_features(base + ".q.imgf", s.query);
        json j;
        j["video_id"] = s.annotation.video_id;
        j["duration"] = s.annotation.duration_sec;
        j["start"] = s.annotation.start_sec;
        j["end"] = s.annotation.end_sec;
        if (!s.carrier.empty()) j["carrier"] = s.carrier;
        ann << j.dump() << "\n";
    }
}

Dataset load_dataset(const std::string& dir, const LoadNeeds& needs, int max_frames,
                     int max_tokens) {
    Dataset ds;
    const auto records = load_annotations((fs::path(dir) / "annotations.jsonl").string());
    for (const AnnotationRecord& rec : records) {
        const std::string base = (fs::path(dir) / "features" / rec.video_id).string();
        FeatureBundle b;
        int T = 0;
        if (needs.visual) {
            b.visual = load_features(base + ".v.imgf", max_frames);
            T = b.visual.rows();
            ds.d_v = b.visual.cols();
        }
        if (needs.audio) {
            b.audio = load_features(base + ".a.imgf", max_frames);
            if (T != 0 && b.audio.rows() != T)
                throw ValidationError(rec.video_id + ": visual/audio frame counts differ");
            T = b.audio.rows();
            ds.d_a = b.audio.cols();
        }
        if (needs.query) {
            b.query = load_features(base + ".q.imgf", max_tokens);
            ds.d_q = b.query.cols();
        }
        b.frame_mask.assign(static_cast<size_t>(T), 1);
        b.token_mask.assign(static_cast<size_t>(b.query.rows() ? b.query.rows() : 1), 1);
        b.annotation = make_annotation(rec.video_id, rec.start, rec.end, rec.duration, T);
        b.carrier = rec.carrier;
        b.validate(max_frames, max_tokens);
        ds.samples.push_back(std::move(b));
    }
    return ds;
}

// --- Synthetic corpus -----------------------------------------------------

int synthetic_train_count(const SyntheticSpec& spec) {
    return static_cast<int>(std::lround(spec.train_fraction * spec.n_samples));
}

std::vector<FeatureBundle> generate_synthetic_dataset(const SyntheticSpec& spec) {
    spec.validate();
    const int T = spec.frames;
    const int span_min = std::max(1, T / 8);
    const int span_max = T / 2;
    if (span_min > span_max) throw ConfigError("synthetic: infeasible span constraints");

    Rng master(static_cast<uint64_t>(spec.seed));
    Rng code_rng = master.fork(0);
    std::vector<Matrix> pattern_v, pattern_a, query_emb;
    for (int c = 0; c < spec.codebook; ++c) {
        Matrix pv(1, spec.d_v), pa(1, spec.d_a), q(3, spec.d_q);
        for (size_t i = 0; i < pv.size(); ++i) pv[i] = code_rng.normal();
        for (size_t i = 0; i < pa.size(); ++i) pa[i] = code_rng.normal();
        for (size_t i = 0; i < q.size(); ++i) q[i] = code_rng.normal();
        pattern_v.push_back(std::move(pv));
        pattern_a.push_back(std::move(pa));
        query_emb.push_back(std::move(q));
    }

    Rng rng = master.fork(1);
    std::vector<FeatureBundle> out;
    out.reserve(spec.n_samples);
    for (int i = 0; i < spec.n_samples; ++i) {
        const int code = static_cast<int>(rng.uniform_int(0, spec.codebook - 1));
        const int len = static_cast<int>(rng.uniform_int(span_min, span_max));
        const int s = static_cast<int>(rng.uniform_int(0, T - len));
        const int e = s + len - 1;

        const double u = rng.uniform();
        std::string carrier;
        if (u < spec.mix_audio)
            carrier = "audio";
        else if (u < spec.mix_audio + spec.mix_visual)
            carrier = "visual";
        else if (u < spec.mix_audio + spec.mix_visual + spec.mix_both)
            carrier = "both";
        else
            carrier = "neither";

        FeatureBundle b;
        b.visual = Matrix(T, spec.d_v);
        b.audio = Matrix(T, spec.d_a);
        for (size_t k = 0; k < b.visual.size(); ++k) b.visual[k] = rng.normal();
        for (size_t k = 0; k < b.audio.size(); ++k) b.audio[k] = rng.normal();

        const bool plant_visual = carrier == "visual" || carrier == "both" || carrier == "neither";
        const bool plant_audio = carrier == "audio" || carrier == "both";
        const double v_noise = carrier == "neither" ? 3.0 * spec.noise_std : spec.noise_std;
        if (plant_visual)
            for (int t = s; t <= e; ++t)
                for (int c = 0; c < spec.d_v; ++c)
                    b.visual.at(t, c) = pattern_v[code].at(0, c) + v_noise * rng.normal();
        if (plant_audio)
            for (int t = s; t <= e; ++t)
                for (int c = 0; c < spec.d_a; ++c)
                    b.audio.at(t, c) = pattern_a[code].at(0, c) + spec.noise_std * rng.normal();

        b.query = query_emb[code];
        b.frame_mask.assign(static_cast<size_t>(T), 1);
        b.token_mask.assign(3, 1);
        const double duration = static_cast<double>(T);
        const double denom = static_cast<double>(T - 1);
        char name[32];
        std::snprintf(name, sizeof(name), "synth-%05d", i);
        b.annotation = make_annotation(name, s / denom * duration, e / denom * duration, duration, T);
        b.carrier = carrier;
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace img
