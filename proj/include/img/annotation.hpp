// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <string>

#include "img/errors.hpp"

namespace img {

// Ground-truth moment in both seconds and frame indices. Frame index i
// maps to second i/(T-1)*duration, so frame 0 is 0s and frame T-1 is the
// full duration.
struct MomentAnnotation {
    std::string video_id;
    double start_sec = 0.0;
    double end_sec = 0.0;
    double duration_sec = 0.0;
    int start_idx = 0;
    int end_idx = 0;

    void validate(int frames) const {
        if (duration_sec <= 0.0) throw ValidationError(video_id + ": duration must be positive");
        if (start_sec < 0.0 || start_sec > end_sec || end_sec > duration_sec)
            throw ValidationError(video_id + ": need 0 <= start <= end <= duration");
        if (start_idx < 0 || start_idx > end_idx || end_idx >= frames)
            throw ValidationError(video_id + ": frame span out of range");
    }
};

inline int frame_index_from_seconds(double sec, double duration, int frames) {
    if (frames <= 1) return 0;
    const double pos = sec / duration * static_cast<double>(frames - 1);
    int idx = static_cast<int>(std::lround(pos));
    if (idx < 0) idx = 0;
    if (idx > frames - 1) idx = frames - 1;
    return idx;
}

inline MomentAnnotation make_annotation(std::string video_id, double start_sec, double end_sec,
                                        double duration_sec, int frames) {
    MomentAnnotation a;
    a.video_id = std::move(video_id);
    a.start_sec = start_sec;
    a.end_sec = end_sec;
    a.duration_sec = duration_sec;
    a.start_idx = frame_index_from_seconds(start_sec, duration_sec, frames);
    a.end_idx = frame_index_from_seconds(end_sec, duration_sec, frames);
    a.validate(frames);
    return a;
}

}  // namespace img
