// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace img {

// Bad user input: malformed files, out-of-range values, empty masks.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Inconsistent configuration: dimension mismatches, invalid hyperparameters.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally broken binary/JSON payloads.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss during optimization; carries a diagnostic dump.
class TrainingDivergence : public std::runtime_error {
public:
    explicit TrainingDivergence(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace img
