// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 kgnli contributors

#pragma once

#include <stdexcept>
#include <string>

namespace kgnli {

// Three failure families, each mapped to its own CLI exit code.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class DataError : public std::runtime_error {
  public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

class ModelError : public std::runtime_error {
  public:
    explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace kgnli
