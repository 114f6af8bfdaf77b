// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tctr {

/// Base for every error this library raises.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
   public:
    using Error::Error;
};

class ContractError : public Error {
   public:
    using Error::Error;
};

class NumericError : public Error {
   public:
    using Error::Error;
};

class ConfigError : public Error {
   public:
    using Error::Error;
};

/// Malformed binary input; the message carries the byte offset.
class FormatError : public Error {
   public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

   private:
    std::size_t offset_;
};

class IoError : public Error {
   public:
    using Error::Error;
};

class GenerationError : public Error {
   public:
    using Error::Error;
};

class LoadError : public Error {
   public:
    LoadError(const std::string& what, std::vector<std::string> names)
        : Error(what + join(names)), names_(std::move(names)) {}
    const std::vector<std::string>& names() const { return names_; }

   private:
    static std::string join(const std::vector<std::string>& names) {
        std::string out;
        for (const auto& n : names) {
            out += out.empty() ? ": " : ", ";
            out += n;
        }
        return out;
    }
    std::vector<std::string> names_;
};

inline std::string dims_to_string(const std::vector<int>& dims) {
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

}  // namespace tctr
