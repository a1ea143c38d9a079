#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sparselda {

inline constexpr const char* kVersion = "0.1.0";

using DocId = std::uint32_t;
using WordId = std::uint32_t;
using TopicId = std::uint32_t;

// Assignments start out invalid; training rejects tokens that were never
// initialized.
inline constexpr TopicId kInvalidTopic = 0xFFFFFFFFu;

// One occurrence of a word in a document. (doc, word) are fixed for the
// lifetime of a corpus; only topic mutates.
struct Token {
    DocId doc;
    WordId word;
    TopicId topic;
};

// Bad input data or configuration (CLI exit code 1).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / stream failures (CLI exit code 2).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sparselda
