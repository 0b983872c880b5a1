#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace viser {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ZeroVectorError : Error {
    using Error::Error;
};

struct NonFiniteError : Error {
    using Error::Error;
};

struct DimensionMismatchError : Error {
    using Error::Error;
};

struct KeyViolationError : Error {
    using Error::Error;
};

struct EmptyCorpusError : Error {
    using Error::Error;
};

struct MissingLabelsError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct NonFiniteGradientError : Error {
    using Error::Error;
};

struct EmptyEvaluationError : Error {
    using Error::Error;
};

struct UndefinedAPError : Error {
    using Error::Error;
};

// Training produced a non-finite loss; `step` is the offending iteration.
struct DivergenceError : Error {
    std::size_t step;
    DivergenceError(const std::string& msg, std::size_t step_index)
        : Error(msg), step(step_index) {}
};

// Corpus/checkpoint files that cannot be parsed; message carries the
// line number (JSONL) or record index / byte offset (binary).
struct LoadError : Error {
    using Error::Error;
};

}  // namespace viser
