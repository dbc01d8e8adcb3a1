#pragma once

#include <stdexcept>
#include <string>

namespace freqguide {

/// Tensor shapes that do not match or that an operation cannot accept.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid configuration values (unknown schedule kind, bad k, bad rank, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Subject or action ids outside the condition vocabulary.
class VocabularyError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Requested capability (e.g. an external metric) has not been registered.
class NotAvailableError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace freqguide
