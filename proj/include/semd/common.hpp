#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace semd {

// Error taxonomy shared by every module. The CLI maps ValidationError and
// FormatError to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

// Zero vectors and other inputs on which a quantity is undefined.
class DegenerateInput : public Error {
public:
    using Error::Error;
};

// A class in [0, C) has no training example.
class MissingClass : public Error {
public:
    MissingClass(std::size_t cls, const std::string& where)
        : Error(where + ": class " + std::to_string(cls) + " has no examples"), cls_(cls) {}
    std::size_t missing_class() const noexcept { return cls_; }

private:
    std::size_t cls_;
};

class UndefinedMetric : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

// Aggregated validation failure. what() joins every violation.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    std::vector<std::string> violations_;
};

// Warnings go to a process-wide sink (stderr by default). Tests swap the sink
// to capture them.
using WarningSink = std::function<void(std::string_view)>;
void warn(std::string_view message);
WarningSink set_warning_sink(WarningSink sink);

// Runs fn(i) for i in [0, count) on up to `jobs` threads. Exceptions from
// workers are rethrown on the caller (the one with the lowest index wins).
// jobs == 0 means hardware concurrency.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

std::size_t default_jobs();

}  // namespace semd
