#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sidwatch {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the offending source and 1-based line.
class ParseError : public Error {
public:
    ParseError(std::string source, std::size_t line, const std::string& message)
        : Error(source + ":" + std::to_string(line) + ": " + message),
          source_(std::move(source)), line_(line) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string source_;
    std::size_t line_;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Scores, hashes or other per-image inputs are missing for evaluated images.
class CoverageError : public Error {
public:
    CoverageError(const std::string& message, std::vector<std::string> missing)
        : Error(message), missing_(std::move(missing)) {}

    const std::vector<std::string>& missing() const noexcept { return missing_; }

private:
    std::vector<std::string> missing_;
};

// A detector subprocess misbehaved: bad output, timeout, or nonzero exit.
class ProtocolError : public Error {
public:
    using Error::Error;
};

class ImageError : public Error {
public:
    ImageError(std::string image_id, const std::string& reason)
        : Error("image '" + image_id + "': " + reason), image_id_(std::move(image_id)) {}

    const std::string& image_id() const noexcept { return image_id_; }

private:
    std::string image_id_;
};

} // namespace sidwatch
