#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace prkd {

/// Base of every error raised by the library. `error_class()` is the stable,
/// machine-parsable tag the CLI prints on failure.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    [[nodiscard]] virtual const char* error_class() const noexcept { return "error"; }
};

class DimensionError : public Error {
public:
    using Error::Error;
    [[nodiscard]] const char* error_class() const noexcept override { return "dimension-error"; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    [[nodiscard]] const char* error_class() const noexcept override { return "config-error"; }
};

class FormatError : public Error {
public:
    using Error::Error;
    [[nodiscard]] const char* error_class() const noexcept override { return "format-error"; }
};

class IoError : public Error {
public:
    IoError(const std::string& what, std::int64_t byte_offset = -1)
        : Error(byte_offset < 0 ? what : what + " (at byte offset " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}
    [[nodiscard]] const char* error_class() const noexcept override { return "io-error"; }
    [[nodiscard]] std::int64_t byte_offset() const noexcept { return offset_; }

private:
    std::int64_t offset_;
};

/// Power iteration collapsed to (numerically) zero.
class DegenerateInitError : public Error {
public:
    explicit DegenerateInitError(int iteration)
        : Error("degenerate initialization: filtered spectral iterate vanished at iteration " +
                std::to_string(iteration)),
          iteration_(iteration) {}
    [[nodiscard]] const char* error_class() const noexcept override { return "degenerate-init"; }
    [[nodiscard]] int iteration() const noexcept { return iteration_; }

private:
    int iteration_;
};

/// Canonicalization of an all-zero field.
class DegenerateFieldError : public Error {
public:
    using Error::Error;
    [[nodiscard]] const char* error_class() const noexcept override { return "degenerate-field"; }
};

class ArchitectureMismatchError : public Error {
public:
    using Error::Error;
    [[nodiscard]] const char* error_class() const noexcept override { return "architecture-mismatch"; }
};

/// Non-finite training loss.
class DivergenceError : public Error {
public:
    DivergenceError(int epoch, int batch)
        : Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch) + ", batch " +
                std::to_string(batch)),
          epoch_(epoch), batch_(batch) {}
    [[nodiscard]] const char* error_class() const noexcept override { return "divergence"; }
    [[nodiscard]] int epoch() const noexcept { return epoch_; }
    [[nodiscard]] int batch() const noexcept { return batch_; }

private:
    int epoch_;
    int batch_;
};

class IncompleteReportError : public Error {
public:
    using Error::Error;
    [[nodiscard]] const char* error_class() const noexcept override { return "incomplete-report"; }
};

}  // namespace prkd
