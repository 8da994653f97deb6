#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace disco {

/// Process exit codes shared by every command-line entry point.
enum class ExitCode : int {
    Success = 0,
    Contract = 2,
    Numeric = 3,
    Io = 4,
};

/// Base class of every error raised by the library. Each subclass knows the
/// exit code the CLI maps it to.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
    [[nodiscard]] virtual ExitCode exit_code() const noexcept = 0;
};

/// A caller violated a precondition (shape mismatch, bad argument, ...).
class ContractError : public Error {
  public:
    using Error::Error;
    [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::Contract; }
};

/// A computation produced NaN/Inf or left its numeric domain.
class NumericError : public Error {
  public:
    using Error::Error;
    [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::Numeric; }
};

/// Filesystem failure (missing file, unwritable directory, lock held).
class IoError : public Error {
  public:
    using Error::Error;
    [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::Io; }
};

/// A binary artifact failed to parse. `offset` is the byte position where
/// parsing stopped.
class FormatError : public IoError {
  public:
    FormatError(const std::string& what, std::size_t offset)
        : IoError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

  private:
    std::size_t offset_;
};

/// One or more files in an image folder could not be decoded.
class LoadError : public IoError {
  public:
    explicit LoadError(std::vector<std::string> items)
        : IoError(join(items)), items_(std::move(items)) {}
    [[nodiscard]] const std::vector<std::string>& items() const noexcept { return items_; }

  private:
    static std::string join(const std::vector<std::string>& items) {
        std::string out = "failed to load " + std::to_string(items.size()) + " file(s):";
        for (const auto& item : items) out += "\n  " + item;
        return out;
    }
    std::vector<std::string> items_;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ContractError(message);
}

}  // namespace disco
