#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace contraguard {

enum class ErrorCode {
    Validation,
    Io,
    Transport,
    RateLimitedExhausted,
    ReplayMiss,
    EmptyGeneration,
    MissingTriple,
    MissingOriginalSentence,
    Parse,
    EvenPathCount,
    LengthMismatch,
    MissingLabel,
    DivisionByZero,
    ScorerUnavailable,
    ExtractorUnavailable,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    /// True for failures of a remote model/service, as opposed to bad input.
    bool is_transport() const noexcept {
        return code_ == ErrorCode::Transport || code_ == ErrorCode::RateLimitedExhausted ||
               code_ == ErrorCode::ExtractorUnavailable || code_ == ErrorCode::ScorerUnavailable;
    }

private:
    ErrorCode code_;
};

}  // namespace contraguard
