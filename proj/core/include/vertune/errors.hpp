#pragma once

#include <stdexcept>
#include <string>

namespace vertune {

// Error taxonomy shared across the library. The CLI maps kinds onto exit
// codes; library code throws and never calls exit().
enum class ErrorKind {
    config,           // invalid configuration or wheel definition
    usage,            // bad command-line usage
    data,             // manifest / journal / report file problems
    input,            // unresolvable image, unknown sample, bad argument value
    precondition,     // caller violated an operation contract
    backend,          // backend unavailable after retries
    protocol,         // malformed backend response
    extraction,       // no prompts could be extracted from generator output
    tuning_setup,     // initial prompt generation failed entirely
    scoring,          // a prompt could not be scored
    inference_setup,  // inference invoked without a usable prompt pool
    empty_evaluation, // metric requested over zero samples / zero reports
    journal,          // journal locked, diverged, or incompatible
    logic,            // internal invariant violation
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error(ErrorKind::config, m) {}
};
struct UsageError : Error {
    explicit UsageError(const std::string& m) : Error(ErrorKind::usage, m) {}
};
struct DataError : Error {
    explicit DataError(const std::string& m) : Error(ErrorKind::data, m) {}
};
struct InputError : Error {
    explicit InputError(const std::string& m) : Error(ErrorKind::input, m) {}
};
struct PreconditionError : Error {
    explicit PreconditionError(const std::string& m) : Error(ErrorKind::precondition, m) {}
};
struct BackendError : Error {
    explicit BackendError(const std::string& m) : Error(ErrorKind::backend, m) {}
};
// Transient transport fault; the retry wrapper will re-attempt these.
struct TransportError : BackendError {
    explicit TransportError(const std::string& m) : BackendError(m) {}
};
struct ProtocolError : Error {
    explicit ProtocolError(const std::string& m) : Error(ErrorKind::protocol, m) {}
};
struct ExtractionError : Error {
    explicit ExtractionError(const std::string& m) : Error(ErrorKind::extraction, m) {}
};
struct TuningSetupError : Error {
    explicit TuningSetupError(const std::string& m) : Error(ErrorKind::tuning_setup, m) {}
};
struct ScoringError : Error {
    explicit ScoringError(const std::string& m) : Error(ErrorKind::scoring, m) {}
};
struct InferenceSetupError : Error {
    explicit InferenceSetupError(const std::string& m) : Error(ErrorKind::inference_setup, m) {}
};
struct EmptyEvaluationError : Error {
    explicit EmptyEvaluationError(const std::string& m) : Error(ErrorKind::empty_evaluation, m) {}
};
struct JournalError : Error {
    explicit JournalError(const std::string& m) : Error(ErrorKind::journal, m) {}
};
struct LogicError : Error {
    explicit LogicError(const std::string& m) : Error(ErrorKind::logic, m) {}
};

} // namespace vertune
