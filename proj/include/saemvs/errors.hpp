#pragma once

#include <stdexcept>
#include <string>

namespace saemvs {

// Base class for every failure the library reports deliberately.
// `code()` is stable and machine-readable; `what()` carries the detail.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

struct ConstantColumn : Error {
    explicit ConstantColumn(int column)
        : Error("ConstantColumn",
                "covariate column " + std::to_string(column) + " has (near-)zero variance"),
          column(column) {}
    int column;
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& message) : Error("ShapeMismatch", message) {}
};

struct NonFiniteOutput : Error {
    explicit NonFiniteOutput(const std::string& message) : Error("NonFiniteOutput", message) {}
};

struct SingularSystem : Error {
    explicit SingularSystem(const std::string& message) : Error("SingularSystem", message) {}
};

struct Diverged : Error {
    explicit Diverged(const std::string& message) : Error("Diverged", message) {}
};

struct DegenerateEstimate : Error {
    explicit DegenerateEstimate(const std::string& message)
        : Error("DegenerateEstimate", message) {}
};

struct EmptyTruth : Error {
    EmptyTruth() : Error("EmptyTruth", "true support is empty, sensitivity undefined") {}
};

struct InvalidCorrelation : Error {
    explicit InvalidCorrelation(const std::string& message)
        : Error("InvalidCorrelation", message) {}
};

struct NotConverged : Error {
    explicit NotConverged(const std::string& message) : Error("NotConverged", message) {}
};

struct TooFewConverged : Error {
    explicit TooFewConverged(const std::string& message) : Error("TooFewConverged", message) {}
};

struct Precondition : Error {
    explicit Precondition(const std::string& message) : Error("Precondition", message) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& message) : Error("ConfigError", message) {}
};

struct IoError : Error {
    explicit IoError(const std::string& message) : Error("IoError", message) {}
};

struct MissingArtifacts : Error {
    explicit MissingArtifacts(const std::string& message)
        : Error("MissingArtifacts", message) {}
};

struct AllPointsFailed : Error {
    explicit AllPointsFailed(const std::string& message)
        : Error("AllPointsFailed", message) {}
};

} // namespace saemvs
