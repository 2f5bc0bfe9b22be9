#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace graphtok3d {

enum class ErrorKind {
    ParseError,
    IoError,
    InvalidProposal,
    InvalidObjectId,
    DuplicateObjectId,
    TooManyObjects,
    EmptyScene,
    MissingEdgeFeature,
    MissingFeature,
    ShapeError,
    IndexError,
    GenerationError,
    TrainingDiverged,
};

std::string_view to_string(ErrorKind kind);

// Process exit status for the CLI: 2 parse, 3 validation, 4 missing feature,
// 5 training divergence.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace graphtok3d
