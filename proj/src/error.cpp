#include "graphtok3d/error.hpp"

namespace graphtok3d {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::IoError: return "IoError";
        case ErrorKind::InvalidProposal: return "InvalidProposal";
        case ErrorKind::InvalidObjectId: return "InvalidObjectId";
        case ErrorKind::DuplicateObjectId: return "DuplicateObjectId";
        case ErrorKind::TooManyObjects: return "TooManyObjects";
        case ErrorKind::EmptyScene: return "EmptyScene";
        case ErrorKind::MissingEdgeFeature: return "MissingEdgeFeature";
        case ErrorKind::MissingFeature: return "MissingFeature";
        case ErrorKind::ShapeError: return "ShapeError";
        case ErrorKind::IndexError: return "IndexError";
        case ErrorKind::GenerationError: return "GenerationError";
        case ErrorKind::TrainingDiverged: return "TrainingDiverged";
    }
    return "UnknownError";
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ParseError:
        case ErrorKind::IoError:
            return 2;
        case ErrorKind::InvalidProposal:
        case ErrorKind::InvalidObjectId:
        case ErrorKind::DuplicateObjectId:
        case ErrorKind::TooManyObjects:
        case ErrorKind::EmptyScene:
        case ErrorKind::ShapeError:
        case ErrorKind::IndexError:
        case ErrorKind::GenerationError:
            return 3;
        case ErrorKind::MissingEdgeFeature:
        case ErrorKind::MissingFeature:
            return 4;
        case ErrorKind::TrainingDiverged:
            return 5;
    }
    return 1;
}

}  // namespace graphtok3d
