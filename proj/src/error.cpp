#include "dmtag/error.hpp"

namespace dmtag {

const char* err_name(Err e) {
  switch (e) {
    case Err::MalformedLine: return "MalformedLine";
    case Err::UnknownTag: return "UnknownTag";
    case Err::EmptyTurn: return "EmptyTurn";
    case Err::TooFewDialogs: return "TooFewDialogs";
    case Err::EmptyStats: return "EmptyStats";
    case Err::UnmergeableClasses: return "UnmergeableClasses";
    case Err::UnknownItem: return "UnknownItem";
    case Err::EmptyTraining: return "EmptyTraining";
    case Err::EmptyHeldout: return "EmptyHeldout";
    case Err::ArityMismatch: return "ArityMismatch";
    case Err::InsufficientData: return "InsufficientData";
    case Err::NoWordTree: return "NoWordTree";
    case Err::EmptyInput: return "EmptyInput";
    case Err::ZeroProbability: return "ZeroProbability";
    case Err::TagsetMismatch: return "TagsetMismatch";
    case Err::NoAnnotations: return "NoAnnotations";
    case Err::InvalidSpec: return "InvalidSpec";
    case Err::InvalidConfig: return "InvalidConfig";
    case Err::CorruptModel: return "CorruptModel";
    case Err::UnsupportedVersion: return "UnsupportedVersion";
  }
  return "UnknownError";
}

DomainError::DomainError(Err code, const std::string& detail)
    : std::runtime_error(std::string(err_name(code)) + ": " + detail), code_(code) {}

void fail(Err code, const std::string& detail) { throw DomainError(code, detail); }

}  // namespace dmtag
