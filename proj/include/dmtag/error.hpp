#pragma once

#include <stdexcept>
#include <string>

namespace dmtag {

// Failure conditions surfaced by the CLI. Each name describes the condition
// itself; the module that raised it is irrelevant to the caller.
enum class Err {
  MalformedLine,
  UnknownTag,
  EmptyTurn,
  TooFewDialogs,
  EmptyStats,
  UnmergeableClasses,
  UnknownItem,
  EmptyTraining,
  EmptyHeldout,
  ArityMismatch,
  InsufficientData,
  NoWordTree,
  EmptyInput,
  ZeroProbability,
  TagsetMismatch,
  NoAnnotations,
  InvalidSpec,
  InvalidConfig,
  CorruptModel,
  UnsupportedVersion,
};

const char* err_name(Err e);

class DomainError : public std::runtime_error {
 public:
  DomainError(Err code, const std::string& detail);
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] void fail(Err code, const std::string& detail);

}  // namespace dmtag
