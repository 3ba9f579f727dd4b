#pragma once

#include <stdexcept>
#include <string>

namespace phylosmc {

enum class ErrorKind {
  kEmptyInput,
  kAlignmentShape,
  kDuplicateTaxon,
  kInvalidCharacter,
  kDomain,
  kMissingTaxon,
  kParse,
  kNoLastMerge,
  kCannotMerge,
  kUnsupportedMove,
  kUsage,
  kConfiguration,
  kTaxonMismatch,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kEmptyInput: return "empty input";
    case ErrorKind::kAlignmentShape: return "alignment shape";
    case ErrorKind::kDuplicateTaxon: return "duplicate taxon";
    case ErrorKind::kInvalidCharacter: return "invalid character";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kMissingTaxon: return "missing taxon";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kNoLastMerge: return "no last merge";
    case ErrorKind::kCannotMerge: return "cannot merge";
    case ErrorKind::kUnsupportedMove: return "unsupported move";
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kTaxonMismatch: return "taxon mismatch";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Newick and alignment parsers report the byte offset of the failure.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(ErrorKind::kParse,
              what + " at position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace phylosmc
