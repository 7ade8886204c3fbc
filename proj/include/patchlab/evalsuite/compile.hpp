#pragma once

#include <optional>
#include <string>
#include <vector>

#include "patchlab/corpus/corpus.hpp"

namespace patchlab::evalsuite {

enum class CheckMode { parse_only, external_compiler };

std::string to_string(CheckMode mode);
CheckMode parse_check_mode(const std::string& text);

struct CompileDiagnostic {
  std::size_t index = 0;
  bool passed = false;
  std::string detail;
};

struct CompileTally {
  std::size_t total = 0;
  std::size_t passed = 0;
  CheckMode mode = CheckMode::parse_only;
  std::vector<CompileDiagnostic> samples;
  std::vector<std::string> warnings;

  // "n/N"
  std::string render() const;
};

// parse_only: passes iff the syntax tree has no ERROR or MISSING nodes.
// external_compiler: `compiler_cmd` is run with the path of a temporary source
// file appended, and passes on exit status 0. A compiler that cannot be
// resolved downgrades the run to parse_only with a warning.
CompileTally compile_tally(const std::vector<std::string>& sources, CheckMode mode,
                           const std::optional<std::string>& compiler_cmd = std::nullopt,
                           corpus::LanguageTag language = corpus::LanguageTag::c);

// True when the first word of `command` names an executable file, directly
// or through PATH.
bool command_resolvable(const std::string& command);

}  // namespace patchlab::evalsuite
