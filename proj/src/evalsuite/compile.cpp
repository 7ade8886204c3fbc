#include "patchlab/evalsuite/compile.hpp"

#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "patchlab/codeprep/syntax_tree.hpp"
#include "patchlab/error.hpp"

namespace patchlab::evalsuite {

namespace fs = std::filesystem;

std::string to_string(CheckMode mode) {
  return mode == CheckMode::external_compiler ? "external_compiler" : "parse_only";
}

CheckMode parse_check_mode(const std::string& text) {
  if (text == "parse_only") return CheckMode::parse_only;
  if (text == "external_compiler") return CheckMode::external_compiler;
  throw InputError("unknown check mode '" + text + "' (expected parse_only or external_compiler)");
}

std::string CompileTally::render() const {
  return std::to_string(passed) + "/" + std::to_string(total);
}

namespace {

bool executable(const fs::path& p) {
  std::error_code ec;
  return fs::is_regular_file(p, ec) && ::access(p.c_str(), X_OK) == 0;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

CompileDiagnostic parse_check(std::size_t index, const std::string& source, corpus::LanguageTag lang) {
  const auto tree = codeprep::parse(source, lang);
  const std::size_t errors = tree.error_count();
  return {index, errors == 0, errors == 0 ? "ok" : std::to_string(errors) + " syntax error node(s)"};
}

CompileDiagnostic external_check(std::size_t index, const std::string& source,
                                 const std::string& command, corpus::LanguageTag lang) {
  const fs::path dir = fs::temp_directory_path();
  const std::string stem = "patchlab_compile_" + std::to_string(::getpid()) + "_" + std::to_string(index);
  const fs::path src = dir / (stem + (lang == corpus::LanguageTag::cpp ? ".cpp" : ".c"));
  const fs::path log = dir / (stem + ".log");
  {
    std::ofstream out(src);
    if (!out) throw Error("cannot write " + src.string());
    out << source;
  }
  const std::string line = command + " " + shell_quote(src.string()) + " > " + shell_quote(log.string()) + " 2>&1";
  const int status = std::system(line.c_str());
  std::string detail = read_file(log);
  std::error_code ec;
  fs::remove(src, ec);
  fs::remove(log, ec);
  const bool ok = status == 0;
  if (detail.empty()) detail = ok ? "ok" : "exit status " + std::to_string(status);
  return {index, ok, detail};
}

}  // namespace

bool command_resolvable(const std::string& command) {
  std::istringstream in(command);
  std::string program;
  if (!(in >> program)) return false;
  if (program.find('/') != std::string::npos) return executable(program);
  const char* path = std::getenv("PATH");
  if (!path) return false;
  std::istringstream dirs(path);
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (!dir.empty() && executable(fs::path(dir) / program)) return true;
  }
  return false;
}

CompileTally compile_tally(const std::vector<std::string>& sources, CheckMode mode,
                           const std::optional<std::string>& compiler_cmd,
                           corpus::LanguageTag language) {
  CompileTally tally;
  tally.mode = mode;
  if (mode == CheckMode::external_compiler) {
    if (!compiler_cmd || compiler_cmd->empty()) {
      tally.warnings.push_back("no compiler command configured; downgraded to parse_only");
      tally.mode = CheckMode::parse_only;
    } else if (!command_resolvable(*compiler_cmd)) {
      tally.warnings.push_back("compiler '" + *compiler_cmd + "' not found; downgraded to parse_only");
      tally.mode = CheckMode::parse_only;
    }
  }
  tally.total = sources.size();
  for (std::size_t i = 0; i < sources.size(); ++i) {
    CompileDiagnostic d = tally.mode == CheckMode::parse_only
                              ? parse_check(i, sources[i], language)
                              : external_check(i, sources[i], *compiler_cmd, language);
    if (d.passed) ++tally.passed;
    tally.samples.push_back(std::move(d));
  }
  return tally;
}

}  // namespace patchlab::evalsuite
