#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "patchlab/corpus/corpus.hpp"
#include "patchlab/rng.hpp"

namespace patchlab::instructions {

enum class Task { identify, describe, repair };
enum class Origin { handwritten, augmented };

std::string to_string(Task task);
std::string to_string(Origin origin);
std::optional<Task> parse_task(std::string_view text);

struct SeedInstruction {
  Task task = Task::identify;
  std::string text;
  Origin origin = Origin::handwritten;

  bool operator==(const SeedInstruction&) const = default;
};

struct SeedFile {
  std::vector<SeedInstruction> seeds;
  std::vector<std::string> warnings;  // duplicate texts and similar soft issues

  std::vector<SeedInstruction> for_task(Task task) const;
};

// Tab-separated `task<TAB>text` lines; `#` starts a comment line.
SeedFile load_seeds(const std::filesystem::path& path);
SeedFile parse_seeds(std::string_view content, const std::string& origin_name = "<memory>");

struct InstructionRecord {
  std::string id;
  Task task = Task::identify;
  std::string instruction;
  std::string input;
  std::string output;
  std::optional<std::string> cwe;
  std::string source_pair_id;

  bool operator==(const InstructionRecord&) const = default;
};

inline constexpr const char* kYes = "YES";
inline constexpr const char* kNo = "NO";

// True when `text` starts with `CWE-` followed by at least one digit.
bool has_cwe_prefix(std::string_view text);

// Rewrites a leading "CWE: 78", "CWE 78" or "cwe-78" into "CWE-78".
std::string normalize_description(std::string_view text);

// Empty when the record satisfies its task's invariants; otherwise the
// reasons it does not. Repair outputs are checked with the parser.
std::vector<std::string> validate(const InstructionRecord& record,
                                  corpus::LanguageTag language = corpus::LanguageTag::cpp);

std::array<InstructionRecord, 2> assemble_identification(const corpus::FunctionPair& pair,
                                                         const std::vector<SeedInstruction>& seeds,
                                                         Rng& rng);
InstructionRecord assemble_repair(const corpus::FunctionPair& pair,
                                  const std::vector<SeedInstruction>& seeds, Rng& rng);
InstructionRecord assemble_description(const corpus::FunctionPair& pair,
                                       const std::string& description_text,
                                       const std::vector<SeedInstruction>& seeds, Rng& rng);

// JSON-lines, one object per record with fields
// id, task, instruction, input, output, cwe, source_pair_id.
std::string to_json_line(const InstructionRecord& record);
InstructionRecord from_json_line(std::string_view line);
void write_jsonl(const std::filesystem::path& path, const std::vector<InstructionRecord>& records);
std::vector<InstructionRecord> read_jsonl(const std::filesystem::path& path);

}  // namespace patchlab::instructions
