#include "patchlab/instructions/records.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <json.hpp>
#include <regex>
#include <sstream>

#include "patchlab/codeprep/syntax_tree.hpp"
#include "patchlab/error.hpp"

namespace patchlab::instructions {

using nlohmann::ordered_json;

std::string to_string(Task task) {
  switch (task) {
    case Task::identify: return "identify";
    case Task::describe: return "describe";
    case Task::repair: return "repair";
  }
  return "identify";
}

std::string to_string(Origin origin) {
  return origin == Origin::handwritten ? "handwritten" : "augmented";
}

std::optional<Task> parse_task(std::string_view text) {
  if (text == "identify") return Task::identify;
  if (text == "describe") return Task::describe;
  if (text == "repair") return Task::repair;
  return std::nullopt;
}

std::vector<SeedInstruction> SeedFile::for_task(Task task) const {
  std::vector<SeedInstruction> out;
  for (const auto& s : seeds) {
    if (s.task == task) out.push_back(s);
  }
  return out;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

const SeedInstruction& pick(const std::vector<SeedInstruction>& seeds, Task task, Rng& rng) {
  std::vector<const SeedInstruction*> pool;
  for (const auto& s : seeds) {
    if (s.task == task) pool.push_back(&s);
  }
  if (pool.empty()) throw InputError("no seed instructions for task " + to_string(task));
  return *pool[rng.uniform_index(pool.size())];
}

}  // namespace

SeedFile parse_seeds(std::string_view content, const std::string& origin_name) {
  SeedFile file;
  std::map<std::string, std::size_t> first_seen;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = origin_name + ":" + std::to_string(lineno);
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw InputError(where + ": expected 'task<TAB>text'");
    const std::string tag = trim(std::string_view(line).substr(0, tab));
    const auto task = parse_task(tag);
    if (!task) throw InputError(where + ": unknown task tag '" + tag + "'");
    std::string text = trim(std::string_view(line).substr(tab + 1));
    if (text.empty()) throw InputError(where + ": empty instruction text");
    const std::string key = tag + "\t" + text;
    if (auto it = first_seen.find(key); it != first_seen.end()) {
      file.warnings.push_back(where + ": duplicate seed text (first seen on line " +
                              std::to_string(it->second) + ")");
    } else {
      first_seen.emplace(key, lineno);
    }
    file.seeds.push_back(SeedInstruction{*task, std::move(text), Origin::handwritten});
  }
  for (Task task : {Task::identify, Task::describe, Task::repair}) {
    if (file.for_task(task).empty()) {
      throw InputError(origin_name + ": no seeds for task '" + to_string(task) + "'");
    }
  }
  return file;
}

SeedFile load_seeds(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read seed file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_seeds(ss.str(), path.string());
}

bool has_cwe_prefix(std::string_view text) {
  if (!text.starts_with("CWE-") || text.size() < 5) return false;
  return std::isdigit(static_cast<unsigned char>(text[4])) != 0;
}

std::string normalize_description(std::string_view text) {
  static const std::regex leading(R"(^\s*[Cc][Ww][Ee]\s*[-:]?\s*([0-9]+)\s*[:.-]?\s*)");
  std::string s(text);
  std::smatch m;
  if (std::regex_search(s, m, leading)) {
    std::string rest = m.suffix().str();
    return "CWE-" + m[1].str() + (rest.empty() ? "" : " " + rest);
  }
  return trim(s);
}

std::vector<std::string> validate(const InstructionRecord& r, corpus::LanguageTag language) {
  std::vector<std::string> problems;
  if (r.instruction.empty()) problems.push_back("empty instruction");
  switch (r.task) {
    case Task::identify:
      if (r.output != kYes && r.output != kNo) problems.push_back("identify output must be YES or NO");
      break;
    case Task::describe:
      if (!has_cwe_prefix(r.output)) problems.push_back("describe output must start with CWE-<digits>");
      break;
    case Task::repair:
      if (codeprep::parse(r.output, language).has_error()) {
        problems.push_back("repair output does not parse cleanly");
      }
      break;
  }
  if (r.cwe && !corpus::is_valid_cwe(*r.cwe)) problems.push_back("malformed cwe field");
  return problems;
}

std::array<InstructionRecord, 2> assemble_identification(const corpus::FunctionPair& pair,
                                                         const std::vector<SeedInstruction>& seeds,
                                                         Rng& rng) {
  InstructionRecord vul;
  vul.id = pair.id + ":identify:vuln";
  vul.task = Task::identify;
  vul.instruction = pick(seeds, Task::identify, rng).text;
  vul.input = pair.vulnerable_source;
  vul.output = kYes;
  vul.cwe = pair.cwe;
  vul.source_pair_id = pair.id;

  InstructionRecord ben;
  ben.id = pair.id + ":identify:fixed";
  ben.task = Task::identify;
  ben.instruction = pick(seeds, Task::identify, rng).text;
  ben.input = pair.repaired_source;
  ben.output = kNo;
  ben.source_pair_id = pair.id;
  return {std::move(vul), std::move(ben)};
}

InstructionRecord assemble_repair(const corpus::FunctionPair& pair,
                                  const std::vector<SeedInstruction>& seeds, Rng& rng) {
  InstructionRecord r;
  r.id = pair.id + ":repair";
  r.task = Task::repair;
  r.instruction = pick(seeds, Task::repair, rng).text;
  r.input = pair.vulnerable_source;
  r.output = pair.repaired_source;
  r.cwe = pair.cwe;
  r.source_pair_id = pair.id;
  return r;
}

InstructionRecord assemble_description(const corpus::FunctionPair& pair,
                                       const std::string& description_text,
                                       const std::vector<SeedInstruction>& seeds, Rng& rng) {
  if (!has_cwe_prefix(description_text)) {
    throw InputError("description for " + pair.id + " does not start with CWE-<digits>");
  }
  InstructionRecord r;
  r.id = pair.id + ":describe";
  r.task = Task::describe;
  r.instruction = pick(seeds, Task::describe, rng).text;
  r.input = pair.vulnerable_source;
  r.output = description_text;
  r.cwe = pair.cwe;
  r.source_pair_id = pair.id;
  return r;
}

std::string to_json_line(const InstructionRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["task"] = to_string(r.task);
  j["instruction"] = r.instruction;
  j["input"] = r.input;
  j["output"] = r.output;
  j["cwe"] = r.cwe ? ordered_json(*r.cwe) : ordered_json(nullptr);
  j["source_pair_id"] = r.source_pair_id;
  return j.dump();
}

InstructionRecord from_json_line(std::string_view line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad JSONL record: ") + e.what());
  }
  InstructionRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    const auto task = parse_task(j.at("task").get<std::string>());
    if (!task) throw InputError("bad JSONL record: unknown task");
    r.task = *task;
    r.instruction = j.at("instruction").get<std::string>();
    r.input = j.at("input").get<std::string>();
    r.output = j.at("output").get<std::string>();
    if (!j.at("cwe").is_null()) r.cwe = j.at("cwe").get<std::string>();
    r.source_pair_id = j.at("source_pair_id").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad JSONL record: ") + e.what());
  }
  return r;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<InstructionRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << to_json_line(r) << "\n";
}

std::vector<InstructionRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::vector<InstructionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(from_json_line(line));
  }
  return out;
}

}  // namespace patchlab::instructions
