#include "patchlab/harness/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "patchlab/error.hpp"

#ifndef PATCHLAB_DATA_DIR
#define PATCHLAB_DATA_DIR "data"
#endif

namespace patchlab::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw InputError("config key '" + key + "': expected a number, got '" + v + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw InputError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw InputError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InputError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::string fmt(double d) {
  std::ostringstream out;
  out.precision(17);
  out << d;
  return out.str();
}

std::string fmt(bool b) { return b ? "true" : "false"; }

std::vector<double> to_grid(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_double(key, item));
  }
  return out;
}

std::string fmt_grid(const std::vector<double>& g) {
  std::string out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i) out += ",";
    out += fmt(g[i]);
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Registry = std::map<std::string, Field>;

const Registry& registry() {
  static const Registry reg = [] {
    Registry r;
    auto add_real = [&r](const std::string& key, std::function<double&(RunConfig&)> ref) {
      r[key] = {[key, ref](RunConfig& c, const std::string& v) { ref(c) = to_double(key, v); },
                [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); }};
    };
    auto add_size = [&r](const std::string& key, std::function<std::size_t&(RunConfig&)> ref) {
      r[key] = {[key, ref](RunConfig& c, const std::string& v) { ref(c) = to_u64(key, v); },
                [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
    };
    auto add_u64 = [&r](const std::string& key, std::function<std::uint64_t&(RunConfig&)> ref) {
      r[key] = {[key, ref](RunConfig& c, const std::string& v) { ref(c) = to_u64(key, v); },
                [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
    };
    auto add_int = [&r](const std::string& key, std::function<int&(RunConfig&)> ref) {
      r[key] = {[key, ref](RunConfig& c, const std::string& v) { ref(c) = to_int(key, v); },
                [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
    };
    auto add_bool = [&r](const std::string& key, std::function<bool&(RunConfig&)> ref) {
      r[key] = {[key, ref](RunConfig& c, const std::string& v) { ref(c) = to_bool(key, v); },
                [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); }};
    };
    auto add_text = [&r](const std::string& key, std::function<std::string&(RunConfig&)> ref) {
      r[key] = {[ref](RunConfig& c, const std::string& v) { ref(c) = v; },
                [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); }};
    };
    auto add_path = [&r](const std::string& key, std::function<std::filesystem::path&(RunConfig&)> ref) {
      r[key] = {[ref](RunConfig& c, const std::string& v) { ref(c) = v; },
                [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)).string(); }};
    };

    add_u64("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; });

    add_path("paths.corpus", [](RunConfig& c) -> std::filesystem::path& { return c.paths.corpus; });
    add_path("paths.labels", [](RunConfig& c) -> std::filesystem::path& { return c.paths.labels; });
    add_path("paths.seeds", [](RunConfig& c) -> std::filesystem::path& { return c.paths.seeds; });
    add_path("paths.out", [](RunConfig& c) -> std::filesystem::path& { return c.paths.out; });

    add_real("split.train", [](RunConfig& c) -> double& { return c.split.train; });
    add_real("split.validation", [](RunConfig& c) -> double& { return c.split.validation; });
    add_real("split.test", [](RunConfig& c) -> double& { return c.split.test; });

    add_bool("dataset.obfuscate", [](RunConfig& c) -> bool& { return c.dataset.obfuscate; });
    add_bool("dataset.rename_variables", [](RunConfig& c) -> bool& { return c.dataset.rename_variables; });
    add_bool("dataset.strip_comments", [](RunConfig& c) -> bool& { return c.dataset.strip_comments; });
    add_text("augment.endpoint", [](RunConfig& c) -> std::string& { return c.dataset.augmentation.endpoint; });
    add_text("augment.model", [](RunConfig& c) -> std::string& { return c.dataset.augmentation.model; });
    r["augment.timeout_ms"] = {
        [](RunConfig& c, const std::string& v) {
          c.dataset.augmentation.timeout = std::chrono::milliseconds(to_u64("augment.timeout_ms", v));
        },
        [](const RunConfig& c) { return std::to_string(c.dataset.augmentation.timeout.count()); }};
    add_int("augment.max_variants", [](RunConfig& c) -> int& { return c.dataset.augmentation.max_variants; });

    add_int("model.d_model", [](RunConfig& c) -> int& { return c.model.d_model; });
    add_int("model.n_layers", [](RunConfig& c) -> int& { return c.model.n_layers; });
    add_int("model.n_heads", [](RunConfig& c) -> int& { return c.model.n_heads; });
    add_int("model.d_ff", [](RunConfig& c) -> int& { return c.model.d_ff; });
    add_int("model.context", [](RunConfig& c) -> int& { return c.model.context; });
    add_real("model.init_std", [](RunConfig& c) -> double& { return c.model.init_std; });

    add_real("sft.lr", [](RunConfig& c) -> double& { return c.sft.lr; });
    add_size("sft.batch", [](RunConfig& c) -> std::size_t& { return c.sft.batch; });
    add_size("sft.epochs", [](RunConfig& c) -> std::size_t& { return c.sft.epochs; });
    add_real("sft.clip_norm", [](RunConfig& c) -> double& { return c.sft.optimizer.clip_norm; });
    add_real("sft.weight_decay", [](RunConfig& c) -> double& { return c.sft.optimizer.weight_decay; });
    r["sft.loss_mask"] = {[](RunConfig& c, const std::string& v) { c.sft.loss_mask = tinylm::parse_loss_mask(v); },
                          [](const RunConfig& c) { return tinylm::to_string(c.sft.loss_mask); }};

    add_real("reward.weight_semantic", [](RunConfig& c) -> double& { return c.reward.weights.semantic; });
    add_real("reward.weight_model", [](RunConfig& c) -> double& { return c.reward.weights.model; });
    r["reward.form"] = {[](RunConfig& c, const std::string& v) {
                          if (v == "f1") {
                            c.reward.form = reward::RewardForm::f1;
                          } else if (v == "recall") {
                            c.reward.form = reward::RewardForm::recall;
                          } else {
                            throw InputError("config key 'reward.form': expected f1 or recall, got '" + v + "'");
                          }
                        },
                        [](const RunConfig& c) {
                          return std::string(c.reward.form == reward::RewardForm::recall ? "recall" : "f1");
                        }};
    add_int("reward.layer", [](RunConfig& c) -> int& { return c.reward.layer; });
    add_bool("reward.non_negative", [](RunConfig& c) -> bool& { return c.reward.non_negative; });
    add_bool("reward.train", [](RunConfig& c) -> bool& { return c.reward.train; });
    add_real("reward.lr", [](RunConfig& c) -> double& { return c.reward.training.lr; });
    add_size("reward.epochs", [](RunConfig& c) -> std::size_t& { return c.reward.training.epochs; });
    add_size("reward.batch", [](RunConfig& c) -> std::size_t& { return c.reward.training.batch; });
    add_bool("reward.head_only", [](RunConfig& c) -> bool& { return c.reward.training.head_only; });

    add_real("ppo.clip", [](RunConfig& c) -> double& { return c.ppo.clip; });
    add_real("ppo.kl_coef", [](RunConfig& c) -> double& { return c.ppo.kl_coef; });
    add_real("ppo.gamma", [](RunConfig& c) -> double& { return c.ppo.gamma; });
    add_real("ppo.lambda", [](RunConfig& c) -> double& { return c.ppo.lambda; });
    add_size("ppo.epochs", [](RunConfig& c) -> std::size_t& { return c.ppo.epochs; });
    add_size("ppo.minibatch", [](RunConfig& c) -> std::size_t& { return c.ppo.minibatch; });
    add_real("ppo.lr", [](RunConfig& c) -> double& { return c.ppo.lr; });
    add_size("ppo.iterations", [](RunConfig& c) -> std::size_t& { return c.ppo.iterations; });
    add_size("ppo.rollouts", [](RunConfig& c) -> std::size_t& { return c.ppo.rollouts; });
    add_real("ppo.value_coef", [](RunConfig& c) -> double& { return c.ppo.value_coef; });
    add_real("ppo.temperature", [](RunConfig& c) -> double& { return c.ppo.decode.temperature; });
    add_real("ppo.top_p", [](RunConfig& c) -> double& { return c.ppo.decode.top_p; });
    add_size("ppo.max_new_tokens", [](RunConfig& c) -> std::size_t& { return c.ppo.decode.max_new_tokens; });

    add_real("decode.temperature", [](RunConfig& c) -> double& { return c.decode.temperature; });
    add_real("decode.top_p", [](RunConfig& c) -> double& { return c.decode.top_p; });
    add_size("decode.beam_size", [](RunConfig& c) -> std::size_t& { return c.decode.beam_size; });
    add_size("decode.max_new_tokens", [](RunConfig& c) -> std::size_t& { return c.decode.max_new_tokens; });

    r["eval.mode"] = {[](RunConfig& c, const std::string& v) { c.eval.mode = evalsuite::parse_check_mode(v); },
                      [](const RunConfig& c) { return evalsuite::to_string(c.eval.mode); }};
    add_text("eval.compiler_cmd", [](RunConfig& c) -> std::string& { return c.eval.compiler_cmd; });
    add_bool("eval.bleu_smoothing", [](RunConfig& c) -> bool& { return c.eval.bleu_smoothing; });
    add_real("eval.rouge_beta", [](RunConfig& c) -> double& { return c.eval.rouge_beta; });

    add_text("sweep.axis", [](RunConfig& c) -> std::string& { return c.sweep.axis; });
    r["sweep.grid"] = {[](RunConfig& c, const std::string& v) { c.sweep.grid = to_grid("sweep.grid", v); },
                       [](const RunConfig& c) { return fmt_grid(c.sweep.grid); }};
    add_size("sweep.max_samples", [](RunConfig& c) -> std::size_t& { return c.sweep.max_samples; });
    return r;
  }();
  return reg;
}

}  // namespace

RunConfig::RunConfig() {
  const std::filesystem::path data(PATCHLAB_DATA_DIR);
  paths.corpus = data / "microcorpus" / "pairs";
  paths.labels = data / "microcorpus" / "labels.csv";
  paths.seeds = data / "seeds.tsv";
  ppo.decode.max_new_tokens = 128;
  decode.max_new_tokens = 128;
}

void set_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& reg = registry();
  const auto it = reg.find(key);
  if (it == reg.end()) throw InputError("unknown config key '" + key + "'");
  it->second.set(cfg, value);
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw InputError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set_value(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const InputError& e) {
      throw InputError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, buf.str(), path.string());
  return cfg;
}

std::string render_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : registry()) {
    // Where artifacts land does not change what they contain.
    if (key == "paths.out") continue;
    out += key + " = " + field.get(cfg) + "\n";
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& kv : registry()) keys.push_back(kv.first);
  return keys;
}

void derive_seeds(RunConfig& cfg) {
  cfg.dataset.seed = cfg.seed;
  cfg.model.seed = cfg.seed ^ 0x9e3779b97f4a7c15ULL;
  cfg.sft.seed = cfg.seed + 1;
  cfg.reward.training.seed = cfg.seed + 2;
  cfg.ppo.seed = cfg.seed + 3;
  cfg.decode.seed = cfg.seed + 4;
}

}  // namespace patchlab::harness
