#include "recam/config.hpp"

#include <cstdlib>
#include <functional>
#include <sstream>

#include "recam/errors.hpp"
#include "recam/ioutil.hpp"

namespace recam::config {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const int64_t v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing text");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + value + "' is not an integer");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing text");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + value + "' is not a nonnegative integer");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing text");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + value + "' is not a number");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": '" + value + "' is not a boolean (true/false)");
}

struct KeyHandler {
  std::string key;  // "section.name"
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeyHandler>& handlers() {
  using ioutil::fmt_double;
  static const std::vector<KeyHandler> table = {
      {"model.d",
       [](RunConfig& c, const std::string& v) { c.model.d = parse_int("model.d", v); },
       [](const RunConfig& c) { return std::to_string(c.model.d); }},
      {"model.layers",
       [](RunConfig& c, const std::string& v) {
         c.model.layers = parse_int("model.layers", v);
       },
       [](const RunConfig& c) { return std::to_string(c.model.layers); }},
      {"model.heads",
       [](RunConfig& c, const std::string& v) {
         c.model.heads = parse_int("model.heads", v);
       },
       [](const RunConfig& c) { return std::to_string(c.model.heads); }},
      {"model.ff",
       [](RunConfig& c, const std::string& v) { c.model.ff = parse_int("model.ff", v); },
       [](const RunConfig& c) { return std::to_string(c.model.ff); }},
      {"model.max_seq_len",
       [](RunConfig& c, const std::string& v) {
         c.model.max_seq_len = parse_int("model.max_seq_len", v);
       },
       [](const RunConfig& c) { return std::to_string(c.model.max_seq_len); }},
      {"model.mode",
       [](RunConfig& c, const std::string& v) { c.model.mode = model::mode_from_string(v); },
       [](const RunConfig& c) { return model::mode_name(c.model.mode); }},
      {"model.window",
       [](RunConfig& c, const std::string& v) {
         c.model.window = parse_int("model.window", v);
       },
       [](const RunConfig& c) { return std::to_string(c.model.window); }},
      {"model.dropout",
       [](RunConfig& c, const std::string& v) {
         c.model.dropout = parse_double("model.dropout", v);
       },
       [](const RunConfig& c) { return fmt_double(c.model.dropout); }},
      {"model.separate_global_projections",
       [](RunConfig& c, const std::string& v) {
         c.model.separate_global_projections =
             parse_bool("model.separate_global_projections", v);
       },
       [](const RunConfig& c) {
         return c.model.separate_global_projections ? std::string("true")
                                                    : std::string("false");
       }},
      {"train.batch_size",
       [](RunConfig& c, const std::string& v) {
         c.train.batch_size = parse_int("train.batch_size", v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
      {"train.lr",
       [](RunConfig& c, const std::string& v) { c.train.lr = parse_double("train.lr", v); },
       [](const RunConfig& c) { return fmt_double(c.train.lr); }},
      {"train.beta1",
       [](RunConfig& c, const std::string& v) {
         c.train.beta1 = parse_double("train.beta1", v);
       },
       [](const RunConfig& c) { return fmt_double(c.train.beta1); }},
      {"train.beta2",
       [](RunConfig& c, const std::string& v) {
         c.train.beta2 = parse_double("train.beta2", v);
       },
       [](const RunConfig& c) { return fmt_double(c.train.beta2); }},
      {"train.eps",
       [](RunConfig& c, const std::string& v) {
         c.train.eps = parse_double("train.eps", v);
       },
       [](const RunConfig& c) { return fmt_double(c.train.eps); }},
      {"train.weight_decay",
       [](RunConfig& c, const std::string& v) {
         c.train.weight_decay = parse_double("train.weight_decay", v);
       },
       [](const RunConfig& c) { return fmt_double(c.train.weight_decay); }},
      {"train.epochs",
       [](RunConfig& c, const std::string& v) {
         c.train.epochs = parse_int("train.epochs", v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.epochs); }},
      {"train.validation_interval",
       [](RunConfig& c, const std::string& v) {
         c.train.validation_interval = parse_int("train.validation_interval", v);
       },
       [](const RunConfig& c) { return std::to_string(c.train.validation_interval); }},
      {"train.warmup_fraction",
       [](RunConfig& c, const std::string& v) {
         c.train.warmup_fraction = parse_double("train.warmup_fraction", v);
       },
       [](const RunConfig& c) { return fmt_double(c.train.warmup_fraction); }},
      {"train.selection",
       [](RunConfig& c, const std::string& v) { c.train.selection = v; },
       [](const RunConfig& c) { return c.train.selection; }},
      {"data.min_count",
       [](RunConfig& c, const std::string& v) {
         c.min_count = parse_int("data.min_count", v);
       },
       [](const RunConfig& c) { return std::to_string(c.min_count); }},
      {"run.seed",
       [](RunConfig& c, const std::string& v) { c.seed = parse_u64("run.seed", v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"run.out_dir",
       [](RunConfig& c, const std::string& v) { c.out_dir = v; },
       [](const RunConfig& c) { return c.out_dir; }},
      {"run.train_data",
       [](RunConfig& c, const std::string& v) { c.train_data = v; },
       [](const RunConfig& c) { return c.train_data; }},
      {"run.val_data",
       [](RunConfig& c, const std::string& v) { c.val_data = v; },
       [](const RunConfig& c) { return c.val_data; }},
  };
  return table;
}

const KeyHandler& handler_for(const std::string& key) {
  for (const KeyHandler& h : handlers()) {
    if (h.key == key) return h;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

void apply(RunConfig& cfg, const std::string& key, const std::string& value,
           const std::string& stage) {
  handler_for(key).set(cfg, value);
  cfg.provenance[key] = stage;
}

}  // namespace

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const KeyHandler& h : handlers()) out.push_back(h.key);
    return out;
  }();
  return keys;
}

RunConfig RunConfig::load(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  const char* env_out = std::getenv("RECAM_OUT_DIR");
  cfg.out_dir = env_out != nullptr && *env_out != '\0' ? env_out : ".";
  for (const std::string& key : known_keys()) cfg.provenance[key] = "default";

  if (!path.empty()) {
    std::istringstream in(ioutil::read_text_file(path));
    std::string line;
    std::string section;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string text = trim(line);
      if (text.empty() || text[0] == '#' || text[0] == ';') continue;
      if (text.front() == '[') {
        if (text.back() != ']') {
          throw ConfigError(path + ":" + std::to_string(line_no) +
                            ": malformed section header '" + text + "'");
        }
        section = trim(text.substr(1, text.size() - 2));
        continue;
      }
      const size_t eq = text.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(path + ":" + std::to_string(line_no) +
                          ": expected 'key = value', got '" + text + "'");
      }
      const std::string key = trim(text.substr(0, eq));
      const std::string value = trim(text.substr(eq + 1));
      if (section.empty()) {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": key '" +
                          key + "' appears before any [section]");
      }
      apply(cfg, section + "." + key, value, "file");
    }
  }

  for (const auto& [key, value] : overrides) apply(cfg, key, value, "flag");

  // The conventional cap in dense mode, unless the length was set explicitly.
  if (cfg.model.mode == model::AttentionMode::Dense &&
      cfg.provenance["model.max_seq_len"] == "default") {
    cfg.model.max_seq_len = 512;
  }
  cfg.train.seed = cfg.seed;
  cfg.train.validate();
  if (cfg.min_count < 1) throw ConfigError("data.min_count must be at least 1");
  return cfg;
}

std::string RunConfig::to_ini() const {
  std::ostringstream out;
  std::string section;
  for (const KeyHandler& h : handlers()) {
    const std::string sec = h.key.substr(0, h.key.find('.'));
    const std::string name = h.key.substr(h.key.find('.') + 1);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    auto it = provenance.find(h.key);
    out << "# " << name << ": "
        << (it != provenance.end() ? it->second : std::string("default")) << '\n';
    out << name << " = " << h.get(*this) << '\n';
  }
  return out.str();
}

}  // namespace recam::config
