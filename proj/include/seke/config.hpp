#pragma once
// Run configuration loaded from a single TOML file. Unknown sections and keys
// are rejected; relative paths resolve against the config file's directory.

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <tomlplusplus/toml.hpp>

#include "seke/affect.hpp"
#include "seke/error.hpp"
#include "seke/http_annotator.hpp"
#include "seke/manifest.hpp"
#include "seke/simlab.hpp"
#include "seke/uamc.hpp"

namespace seke {

struct RunConfig {
  HttpAnnotatorConfig annotator;
  double temperature = 1.0;
  double summary_temperature = 0.2;
  int max_output_tokens = 1024;
  int parse_retries = 3;
  std::size_t max_calls = 100000;

  int max_samples = 5;
  AuAggregate au_aggregate = AuAggregate::mean;
  std::uint64_t seed = 42;
  bool paraphrase_rounds = false;

  std::optional<std::string> rewrite_templates;

  bool llm_normalize = false;
  double va_tolerance = 0.2;
  std::optional<std::vector<int>> au_subset;

  AuVocabulary vocab = AuVocabulary::standard();
  AuColumnMode au_mode = AuColumnMode::occurrence;

  double synthetic_noise = 0.0;
  double synthetic_va_sigma = 0.0;

  SimConfig sim;

  int workers = 4;
  std::optional<std::string> run_log;

  void validate() const {
    if (max_samples < 2) throw ConfigError("uamc.max_samples must be at least 2");
    if (max_calls == 0) throw ConfigError("limits.max_calls must be positive");
    if (workers < 1) throw ConfigError("io.workers must be positive");
    if (parse_retries < 0) throw ConfigError("annotator.parse_retries must be nonnegative");
    if (max_output_tokens <= 0) throw ConfigError("annotator.max_output_tokens must be positive");
    if (!(temperature >= 0.0 && temperature <= 2.0)) throw ConfigError("annotator.temperature must be in [0, 2]");
    if (!(summary_temperature >= 0.0 && summary_temperature <= 2.0))
      throw ConfigError("annotator.summary_temperature must be in [0, 2]");
    if (annotator.max_retries < 0) throw ConfigError("annotator.max_retries must be nonnegative");
    if (annotator.connect_timeout_s <= 0 || annotator.read_timeout_s <= 0)
      throw ConfigError("annotator timeouts must be positive");
    if (!(va_tolerance >= 0.0)) throw ConfigError("eval.va_tolerance must be nonnegative");
    if (!(synthetic_noise >= 0.0 && synthetic_noise <= 1.0)) throw ConfigError("synthetic.noise must be in [0, 1]");
    if (!(synthetic_va_sigma >= 0.0)) throw ConfigError("synthetic.va_sigma must be nonnegative");
    if (rewrite_templates && !std::filesystem::exists(*rewrite_templates))
      throw ConfigError("prompts.rewrite_templates does not exist: " + *rewrite_templates);
    if (au_subset)
      for (int id : *au_subset)
        if (!vocab.contains(id)) throw ConfigError("eval.au_subset lists AU" + std::to_string(id) + " outside the vocabulary");
    sim.validate();
  }
};

namespace detail {

inline void check_keys(const toml::table& t, std::string_view section, const std::set<std::string>& allowed) {
  for (const auto& [k, v] : t) {
    if (!allowed.count(std::string(k.str())))
      throw ConfigError("unknown key '" + (section.empty() ? "" : std::string(section) + ".") + std::string(k.str()) +
                        "'");
  }
}

template <class T>
void read_value(const toml::table& t, std::string_view section, std::string_view key, T& out) {
  const toml::node* node = t.get(key);
  if (!node) return;
  auto v = node->value<T>();
  if (!v) throw ConfigError(std::string(section) + "." + std::string(key) + " has the wrong type");
  out = *v;
}

template <class T>
void read_optional(const toml::table& t, std::string_view section, std::string_view key, std::optional<T>& out) {
  if (!t.get(key)) return;
  T v{};
  read_value(t, section, key, v);
  out = v;
}

template <class T>
void read_array(const toml::table& t, std::string_view section, std::string_view key, std::vector<T>& out) {
  const toml::node* node = t.get(key);
  if (!node) return;
  const toml::array* arr = node->as_array();
  if (!arr) throw ConfigError(std::string(section) + "." + std::string(key) + " must be an array");
  out.clear();
  for (const auto& el : *arr) {
    auto v = el.value<T>();
    if (!v) throw ConfigError(std::string(section) + "." + std::string(key) + " has an element of the wrong type");
    out.push_back(*v);
  }
}

inline const toml::table* section(const toml::table& root, std::string_view name) {
  const toml::node* node = root.get(name);
  if (!node) return nullptr;
  const toml::table* t = node->as_table();
  if (!t) throw ConfigError("[" + std::string(name) + "] must be a table");
  return t;
}

inline std::string resolve_path(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

}  // namespace detail

// Environment variables fill the annotator endpoint and key. An explicit
// base_url in the file wins over ANNOTATOR_BASE_URL.
inline void apply_environment(RunConfig& c) {
  if (const char* key = std::getenv("ANNOTATOR_API_KEY")) c.annotator.api_key = key;
  if (c.annotator.base_url.empty()) {
    const char* url = std::getenv("ANNOTATOR_BASE_URL");
    c.annotator.base_url = url && *url ? url : "https://api.openai.com/v1";
  }
}

inline RunConfig parse_config(const toml::table& root, const std::filesystem::path& base_dir) {
  using detail::read_array;
  using detail::read_optional;
  using detail::read_value;
  RunConfig c;
  detail::check_keys(root, "",
                     {"annotator", "limits", "uamc", "sampling", "prompts", "eval", "vocab", "synthetic", "sim", "io"});

  if (const auto* t = detail::section(root, "annotator")) {
    detail::check_keys(*t, "annotator",
                       {"base_url", "model", "connect_timeout_s", "read_timeout_s", "max_retries", "backoff_initial_ms",
                        "backoff_max_ms", "requests_per_minute", "temperature", "summary_temperature",
                        "max_output_tokens", "parse_retries"});
    read_value(*t, "annotator", "base_url", c.annotator.base_url);
    read_value(*t, "annotator", "model", c.annotator.model);
    read_value(*t, "annotator", "connect_timeout_s", c.annotator.connect_timeout_s);
    read_value(*t, "annotator", "read_timeout_s", c.annotator.read_timeout_s);
    read_value(*t, "annotator", "max_retries", c.annotator.max_retries);
    read_value(*t, "annotator", "backoff_initial_ms", c.annotator.backoff_initial_ms);
    read_value(*t, "annotator", "backoff_max_ms", c.annotator.backoff_max_ms);
    read_value(*t, "annotator", "requests_per_minute", c.annotator.requests_per_minute);
    read_value(*t, "annotator", "temperature", c.temperature);
    read_value(*t, "annotator", "summary_temperature", c.summary_temperature);
    read_value(*t, "annotator", "max_output_tokens", c.max_output_tokens);
    read_value(*t, "annotator", "parse_retries", c.parse_retries);
  }
  if (const auto* t = detail::section(root, "limits")) {
    detail::check_keys(*t, "limits", {"max_calls"});
    std::int64_t calls = static_cast<std::int64_t>(c.max_calls);
    read_value(*t, "limits", "max_calls", calls);
    if (calls <= 0) throw ConfigError("limits.max_calls must be positive");
    c.max_calls = static_cast<std::size_t>(calls);
  }
  if (const auto* t = detail::section(root, "uamc")) {
    detail::check_keys(*t, "uamc", {"max_samples", "au_aggregate", "seed"});
    read_value(*t, "uamc", "max_samples", c.max_samples);
    std::string agg = "mean";
    read_value(*t, "uamc", "au_aggregate", agg);
    auto a = parse_au_aggregate(agg);
    if (!a) throw ConfigError("uamc.au_aggregate must be 'mean' or 'max'");
    c.au_aggregate = *a;
    std::int64_t seed = static_cast<std::int64_t>(c.seed);
    read_value(*t, "uamc", "seed", seed);
    c.seed = static_cast<std::uint64_t>(seed);
  }
  if (const auto* t = detail::section(root, "sampling")) {
    detail::check_keys(*t, "sampling", {"paraphrase_rounds"});
    read_value(*t, "sampling", "paraphrase_rounds", c.paraphrase_rounds);
  }
  if (const auto* t = detail::section(root, "prompts")) {
    detail::check_keys(*t, "prompts", {"rewrite_templates"});
    read_optional(*t, "prompts", "rewrite_templates", c.rewrite_templates);
    if (c.rewrite_templates) c.rewrite_templates = detail::resolve_path(base_dir, *c.rewrite_templates);
  }
  if (const auto* t = detail::section(root, "vocab")) {
    detail::check_keys(*t, "vocab", {"au_ids", "au_mode"});
    if (t->get("au_ids")) {
      std::vector<int> ids;
      read_array(*t, "vocab", "au_ids", ids);
      try {
        c.vocab = AuVocabulary(ids);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("vocab.au_ids: ") + e.what());
      }
    }
    std::string mode = "occurrence";
    read_value(*t, "vocab", "au_mode", mode);
    auto m = parse_au_column_mode(mode);
    if (!m) throw ConfigError("vocab.au_mode must be 'occurrence' or 'intensity'");
    c.au_mode = *m;
  }
  if (const auto* t = detail::section(root, "eval")) {
    detail::check_keys(*t, "eval", {"llm_normalize", "va_tolerance", "au_subset"});
    read_value(*t, "eval", "llm_normalize", c.llm_normalize);
    read_value(*t, "eval", "va_tolerance", c.va_tolerance);
    if (t->get("au_subset")) {
      std::vector<int> ids;
      read_array(*t, "eval", "au_subset", ids);
      c.au_subset = ids;
    }
  }
  if (const auto* t = detail::section(root, "synthetic")) {
    detail::check_keys(*t, "synthetic", {"noise", "va_sigma"});
    read_value(*t, "synthetic", "noise", c.synthetic_noise);
    read_value(*t, "synthetic", "va_sigma", c.synthetic_va_sigma);
  }
  if (const auto* t = detail::section(root, "io")) {
    detail::check_keys(*t, "io", {"workers", "run_log"});
    read_value(*t, "io", "workers", c.workers);
    read_optional(*t, "io", "run_log", c.run_log);
    if (c.run_log) c.run_log = detail::resolve_path(base_dir, *c.run_log);
  }

  c.sim.vocab = c.vocab;
  c.sim.au_aggregate = c.au_aggregate;
  c.sim.workers = c.workers;
  if (const auto* t = detail::section(root, "sim")) {
    detail::check_keys(*t, "sim",
                       {"noise_grid", "va_sigma_grid", "records_per_cell", "max_samples", "baselines", "seed",
                        "summarizer", "au_base_rate"});
    read_array(*t, "sim", "noise_grid", c.sim.noise_grid);
    read_array(*t, "sim", "va_sigma_grid", c.sim.va_sigma_grid);
    read_value(*t, "sim", "records_per_cell", c.sim.records_per_cell);
    read_value(*t, "sim", "max_samples", c.sim.max_samples);
    read_array(*t, "sim", "baselines", c.sim.baselines);
    std::int64_t seed = static_cast<std::int64_t>(c.sim.seed);
    read_value(*t, "sim", "seed", seed);
    c.sim.seed = static_cast<std::uint64_t>(seed);
    std::string summarizer = "vote";
    read_value(*t, "sim", "summarizer", summarizer);
    auto s = parse_summarizer(summarizer);
    if (!s) throw ConfigError("sim.summarizer must be 'vote' or 'oracle'");
    c.sim.summarizer = *s;
    read_value(*t, "sim", "au_base_rate", c.sim.au_base_rate);
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path);
  toml::table root;
  try {
    root = toml::parse_file(path);
  } catch (const toml::parse_error& e) {
    throw ConfigError("config parse error at line " + std::to_string(e.source().begin.line) + ": " +
                      std::string(e.description()));
  }
  RunConfig c = parse_config(root, std::filesystem::path(path).parent_path());
  apply_environment(c);
  c.validate();
  return c;
}

inline RunConfig load_config_string(std::string_view text, const std::filesystem::path& base_dir = ".") {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError("config parse error at line " + std::to_string(e.source().begin.line) + ": " +
                      std::string(e.description()));
  }
  RunConfig c = parse_config(root, base_dir);
  apply_environment(c);
  c.validate();
  return c;
}

}  // namespace seke
