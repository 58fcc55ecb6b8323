#include "idea/config.hpp"

#include "idea/data_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace idea {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  }
  return value;
}

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number_field(T TrainConfig::*member) {
  return {[member](RunConfig& c, std::string_view k, std::string_view v) { c.train.*member = parse_number<T>(k, v); },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_real(c.train.*member);
            else return std::to_string(c.train.*member);
          }};
}

template <typename T>
Field eval_number_field(T EvalConfig::*member) {
  return {[member](RunConfig& c, std::string_view k, std::string_view v) { c.eval.*member = parse_number<T>(k, v); },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_real(c.eval.*member);
            else return std::to_string(c.eval.*member);
          }};
}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = {
      {"alpha", number_field(&TrainConfig::alpha)},
      {"num_domains", number_field(&TrainConfig::num_domains)},
      {"epochs", number_field(&TrainConfig::epochs)},
      {"batch_size", number_field(&TrainConfig::batch_size)},
      {"learning_rate", number_field(&TrainConfig::learning_rate)},
      {"domain_learning_rate", number_field(&TrainConfig::domain_learning_rate)},
      {"weight_decay", number_field(&TrainConfig::weight_decay)},
      {"dropout", number_field(&TrainConfig::dropout)},
      {"hidden_dim", number_field(&TrainConfig::hidden_dim)},
      {"latent_dim", number_field(&TrainConfig::latent_dim)},
      {"domain_hidden_dim", number_field(&TrainConfig::domain_hidden_dim)},
      {"scale_bias_init", number_field(&TrainConfig::scale_bias_init)},
      {"seed", number_field(&TrainConfig::seed)},
      {"patience", number_field(&TrainConfig::patience)},
      {"domain_classifier_steps", number_field(&TrainConfig::domain_classifier_steps)},
      {"variant",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.train.variant = parse_variant(v); },
        [](const RunConfig& c) { return std::string(variant_name(c.train.variant)); }}},
      {"train_feature_eps", number_field(&TrainConfig::train_feature_eps)},
      {"train_feature_steps", number_field(&TrainConfig::train_feature_steps)},
      {"train_edge_rate", number_field(&TrainConfig::train_edge_rate)},
      {"train_structure_candidates", number_field(&TrainConfig::train_structure_candidates)},
      {"target_fraction", eval_number_field(&EvalConfig::target_fraction)},
      {"eval_feature_eps", eval_number_field(&EvalConfig::eval_feature_eps)},
      {"eval_feature_steps", eval_number_field(&EvalConfig::eval_feature_steps)},
      {"eval_edge_rate", eval_number_field(&EvalConfig::eval_edge_rate)},
      {"eval_inject_rate", eval_number_field(&EvalConfig::eval_inject_rate)},
      {"eval_inject_steps", eval_number_field(&EvalConfig::eval_inject_steps)},
      {"edge_flip_shortlist", eval_number_field(&EvalConfig::edge_flip_shortlist)},
      {"scenarios",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.eval.scenarios = std::string(v); },
        [](const RunConfig& c) { return c.eval.scenarios; }}},
      {"seeds",
       {[](RunConfig& c, std::string_view, std::string_view v) {
          parse_seed_list(v);
          c.eval.seeds = std::string(v);
        },
        [](const RunConfig& c) { return c.eval.seeds; }}},
  };
  return table;
}

}  // namespace

Variant parse_variant(std::string_view name) {
  if (name == "full") return Variant::full;
  if (name == "no_LI") return Variant::no_LI;
  if (name == "no_LE") return Variant::no_LE;
  if (name == "no_LI_LE") return Variant::no_LI_LE;
  if (name == "no_LD") return Variant::no_LD;
  throw Error("unknown variant '" + std::string(name) + "' (valid: full, no_LI, no_LE, no_LI_LE, no_LD)");
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_LI: return "no_LI";
    case Variant::no_LE: return "no_LE";
    case Variant::no_LI_LE: return "no_LI_LE";
    case Variant::no_LD: return "no_LD";
  }
  return "full";
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_text()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw Error("unknown config key '" + std::string(key) + "'");
  it->second.set(config, key, trim(value));
}

RunConfig parse_config(std::string_view text, const std::string& source) {
  RunConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  std::set<std::string, std::less<>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw Error(where + "expected key = value");
    const std::string_view key = trim(view.substr(0, eq));
    if (!seen.insert(std::string(key)).second) throw Error(where + "duplicate config key '" + std::string(key) + "'");
    try {
      set_config_value(config, key, view.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  std::set<std::uint64_t> seen;
  std::string token;
  auto flush = [&] {
    const std::string_view t = trim(token);
    if (!t.empty()) {
      const auto seed = parse_number<std::uint64_t>("seeds", t);
      if (!seen.insert(seed).second) throw Error("duplicate seed " + std::string(t));
      seeds.push_back(seed);
    }
    token.clear();
  };
  for (char ch : text) {
    if (ch == ',' || ch == '\n' || ch == ' ' || ch == '\t') {
      flush();
    } else if (ch != '\r') {
      token += ch;
    }
  }
  flush();
  if (seeds.empty()) throw Error("empty seed list");
  return seeds;
}

}  // namespace idea
