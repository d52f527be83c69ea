#include "filterattack/run_config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "filterattack/errors.hpp"

namespace filterattack {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_value(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("config key '" + std::string(key) + "': bad value '" + std::string(value) + "'");
  }
  return out;
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t nl = std::min(text.find('\n', start), text.size());
    const std::string_view line = trim(text.substr(start, nl - start));
    start = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    auto& o = cfg.outer;
    auto& is = o.inner_settings;
    auto& sq = cfg.squeezers;
    if (key == "seed") o.seed = parse_value<std::uint64_t>(key, value);
    else if (key == "population") o.population_size = parse_value<std::size_t>(key, value);
    else if (key == "epochs") o.epochs = parse_value<std::size_t>(key, value);
    else if (key == "chain_length") o.chain_length = parse_value<std::size_t>(key, value);
    else if (key == "mutation_prob") o.mutation_prob = parse_value<double>(key, value);
    else if (key == "batch_size") o.batch_size = parse_value<std::size_t>(key, value);
    else if (key == "inner") o.inner = parse_inner_kind(value);
    else if (key == "threads") o.threads = parse_value<int>(key, value);
    else if (key == "inner_population") is.population = parse_value<std::size_t>(key, value);
    else if (key == "inner_generations") is.generations = parse_value<std::size_t>(key, value);
    else if (key == "inner_mutation_prob") is.mutation_prob = parse_value<double>(key, value);
    else if (key == "es_lambda") is.es_lambda = parse_value<std::size_t>(key, value);
    else if (key == "es_sigma") is.es_sigma_scale = parse_value<double>(key, value);
    else if (key == "es_eta") is.es_eta_scale = parse_value<double>(key, value);
    else if (key == "threshold") cfg.threshold = parse_value<double>(key, value);
    else if (key == "train_size") cfg.train_size = parse_value<std::size_t>(key, value);
    else if (key == "weights") cfg.weights = std::string(value);
    else if (key == "fixture_weights") cfg.fixture_weights = parse_value<std::uint64_t>(key, value);
    else if (key == "bit_depth") sq.bit_depth = parse_value<int>(key, value);
    else if (key == "median_window") sq.median_window = parse_value<int>(key, value);
    else if (key == "nlm_search") sq.nlm_search = parse_value<int>(key, value);
    else if (key == "nlm_patch") sq.nlm_patch = parse_value<int>(key, value);
    else if (key == "nlm_strength") sq.nlm_strength = parse_value<double>(key, value);
    else if (key == "nlm_sigma") sq.nlm_sigma = parse_value<double>(key, value);
    else throw ParseError("config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
  }
  cfg.outer.validate();
  cfg.squeezers.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  const auto& o = outer;
  const auto& is = o.inner_settings;
  std::vector<std::pair<std::string, std::string>> e = {
      {"seed", std::to_string(o.seed)},
      {"population", std::to_string(o.population_size)},
      {"epochs", std::to_string(o.epochs)},
      {"chain_length", std::to_string(o.chain_length)},
      {"mutation_prob", format_double(o.mutation_prob)},
      {"batch_size", std::to_string(o.batch_size)},
      {"inner", std::string(inner_name(o.inner))},
      {"threads", std::to_string(o.threads)},
      {"inner_population", std::to_string(is.population)},
      {"inner_generations", std::to_string(is.generations)},
      {"inner_mutation_prob", format_double(is.mutation_prob)},
      {"es_lambda", std::to_string(is.es_lambda)},
      {"es_sigma", format_double(is.es_sigma_scale)},
      {"es_eta", format_double(is.es_eta_scale)},
      {"threshold", format_double(threshold)},
      {"train_size", std::to_string(train_size)},
      {"bit_depth", std::to_string(squeezers.bit_depth)},
      {"median_window", std::to_string(squeezers.median_window)},
      {"nlm_search", std::to_string(squeezers.nlm_search)},
      {"nlm_patch", std::to_string(squeezers.nlm_patch)},
      {"nlm_strength", format_double(squeezers.nlm_strength)},
      {"nlm_sigma", format_double(squeezers.nlm_sigma)},
  };
  if (weights) e.emplace_back("weights", *weights);
  if (fixture_weights) e.emplace_back("fixture_weights", std::to_string(*fixture_weights));
  return e;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + "=" + v + "\n";
  return out;
}

}  // namespace filterattack
