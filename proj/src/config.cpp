#include "adnet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace adnet::config {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ParameterError("config: bad value '" + value + "' for key '" + key + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v);
    return d;
  } catch (const ParameterError&) {
    throw;
  } catch (...) {
    bad_value(key, v);
  }
}

long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long i = std::stol(v, &used);
    if (used != v.size()) bad_value(key, v);
    return i;
  } catch (const ParameterError&) {
    throw;
  } catch (...) {
    bad_value(key, v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v);
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"input_size", [](RunConfig& c, const std::string& v) { c.model.input_size = static_cast<int>(to_int("input_size", v)); }},
      {"base_width", [](RunConfig& c, const std::string& v) { c.model.base_width = static_cast<int>(to_int("base_width", v)); }},
      {"width_multiplier", [](RunConfig& c, const std::string& v) { c.model.width_multiplier = to_double("width_multiplier", v); }},
      {"leaky_slope", [](RunConfig& c, const std::string& v) { c.model.leaky_slope = to_double("leaky_slope", v); }},
      {"bn_momentum", [](RunConfig& c, const std::string& v) { c.model.bn_momentum = to_double("bn_momentum", v); }},
      {"bn_epsilon", [](RunConfig& c, const std::string& v) { c.model.bn_epsilon = to_double("bn_epsilon", v); }},
      {"guided", [](RunConfig& c, const std::string& v) { c.model.guided = to_bool("guided", v); }},
      {"asfeb", [](RunConfig& c, const std::string& v) { c.model.asfeb = to_bool("asfeb", v); }},
      {"seed",
       [](RunConfig& c, const std::string& v) {
         const long s = to_int("seed", v);
         if (s < 0) bad_value("seed", v);
         c.model.seed = static_cast<std::uint64_t>(s);
         c.train.seed = static_cast<std::uint64_t>(s);
         c.synthetic.seed = static_cast<std::uint64_t>(s);
       }},
      {"loss_variant",
       [](RunConfig& c, const std::string& v) {
         if (v == "A") c.loss.variant = losses::Variant::A;
         else if (v == "B") c.loss.variant = losses::Variant::B;
         else bad_value("loss_variant", v);
         c.model.loss_variant = c.loss.variant;
       }},
      {"alpha", [](RunConfig& c, const std::string& v) { c.loss.alpha = to_double("alpha", v); }},
      {"beta", [](RunConfig& c, const std::string& v) { c.loss.beta = to_double("beta", v); }},
      {"gamma",
       [](RunConfig& c, const std::string& v) {
         const double g = to_double("gamma", v);
         if (g < 1.0 || g > 3.0)
           throw ParameterError("config: gamma must lie in [1,3], got " + v);
         c.loss.gamma = g;
       }},
      {"loss_epsilon", [](RunConfig& c, const std::string& v) { c.loss.epsilon = to_double("loss_epsilon", v); }},
      {"guided_weight", [](RunConfig& c, const std::string& v) { c.loss.guided_weight = to_double("guided_weight", v); }},
      {"batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = static_cast<int>(to_int("batch_size", v)); }},
      {"max_epochs", [](RunConfig& c, const std::string& v) { c.train.max_epochs = static_cast<int>(to_int("max_epochs", v)); }},
      {"val_fraction", [](RunConfig& c, const std::string& v) { c.train.val_fraction = to_double("val_fraction", v); }},
      {"initial_lr", [](RunConfig& c, const std::string& v) { c.train.initial_lr = to_double("initial_lr", v); }},
      {"plateau_factor", [](RunConfig& c, const std::string& v) { c.train.plateau_factor = to_double("plateau_factor", v); }},
      {"plateau_patience", [](RunConfig& c, const std::string& v) { c.train.plateau_patience = static_cast<int>(to_int("plateau_patience", v)); }},
      {"es_patience", [](RunConfig& c, const std::string& v) { c.train.es_patience = static_cast<int>(to_int("es_patience", v)); }},
      {"min_lr", [](RunConfig& c, const std::string& v) { c.train.min_lr = to_double("min_lr", v); }},
      {"improve_delta", [](RunConfig& c, const std::string& v) { c.train.improve_delta = to_double("improve_delta", v); }},
      {"synthetic_count", [](RunConfig& c, const std::string& v) { c.synthetic.count = static_cast<int>(to_int("synthetic_count", v)); }},
      {"synthetic_noise", [](RunConfig& c, const std::string& v) { c.synthetic.noise = to_double("synthetic_noise", v); }},
      {"synthetic_hair", [](RunConfig& c, const std::string& v) { c.synthetic.hair = to_bool("synthetic_hair", v); }},
      {"synthetic_contrast_min", [](RunConfig& c, const std::string& v) { c.synthetic.contrast_min = to_double("synthetic_contrast_min", v); }},
      {"synthetic_contrast_max", [](RunConfig& c, const std::string& v) { c.synthetic.contrast_max = to_double("synthetic_contrast_max", v); }},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterError("config: " + origin + ":" + std::to_string(lineno) +
                           ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end())
      throw ParameterError("config: " + origin + ":" + std::to_string(lineno) +
                           ": unknown key '" + key + "'");
    it->second(cfg, value);
  }
  // synthetic canvas follows the model input size
  cfg.synthetic.canvas = cfg.model.input_size;
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("config: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str(), path);
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "input_size=" << cfg.model.input_size << "\n";
  os << "base_width=" << cfg.model.base_width << "\n";
  os << "width_multiplier=" << cfg.model.width_multiplier << "\n";
  os << "leaky_slope=" << cfg.model.leaky_slope << "\n";
  os << "bn_momentum=" << cfg.model.bn_momentum << "\n";
  os << "bn_epsilon=" << cfg.model.bn_epsilon << "\n";
  os << "guided=" << (cfg.model.guided ? "true" : "false") << "\n";
  os << "asfeb=" << (cfg.model.asfeb ? "true" : "false") << "\n";
  os << "seed=" << cfg.model.seed << "\n";
  os << "loss_variant=" << (cfg.loss.variant == losses::Variant::A ? "A" : "B") << "\n";
  os << "alpha=" << cfg.loss.alpha << "\n";
  os << "beta=" << cfg.loss.beta << "\n";
  os << "gamma=" << cfg.loss.gamma << "\n";
  os << "loss_epsilon=" << cfg.loss.epsilon << "\n";
  os << "guided_weight=" << cfg.loss.guided_weight << "\n";
  os << "batch_size=" << cfg.train.batch_size << "\n";
  os << "max_epochs=" << cfg.train.max_epochs << "\n";
  os << "val_fraction=" << cfg.train.val_fraction << "\n";
  os << "initial_lr=" << cfg.train.initial_lr << "\n";
  os << "plateau_factor=" << cfg.train.plateau_factor << "\n";
  os << "plateau_patience=" << cfg.train.plateau_patience << "\n";
  os << "es_patience=" << cfg.train.es_patience << "\n";
  os << "min_lr=" << cfg.train.min_lr << "\n";
  os << "improve_delta=" << cfg.train.improve_delta << "\n";
  os << "synthetic_count=" << cfg.synthetic.count << "\n";
  os << "synthetic_noise=" << cfg.synthetic.noise << "\n";
  os << "synthetic_hair=" << (cfg.synthetic.hair ? "true" : "false") << "\n";
  os << "synthetic_contrast_min=" << cfg.synthetic.contrast_min << "\n";
  os << "synthetic_contrast_max=" << cfg.synthetic.contrast_max << "\n";
  return os.str();
}

}  // namespace adnet::config
