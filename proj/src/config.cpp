#include "mnv2/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>

#include "mnv2/error.hpp"

namespace mnv2 {
namespace {

using Setter = std::function<void(RunConfig&, const nlohmann::json&)>;

template <typename T>
T get_as(const nlohmann::json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError("expected a boolean");
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError("expected a non-negative integer");
    }
  } else if constexpr (std::is_arithmetic_v<T>) {
    if (!v.is_number()) throw ConfigError("expected a number");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError("expected a string");
  }
  return v.get<T>();
}

Range get_range(const nlohmann::json& v) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ConfigError("expected [lo, hi]");
  }
  return Range{v[0].get<double>(), v[1].get<double>()};
}

std::array<float, 3> get_triple(const nlohmann::json& v) {
  if (!v.is_array() || v.size() != 3) throw ConfigError("expected three numbers");
  std::array<float, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = get_as<float>(v[i]);
  return out;
}

template <typename T, typename F>
Setter scalar(F field) {
  return [field](RunConfig& c, const nlohmann::json& v) { field(c) = get_as<T>(v); };
}

template <typename F>
Setter range(F field) {
  return [field](RunConfig& c, const nlohmann::json& v) { field(c) = get_range(v); };
}

template <typename F>
Setter path(F field) {
  return [field](RunConfig& c, const nlohmann::json& v) { field(c) = get_as<std::string>(v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"size", scalar<std::size_t>([](RunConfig& c) -> auto& { return c.preproc.size; })},
      {"mean", [](RunConfig& c, const nlohmann::json& v) { c.preproc.mean = get_triple(v); }},
      {"std", [](RunConfig& c, const nlohmann::json& v) { c.preproc.std = get_triple(v); }},
      {"rotation_degrees",
       scalar<double>([](RunConfig& c) -> auto& { return c.augment.rotation_degrees; })},
      {"flip_probability",
       scalar<double>([](RunConfig& c) -> auto& { return c.augment.flip_probability; })},
      {"brightness", range([](RunConfig& c) -> auto& { return c.augment.brightness; })},
      {"contrast", range([](RunConfig& c) -> auto& { return c.augment.contrast; })},
      {"saturation", range([](RunConfig& c) -> auto& { return c.augment.saturation; })},
      {"erase_probability",
       scalar<double>([](RunConfig& c) -> auto& { return c.augment.erase_probability; })},
      {"erase_area", range([](RunConfig& c) -> auto& { return c.augment.erase_area; })},
      {"lr0", scalar<double>([](RunConfig& c) -> auto& { return c.train.lr0; })},
      {"momentum", scalar<double>([](RunConfig& c) -> auto& { return c.train.momentum; })},
      {"nesterov", scalar<bool>([](RunConfig& c) -> auto& { return c.train.nesterov; })},
      {"weight_decay", scalar<double>([](RunConfig& c) -> auto& { return c.train.weight_decay; })},
      {"epochs", scalar<std::size_t>([](RunConfig& c) -> auto& { return c.train.epochs; })},
      {"lr_step", scalar<std::size_t>([](RunConfig& c) -> auto& { return c.train.lr_step; })},
      {"lr_gamma", scalar<double>([](RunConfig& c) -> auto& { return c.train.lr_gamma; })},
      {"batch_train", scalar<std::size_t>([](RunConfig& c) -> auto& { return c.train.batch_train; })},
      {"batch_val", scalar<std::size_t>([](RunConfig& c) -> auto& { return c.train.batch_val; })},
      {"batch_eval", scalar<std::size_t>([](RunConfig& c) -> auto& { return c.train.batch_eval; })},
      {"seed", scalar<std::uint64_t>([](RunConfig& c) -> auto& { return c.train.seed; })},
      {"augment_variants",
       scalar<std::size_t>([](RunConfig& c) -> auto& { return c.train.augment_variants; })},
      {"sizes",
       [](RunConfig& c, const nlohmann::json& v) {
         if (!v.is_array()) throw ConfigError("expected an array of sizes");
         c.sizes.clear();
         for (const auto& s : v) c.sizes.push_back(get_as<std::size_t>(s));
       }},
      {"runs", scalar<std::size_t>([](RunConfig& c) -> auto& { return c.runs; })},
      {"fraction", scalar<double>([](RunConfig& c) -> auto& { return c.fraction; })},
      {"bench_batch", scalar<std::size_t>([](RunConfig& c) -> auto& { return c.bench_batch; })},
      {"bench_warmup", scalar<std::size_t>([](RunConfig& c) -> auto& { return c.bench_warmup; })},
      {"bench_timed", scalar<std::size_t>([](RunConfig& c) -> auto& { return c.bench_timed; })},
      {"dataset_root", path([](RunConfig& c) -> auto& { return c.dataset_root; })},
      {"weights", path([](RunConfig& c) -> auto& { return c.weights; })},
      {"out", path([](RunConfig& c) -> auto& { return c.out; })},
      {"cache_dir", path([](RunConfig& c) -> auto& { return c.cache_dir; })},
      {"threads",
       [](RunConfig& c, const nlohmann::json& v) {
         if (v.is_null()) {
           c.threads.reset();
           return;
         }
         c.threads = get_as<std::size_t>(v);
       }},
  };
  return table;
}

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

} // namespace

void RunConfig::validate() const {
  preproc.validate();
  augment.validate();
  train.validate();
  if (sizes.empty()) throw ConfigError("sizes must not be empty");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 32) throw ConfigError("every size must be >= 32");
    if (i > 0 && sizes[i] <= sizes[i - 1]) throw ConfigError("sizes must be strictly increasing");
  }
  if (runs == 0) throw ConfigError("runs must be >= 1");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must be in (0, 1]");
  if (bench_batch == 0) throw ConfigError("bench_batch must be >= 1");
  if (bench_warmup < 1) throw ConfigError("bench_warmup must be >= 1");
  if (bench_timed < 3) throw ConfigError("bench_timed must be >= 3");
  if (threads && *threads == 0) throw ConfigError("threads must be >= 1");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_json(RunConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    if (value.is_object()) throw ConfigError("config key '" + key + "' must not be an object");
    try {
      it->second(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = {
      {"size", c.preproc.size},
      {"mean", c.preproc.mean},
      {"std", c.preproc.std},
      {"rotation_degrees", c.augment.rotation_degrees},
      {"flip_probability", c.augment.flip_probability},
      {"brightness", range_json(c.augment.brightness)},
      {"contrast", range_json(c.augment.contrast)},
      {"saturation", range_json(c.augment.saturation)},
      {"erase_probability", c.augment.erase_probability},
      {"erase_area", range_json(c.augment.erase_area)},
      {"lr0", c.train.lr0},
      {"momentum", c.train.momentum},
      {"nesterov", c.train.nesterov},
      {"weight_decay", c.train.weight_decay},
      {"epochs", c.train.epochs},
      {"lr_step", c.train.lr_step},
      {"lr_gamma", c.train.lr_gamma},
      {"batch_train", c.train.batch_train},
      {"batch_val", c.train.batch_val},
      {"batch_eval", c.train.batch_eval},
      {"seed", c.train.seed},
      {"augment_variants", c.train.augment_variants},
      {"sizes", c.sizes},
      {"runs", c.runs},
      {"fraction", c.fraction},
      {"bench_batch", c.bench_batch},
      {"bench_warmup", c.bench_warmup},
      {"bench_timed", c.bench_timed},
      {"dataset_root", c.dataset_root.string()},
      {"weights", c.weights.string()},
      {"out", c.out.string()},
      {"cache_dir", c.cache_dir.string()},
  };
  j["threads"] = c.threads ? nlohmann::json(*c.threads) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

RunConfig layered_config(const std::optional<std::filesystem::path>& file,
                         const nlohmann::json& flags) {
  RunConfig cfg;
  if (file) apply_json(cfg, read_json_file(*file));
  if (!flags.is_null()) apply_json(cfg, flags);
  cfg.validate();
  return cfg;
}

std::string config_hash(const RunConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::size_t resolve_threads(const RunConfig& cfg) {
  if (cfg.threads) return *cfg.threads;
  if (const char* env = std::getenv("MNV2_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

} // namespace mnv2
