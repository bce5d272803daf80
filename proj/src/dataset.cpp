#include "mnv2/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mnv2/error.hpp"
#include "mnv2/image.hpp"

namespace fs = std::filesystem;

namespace mnv2 {
namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

bool hidden(const fs::path& p) {
  const std::string name = p.filename().string();
  return !name.empty() && name[0] == '.';
}

std::optional<fs::path> find_split_dir(const fs::path& root, Split s) {
  static const std::map<Split, std::vector<std::string>> names{
      {Split::training, {"training", "train"}},
      {Split::validation, {"validation", "val", "valid"}},
      {Split::evaluation, {"evaluation", "eval", "test"}},
  };
  for (const std::string& n : names.at(s)) {
    if (fs::is_directory(root / n)) return root / n;
  }
  return std::nullopt;
}

// "<label>_<n>.jpg" -> label
std::optional<int> flat_file_label(const fs::path& p) {
  const std::string stem = p.stem().string();
  const auto sep = stem.find('_');
  if (sep == std::string::npos || sep == 0) return std::nullopt;
  int label = 0;
  for (std::size_t i = 0; i < sep; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(stem[i]))) return std::nullopt;
    label = label * 10 + (stem[i] - '0');
  }
  if (label >= static_cast<int>(kFoodClasses)) return std::nullopt;
  return label;
}

void add_file(DatasetIndex& index, Split s, int label, const fs::path& p, bool verify) {
  if (verify && !probe_image(p)) {
    index.skipped.push_back(p);
    return;
  }
  index.at(s, static_cast<std::size_t>(label)).push_back(p);
}

std::vector<fs::path> sample_paths(const std::vector<fs::path>& paths, std::size_t k,
                                   std::uint64_t seed) {
  std::vector<std::size_t> order(paths.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k && i + 1 < order.size(); ++i) {
    const std::size_t span = order.size() - i;
    const auto j = i + std::min(span - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(span)));
    std::swap(order[i], order[j]);
  }
  order.resize(k);
  std::sort(order.begin(), order.end());
  std::vector<fs::path> out;
  out.reserve(k);
  for (std::size_t i : order) out.push_back(paths[i]);
  return out;
}

} // namespace

std::string_view split_name(Split s) {
  switch (s) {
  case Split::training:
    return "training";
  case Split::validation:
    return "validation";
  case Split::evaluation:
    return "evaluation";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  for (Split s : kSplits) {
    if (split_name(s) == name) return s;
  }
  throw ConfigError("unknown split: " + std::string(name));
}

std::string alias_key(std::string_view name) {
  std::string key;
  for (unsigned char c : name) {
    if (std::isalnum(c)) key.push_back(static_cast<char>(std::tolower(c)));
  }
  return key;
}

ClassAliases::ClassAliases() {
  for (std::size_t i = 0; i < kFoodClasses; ++i) {
    add(kClassNames[i], static_cast<int>(i));
    add(std::to_string(i), static_cast<int>(i));
  }
}

void ClassAliases::add(std::string_view alias, int label) {
  if (label < 0 || label >= static_cast<int>(kFoodClasses)) {
    throw ConfigError("class alias '" + std::string(alias) + "' maps to invalid label");
  }
  by_key_[alias_key(alias)] = label;
}

std::optional<int> ClassAliases::lookup(std::string_view name) const {
  if (auto it = by_key_.find(alias_key(name)); it != by_key_.end()) return it->second;
  // numeric prefix such as "03_Egg" or "3-egg"
  std::size_t digits = 0;
  while (digits < name.size() && std::isdigit(static_cast<unsigned char>(name[digits]))) ++digits;
  if (digits > 0 && digits < name.size()) {
    const auto rest = lookup(name.substr(digits));
    if (rest) return rest;
  }
  return std::nullopt;
}

ClassAliases ClassAliases::from_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open class alias file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid class alias file " + path.string() + ": " + e.what());
  }
  ClassAliases aliases;
  const nlohmann::json table = j.value("aliases", nlohmann::json::object());
  for (const auto& [alias, target] : table.items()) {
    const auto label = aliases.lookup(target.get<std::string>());
    if (!label) throw ConfigError("class alias '" + alias + "' targets unknown class");
    aliases.add(alias, *label);
  }
  return aliases;
}

ClassAliases ClassAliases::shipped() {
#ifdef MNV2_DATA_DIR
  const fs::path file = fs::path(MNV2_DATA_DIR) / "class_aliases.json";
  if (fs::exists(file)) return from_json_file(file);
#endif
  return ClassAliases();
}

std::size_t DatasetIndex::split_total(Split s) const {
  std::size_t n = 0;
  for (const auto& v : files[static_cast<std::size_t>(s)]) n += v.size();
  return n;
}

std::size_t DatasetIndex::total() const {
  std::size_t n = 0;
  for (Split s : kSplits) n += split_total(s);
  return n;
}

std::vector<Sample> DatasetIndex::samples(Split s) const {
  std::vector<Sample> out;
  out.reserve(split_total(s));
  for (std::size_t c = 0; c < kFoodClasses; ++c) {
    for (const fs::path& p : at(s, c)) out.push_back(Sample{p, static_cast<int>(c)});
  }
  return out;
}

DatasetIndex scan(const fs::path& root, const ScanOptions& options) {
  if (!fs::is_directory(root)) throw DatasetError("dataset root is not a directory: " + root.string());
  DatasetIndex index;
  for (Split s : kSplits) {
    const auto dir = find_split_dir(root, s);
    if (!dir) {
      throw DatasetError("missing split directory '" + std::string(split_name(s)) + "' under " +
                         root.string());
    }
    std::vector<fs::directory_entry> entries(fs::directory_iterator(*dir), fs::directory_iterator{});
    std::sort(entries.begin(), entries.end());
    for (const auto& entry : entries) {
      if (hidden(entry.path())) continue;
      if (entry.is_directory()) {
        const auto label = options.aliases.lookup(entry.path().filename().string());
        if (!label) throw DatasetError("unknown class directory: " + entry.path().string());
        std::vector<fs::path> files;
        for (const auto& f : fs::recursive_directory_iterator(entry.path())) {
          if (f.is_regular_file() && !hidden(f.path()) && has_image_extension(f.path())) {
            files.push_back(f.path());
          }
        }
        for (const fs::path& f : files) add_file(index, s, *label, f, options.verify_images);
      } else if (entry.is_regular_file() && has_image_extension(entry.path())) {
        const auto label = flat_file_label(entry.path());
        if (!label) throw DatasetError("cannot infer class of " + entry.path().string());
        add_file(index, s, *label, entry.path(), options.verify_images);
      }
    }
    for (auto& paths : index.files[static_cast<std::size_t>(s)]) std::sort(paths.begin(), paths.end());
  }
  std::sort(index.skipped.begin(), index.skipped.end());
  return index;
}

std::vector<fs::path> find_leakage(const DatasetIndex& index) {
  std::map<fs::path, std::set<std::size_t>> owner;
  for (Split s : kSplits) {
    for (std::size_t c = 0; c < kFoodClasses; ++c) {
      for (const fs::path& p : index.at(s, c)) {
        std::error_code ec;
        fs::path key = fs::weakly_canonical(p, ec);
        if (ec) key = p;
        owner[key].insert(static_cast<std::size_t>(s));
      }
    }
  }
  std::vector<fs::path> out;
  for (const auto& [path, splits] : owner) {
    if (splits.size() > 1) out.push_back(path);
  }
  return out;
}

double DatasetStats::pct_of_class(std::size_t label, Split s) const {
  const std::size_t denom = class_totals[label];
  return denom == 0 ? 0.0 : 100.0 * counts[label][static_cast<std::size_t>(s)] / denom;
}

double DatasetStats::pct_of_split(std::size_t label, Split s) const {
  const std::size_t denom = split_totals[static_cast<std::size_t>(s)];
  return denom == 0 ? 0.0 : 100.0 * counts[label][static_cast<std::size_t>(s)] / denom;
}

double DatasetStats::pct_of_dataset(std::size_t label) const {
  return total == 0 ? 0.0 : 100.0 * class_totals[label] / total;
}

DatasetStats stats(const DatasetIndex& index) {
  DatasetStats st;
  for (std::size_t c = 0; c < kFoodClasses; ++c) {
    for (Split s : kSplits) {
      const std::size_t n = index.count(s, c);
      st.counts[c][static_cast<std::size_t>(s)] = n;
      st.class_totals[c] += n;
      st.split_totals[static_cast<std::size_t>(s)] += n;
      st.total += n;
    }
  }
  return st;
}

std::string stats_csv(const DatasetStats& s) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << "split,class,count,pct_of_class,pct_of_split\n";
  for (Split sp : kSplits) {
    for (std::size_t c = 0; c < kFoodClasses; ++c) {
      out << split_name(sp) << ',' << kClassNames[c] << ',' << s.counts[c][static_cast<std::size_t>(sp)]
          << ',' << s.pct_of_class(c, sp) << ',' << s.pct_of_split(c, sp) << '\n';
    }
    const std::size_t n = s.split_totals[static_cast<std::size_t>(sp)];
    out << split_name(sp) << ",Total," << n << ',' << (s.total ? 100.0 * n / s.total : 0.0) << ','
        << (n ? 100.0 : 0.0) << '\n';
  }
  for (std::size_t c = 0; c < kFoodClasses; ++c) {
    out << "total," << kClassNames[c] << ',' << s.class_totals[c] << ','
        << (s.class_totals[c] ? 100.0 : 0.0) << ',' << s.pct_of_dataset(c) << '\n';
  }
  out << "total,Total," << s.total << ',' << (s.total ? 100.0 : 0.0) << ','
      << (s.total ? 100.0 : 0.0) << '\n';
  return out.str();
}

std::vector<std::string> compare_with_published(const DatasetStats& s) {
  using P = PublishedFood11;
  std::vector<std::string> lines;
  auto check = [&lines](const std::string& what, std::size_t got, std::size_t want) {
    lines.push_back(what + ": " + std::to_string(got) + (got == want ? " == " : " != ") +
                    std::to_string(want) + " published");
  };
  check("training total", s.split_totals[0], P::training_total);
  check("validation total (text)", s.split_totals[1], P::validation_total_text);
  check("validation total (table)", s.split_totals[1], P::validation_total_table);
  check("evaluation total", s.split_totals[2], P::evaluation_total);
  check("grand total", s.total, P::grand_total);
  for (std::size_t c = 0; c < kFoodClasses; ++c) {
    for (Split sp : kSplits) {
      const auto i = static_cast<std::size_t>(sp);
      if (s.counts[c][i] != P::counts[c][i]) {
        check(std::string(split_name(sp)) + " " + std::string(kClassNames[c]), s.counts[c][i],
              P::counts[c][i]);
      }
    }
  }
  return lines;
}

DatasetIndex stratified_subset(const DatasetIndex& index, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("subset fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  DatasetIndex out;
  for (Split s : kSplits) {
    for (std::size_t c = 0; c < kFoodClasses; ++c) {
      const auto& paths = index.at(s, c);
      const auto k = std::min(paths.size(), static_cast<std::size_t>(std::ceil(
                                                 fraction * static_cast<double>(paths.size()) - 1e-9)));
      out.at(s, c) = fraction == 1.0
                         ? paths
                         : sample_paths(paths, k, stream_seed(seed, static_cast<std::size_t>(s) * kFoodClasses + c, 0x5u));
    }
  }
  return out;
}

DatasetIndex balanced_subset(const DatasetIndex& index, Split split, std::size_t per_class,
                             std::uint64_t seed) {
  DatasetIndex out;
  for (std::size_t c = 0; c < kFoodClasses; ++c) {
    const auto& paths = index.at(split, c);
    out.at(split, c) = sample_paths(paths, std::min(per_class, paths.size()),
                                    stream_seed(seed, c, 0xbau));
  }
  return out;
}

} // namespace mnv2
