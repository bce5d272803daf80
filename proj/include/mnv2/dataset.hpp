#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mnv2 {

inline constexpr std::size_t kFoodClasses = 11;

/// Food11 labels; the index is the label used everywhere else.
inline constexpr std::array<std::string_view, kFoodClasses> kClassNames{
    "Bread", "Dairy Product", "Dessert", "Egg",  "Fried Food",     "Meat",
    "Noodles-Pasta", "Rice", "Seafood", "Soup", "Vegetable-Fruit"};

enum class Split { training = 0, validation = 1, evaluation = 2 };
inline constexpr std::array<Split, 3> kSplits{Split::training, Split::validation,
                                              Split::evaluation};

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

/// Directory-name variants -> class index. Keys are compared after
/// lower-casing and dropping everything but letters and digits, so
/// "Dairy product", "dairy_product" and "DairyProduct" all match.
class ClassAliases {
public:
  // Canonical names and bare indices "0".."10".
  ClassAliases();
  static ClassAliases from_json_file(const std::filesystem::path& path);
  // data/class_aliases.json from the source tree when present, else built-ins.
  static ClassAliases shipped();

  void add(std::string_view alias, int label);
  std::optional<int> lookup(std::string_view name) const;

private:
  std::map<std::string, int> by_key_;
};

std::string alias_key(std::string_view name);

struct Sample {
  std::filesystem::path path;
  int label = 0;
};

/// split -> class -> lexicographically sorted image paths.
struct DatasetIndex {
  std::array<std::array<std::vector<std::filesystem::path>, kFoodClasses>, 3> files;
  std::vector<std::filesystem::path> skipped; // undecodable files seen by scan

  const std::vector<std::filesystem::path>& at(Split s, std::size_t label) const {
    return files[static_cast<std::size_t>(s)][label];
  }
  std::vector<std::filesystem::path>& at(Split s, std::size_t label) {
    return files[static_cast<std::size_t>(s)][label];
  }
  std::size_t count(Split s, std::size_t label) const { return at(s, label).size(); }
  std::size_t split_total(Split s) const;
  std::size_t total() const;
  // Class-major, then path order.
  std::vector<Sample> samples(Split s) const;
};

struct ScanOptions {
  bool verify_images = true; // header-level decode check per file
  ClassAliases aliases = ClassAliases::shipped();
};

/// Walks root/{training,validation,evaluation}. Each split holds either one
/// directory per class, or flat files named "<label>_<n>.<ext>" as in the
/// original Food-11 archive. Throws DatasetError on a missing split or an
/// unknown class directory; undecodable files are skipped and recorded.
DatasetIndex scan(const std::filesystem::path& root, const ScanOptions& options = {});

/// Paths appearing in more than one split (after canonicalization).
std::vector<std::filesystem::path> find_leakage(const DatasetIndex& index);

struct DatasetStats {
  std::array<std::array<std::size_t, 3>, kFoodClasses> counts{};
  std::array<std::size_t, kFoodClasses> class_totals{};
  std::array<std::size_t, 3> split_totals{};
  std::size_t total = 0;

  // Share of a class's images that fall in a split.
  double pct_of_class(std::size_t label, Split s) const;
  // Share of a split's images that belong to a class.
  double pct_of_split(std::size_t label, Split s) const;
  // Share of the whole dataset that belongs to a class.
  double pct_of_dataset(std::size_t label) const;
};

DatasetStats stats(const DatasetIndex& index);

/// CSV with columns split,class,count,pct_of_class,pct_of_split. Rows for
/// each split x class, then a "total" split row per class and a "Total"
/// class row per split.
std::string stats_csv(const DatasetStats& s);

// Published Food11 figures for comparison with a scan.
struct PublishedFood11 {
  static constexpr std::array<std::array<std::size_t, 3>, kFoodClasses> counts{{
      {994, 362, 368},
      {429, 144, 148},
      {1500, 500, 500},
      {986, 327, 335},
      {848, 326, 287},
      {1325, 449, 432},
      {440, 147, 147},
      {280, 96, 96},
      {855, 347, 303},
      {1500, 500, 500},
      {709, 232, 231},
  }};
  static constexpr std::size_t training_total = 9866;
  static constexpr std::size_t validation_total_text = 3439;
  static constexpr std::size_t validation_total_table = 3430;
  static constexpr std::size_t evaluation_total = 3347;
  static constexpr std::size_t grand_total = 16643;
};

/// Human-readable lines comparing a scan with the published figures. The
/// validation total is always reported against both published values.
std::vector<std::string> compare_with_published(const DatasetStats& s);

/// Per split and class, ceil(fraction * count) paths drawn without
/// replacement; deterministic per seed, kept in path order.
DatasetIndex stratified_subset(const DatasetIndex& index, double fraction, std::uint64_t seed);

/// Up to per_class paths from every class of one split, each other split empty.
DatasetIndex balanced_subset(const DatasetIndex& index, Split split, std::size_t per_class,
                             std::uint64_t seed);

} // namespace mnv2
