#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ime::data {

/// One labelled fact as read from a TSV file.
struct RawQuadruple {
  std::string head;
  std::string relation;
  std::string tail;
  std::string timestamp;

  friend bool operator==(const RawQuadruple&, const RawQuadruple&) = default;
};

/// Indexed fact. After reciprocal augmentation r lies in [0, 2|R|) and the
/// inverse of relation r is r + |R|.
struct Quadruple {
  std::size_t s = 0;
  std::size_t r = 0;
  std::size_t o = 0;
  std::size_t t = 0;

  friend auto operator<=>(const Quadruple&, const Quadruple&) = default;
};

/// Dense bijection between labels and [0, size()), in first-occurrence order.
class LabelIndex {
 public:
  std::size_t add(const std::string& label);
  std::optional<std::size_t> find(const std::string& label) const;
  std::size_t at(const std::string& label) const;
  const std::string& label(std::size_t id) const;
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> ids_;
};

struct Vocabulary {
  LabelIndex entities;
  LabelIndex relations;
  LabelIndex timestamps;
};

/// Throws ParseError naming `source` and the 1-based line on malformed input.
std::vector<RawQuadruple> parse_quadruples(std::istream& in, const std::string& source);
std::vector<RawQuadruple> parse_quadruple_file(const std::filesystem::path& path);
void write_quadruple_file(const std::filesystem::path& path, std::span<const RawQuadruple> quads);

Vocabulary build_vocabulary(std::span<const RawQuadruple> quads);
std::vector<Quadruple> index_quadruples(std::span<const RawQuadruple> quads, const Vocabulary& vocab);
/// Inverse of index_quadruples for un-augmented quadruples.
RawQuadruple label_quadruple(const Quadruple& q, const Vocabulary& vocab);

/// For every (s, r, o, t) also emits (o, r + n_relations, s, t), keeping
/// the original immediately followed by its reciprocal.
std::vector<Quadruple> augment_reciprocal(std::span<const Quadruple> quads, std::size_t n_relations);

/// (s, r, t) -> every true tail across all supplied quadruples.
class FilterIndex {
 public:
  void insert(const Quadruple& q);
  /// Sorted tails for the key, or an empty span.
  std::span<const std::size_t> tails(std::size_t s, std::size_t r, std::size_t t) const;
  bool contains(const Quadruple& q) const;
  std::size_t key_count() const { return map_.size(); }

 private:
  struct Key {
    std::size_t s, r, t;
    friend bool operator==(const Key&, const Key&) = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> map_;
};

FilterIndex build_filter_index(std::span<const Quadruple> all_quads);

struct RawSplits {
  std::vector<RawQuadruple> train;
  std::vector<RawQuadruple> valid;
  std::vector<RawQuadruple> test;
};

/// Indexed dataset with a vocabulary over train, valid and test (in that order).
/// Splits are stored un-augmented.
struct Dataset {
  Vocabulary vocab;
  std::vector<Quadruple> train;
  std::vector<Quadruple> valid;
  std::vector<Quadruple> test;

  std::size_t n_entities() const { return vocab.entities.size(); }
  std::size_t n_relations() const { return vocab.relations.size(); }
  std::size_t n_timestamps() const { return vocab.timestamps.size(); }

  /// Filter over train, valid and test after reciprocal augmentation.
  FilterIndex filter_index() const;
};

Dataset index_dataset(const RawSplits& raw);
RawSplits read_splits(const std::filesystem::path& dir);
void write_splits(const std::filesystem::path& dir, const RawSplits& splits);

/// Writes entities.tsv, relations.tsv and timestamps.tsv (label TAB index).
void write_vocabulary(const std::filesystem::path& dir, const Vocabulary& vocab);

enum class Pattern { ring, chain, mixed };
Pattern parse_pattern(std::string_view name);
std::string_view pattern_name(Pattern p);

struct SyntheticSpec {
  std::size_t n_entities = 20;
  std::size_t n_relations = 2;
  std::size_t n_timestamps = 4;
  Pattern pattern = Pattern::ring;
  std::uint64_t seed = 7;
};

/// Ring links e_i -> e_(i+1 mod n), chain links e_i -> e_(i+1); mixed uses a
/// ring for even relation indices and a chain for odd ones. Every link is
/// emitted once per (relation, timestamp); facts are shuffled with `seed` and
/// split 80/10/10.
RawSplits generate_synthetic(const SyntheticSpec& spec);

struct DatasetStats {
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t timestamps = 0;
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;

  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

DatasetStats dataset_stats(const RawSplits& raw, const Vocabulary& vocab);

/// Published statistics for ICEWS14, ICEWS05-15 and GDELT.
std::optional<DatasetStats> reference_stats(std::string_view dataset);
/// One message per field that differs from the published statistics.
std::vector<std::string> check_reference_stats(std::string_view dataset, const DatasetStats& stats);

}  // namespace ime::data
