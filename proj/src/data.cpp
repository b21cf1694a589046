#include "ime/data.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "ime/error.hpp"
#include "shuffle.hpp"

namespace ime::data {

std::size_t LabelIndex::add(const std::string& label) {
  auto [it, inserted] = ids_.emplace(label, labels_.size());
  if (inserted) labels_.push_back(label);
  return it->second;
}

std::optional<std::size_t> LabelIndex::find(const std::string& label) const {
  auto it = ids_.find(label);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::size_t LabelIndex::at(const std::string& label) const {
  auto id = find(label);
  if (!id) throw IndexError("unknown label '" + label + "'");
  return *id;
}

const std::string& LabelIndex::label(std::size_t id) const {
  if (id >= labels_.size()) throw IndexError("label index " + std::to_string(id) + " out of range");
  return labels_[id];
}

std::vector<RawQuadruple> parse_quadruples(std::istream& in, const std::string& source) {
  std::vector<RawQuadruple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    for (const auto& f : fields) {
      if (f.empty()) throw ParseError(source + ":" + std::to_string(line_no) + ": empty field");
    }
    out.push_back({fields[0], fields[1], fields[2], fields[3]});
  }
  return out;
}

std::vector<RawQuadruple> parse_quadruple_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return parse_quadruples(in, path.string());
}

void write_quadruple_file(const std::filesystem::path& path, std::span<const RawQuadruple> quads) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  for (const auto& q : quads) {
    os << q.head << '\t' << q.relation << '\t' << q.tail << '\t' << q.timestamp << '\n';
  }
}

Vocabulary build_vocabulary(std::span<const RawQuadruple> quads) {
  Vocabulary v;
  for (const auto& q : quads) {
    v.entities.add(q.head);
    v.relations.add(q.relation);
    v.entities.add(q.tail);
    v.timestamps.add(q.timestamp);
  }
  return v;
}

std::vector<Quadruple> index_quadruples(std::span<const RawQuadruple> quads, const Vocabulary& vocab) {
  std::vector<Quadruple> out;
  out.reserve(quads.size());
  for (const auto& q : quads) {
    out.push_back({vocab.entities.at(q.head), vocab.relations.at(q.relation),
                   vocab.entities.at(q.tail), vocab.timestamps.at(q.timestamp)});
  }
  return out;
}

RawQuadruple label_quadruple(const Quadruple& q, const Vocabulary& vocab) {
  return {vocab.entities.label(q.s), vocab.relations.label(q.r), vocab.entities.label(q.o),
          vocab.timestamps.label(q.t)};
}

std::vector<Quadruple> augment_reciprocal(std::span<const Quadruple> quads, std::size_t n_relations) {
  std::vector<Quadruple> out;
  out.reserve(2 * quads.size());
  for (const auto& q : quads) {
    if (q.r >= n_relations) {
      throw IndexError("augment_reciprocal: relation " + std::to_string(q.r) +
                       " is not below |R|=" + std::to_string(n_relations));
    }
    out.push_back(q);
    out.push_back({q.o, q.r + n_relations, q.s, q.t});
  }
  return out;
}

std::size_t FilterIndex::KeyHash::operator()(const Key& k) const noexcept {
  std::size_t h = k.s;
  h = h * 1000003u ^ k.r;
  h = h * 1000003u ^ k.t;
  return h;
}

void FilterIndex::insert(const Quadruple& q) {
  auto& tails = map_[Key{q.s, q.r, q.t}];
  auto it = std::lower_bound(tails.begin(), tails.end(), q.o);
  if (it == tails.end() || *it != q.o) tails.insert(it, q.o);
}

std::span<const std::size_t> FilterIndex::tails(std::size_t s, std::size_t r, std::size_t t) const {
  auto it = map_.find(Key{s, r, t});
  if (it == map_.end()) return {};
  return it->second;
}

bool FilterIndex::contains(const Quadruple& q) const {
  auto t = tails(q.s, q.r, q.t);
  return std::binary_search(t.begin(), t.end(), q.o);
}

FilterIndex build_filter_index(std::span<const Quadruple> all_quads) {
  FilterIndex index;
  for (const auto& q : all_quads) index.insert(q);
  return index;
}

FilterIndex Dataset::filter_index() const {
  FilterIndex index;
  for (const auto* split : {&train, &valid, &test}) {
    for (const auto& q : augment_reciprocal(*split, n_relations())) index.insert(q);
  }
  return index;
}

Dataset index_dataset(const RawSplits& raw) {
  std::vector<RawQuadruple> all;
  all.reserve(raw.train.size() + raw.valid.size() + raw.test.size());
  all.insert(all.end(), raw.train.begin(), raw.train.end());
  all.insert(all.end(), raw.valid.begin(), raw.valid.end());
  all.insert(all.end(), raw.test.begin(), raw.test.end());
  if (all.empty()) throw Error("dataset has no quadruples");
  Dataset d;
  d.vocab = build_vocabulary(all);
  d.train = index_quadruples(raw.train, d.vocab);
  d.valid = index_quadruples(raw.valid, d.vocab);
  d.test = index_quadruples(raw.test, d.vocab);
  return d;
}

RawSplits read_splits(const std::filesystem::path& dir) {
  return {parse_quadruple_file(dir / "train.txt"), parse_quadruple_file(dir / "valid.txt"),
          parse_quadruple_file(dir / "test.txt")};
}

void write_splits(const std::filesystem::path& dir, const RawSplits& splits) {
  std::filesystem::create_directories(dir);
  write_quadruple_file(dir / "train.txt", splits.train);
  write_quadruple_file(dir / "valid.txt", splits.valid);
  write_quadruple_file(dir / "test.txt", splits.test);
}

void write_vocabulary(const std::filesystem::path& dir, const Vocabulary& vocab) {
  std::filesystem::create_directories(dir);
  auto dump = [&](const char* name, const LabelIndex& index) {
    std::ofstream os(dir / name, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + (dir / name).string());
    for (std::size_t i = 0; i < index.size(); ++i) os << index.label(i) << '\t' << i << '\n';
  };
  dump("entities.tsv", vocab.entities);
  dump("relations.tsv", vocab.relations);
  dump("timestamps.tsv", vocab.timestamps);
}

Pattern parse_pattern(std::string_view name) {
  if (name == "ring") return Pattern::ring;
  if (name == "chain") return Pattern::chain;
  if (name == "mixed") return Pattern::mixed;
  throw ConfigError("unknown pattern '" + std::string(name) + "' (expected ring|chain|mixed)");
}

std::string_view pattern_name(Pattern p) {
  switch (p) {
    case Pattern::ring: return "ring";
    case Pattern::chain: return "chain";
    case Pattern::mixed: return "mixed";
  }
  return "?";
}


RawSplits generate_synthetic(const SyntheticSpec& spec) {
  const bool needs_ring = spec.pattern != Pattern::chain;
  const std::size_t min_entities = needs_ring ? 3 : 2;
  if (spec.n_entities < min_entities) {
    throw ConfigError("pattern " + std::string(pattern_name(spec.pattern)) + " needs at least " +
                      std::to_string(min_entities) + " entities, got " +
                      std::to_string(spec.n_entities));
  }
  if (spec.n_relations < 1 || spec.n_timestamps < 1) {
    throw ConfigError("synthetic data needs at least one relation and one timestamp");
  }
  auto entity = [](std::size_t i) { return "e" + std::to_string(i); };
  std::vector<RawQuadruple> facts;
  for (std::size_t t = 0; t < spec.n_timestamps; ++t) {
    for (std::size_t r = 0; r < spec.n_relations; ++r) {
      const bool ring = spec.pattern == Pattern::ring ||
                        (spec.pattern == Pattern::mixed && r % 2 == 0);
      const std::size_t links = ring ? spec.n_entities : spec.n_entities - 1;
      for (std::size_t i = 0; i < links; ++i) {
        facts.push_back({entity(i), "r" + std::to_string(r), entity((i + 1) % spec.n_entities),
                         "t" + std::to_string(t)});
      }
    }
  }
  std::mt19937_64 rng(spec.seed);
  detail::fisher_yates(std::span(facts), rng);
  const std::size_t n = facts.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_valid = n / 10;
  RawSplits out;
  out.train.assign(facts.begin(), facts.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.valid.assign(facts.begin() + static_cast<std::ptrdiff_t>(n_train),
                   facts.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  out.test.assign(facts.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), facts.end());
  return out;
}

DatasetStats dataset_stats(const RawSplits& raw, const Vocabulary& vocab) {
  return {vocab.entities.size(), vocab.relations.size(), vocab.timestamps.size(),
          raw.train.size(),      raw.valid.size(),       raw.test.size()};
}

std::optional<DatasetStats> reference_stats(std::string_view dataset) {
  if (dataset == "ICEWS14") return DatasetStats{6869, 230, 365, 72826, 8941, 8963};
  if (dataset == "ICEWS05-15") return DatasetStats{10094, 251, 4017, 368962, 46275, 46092};
  if (dataset == "GDELT") return DatasetStats{500, 20, 366, 2735685, 341961, 341961};
  return std::nullopt;
}

std::vector<std::string> check_reference_stats(std::string_view dataset, const DatasetStats& stats) {
  auto ref = reference_stats(dataset);
  if (!ref) return {"no published statistics for '" + std::string(dataset) + "'"};
  std::vector<std::string> issues;
  auto cmp = [&](const char* field, std::size_t got, std::size_t want) {
    if (got != want) {
      issues.push_back(std::string(dataset) + " " + field + ": got " + std::to_string(got) +
                       ", expected " + std::to_string(want));
    }
  };
  cmp("entities", stats.entities, ref->entities);
  cmp("relations", stats.relations, ref->relations);
  cmp("timestamps", stats.timestamps, ref->timestamps);
  cmp("train", stats.train, ref->train);
  cmp("valid", stats.valid, ref->valid);
  cmp("test", stats.test, ref->test);
  return issues;
}

}  // namespace ime::data
