#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ime/data.hpp"
#include "ime/error.hpp"

using namespace ime;
using namespace ime::data;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("parse tab-separated quadruples") {
  std::istringstream in("a\tborn_in\tb\t2014-01-01\r\n\nb\tvisits\tc\t2014-01-02\n");
  const auto q = parse_quadruples(in, "mem");
  REQUIRE(q.size() == 2);
  CHECK(q[0].head == "a");
  CHECK(q[0].relation == "born_in");
  CHECK(q[0].tail == "b");
  CHECK(q[0].timestamp == "2014-01-01");
  CHECK(q[1].timestamp == "2014-01-02");
}

TEST_CASE("labels may contain spaces") {
  std::istringstream in("South Korea\tMake statement\tNorth Korea\t2014-05-01\n");
  const auto q = parse_quadruples(in, "mem");
  CHECK(q[0].head == "South Korea");
  CHECK(q[0].relation == "Make statement");
}

TEST_CASE("malformed lines report file and line") {
  std::istringstream three("a\tb\tc\td\na\tb\tc\n");
  try {
    parse_quadruples(three, "train.txt");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).rfind("train.txt:2:", 0) == 0);
  }
  std::istringstream five("a\tb\tc\td\te\n");
  CHECK_THROWS_AS(parse_quadruples(five, "x"), ParseError);
  std::istringstream empty_field("a\t\tc\td\n");
  CHECK_THROWS_AS(parse_quadruples(empty_field, "x"), ParseError);
  CHECK_THROWS_AS(parse_quadruple_file("/nonexistent/train.txt"), ParseError);
}

TEST_CASE("vocabulary follows first occurrence order") {
  const std::vector<RawQuadruple> raw{{"x", "r1", "y", "t1"}, {"y", "r0", "z", "t0"}, {"z", "r1", "x", "t1"}};
  const auto v = build_vocabulary(raw);
  CHECK(v.entities.labels() == std::vector<std::string>{"x", "y", "z"});
  CHECK(v.relations.labels() == std::vector<std::string>{"r1", "r0"});
  CHECK(v.timestamps.labels() == std::vector<std::string>{"t1", "t0"});
  const auto idx = index_quadruples(raw, v);
  CHECK(idx[1] == Quadruple{1, 1, 2, 1});
  CHECK(label_quadruple(idx[2], v).head == "z");
  CHECK_THROWS_AS(v.entities.at("w"), IndexError);
  CHECK_THROWS_AS(v.entities.label(7), IndexError);
}

TEST_CASE("vocabulary spans every split") {
  RawSplits raw;
  raw.train = {{"a", "r", "b", "t0"}};
  raw.valid = {{"b", "r", "c", "t1"}};
  raw.test = {{"c", "q", "d", "t2"}};
  const auto d = index_dataset(raw);
  CHECK(d.n_entities() == 4);
  CHECK(d.n_relations() == 2);
  CHECK(d.n_timestamps() == 3);
  CHECK(d.test[0] == Quadruple{2, 1, 3, 2});
  CHECK_THROWS_AS(index_dataset(RawSplits{}), Error);
}

TEST_CASE("reciprocal augmentation") {
  const std::vector<Quadruple> q{{0, 1, 2, 3}, {4, 0, 5, 6}};
  const auto a = augment_reciprocal(q, 2);
  REQUIRE(a.size() == 4);
  CHECK(a[0] == q[0]);
  CHECK(a[1] == Quadruple{2, 3, 0, 3});
  CHECK(a[2] == q[1]);
  CHECK(a[3] == Quadruple{5, 2, 4, 6});
  CHECK_THROWS_AS(augment_reciprocal(q, 1), IndexError);
}

TEST_CASE("filter index collects every true tail") {
  const std::vector<Quadruple> q{{0, 0, 1, 0}, {0, 0, 2, 0}, {0, 0, 1, 0}, {0, 0, 3, 1}};
  const auto f = build_filter_index(q);
  const auto t = f.tails(0, 0, 0);
  CHECK(std::vector<std::size_t>(t.begin(), t.end()) == std::vector<std::size_t>{1, 2});
  CHECK(f.contains({0, 0, 3, 1}));
  CHECK_FALSE(f.contains({0, 0, 3, 0}));
  CHECK(f.tails(9, 9, 9).empty());
  CHECK(f.key_count() == 2);
}

TEST_CASE("dataset filter covers reciprocal facts of all splits") {
  RawSplits raw;
  raw.train = {{"a", "r", "b", "t"}};
  raw.test = {{"a", "r", "c", "t"}};
  const auto d = index_dataset(raw);
  const auto f = d.filter_index();
  CHECK(f.tails(0, 0, 0).size() == 2);
  CHECK(f.contains({1, 1, 0, 0}));
  CHECK(f.contains({2, 1, 0, 0}));
}

TEST_CASE("synthetic ring is deterministic and complete") {
  SyntheticSpec spec{20, 2, 4, Pattern::ring, 7};
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  CHECK(a.train.size() == 128);
  CHECK(a.valid.size() == 16);
  CHECK(a.test.size() == 16);
  auto key = [](const RawQuadruple& q) { return q.head + "|" + q.relation + "|" + q.tail + "|" + q.timestamp; };
  std::set<std::string> all;
  for (const auto* split : {&a.train, &a.valid, &a.test}) {
    for (const auto& q : *split) all.insert(key(q));
  }
  CHECK(all.size() == 160);
  CHECK(all.count("e19|r1|e0|t3") == 1);
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(key(a.train[i]) == key(b.train[i]));
  spec.seed = 8;
  const auto c = generate_synthetic(spec);
  bool differs = false;
  for (std::size_t i = 0; i < c.train.size(); ++i) differs = differs || key(c.train[i]) != key(a.train[i]);
  CHECK(differs);
}

TEST_CASE("synthetic chain and mixed patterns") {
  const auto chain = generate_synthetic({5, 1, 1, Pattern::chain, 1});
  CHECK(chain.train.size() + chain.valid.size() + chain.test.size() == 4);
  const auto mixed = generate_synthetic({5, 2, 1, Pattern::mixed, 1});
  CHECK(mixed.train.size() + mixed.valid.size() + mixed.test.size() == 9);
  CHECK_THROWS_AS(generate_synthetic({2, 1, 1, Pattern::ring, 1}), ConfigError);
  CHECK_THROWS_AS(generate_synthetic({5, 0, 1, Pattern::ring, 1}), ConfigError);
  CHECK_THROWS_AS(parse_pattern("star"), ConfigError);
}

TEST_CASE("split and vocabulary files") {
  const auto dir = std::filesystem::temp_directory_path() / "ime_data_test";
  std::filesystem::remove_all(dir);
  const auto raw = generate_synthetic({6, 1, 2, Pattern::ring, 3});
  write_splits(dir, raw);
  const auto back = read_splits(dir);
  CHECK(back.train.size() == raw.train.size());
  CHECK(back.test[0].head == raw.test[0].head);
  const auto d = index_dataset(back);
  write_vocabulary(dir, d.vocab);
  const std::string ents = slurp(dir / "entities.tsv");
  CHECK(ents.rfind(d.vocab.entities.label(0) + "\t0\n", 0) == 0);
  CHECK(std::filesystem::exists(dir / "relations.tsv"));
  CHECK(std::filesystem::exists(dir / "timestamps.tsv"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("published split statistics") {
  const auto icews14 = reference_stats("ICEWS14");
  REQUIRE(icews14);
  CHECK(icews14->entities == 6869);
  CHECK(icews14->relations == 230);
  CHECK(icews14->timestamps == 365);
  CHECK(icews14->train == 72826);
  CHECK(icews14->valid == 8941);
  CHECK(icews14->test == 8963);
  const auto i0515 = reference_stats("ICEWS05-15");
  REQUIRE(i0515);
  CHECK(i0515->entities == 10094);
  CHECK(i0515->relations == 251);
  CHECK(i0515->timestamps == 4017);
  CHECK(i0515->train == 368962);
  CHECK(i0515->valid == 46275);
  CHECK(i0515->test == 46092);
  const auto gdelt = reference_stats("GDELT");
  REQUIRE(gdelt);
  CHECK(gdelt->entities == 500);
  CHECK(gdelt->relations == 20);
  CHECK(gdelt->timestamps == 366);
  CHECK(gdelt->train == 2735685);
  CHECK(gdelt->valid == 341961);
  CHECK(gdelt->test == 341961);
  CHECK_FALSE(reference_stats("YAGO"));

  CHECK(check_reference_stats("GDELT", *gdelt).empty());
  auto off = *gdelt;
  off.train -= 1;
  const auto issues = check_reference_stats("GDELT", off);
  REQUIRE(issues.size() == 1);
  CHECK(issues[0].find("train") != std::string::npos);
}

}  // TEST_SUITE
