#include <doctest.h>

#include <cstdlib>
#include <random>

#include "ime/error.hpp"
#include "ime/eval.hpp"
#include "oracles.hpp"

using namespace ime;
using namespace ime::eval;

namespace {

model::ImeParams trained_like(std::size_t entities, std::uint64_t seed) {
  model::ModelDims d;
  d.n_entities = entities;
  d.n_relations = 4;
  d.n_timestamps = 3;
  d.dim = 6;
  return model::ImeParams::initialize(d, seed, 0.5);
}

std::vector<data::Quadruple> all_queries(const model::ModelDims& d) {
  std::vector<data::Quadruple> out;
  for (std::size_t s = 0; s < d.n_entities; ++s)
    for (std::size_t r = 0; r < d.n_relations; ++r)
      for (std::size_t t = 0; t < d.n_timestamps; ++t) out.push_back({s, r, (s + r + t) % d.n_entities, t});
  return out;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("filtered rank with ties") {
  const std::vector<double> scores{0.5, 0.9, 0.5, 0.1, 0.5};
  const std::vector<std::size_t> none;
  CHECK(rank_from_scores(scores, 1, none) == 1.0);
  CHECK(rank_from_scores(scores, 3, none) == 5.0);
  // Two tying competitors add one position.
  CHECK(rank_from_scores(scores, 0, none) == 3.0);
  const std::vector<std::size_t> known{0, 1, 2};
  CHECK(rank_from_scores(scores, 0, known) == 1.5);
  CHECK_THROWS_AS(rank_from_scores(scores, 5, none), IndexError);
}

TEST_CASE("summary metrics") {
  const std::vector<double> ranks{1.0, 4.0};
  const auto r = summarize(ranks);
  CHECK(r.mrr == doctest::Approx(0.625).epsilon(1e-15));
  CHECK(r.hits1 == 0.5);
  CHECK(r.hits3 == 0.5);
  CHECK(r.hits10 == 1.0);
  CHECK(r.n_queries == 2);
  CHECK_THROWS_AS(summarize(std::vector<double>{}), Error);
}

TEST_CASE("hits are monotone and bounded by one") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> u(1, 30);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> ranks(1 + trial);
    for (double& v : ranks) v = u(rng) / (u(rng) % 2 ? 1.0 : 2.0) + 0.5;
    const auto r = summarize(ranks);
    CHECK(r.hits1 <= r.hits3);
    CHECK(r.hits3 <= r.hits10);
    CHECK(r.hits10 <= 1.0);
    CHECK(r.mrr > 0.0);
    CHECK(r.mrr <= 1.0);
  }
}

TEST_CASE("rank query matches the scalar oracle") {
  const auto p = trained_like(7, 4);
  const std::vector<data::Quadruple> facts{{0, 1, 2, 0}, {0, 1, 5, 0}, {3, 0, 4, 2}, {6, 3, 6, 1}};
  const auto filter = data::build_filter_index(facts);
  const auto weights = model::pooling_weight_values(p);
  for (const auto& q : facts) {
    const auto known = filter.tails(q.s, q.r, q.t);
    const double ref = oracle::filtered_rank(oracle::scores(p, q.s, q.r, q.t, weights), q.o,
                                             std::vector<std::size_t>(known.begin(), known.end()));
    CHECK(rank_query(p, q, filter) == ref);
  }
}

TEST_CASE("ranking is independent of thread count") {
  const auto p = trained_like(9, 5);
  const auto queries = all_queries(p.dims);
  const auto filter = data::build_filter_index(queries);
  EvalOptions one;
  one.threads = 1;
  EvalOptions four;
  four.threads = 4;
  four.batch_size = 5;
  CHECK(rank_queries(p, queries, filter, one) == rank_queries(p, queries, filter, four));
}

TEST_CASE("thread count from the environment") {
  ::setenv("IME_THREADS", "3", 1);
  CHECK(threads_from_env() == 3);
  ::setenv("IME_THREADS", "zero", 1);
  CHECK_THROWS_AS(threads_from_env(), ConfigError);
  ::unsetenv("IME_THREADS");
  CHECK(threads_from_env() == 1);
}

TEST_CASE("per-relation reports partition the split") {
  const auto p = trained_like(6, 6);
  const auto queries = all_queries(p.dims);
  const auto filter = data::build_filter_index(queries);
  const auto per = evaluate_per_relation(p, queries, filter);
  CHECK(per.size() == p.dims.n_relations);
  std::size_t n = 0;
  double rr = 0.0;
  for (const auto& [rel, rep] : per) {
    n += rep.n_queries;
    rr += rep.mrr * static_cast<double>(rep.n_queries);
  }
  const auto all = evaluate(p, queries, filter);
  CHECK(n == all.n_queries);
  CHECK(rr / static_cast<double>(n) == doctest::Approx(all.mrr).epsilon(1e-12));
}

TEST_CASE("report formatting") {
  CHECK(report_csv_header() == "split,n_queries,mrr,hits1,hits3,hits10");
  RankingReport r{0.625, 0.5, 0.5, 1.0, 2};
  const auto row = report_csv_row("test", r);
  CHECK(row == "test,2,0.625,0.5,0.5,1");
  CHECK(report_table("valid", r).find("0.625") != std::string::npos);
}

}  // TEST_SUITE
