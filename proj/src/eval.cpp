#include "ime/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "ime/error.hpp"

namespace ime::eval {

std::size_t threads_from_env() {
  const char* raw = std::getenv("IME_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError("IME_THREADS must be a positive integer");
  return static_cast<std::size_t>(v);
}

double rank_from_scores(std::span<const double> scores, std::size_t target,
                        std::span<const std::size_t> true_tails) {
  if (target >= scores.size()) {
    throw IndexError("target " + std::to_string(target) + " out of range for " +
                     std::to_string(scores.size()) + " candidates");
  }
  const double truth = scores[target];
  std::size_t better = 0, ties = 0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    if (e == target) continue;
    if (std::binary_search(true_tails.begin(), true_tails.end(), e)) continue;
    if (scores[e] > truth) {
      ++better;
    } else if (scores[e] == truth) {
      ++ties;
    }
  }
  return 1.0 + static_cast<double>(better) + 0.5 * static_cast<double>(ties);
}

double rank_query(const model::ImeParams& params, const data::Quadruple& q,
                  const data::FilterIndex& filter, model::PoolMode pool) {
  const auto scores = model::score_all(params, q.s, q.r, q.t, pool);
  return rank_from_scores(scores, q.o, filter.tails(q.s, q.r, q.t));
}

std::vector<double> rank_queries(const model::ImeParams& params,
                                 std::span<const data::Quadruple> queries,
                                 const data::FilterIndex& filter, const EvalOptions& options) {
  std::vector<double> ranks(queries.size());
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  const std::size_t chunks = (queries.size() + batch - 1) / batch;
  const std::size_t threads =
      std::max<std::size_t>(1, std::min(options.threads ? options.threads : threads_from_env(),
                                        std::max<std::size_t>(chunks, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    try {
      model::ImeParams local = params;
      while (true) {
        const std::size_t c = next.fetch_add(1);
        if (c >= chunks) break;
        const std::size_t begin = c * batch;
        const std::size_t end = std::min(queries.size(), begin + batch);
        const auto part = queries.subspan(begin, end - begin);
        diff::Graph g;
        model::Forward fwd = model::forward(g, local, part, options.pool);
        const diff::Tensor& scores = model::score_all(g, local, fwd.pooled).value();
        for (std::size_t i = 0; i < part.size(); ++i) {
          const auto& q = part[i];
          ranks[begin + i] = rank_from_scores(scores.row_span(i), q.o, filter.tails(q.s, q.r, q.t));
        }
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next.store(chunks);
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return ranks;
}

RankingReport summarize(std::span<const double> ranks) {
  if (ranks.empty()) throw Error("cannot evaluate an empty split");
  RankingReport r;
  for (double rank : ranks) {
    r.mrr += 1.0 / rank;
    r.hits1 += rank <= 1.0 ? 1.0 : 0.0;
    r.hits3 += rank <= 3.0 ? 1.0 : 0.0;
    r.hits10 += rank <= 10.0 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  r.mrr /= n;
  r.hits1 /= n;
  r.hits3 /= n;
  r.hits10 /= n;
  r.n_queries = ranks.size();
  return r;
}

RankingReport evaluate(const model::ImeParams& params, std::span<const data::Quadruple> split,
                       const data::FilterIndex& filter, const EvalOptions& options) {
  if (split.empty()) throw Error("cannot evaluate an empty split");
  const auto ranks = rank_queries(params, split, filter, options);
  return summarize(ranks);
}

std::map<std::size_t, RankingReport> evaluate_per_relation(
    const model::ImeParams& params, std::span<const data::Quadruple> split,
    const data::FilterIndex& filter, const EvalOptions& options) {
  if (split.empty()) throw Error("cannot evaluate an empty split");
  const auto ranks = rank_queries(params, split, filter, options);
  std::map<std::size_t, std::vector<double>> grouped;
  for (std::size_t i = 0; i < split.size(); ++i) grouped[split[i].r].push_back(ranks[i]);
  std::map<std::size_t, RankingReport> out;
  for (const auto& [rel, rs] : grouped) out.emplace(rel, summarize(rs));
  return out;
}

std::string report_csv_header() { return "split,n_queries,mrr,hits1,hits3,hits10"; }

std::string report_csv_row(const std::string& split, const RankingReport& r) {
  std::ostringstream os;
  os << std::setprecision(17) << split << ',' << r.n_queries << ',' << r.mrr << ',' << r.hits1
     << ',' << r.hits3 << ',' << r.hits10;
  return os.str();
}

std::string report_table(const std::string& split, const RankingReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "split    queries  MRR     Hit@1   Hit@3   Hit@10\n";
  os << std::left << std::setw(8) << split << ' ' << std::setw(8) << r.n_queries << ' '
     << r.mrr << "  " << r.hits1 << "  " << r.hits3 << "  " << r.hits10 << '\n';
  return os.str();
}

}  // namespace ime::eval
