#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ime/error.hpp"
#include "ime/trainer.hpp"

using namespace ime;
using namespace ime::train;
using diff::Parameter;
using diff::Tensor;

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TrainConfig tiny_config() {
  auto c = TrainConfig::desk_profile();
  c.dim = 8;
  c.batch_size = 32;
  c.max_epochs = 4;
  c.eval_interval = 2;
  c.synthetic = data::SyntheticSpec{8, 2, 2, data::Pattern::ring, 3};
  return c;
}

data::Dataset tiny_dataset(const TrainConfig& c) { return data::index_dataset(load_raw_splits(c)); }

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ime_trainer_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

bool same_values(const model::ImeParams& a, const model::ImeParams& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (vec(pa[i]->value) != vec(pb[i]->value)) return false;
  return true;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("adagrad scalar trace") {
  Parameter p("x", Tensor::scalar(1.0));
  std::vector<Parameter*> params{&p};
  std::vector<Tensor> acc;
  const double lr = 0.1;
  double x = 1.0, a = 0.0;
  for (double g : {0.5, -0.2, 0.1}) {
    p.grad = Tensor::scalar(g);
    adagrad_update(params, lr, acc);
    a += g * g;
    x -= lr * g / (std::sqrt(a) + 1e-10);
    CHECK(std::fabs(p.value.item() - x) <= 1e-12);
    CHECK(std::fabs(acc[0].item() - a) <= 1e-15);
  }
  // The first step moves by lr * sign(g), up to the epsilon.
  Parameter q("y", Tensor::scalar(2.0));
  std::vector<Parameter*> qs{&q};
  std::vector<Tensor> qacc;
  q.grad = Tensor::scalar(-3.0);
  adagrad_update(qs, lr, qacc);
  CHECK(std::fabs(q.value.item() - (2.0 + 0.3 / (3.0 + 1e-10))) <= 1e-15);
}

TEST_CASE("zero gradient or zero rate leaves parameters unchanged") {
  Parameter p("x", Tensor::matrix(1, 3, {0.3, -0.4, 1.2}));
  std::vector<Parameter*> params{&p};
  std::vector<Tensor> acc;
  const auto before = vec(p.value);
  p.grad = Tensor({1, 3});
  adagrad_update(params, 0.1, acc);
  CHECK(vec(p.value) == before);
  p.grad = Tensor::matrix(1, 3, {1.0, 2.0, -1.0});
  adagrad_update(params, 0.0, acc);
  sgd_update(params, 0.0);
  CHECK(vec(p.value) == before);
  sgd_update(params, 0.5);
  CHECK(vec(p.value) == std::vector<double>{-0.2, -1.4, 1.7});
}

TEST_CASE("optimizer step keeps the geometric constraints") {
  model::ModelDims d;
  d.n_entities = 4;
  d.n_relations = 2;
  d.n_timestamps = 2;
  d.dim = 4;
  auto p = model::ImeParams::initialize(d, 2, 0.5);
  for (auto* param : p.parameters()) param->grad = Tensor(param->value.shape(), -50.0);
  std::vector<Tensor> acc;
  optimizer_step(p, 10.0, OptimizerKind::sgd, acc);
  CHECK(model::check_constraints(p).satisfied());
}

TEST_CASE("config parsing") {
  std::istringstream in(
      "# comment\n"
      "dim = 16\n"
      "lr=0.05   # trailing\n"
      "\n"
      "beta=0.2\n"
      "optimizer=sgd\n"
      "preset=desk\n");
  const auto c = TrainConfig::parse(in);
  CHECK(c.dim == 16);
  CHECK(c.lr == 0.05);
  CHECK(c.weights.beta == 0.2);
  CHECK(c.weights.alpha == 0.4);
  CHECK(c.optimizer == OptimizerKind::sgd);
  CHECK(c.synthetic.has_value());
  CHECK(c.batch_size == 128);
}

TEST_CASE("published presets") {
  const auto a = TrainConfig::paper_defaults("ICEWS05-15");
  CHECK(a.dim == 500);
  CHECK(a.lr == 0.1);
  CHECK(a.batch_size == 1000);
  CHECK(a.pe_dim == 32);
  CHECK(a.weights == loss::LossWeights{0.9, 0.3, 0.1});
  std::istringstream in("preset=gdelt\ndata_dir=/data/GDELT\n");
  const auto g = TrainConfig::parse(in);
  CHECK(g.weights == loss::LossWeights{1.0, 0.3, 0.1});
  CHECK(g.train_path == fs::path("/data/GDELT/train.txt"));
  CHECK(g.test_path == fs::path("/data/GDELT/test.txt"));
}

TEST_CASE("config round trip") {
  auto c = tiny_config();
  c.weights.gamma = 0.25;
  c.pool = model::PoolMode::mp;
  c.sim_features = loss::SimFeatures::specific;
  std::istringstream in(c.to_text());
  const auto back = TrainConfig::parse(in);
  CHECK(back.to_text() == c.to_text());
  CHECK(back.weights == c.weights);
  CHECK(back.pool == model::PoolMode::mp);
}

TEST_CASE("config errors") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return TrainConfig::parse(in);
  };
  CHECK_THROWS_AS(parse("colour=red\n"), ConfigError);
  CHECK_THROWS_AS(parse("dim=8\ndim=9\n"), ConfigError);
  CHECK_THROWS_AS(parse("dim\n"), ConfigError);
  CHECK_THROWS_AS(parse("dim=eight\n"), ConfigError);
  CHECK_THROWS_AS(parse("lr=0.1x\n"), ConfigError);
  CHECK_THROWS_AS(parse("preset=wiki\n"), ConfigError);
  CHECK_THROWS_AS(parse("optimizer=adam\n"), ConfigError);
  auto c = tiny_config();
  c.pe_dim = 7;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.dim = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.synthetic.reset();
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("checkpoint round trip is byte-identical") {
  const auto dir = scratch("roundtrip");
  const auto c = tiny_config();
  Trainer t(c, tiny_dataset(c));
  t.run_epoch();
  save_checkpoint(dir / "a.bin", t.checkpoint());
  const auto loaded = load_checkpoint(dir / "a.bin");
  save_checkpoint(dir / "b.bin", loaded);
  CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));
  CHECK(same_values(loaded.params, t.params()));
  CHECK(loaded.state.step == t.state().step);
  CHECK(manifest_text(loaded) == manifest_text(t.checkpoint()));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint errors") {
  const auto dir = scratch("errors");
  const auto c = tiny_config();
  Trainer t(c, tiny_dataset(c));
  save_checkpoint(dir / "ok.bin", t.checkpoint());
  auto wrong = t.params().dims;
  wrong.dim = 9;
  CHECK_THROWS_AS(load_checkpoint(dir / "ok.bin", wrong), CheckpointError);

  const std::string bytes = slurp(dir / "ok.bin");
  {
    std::ofstream out(dir / "cut.bin", std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.bin"), CheckpointError);
  {
    std::ofstream out(dir / "junk.bin", std::ios::binary);
    out << "not a checkpoint\n";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.bin"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), CheckpointError);

  auto other = tiny_config();
  other.synthetic->n_entities = 9;
  CHECK_THROWS_AS(Trainer(load_checkpoint(dir / "ok.bin"), tiny_dataset(other)), CheckpointError);
  fs::remove_all(dir);
}

TEST_CASE("resuming from a checkpoint matches an uninterrupted run") {
  const auto dir = scratch("resume");
  const auto c = tiny_config();
  Trainer straight(c, tiny_dataset(c));
  straight.train();

  auto half = c;
  half.max_epochs = 2;
  Trainer first(half, tiny_dataset(c));
  first.train();
  save_checkpoint(dir / "half.bin", first.checkpoint());
  auto ckpt = load_checkpoint(dir / "half.bin");
  ckpt.config.max_epochs = c.max_epochs;
  Trainer second(std::move(ckpt), tiny_dataset(c));
  second.train();

  CHECK(second.state().epoch == straight.state().epoch);
  CHECK(second.state().step == straight.state().step);
  CHECK(same_values(second.params(), straight.params()));
  CHECK(same_values(second.best_params(), straight.best_params()));
  fs::remove_all(dir);
}

TEST_CASE("identical seeds give identical metrics") {
  const auto c = tiny_config();
  std::vector<std::string> rows_a, rows_b;
  Trainer a(c, tiny_dataset(c));
  a.train([&](const EpochLog& log) { rows_a.push_back(metrics_csv_row(log)); });
  Trainer b(c, tiny_dataset(c));
  b.train([&](const EpochLog& log) { rows_b.push_back(metrics_csv_row(log)); });
  CHECK(rows_a.size() == 4);
  CHECK(rows_a == rows_b);
  auto other = c;
  other.seed = c.seed + 1;
  Trainer d(other, tiny_dataset(c));
  d.run_epoch();
  CHECK_FALSE(same_values(d.params(), a.params()));
}

TEST_CASE("metrics rows") {
  CHECK(metrics_csv_header() == "epoch,step,task,sim,diff,stru,total,valid_mrr,valid_h1,valid_h3,valid_h10");
  EpochLog log;
  log.epoch = 3;
  log.step = 12;
  log.loss = {1.5, 0.25, 2.0, 0.125, 2.4};
  CHECK(metrics_csv_row(log) == "3,12,1.5,0.25,2,0.125,2.4,,,,");
  log.valid = eval::RankingReport{0.5, 0.25, 0.5, 1.0, 8};
  CHECK(metrics_csv_row(log) == "3,12,1.5,0.25,2,0.125,2.4,0.5,0.25,0.5,1");
}

TEST_CASE("training run writes its artifacts") {
  const auto dir = scratch("run");
  const auto summary = run_training(tiny_config(), dir);
  for (const char* name : {"checkpoint.bin", "manifest.txt", "metrics.csv", "report.csv", "entities.tsv"})
    CHECK(fs::exists(dir / name));
  CHECK(summary.test.n_queries == 2 * tiny_dataset(tiny_config()).test.size());
  CHECK(summary.state.epoch == 4);
  const auto metrics = slurp(dir / "metrics.csv");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 5);
  fs::remove_all(dir);
}

}  // TEST_SUITE
