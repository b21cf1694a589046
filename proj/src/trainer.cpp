#include "ime/trainer.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "ime/tensor_io.hpp"
#include "shuffle.hpp"

namespace ime::train {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw ConfigError("invalid value '" + std::string(text) + "' for key '" + std::string(key) + "'");
  }
  return value;
}

std::filesystem::path resolve(std::string_view value, const std::filesystem::path& base) {
  std::filesystem::path p{std::string(value)};
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

data::SyntheticSpec& synthetic_of(TrainConfig& c) {
  if (!c.synthetic) c.synthetic = data::SyntheticSpec{};
  return *c.synthetic;
}

}  // namespace

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adagrad") return OptimizerKind::adagrad;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adagrad|sgd)");
}

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::adagrad ? "adagrad" : "sgd";
}

// ---- configuration ----------------------------------------------------------

TrainConfig TrainConfig::paper_defaults(std::string_view dataset) {
  TrainConfig c;
  c.dataset = std::string(dataset);
  c.dim = 500;
  c.lr = 0.1;
  c.batch_size = 1000;
  c.pe_dim = 32;
  c.gru_hidden = 16;
  c.weights = loss::LossWeights::for_dataset(dataset);
  return c;
}

TrainConfig TrainConfig::desk_profile() {
  TrainConfig c;
  c.dim = 32;
  c.batch_size = 128;
  c.max_epochs = 200;
  c.eval_interval = 5;
  c.weights = loss::LossWeights::for_dataset("ICEWS14");
  c.synthetic = data::SyntheticSpec{20, 2, 4, data::Pattern::ring, 7};
  return c;
}

void TrainConfig::set(std::string_view key, std::string_view value,
                      const std::filesystem::path& base_dir) {
  if (key == "preset") {
    if (value == "icews14") *this = paper_defaults("ICEWS14");
    else if (value == "icews05-15") *this = paper_defaults("ICEWS05-15");
    else if (value == "gdelt") *this = paper_defaults("GDELT");
    else if (value == "desk") *this = desk_profile();
    else throw ConfigError("unknown preset '" + std::string(value) + "'");
  } else if (key == "dataset") {
    dataset = std::string(value);
  } else if (key == "dim") {
    dim = parse_number<std::size_t>(key, value);
  } else if (key == "lr") {
    lr = parse_number<double>(key, value);
  } else if (key == "batch_size") {
    batch_size = parse_number<std::size_t>(key, value);
  } else if (key == "max_epochs") {
    max_epochs = parse_number<std::size_t>(key, value);
  } else if (key == "eval_interval") {
    eval_interval = parse_number<std::size_t>(key, value);
  } else if (key == "patience") {
    patience = parse_number<std::size_t>(key, value);
  } else if (key == "alpha") {
    weights.alpha = parse_number<double>(key, value);
  } else if (key == "beta") {
    weights.beta = parse_number<double>(key, value);
  } else if (key == "gamma") {
    weights.gamma = parse_number<double>(key, value);
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "optimizer") {
    optimizer = parse_optimizer(value);
  } else if (key == "pe_dim") {
    pe_dim = parse_number<std::size_t>(key, value);
  } else if (key == "gru_hidden") {
    gru_hidden = parse_number<std::size_t>(key, value);
  } else if (key == "cmd_order") {
    cmd_order = parse_number<int>(key, value);
  } else if (key == "sim_features") {
    sim_features = loss::parse_sim_features(value);
  } else if (key == "pool") {
    pool = model::parse_pool_mode(value);
  } else if (key == "train_path") {
    train_path = resolve(value, base_dir);
  } else if (key == "valid_path") {
    valid_path = resolve(value, base_dir);
  } else if (key == "test_path") {
    test_path = resolve(value, base_dir);
  } else if (key == "data_dir") {
    const auto dir = resolve(value, base_dir);
    train_path = dir / "train.txt";
    valid_path = dir / "valid.txt";
    test_path = dir / "test.txt";
  } else if (key == "synthetic") {
    if (value == "none") synthetic.reset();
    else synthetic_of(*this).pattern = data::parse_pattern(value);
  } else if (key == "synthetic_entities") {
    synthetic_of(*this).n_entities = parse_number<std::size_t>(key, value);
  } else if (key == "synthetic_relations") {
    synthetic_of(*this).n_relations = parse_number<std::size_t>(key, value);
  } else if (key == "synthetic_timestamps") {
    synthetic_of(*this).n_timestamps = parse_number<std::size_t>(key, value);
  } else if (key == "synthetic_seed") {
    synthetic_of(*this).seed = parse_number<std::uint64_t>(key, value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

TrainConfig TrainConfig::parse(std::istream& in, const std::filesystem::path& base_dir) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key(trim(text.substr(0, eq)));
    std::string value(trim(text.substr(eq + 1)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key +
                        "' (first on line " + std::to_string(it->second) + ")");
    }
    entries.emplace_back(std::move(key), std::move(value));
  }
  TrainConfig c;
  for (const auto& [k, v] : entries) {
    if (k == "preset") c.set(k, v, base_dir);
  }
  for (const auto& [k, v] : entries) {
    if (k != "preset") c.set(k, v, base_dir);
  }
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse(in, path.parent_path());
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  if (!dataset.empty()) os << "dataset=" << dataset << '\n';
  os << "dim=" << dim << '\n'
     << "lr=" << format_double(lr) << '\n'
     << "batch_size=" << batch_size << '\n'
     << "max_epochs=" << max_epochs << '\n'
     << "eval_interval=" << eval_interval << '\n'
     << "patience=" << patience << '\n'
     << "alpha=" << format_double(weights.alpha) << '\n'
     << "beta=" << format_double(weights.beta) << '\n'
     << "gamma=" << format_double(weights.gamma) << '\n'
     << "seed=" << seed << '\n'
     << "optimizer=" << optimizer_name(optimizer) << '\n'
     << "pe_dim=" << pe_dim << '\n'
     << "gru_hidden=" << gru_hidden << '\n'
     << "cmd_order=" << cmd_order << '\n'
     << "sim_features=" << loss::sim_features_name(sim_features) << '\n'
     << "pool=" << model::pool_mode_name(pool) << '\n';
  if (!train_path.empty()) os << "train_path=" << train_path.string() << '\n';
  if (!valid_path.empty()) os << "valid_path=" << valid_path.string() << '\n';
  if (!test_path.empty()) os << "test_path=" << test_path.string() << '\n';
  if (synthetic) {
    os << "synthetic=" << data::pattern_name(synthetic->pattern) << '\n'
       << "synthetic_entities=" << synthetic->n_entities << '\n'
       << "synthetic_relations=" << synthetic->n_relations << '\n'
       << "synthetic_timestamps=" << synthetic->n_timestamps << '\n'
       << "synthetic_seed=" << synthetic->seed << '\n';
  }
  return os.str();
}

loss::LossOptions TrainConfig::loss_options() const {
  loss::LossOptions o;
  o.weights = weights;
  o.cmd_order = cmd_order;
  o.sim_features = sim_features;
  o.pool = pool;
  return o;
}

void TrainConfig::validate() const {
  if (dim == 0) throw ConfigError("dim must be positive");
  if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (eval_interval == 0) throw ConfigError("eval_interval must be positive");
  if (pe_dim == 0 || pe_dim % 2 != 0) throw ConfigError("pe_dim must be positive and even");
  if (gru_hidden == 0) throw ConfigError("gru_hidden must be positive");
  if (cmd_order < 1) throw ConfigError("cmd_order must be >= 1");
  weights.validate();
  const bool any_path = !train_path.empty() || !valid_path.empty() || !test_path.empty();
  const bool all_paths = !train_path.empty() && !valid_path.empty() && !test_path.empty();
  if (any_path && !all_paths) throw ConfigError("train_path, valid_path and test_path go together");
  if (!all_paths && !synthetic) throw ConfigError("config names no dataset (paths or synthetic)");
}

data::RawSplits load_raw_splits(const TrainConfig& config) {
  config.validate();
  if (!config.train_path.empty()) {
    return {data::parse_quadruple_file(config.train_path),
            data::parse_quadruple_file(config.valid_path),
            data::parse_quadruple_file(config.test_path)};
  }
  return data::generate_synthetic(*config.synthetic);
}

// ---- optimizer ----------------------------------------------------------------

void adagrad_update(std::span<diff::Parameter* const> params, double lr,
                    std::vector<diff::Tensor>& accumulators) {
  if (accumulators.size() != params.size()) {
    accumulators.clear();
    for (auto* p : params) accumulators.emplace_back(p->value.shape());
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& acc = accumulators[k];
    if (p.grad.shape() != p.value.shape()) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      acc[i] += g * g;
      p.value[i] -= lr * g / (std::sqrt(acc[i]) + 1e-10);
    }
  }
}

void sgd_update(std::span<diff::Parameter* const> params, double lr) {
  for (auto* p : params) {
    if (p->grad.shape() != p->value.shape()) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr * p->grad[i];
  }
}

void optimizer_step(model::ImeParams& params, double lr, OptimizerKind kind,
                    std::vector<diff::Tensor>& accumulators) {
  const auto list = params.parameters();
  if (kind == OptimizerKind::adagrad) {
    adagrad_update(list, lr, accumulators);
  } else {
    sgd_update(list, lr);
  }
  model::project_embeddings(params);
}

// ---- checkpoints --------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "IME-CHECKPOINT";

std::map<std::string, std::string> parse_manifest(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line == "end") return kv;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed manifest line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  throw CheckpointError("truncated file: manifest has no end marker");
}

const std::string& manifest_value(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw CheckpointError("manifest is missing '" + key + "'");
  return it->second;
}

template <class T>
T manifest_number(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto& text = manifest_value(kv, key);
  T value{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw CheckpointError("manifest value for '" + key + "' is malformed: '" + text + "'");
  }
  return value;
}

}  // namespace

std::string manifest_text(const Checkpoint& ckpt) {
  const auto& d = ckpt.params.dims;
  const auto& s = ckpt.state;
  std::ostringstream os;
  os << "version=" << kCheckpointVersion << '\n'
     << "dim=" << d.dim << '\n'
     << "pe_dim=" << d.pe_dim << '\n'
     << "gru_hidden=" << d.gru_hidden << '\n'
     << "n_pool=" << d.n_pool << '\n'
     << "n_entities=" << d.n_entities << '\n'
     << "n_relations=" << d.n_relations << '\n'
     << "n_timestamps=" << d.n_timestamps << '\n'
     << "alpha=" << format_double(ckpt.config.weights.alpha) << '\n'
     << "beta=" << format_double(ckpt.config.weights.beta) << '\n'
     << "gamma=" << format_double(ckpt.config.weights.gamma) << '\n'
     << "epoch=" << s.epoch << '\n'
     << "step=" << s.step << '\n'
     << "best_valid_mrr=" << format_double(s.best_valid_mrr) << '\n'
     << "best_epoch=" << s.best_epoch << '\n'
     << "evals_since_best=" << s.evals_since_best << '\n';
  std::istringstream cfg(ckpt.config.to_text());
  std::string line;
  while (std::getline(cfg, line)) os << "config." << line << '\n';
  return os.str();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream os(std::ios::binary);
  os << kMagic << ' ' << kCheckpointVersion << '\n' << manifest_text(ckpt) << "end\n";
  const auto params = ckpt.params.parameters();
  const auto best = ckpt.best_params.parameters();
  for (const auto* p : params) diff::write_tensor(os, p->name, p->value);
  for (const auto* p : best) diff::write_tensor(os, "best." + p->name, p->value);
  for (std::size_t k = 0; k < ckpt.state.accumulators.size(); ++k) {
    diff::write_tensor(os, "adagrad." + params[k]->name, ckpt.state.accumulators[k]);
  }
  diff::write_file_atomic(path, os.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<model::ModelDims>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw CheckpointError("truncated file: empty checkpoint");
  std::istringstream hs(header);
  std::string magic;
  int version = 0;
  if (!(hs >> magic >> version) || magic != kMagic) {
    throw CheckpointError(path.string() + " is not a checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto kv = parse_manifest(in);

  model::ModelDims dims;
  dims.dim = manifest_number<std::size_t>(kv, "dim");
  dims.pe_dim = manifest_number<std::size_t>(kv, "pe_dim");
  dims.gru_hidden = manifest_number<std::size_t>(kv, "gru_hidden");
  dims.n_pool = manifest_number<std::size_t>(kv, "n_pool");
  dims.n_entities = manifest_number<std::size_t>(kv, "n_entities");
  dims.n_relations = manifest_number<std::size_t>(kv, "n_relations");
  dims.n_timestamps = manifest_number<std::size_t>(kv, "n_timestamps");
  if (expected && !(*expected == dims)) {
    throw CheckpointError("checkpoint dims (D=" + std::to_string(dims.dim) + ", |E|=" +
                          std::to_string(dims.n_entities) + ") do not match the expected model (D=" +
                          std::to_string(expected->dim) + ", |E|=" +
                          std::to_string(expected->n_entities) + ")");
  }

  std::string config_text;
  for (const auto& [k, v] : kv) {
    if (k.rfind("config.", 0) == 0) config_text += k.substr(7) + "=" + v + "\n";
  }
  std::istringstream cfg(config_text);

  Checkpoint ckpt{TrainConfig::parse(cfg), model::ImeParams::zeros(dims),
                  model::ImeParams::zeros(dims), TrainState{}};
  if (ckpt.config.dim != dims.dim) throw CheckpointError("manifest dim disagrees with its config");
  ckpt.state.epoch = manifest_number<std::size_t>(kv, "epoch");
  ckpt.state.step = manifest_number<std::size_t>(kv, "step");
  ckpt.state.best_valid_mrr = manifest_number<double>(kv, "best_valid_mrr");
  ckpt.state.best_epoch = manifest_number<std::size_t>(kv, "best_epoch");
  ckpt.state.evals_since_best = manifest_number<std::size_t>(kv, "evals_since_best");

  auto params = ckpt.params.parameters();
  auto best = ckpt.best_params.parameters();
  std::map<std::string, diff::Tensor*> slots;
  for (auto* p : params) slots[p->name] = &p->value;
  for (auto* p : best) slots["best." + p->name] = &p->value;
  std::vector<diff::Tensor> accumulators(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) slots["adagrad." + params[k]->name] = &accumulators[k];

  std::map<std::string, bool> filled;
  while (in.peek() != std::char_traits<char>::eof()) {
    auto [name, tensor] = diff::read_tensor(in);
    auto it = slots.find(name);
    if (it == slots.end()) throw CheckpointError("unexpected tensor '" + name + "' in checkpoint");
    const bool is_acc = name.rfind("adagrad.", 0) == 0;
    if (!is_acc && tensor.shape() != it->second->shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + diff::shape_string(tensor.shape()) +
                            " but the manifest implies " + diff::shape_string(it->second->shape()));
    }
    *it->second = std::move(tensor);
    filled[name] = true;
  }
  for (const auto* p : params) {
    if (!filled.count(p->name) || !filled.count("best." + p->name)) {
      throw CheckpointError("truncated file: tensor '" + p->name + "' missing");
    }
  }
  bool any_acc = false;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (filled.count("adagrad." + params[k]->name)) {
      any_acc = true;
      if (accumulators[k].shape() != params[k]->value.shape()) {
        throw CheckpointError("accumulator for '" + params[k]->name + "' has the wrong shape");
      }
    } else if (any_acc) {
      throw CheckpointError("truncated file: accumulator for '" + params[k]->name + "' missing");
    }
  }
  if (any_acc) ckpt.state.accumulators = std::move(accumulators);
  for (auto* p : params) p->zero_grad();
  for (auto* p : best) p->zero_grad();
  return ckpt;
}

// ---- logging ------------------------------------------------------------------

std::string metrics_csv_header() {
  return "epoch,step,task,sim,diff,stru,total,valid_mrr,valid_h1,valid_h3,valid_h10";
}

std::string loss_csv_row(std::size_t epoch, std::size_t step, const loss::LossBreakdown& b) {
  std::ostringstream os;
  os << epoch << ',' << step << ',' << format_double(b.task) << ',' << format_double(b.sim) << ','
     << format_double(b.diff) << ',' << format_double(b.stru) << ',' << format_double(b.total);
  return os.str();
}

std::string metrics_csv_row(const EpochLog& log) {
  std::string row = loss_csv_row(log.epoch, log.step, log.loss);
  if (log.valid) {
    row += ',' + format_double(log.valid->mrr) + ',' + format_double(log.valid->hits1) + ',' +
           format_double(log.valid->hits3) + ',' + format_double(log.valid->hits10);
  } else {
    row += ",,,,";
  }
  return row;
}

// ---- trainer ------------------------------------------------------------------

model::ModelDims dims_for(const TrainConfig& config, const data::Dataset& dataset) {
  model::ModelDims d;
  d.n_entities = dataset.n_entities();
  d.n_relations = 2 * dataset.n_relations();
  d.n_timestamps = dataset.n_timestamps();
  d.dim = config.dim;
  d.pe_dim = config.pe_dim;
  d.gru_hidden = config.gru_hidden;
  return d;
}

Trainer::Trainer(TrainConfig config, data::Dataset dataset)
    : config_(std::move(config)), dataset_(std::move(dataset)) {
  config_.validate();
  filter_ = dataset_.filter_index();
  train_aug_ = data::augment_reciprocal(dataset_.train, dataset_.n_relations());
  valid_aug_ = data::augment_reciprocal(dataset_.valid, dataset_.n_relations());
  params_ = model::ImeParams::initialize(dims_for(config_, dataset_), config_.seed);
  best_params_ = params_;
  for (const auto* p : params_.parameters()) state_.accumulators.emplace_back(p->value.shape());
}

Trainer::Trainer(Checkpoint checkpoint, data::Dataset dataset)
    : config_(std::move(checkpoint.config)), dataset_(std::move(dataset)) {
  config_.validate();
  if (!(dims_for(config_, dataset_) == checkpoint.params.dims)) {
    throw CheckpointError("checkpoint dims do not match the dataset");
  }
  filter_ = dataset_.filter_index();
  train_aug_ = data::augment_reciprocal(dataset_.train, dataset_.n_relations());
  valid_aug_ = data::augment_reciprocal(dataset_.valid, dataset_.n_relations());
  params_ = std::move(checkpoint.params);
  best_params_ = std::move(checkpoint.best_params);
  state_ = std::move(checkpoint.state);
  if (state_.accumulators.empty()) {
    for (const auto* p : params_.parameters()) state_.accumulators.emplace_back(p->value.shape());
  }
}

loss::LossBreakdown Trainer::step(std::span<const data::Quadruple> batch) {
  for (auto* p : params_.parameters()) p->zero_grad();
  loss::LossBreakdown breakdown;
  try {
    diff::Graph g;
    auto terms = loss::total_loss(g, params_, batch, config_.loss_options());
    breakdown = terms.breakdown();
    g.backward(terms.total);
  } catch (const NumericError& e) {
    if (!diagnostic_path_.empty()) save_checkpoint(diagnostic_path_, checkpoint());
    throw TrainingDiverged("training diverged at step " + std::to_string(state_.step + 1) + ": " +
                           e.what());
  }
  optimizer_step(params_, config_.lr, config_.optimizer, state_.accumulators);
  ++state_.step;
  step_losses_.push_back(breakdown);
  const auto c = model::check_constraints(params_);
  worst_constraints_.sphere_max_deviation =
      std::max(worst_constraints_.sphere_max_deviation, c.sphere_max_deviation);
  worst_constraints_.ball_max_norm = std::max(worst_constraints_.ball_max_norm, c.ball_max_norm);
  return breakdown;
}

EpochLog Trainer::run_epoch() {
  const std::size_t epoch = state_.epoch + 1;
  std::vector<data::Quadruple> order = train_aug_;
  std::seed_seq seq{static_cast<std::uint32_t>(config_.seed),
                    static_cast<std::uint32_t>(config_.seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  detail::fisher_yates(std::span(order), rng);

  EpochLog log;
  log.epoch = epoch;
  std::size_t steps = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
    const std::size_t end = std::min(order.size(), begin + config_.batch_size);
    const auto b = step(std::span(order).subspan(begin, end - begin));
    log.loss.task += b.task;
    log.loss.sim += b.sim;
    log.loss.diff += b.diff;
    log.loss.stru += b.stru;
    log.loss.total += b.total;
    ++steps;
  }
  if (steps > 0) {
    const double inv = 1.0 / static_cast<double>(steps);
    log.loss.task *= inv;
    log.loss.sim *= inv;
    log.loss.diff *= inv;
    log.loss.stru *= inv;
    log.loss.total *= inv;
  }
  state_.epoch = epoch;
  log.step = state_.step;
  return log;
}

void Trainer::train(const std::function<void(const EpochLog&)>& on_epoch) {
  while (state_.epoch < config_.max_epochs) {
    EpochLog log = run_epoch();
    if (log.epoch % config_.eval_interval == 0) {
      if (valid_aug_.empty()) {
        best_params_ = params_;
        state_.best_epoch = log.epoch;
      } else {
        log.valid = evaluate_split(valid_aug_, false);
        if (log.valid->mrr > state_.best_valid_mrr) {
          state_.best_valid_mrr = log.valid->mrr;
          state_.best_epoch = log.epoch;
          state_.evals_since_best = 0;
          best_params_ = params_;
        } else {
          ++state_.evals_since_best;
        }
      }
    }
    if (on_epoch) on_epoch(log);
    if (state_.evals_since_best >= config_.patience) break;
  }
}

eval::RankingReport Trainer::evaluate_split(std::span<const data::Quadruple> split, bool use_best) const {
  eval::EvalOptions options;
  options.pool = config_.pool;
  return eval::evaluate(use_best ? best_params_ : params_, split, filter_, options);
}

Checkpoint Trainer::checkpoint() const { return {config_, params_, best_params_, state_}; }

// ---- drivers ------------------------------------------------------------------

RunSummary run_training(const TrainConfig& config, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto raw = load_raw_splits(config);
  auto dataset = data::index_dataset(raw);
  std::vector<std::string> stats_issues;
  if (data::reference_stats(config.dataset)) {
    stats_issues = data::check_reference_stats(config.dataset, data::dataset_stats(raw, dataset.vocab));
  }
  data::write_vocabulary(out_dir, dataset.vocab);
  const auto test_aug = data::augment_reciprocal(dataset.test, dataset.n_relations());
  const auto valid_aug = data::augment_reciprocal(dataset.valid, dataset.n_relations());

  Trainer trainer(config, std::move(dataset));
  trainer.set_diagnostic_path(out_dir / "diverged.bin");
  {
    std::ofstream metrics(out_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!metrics) throw Error("cannot write " + (out_dir / "metrics.csv").string());
    metrics << metrics_csv_header() << '\n';
    trainer.train([&](const EpochLog& log) { metrics << metrics_csv_row(log) << '\n' << std::flush; });
  }
  const auto ckpt = trainer.checkpoint();
  save_checkpoint(out_dir / "checkpoint.bin", ckpt);
  diff::write_file_atomic(out_dir / "manifest.txt", manifest_text(ckpt));

  RunSummary summary;
  summary.state = trainer.state();
  summary.stats_issues = std::move(stats_issues);
  std::ostringstream report;
  report << eval::report_csv_header() << '\n';
  if (!valid_aug.empty()) {
    summary.valid = trainer.evaluate_split(valid_aug, true);
    report << eval::report_csv_row("valid", summary.valid) << '\n';
  }
  if (!test_aug.empty()) {
    summary.test = trainer.evaluate_split(test_aug, true);
    report << eval::report_csv_row("test", summary.test) << '\n';
  }
  diff::write_file_atomic(out_dir / "report.csv", report.str());
  return summary;
}

std::vector<std::pair<double, RunSummary>> run_sweep(const TrainConfig& base, std::string_view param,
                                                     std::span<const double> values,
                                                     const std::filesystem::path& out_dir) {
  if (param != "alpha" && param != "beta" && param != "gamma" && param != "dim") {
    throw ConfigError("sweep parameter must be alpha|beta|gamma|dim, got '" + std::string(param) + "'");
  }
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::filesystem::create_directories(out_dir);
  std::vector<std::pair<double, RunSummary>> results;
  std::ostringstream csv;
  csv << "param,value,best_epoch,valid_mrr,test_mrr,test_h1,test_h3,test_h10\n";
  for (double v : values) {
    TrainConfig cfg = base;
    std::string text;
    if (param == "dim") {
      if (v < 1 || v != std::floor(v)) throw ConfigError("dim values must be positive integers");
      text = std::to_string(static_cast<std::size_t>(v));
    } else {
      text = format_double(v);
    }
    cfg.set(param, text);
    auto summary = run_training(cfg, out_dir / (std::string(param) + "_" + text));
    csv << param << ',' << text << ',' << summary.state.best_epoch << ','
        << format_double(summary.valid.mrr) << ',' << format_double(summary.test.mrr) << ','
        << format_double(summary.test.hits1) << ',' << format_double(summary.test.hits3) << ','
        << format_double(summary.test.hits10) << '\n';
    results.emplace_back(v, std::move(summary));
  }
  diff::write_file_atomic(out_dir / "sweep.csv", csv.str());
  return results;
}

}  // namespace ime::train
