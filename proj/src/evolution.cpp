#include "taylorglo/evolution.hpp"

#include "taylorglo/cmaes.hpp"
#include "taylorglo/stats.hpp"
#include "taylorglo/taylor.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace taylorglo {

namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> words) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (std::uint64_t w : words) h = mix(h ^ mix(w));
  return h;
}

// ---------------------------------------------------------------------------
// Datasets and configuration

Dataset make_dataset(const DatasetSpec& spec) {
  if (spec.kind == "synthetic") {
    Dataset d = synthetic_dataset(spec.seed, spec.n_classes, spec.input_dim, spec.n_per_class,
                                  spec.separation);
    return spec.train_limit > 0 ? d.with_train_limit(spec.train_limit) : d;
  }
  if (spec.kind == "mnist") {
    if (spec.mnist_dir.empty()) throw std::invalid_argument("mnist dataset needs a directory");
    return load_mnist(spec.mnist_dir, spec.train_limit);
  }
  throw std::invalid_argument("unknown dataset kind '" + spec.kind + "'");
}

DatasetSpec parse_dataset_spec(const std::string& text) {
  DatasetSpec spec;
  const auto colon = text.find(':');
  spec.kind = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (spec.kind == "mnist") {
    const auto c2 = rest.rfind(':');
    if (c2 != std::string::npos && c2 + 1 < rest.size() &&
        rest.find_first_not_of("0123456789", c2 + 1) == std::string::npos) {
      spec.mnist_dir = rest.substr(0, c2);
      spec.train_limit = std::stoull(rest.substr(c2 + 1));
    } else {
      spec.mnist_dir = rest;
    }
    return spec;
  }
  if (spec.kind != "synthetic") throw std::invalid_argument("unknown dataset kind '" + spec.kind + "'");
  std::stringstream ss(rest);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("dataset option '" + item + "' lacks '='");
    const std::string key = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    if (key == "seed") spec.seed = std::stoull(val);
    else if (key == "classes") spec.n_classes = std::stoi(val);
    else if (key == "dim") spec.input_dim = std::stoi(val);
    else if (key == "per_class") spec.n_per_class = std::stoi(val);
    else if (key == "sep") spec.separation = std::stod(val);
    else if (key == "train_limit") spec.train_limit = std::stoull(val);
    else throw std::invalid_argument("unknown dataset option '" + key + "'");
  }
  return spec;
}

void to_json(nlohmann::json& j, const DatasetSpec& d) {
  j = {{"kind", d.kind},
       {"seed", d.seed},
       {"n_classes", d.n_classes},
       {"input_dim", d.input_dim},
       {"n_per_class", d.n_per_class},
       {"separation", d.separation},
       {"mnist_dir", d.mnist_dir},
       {"train_limit", d.train_limit}};
}

void from_json(const nlohmann::json& j, DatasetSpec& d) {
  d = DatasetSpec{};
  d.kind = j.value("kind", d.kind);
  d.seed = j.value("seed", d.seed);
  d.n_classes = j.value("n_classes", d.n_classes);
  d.input_dim = j.value("input_dim", d.input_dim);
  d.n_per_class = j.value("n_per_class", d.n_per_class);
  d.separation = j.value("separation", d.separation);
  d.mnist_dir = j.value("mnist_dir", d.mnist_dir);
  d.train_limit = j.value("train_limit", d.train_limit);
}

void to_json(nlohmann::json& j, const EvolutionConfig& c) {
  j = {{"order", c.order},
       {"lambda", c.lambda},
       {"sigma0", c.sigma0},
       {"generations", c.generations},
       {"train",
        {{"steps", c.train.steps},
         {"batch_size", c.train.batch_size},
         {"learning_rate", c.train.learning_rate}}},
       {"hidden", c.hidden},
       {"retry",
        {{"accuracy_floor", c.retry.accuracy_floor},
         {"check_at", c.retry.check_at},
         {"max_retries", c.retry.max_retries}}},
       {"dataset", c.dataset},
       {"fraction_of_train_data", c.fraction_of_train_data},
       {"seed", c.seed},
       {"parallelism", c.parallelism}};
}

void from_json(const nlohmann::json& j, EvolutionConfig& c) {
  static const char* known[] = {"order", "lambda", "sigma0", "generations", "train", "hidden", "retry",
                                "dataset", "fraction_of_train_data", "seed", "parallelism"};
  for (const auto& [key, _] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw std::invalid_argument("unknown config key '" + key + "'");

  c = EvolutionConfig{};
  c.order = j.value("order", c.order);
  c.lambda = j.value("lambda", c.lambda);
  c.sigma0 = j.value("sigma0", c.sigma0);
  c.generations = j.value("generations", c.generations);
  if (j.contains("train")) {
    const auto& t = j["train"];
    c.train.steps = t.value("steps", c.train.steps);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
  }
  c.hidden = j.value("hidden", c.hidden);
  if (j.contains("retry")) {
    const auto& r = j["retry"];
    c.retry.accuracy_floor = r.value("accuracy_floor", c.retry.accuracy_floor);
    c.retry.check_at = r.value("check_at", c.retry.check_at);
    c.retry.max_retries = r.value("max_retries", c.retry.max_retries);
  }
  if (j.contains("dataset")) c.dataset = j["dataset"].get<DatasetSpec>();
  c.fraction_of_train_data = j.value("fraction_of_train_data", c.fraction_of_train_data);
  c.seed = j.value("seed", c.seed);
  c.parallelism = j.value("parallelism", c.parallelism);

  if (c.generations < 1) throw std::invalid_argument("generations must be >= 1");
  if (!(c.fraction_of_train_data > 0.0 && c.fraction_of_train_data <= 1.0))
    throw std::invalid_argument("fraction_of_train_data must be in (0, 1]");
  if (c.retry.max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
}

int resolve_check_at(const EvolutionConfig& config, const Dataset& data) {
  if (config.retry.check_at > 0) return std::min(config.retry.check_at, config.train.steps);
  const double per_epoch = static_cast<double>(data.indices(Split::Train).size()) /
                           std::max(1, config.train.batch_size);
  const int ten_epochs = std::max(1, static_cast<int>(std::lround(10.0 * per_epoch)));
  return std::min(ten_epochs, config.train.steps);
}

// ---------------------------------------------------------------------------
// Candidate evaluation

namespace {

std::vector<int> model_dims(const std::vector<int>& hidden, const Dataset& data) {
  std::vector<int> dims{static_cast<int>(data.input_dim())};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(data.n_classes());
  return dims;
}

}  // namespace

AttemptResult run_attempt(const Loss& loss, const EvolutionConfig& config, const Dataset& data,
                          std::uint64_t attempt_seed, int check_at) {
  AttemptResult r;
  r.initial = MlpModel(model_dims(config.hidden, data), derive_seed(attempt_seed, {1}));
  r.trained = r.initial;
  TrainConfig tc = config.train;
  tc.seed = derive_seed(attempt_seed, {2});
  tc.eval_interval = check_at;
  const double floor = config.retry.accuracy_floor;
  r.outcome = train_sgd(r.trained, data, loss, tc, [&](int step, double acc) {
    return !(step == check_at && acc < floor);
  });
  return r;
}

CandidateRecord evaluate_candidate(std::span<const double> theta, const EvolutionConfig& config,
                                   const Dataset& data, std::uint64_t candidate_seed) {
  const auto start = std::chrono::steady_clock::now();
  CandidateRecord rec;
  rec.theta.assign(theta.begin(), theta.end());
  try {
    const Dataset train_data = config.fraction_of_train_data < 1.0
                                   ? data.with_train_fraction(config.fraction_of_train_data)
                                   : data;
    const TaylorLoss loss(classification_table(config.order, true), rec.theta);
    const int check_at = resolve_check_at(config, train_data);
    for (int attempt = 0; attempt <= config.retry.max_retries; ++attempt) {
      const auto r = run_attempt(loss, config, train_data,
                                 derive_seed(candidate_seed, {static_cast<std::uint64_t>(attempt)}), check_at);
      rec.retries_used = attempt;
      rec.diverged = r.outcome.diverged;
      rec.fitness = r.outcome.accuracy;
      if (!r.outcome.diverged && !r.outcome.aborted) break;
    }
  } catch (const std::exception&) {
    rec.diverged = true;
    rec.fitness = 0.0;
  }
  if (!std::isfinite(rec.fitness)) rec.fitness = 0.0;
  rec.fitness = std::clamp(rec.fitness, 0.0, 1.0);
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t n_threads = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Logs and run directories

std::size_t GenerationLog::evaluation_count() const {
  std::size_t n = 0;
  for (const auto& gen : generations)
    for (const auto& r : gen) n += 1 + static_cast<std::size_t>(r.retries_used);
  return n;
}

void GenerationLog::append(std::vector<CandidateRecord> records) {
  double sum = 0.0, top = 0.0;
  for (const auto& r : records) {
    sum += r.fitness;
    top = std::max(top, r.fitness);
    if (!best || r.fitness > best->fitness) best = r;
  }
  mean_fitness.push_back(records.empty() ? 0.0 : sum / static_cast<double>(records.size()));
  max_fitness.push_back(top);
  best_so_far.push_back(best ? best->fitness : 0.0);
  generations.push_back(std::move(records));
}

void write_generations_csv_header(std::ostream& os, std::size_t dim) {
  os << "generation,index,fitness,retries,diverged";
  for (std::size_t i = 0; i < dim; ++i) os << ",theta_" << i;
  os << '\n';
}

void write_generation_rows(std::ostream& os, const std::vector<CandidateRecord>& records) {
  char buf[40];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.17g", r.fitness);
    os << r.generation << ',' << r.index << ',' << buf << ',' << r.retries_used << ','
       << (r.diverged ? 1 : 0);
    for (double t : r.theta) {
      std::snprintf(buf, sizeof buf, ",%.17g", t);
      os << buf;
    }
    os << '\n';
  }
}

std::vector<CandidateRecord> read_generations_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<CandidateRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 5) throw std::runtime_error(path.string() + ": malformed row");
    CandidateRecord r;
    r.generation = std::stoi(cells[0]);
    r.index = std::stoi(cells[1]);
    r.fitness = std::strtod(cells[2].c_str(), nullptr);
    r.retries_used = std::stoi(cells[3]);
    r.diverged = cells[4] == "1";
    for (std::size_t i = 5; i < cells.size(); ++i) r.theta.push_back(std::strtod(cells[i].c_str(), nullptr));
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json best_to_json(const CandidateRecord& best, int order) {
  return {{"theta", best.theta},   {"fitness", best.fitness}, {"generation", best.generation},
          {"index", best.index},   {"order", order},          {"trimmed", true}};
}

std::vector<double> parse_theta_list(const std::string& text) {
  std::vector<double> out;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument("bad number '" + token + "' in theta");
    out.push_back(v);
    token.clear();
  };
  for (char ch : text) {
    if (ch == ',' || ch == ' ' || ch == '\n' || ch == '\t' || ch == '\r') flush();
    else token += ch;
  }
  flush();
  if (out.empty()) throw std::invalid_argument("empty theta");
  return out;
}

std::vector<double> load_theta(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    const auto j = nlohmann::json::parse(text);
    return j.at("theta").get<std::vector<double>>();
  }
  return parse_theta_list(text);
}

namespace {

fs::path checkpoint_path(const fs::path& dir, int generation) {
  char name[32];
  std::snprintf(name, sizeof name, "cma_gen%04d.json", generation);
  return dir / "checkpoints" / name;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

GenerationLog run_evolution(const EvolutionConfig& config, const Dataset& data,
                            const RunOptions& options) {
  const TermTable table = classification_table(config.order, true);
  CmaesConfig cc;
  cc.dim = static_cast<int>(table.param_count());
  cc.lambda = config.lambda;
  cc.sigma0 = config.sigma0;
  cc.seed = config.seed;
  cc.max_generations = config.generations;
  CmaesState state = cma_init(cc);
  Rng rng(derive_seed(config.seed, {0xC3A5}));
  GenerationLog log;

  const auto& dir = options.run_dir;
  if (dir) {
    fs::create_directories(*dir / "checkpoints");
    nlohmann::json cj = config;
    write_text(*dir / "config.json", cj.dump(2) + "\n");
  }

  int start_gen = 0;
  if (dir && options.resume) {
    int latest = -1;
    for (int g = config.generations; g >= 1; --g)
      if (fs::exists(checkpoint_path(*dir, g))) {
        latest = g;
        break;
      }
    if (latest > 0) {
      std::ifstream in(checkpoint_path(*dir, latest));
      cma_from_json(nlohmann::json::parse(in), state, rng);
      auto records = read_generations_csv(*dir / "generations.csv");
      std::vector<std::vector<CandidateRecord>> by_gen(static_cast<std::size_t>(latest));
      for (auto& r : records)
        if (r.generation < latest) by_gen[static_cast<std::size_t>(r.generation)].push_back(std::move(r));
      for (auto& g : by_gen) log.append(std::move(g));
      start_gen = latest;
    }
  }
  if (dir) {
    // Rewrite so a resumed run drops rows from any generation that never
    // reached its checkpoint.
    std::ostringstream os;
    write_generations_csv_header(os, table.param_count());
    for (const auto& g : log.generations) write_generation_rows(os, g);
    write_text(*dir / "generations.csv", os.str());
  }

  for (int gen = start_gen; gen < config.generations; ++gen) {
    const auto population = cma_ask(state, rng);
    std::vector<CandidateRecord> records(population.size());
    parallel_for(population.size(), config.parallelism, [&](std::size_t i) {
      const Vector& x = population[i];
      const std::uint64_t seed =
          derive_seed(config.seed, {static_cast<std::uint64_t>(gen), static_cast<std::uint64_t>(i)});
      records[i] = evaluate_candidate(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                                      config, data, seed);
      records[i].generation = gen;
      records[i].index = static_cast<int>(i);
    });

    std::vector<double> objective(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) objective[i] = -records[i].fitness;
    cma_tell(state, population, objective);

    if (dir) {
      std::ofstream csv(*dir / "generations.csv", std::ios::app);
      write_generation_rows(csv, records);
      if (!csv) throw std::runtime_error("failed appending generations.csv");
    }
    log.append(std::move(records));
    if (dir) {
      write_text(checkpoint_path(*dir, gen + 1), cma_to_json(state, rng).dump() + "\n");
      write_text(*dir / "best.json", best_to_json(*log.best, config.order).dump(2) + "\n");
    }
    if (options.on_generation) options.on_generation(gen, log);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Final trainings and the reduced-data sweep

std::vector<TrainedRun> train_seeded_models(const Loss& loss, const Dataset& data,
                                            const std::vector<int>& hidden, const TrainConfig& train,
                                            int n_seeds, std::uint64_t first_seed, int parallelism,
                                            MlpModel* first_model) {
  if (n_seeds < 1) throw std::invalid_argument("need at least one seed");
  std::vector<TrainedRun> runs(static_cast<std::size_t>(n_seeds));
  const auto dims = model_dims(hidden, data);
  const bool has_test = !data.indices(Split::Test).empty();
  parallel_for(runs.size(), parallelism, [&](std::size_t i) {
    const std::uint64_t seed = first_seed + i;
    MlpModel model(dims, derive_seed(seed, {1}));
    TrainConfig tc = train;
    tc.seed = derive_seed(seed, {2});
    const auto outcome = train_sgd(model, data, loss, tc);
    runs[i].seed = seed;
    runs[i].diverged = outcome.diverged;
    runs[i].validation_accuracy = outcome.accuracy;
    runs[i].test_accuracy = has_test ? accuracy(model, data, Split::Test) : outcome.accuracy;
    if (i == 0 && first_model) *first_model = model;
  });
  return runs;
}

namespace {

ArmSummary summarize(const std::vector<TrainedRun>& runs) {
  ArmSummary s;
  s.total = static_cast<int>(runs.size());
  for (const auto& r : runs)
    if (!r.diverged) s.accuracies.push_back(r.test_accuracy);
  s.successful = static_cast<int>(s.accuracies.size());
  s.mean = mean(s.accuracies);
  s.stddev = sample_stddev(s.accuracies);
  return s;
}

}  // namespace

std::vector<SweepRow> reduced_dataset_sweep(const SweepConfig& config, const Dataset& data) {
  const CrossEntropyLoss ce;
  const TaylorLoss tg(classification_table(config.order, true), config.theta);
  std::vector<SweepRow> rows;
  for (double f : config.fractions) {
    const Dataset sub = data.with_train_fraction(f);
    const auto ce_runs = train_seeded_models(ce, sub, config.hidden, config.train, config.seeds,
                                             config.first_seed, config.parallelism);
    const auto tg_runs = train_seeded_models(tg, sub, config.hidden, config.train, config.seeds,
                                             config.first_seed, config.parallelism);
    SweepRow row;
    row.fraction = f;
    row.crossentropy = summarize(ce_runs);
    row.taylor = summarize(tg_runs);
    for (std::size_t i = 0; i < ce_runs.size(); ++i)
      row.paired_gap.push_back(tg_runs[i].test_accuracy - ce_runs[i].test_accuracy);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "fraction,ce_mean,ce_stddev,ce_successful,ce_total,taylor_mean,taylor_stddev,"
        "taylor_successful,taylor_total,mean_gap\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%d,%d,%.9g,%.9g,%d,%d,%.9g\n", r.fraction,
                  r.crossentropy.mean, r.crossentropy.stddev, r.crossentropy.successful,
                  r.crossentropy.total, r.taylor.mean, r.taylor.stddev, r.taylor.successful,
                  r.taylor.total, mean(r.paired_gap));
    os << buf;
  }
}

}  // namespace taylorglo
