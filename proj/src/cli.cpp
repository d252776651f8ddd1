#include "taylorglo/cli.hpp"

#include "taylorglo/evolution.hpp"
#include "taylorglo/stats.hpp"
#include "taylorglo/taylor.hpp"
#include "taylorglo/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace taylorglo {

namespace fs = std::filesystem;

namespace {

int env_workers(int fallback) {
  if (const char* v = std::getenv("TAYLORGLO_WORKERS")) {
    const int n = std::atoi(v);
    if (n > 0) return n;
  }
  return fallback;
}

std::vector<double> theta_argument(const std::string& arg) {
  if (fs::exists(arg)) return load_theta(arg);
  return parse_theta_list(arg);
}

int order_for_theta(std::size_t len, int requested) {
  if (requested >= 0) {
    if (classification_table(requested, true).param_count() != len)
      throw std::invalid_argument("theta has " + std::to_string(len) + " values; order " +
                                  std::to_string(requested) + " expects " +
                                  std::to_string(classification_table(requested, true).param_count()));
    return requested;
  }
  for (int k = 0; k <= 8; ++k)
    if (classification_table(k, true).param_count() == len) return k;
  throw std::invalid_argument("no trimmed Taylor order has " + std::to_string(len) + " parameters");
}

std::vector<double> read_accuracies(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::vector<double> out;
  std::ptrdiff_t column = -1;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      first = false;
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i] == "accuracy" || cells[i] == "test_accuracy") column = static_cast<std::ptrdiff_t>(i);
      if (column >= 0) continue;
      column = 0;  // headerless single column
    }
    if (static_cast<std::size_t>(column) >= cells.size())
      throw std::runtime_error(path.string() + ": short row");
    out.push_back(std::stod(cells[static_cast<std::size_t>(column)]));
  }
  return out;
}

template <typename Fn>
void with_output(const std::string& path, std::ostream& fallback, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(fallback);
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  fn(out);
  if (!out) throw std::runtime_error("failed writing " + path);
}

struct TrainArgs {
  std::string dataset = "synthetic";
  int steps = 2000;
  int batch = 100;
  double lr = 0.01;
  std::vector<int> hidden{128};
  int workers = 1;
};

void add_train_args(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--dataset", a.dataset, "synthetic[:key=val,...] or mnist:<dir>[:<train_limit>]");
  cmd->add_option("--steps", a.steps, "SGD steps")->check(CLI::PositiveNumber);
  cmd->add_option("--batch", a.batch, "minibatch size")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", a.lr, "learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--hidden", a.hidden, "hidden layer widths")->delimiter(',');
  cmd->add_option("--workers", a.workers, "parallel trainings (TAYLORGLO_WORKERS overrides)");
}

TrainConfig train_config(const TrainArgs& a) {
  TrainConfig tc;
  tc.steps = a.steps;
  tc.batch_size = a.batch;
  tc.learning_rate = a.lr;
  return tc;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Taylor-polynomial loss function metalearning"};
  app.require_subcommand(1);

  // evolve
  std::string config_path, run_dir = "run";
  bool resume = false;
  auto* evolve = app.add_subcommand("evolve", "run CMA-ES over Taylor loss parameters");
  evolve->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  evolve->add_option("--out", run_dir, "run directory");
  evolve->add_flag("--resume", resume, "continue from the latest checkpoint in --out");

  // train
  TrainArgs train_args;
  std::string loss_spec, accs_out, model_out;
  int seeds = 5, order = -1;
  std::uint64_t first_seed = 0;
  auto* train = app.add_subcommand("train", "train seeded models under a loss");
  train->add_option("--loss", loss_spec, "crossentropy | taylor:<theta list or file>")->required();
  train->add_option("--seeds", seeds, "number of seeded runs")->check(CLI::PositiveNumber);
  train->add_option("--first-seed", first_seed, "seed of the first run");
  train->add_option("--order", order, "Taylor order (inferred from theta length by default)");
  train->add_option("--out", accs_out, "accuracy CSV (stdout if omitted)");
  train->add_option("--save-model", model_out, "checkpoint of the first seed's model");
  add_train_args(train, train_args);

  // compare
  std::string path_a, path_b;
  auto* compare = app.add_subcommand("compare", "one-tailed Welch t-test, H1: mean(a) > mean(b)");
  compare->add_option("--a", path_a, "accuracy CSV")->required()->check(CLI::ExistingFile);
  compare->add_option("--b", path_b, "accuracy CSV")->required()->check(CLI::ExistingFile);

  // plot-loss
  std::string theta_arg, plot_out;
  int resolution = 1000, plot_order = -1;
  auto* plot = app.add_subcommand("plot-loss", "binary-classification loss curve");
  plot->add_option("--theta", theta_arg, "theta list, CSV file, or best.json")->required();
  plot->add_option("--out", plot_out, "output .csv or .svg (CSV to stdout if omitted)");
  plot->add_option("--resolution", resolution, "number of samples")->check(CLI::Range(2, 10000000));
  plot->add_option("--order", plot_order, "Taylor order (inferred by default)");

  // basin
  std::string model_path, basin_out, basin_dataset = "synthetic", split_arg = "validation";
  int grid = 21;
  double extent = 1.0;
  std::uint64_t basin_seed = 0;
  auto* basin = app.add_subcommand("basin", "accuracy over a 2D weight-space slice");
  basin->add_option("--model", model_path, "model checkpoint")->required()->check(CLI::ExistingFile);
  basin->add_option("--dataset", basin_dataset, "dataset spec");
  basin->add_option("--out", basin_out, "output CSV (stdout if omitted)");
  basin->add_option("--grid", grid, "odd lattice size");
  basin->add_option("--extent", extent, "half-width of the slice");
  basin->add_option("--seed", basin_seed, "direction seed");
  basin->add_option("--split", split_arg, "train | validation | test");

  // sweep
  TrainArgs sweep_args;
  std::vector<double> fractions{0.1, 0.25, 0.5, 1.0};
  std::string sweep_theta, sweep_out;
  int sweep_seeds = 5;
  auto* sweep = app.add_subcommand("sweep", "cross-entropy vs evolved loss on reduced training sets");
  sweep->add_option("--fractions", fractions, "training-set fractions")->delimiter(',');
  sweep->add_option("--theta", sweep_theta, "evolved theta (list, CSV file, or best.json)")->required();
  sweep->add_option("--seeds", sweep_seeds, "seeds per cell")->check(CLI::PositiveNumber);
  sweep->add_option("--out", sweep_out, "output CSV (stdout if omitted)");
  add_train_args(sweep, sweep_args);

  // param-count
  int pc_n = 2, pc_k = 3;
  bool pc_trimmed = false;
  auto* pcount = app.add_subcommand("param-count", "number of Taylor parameters");
  pcount->add_option("--n", pc_n, "variables")->required();
  pcount->add_option("--k", pc_k, "order")->required();
  pcount->add_flag("--trimmed", pc_trimmed, "drop terms constant in the last variable");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*evolve) {
      std::ifstream in(config_path);
      EvolutionConfig cfg = nlohmann::json::parse(in).get<EvolutionConfig>();
      cfg.parallelism = env_workers(cfg.parallelism);
      const Dataset data = make_dataset(cfg.dataset);
      RunOptions opts;
      opts.run_dir = run_dir;
      opts.resume = resume;
      opts.on_generation = [&](int gen, const GenerationLog& log) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "gen %3d  max %.4f  mean %.4f  best %.4f\n", gen,
                      log.max_fitness.back(), log.mean_fitness.back(), log.best_so_far.back());
        err << buf << std::flush;
      };
      const auto log = run_evolution(cfg, data, opts);
      out << best_to_json(*log.best, cfg.order).dump(2) << "\n";
      return 0;
    }

    if (*train) {
      const Dataset data = make_dataset(parse_dataset_spec(train_args.dataset));
      std::unique_ptr<Loss> loss;
      if (loss_spec == "crossentropy") {
        loss = std::make_unique<CrossEntropyLoss>();
      } else if (loss_spec.rfind("taylor:", 0) == 0) {
        auto theta = theta_argument(loss_spec.substr(7));
        const int k = order_for_theta(theta.size(), order);
        loss = std::make_unique<TaylorLoss>(classification_table(k, true), std::move(theta));
      } else {
        throw std::invalid_argument("--loss must be 'crossentropy' or 'taylor:<theta>'");
      }
      MlpModel first;
      const auto runs = train_seeded_models(*loss, data, train_args.hidden, train_config(train_args),
                                            seeds, first_seed, env_workers(train_args.workers),
                                            model_out.empty() ? nullptr : &first);
      if (!model_out.empty()) first.save(model_out);
      with_output(accs_out, out, [&](std::ostream& os) {
        os << "seed,accuracy,validation_accuracy,diverged\n";
        char buf[96];
        for (const auto& r : runs) {
          std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%d\n", static_cast<unsigned long long>(r.seed),
                        r.test_accuracy, r.validation_accuracy, r.diverged ? 1 : 0);
          os << buf;
        }
      });
      return 0;
    }

    if (*compare) {
      auto report = compare_samples(path_a, read_accuracies(path_a), path_b, read_accuracies(path_b));
      out << to_json(report).dump(2) << "\n";
      return 0;
    }

    if (*plot) {
      const auto theta = theta_argument(theta_arg);
      const int k = order_for_theta(theta.size(), plot_order);
      const auto curve = binary_modality_curve(classification_table(k, true), theta, resolution);
      const bool svg = plot_out.size() >= 4 && plot_out.substr(plot_out.size() - 4) == ".svg";
      with_output(plot_out, out, [&](std::ostream& os) {
        if (svg) write_curve_svg(os, curve);
        else write_curve_csv(os, curve);
      });
      return 0;
    }

    if (*basin) {
      const Dataset data = make_dataset(parse_dataset_spec(basin_dataset));
      const MlpModel model = MlpModel::load(model_path);
      std::mt19937_64 rng(basin_seed);
      const auto d1 = basin_direction(model, rng);
      const auto d2 = basin_direction(model, rng);
      const auto slice = basin_slice(model, d1, d2, grid, extent, data, parse_split(split_arg));
      with_output(basin_out, out, [&](std::ostream& os) { write_basin_csv(os, slice); });
      return 0;
    }

    if (*sweep) {
      const Dataset data = make_dataset(parse_dataset_spec(sweep_args.dataset));
      SweepConfig sc;
      sc.fractions = fractions;
      sc.theta = theta_argument(sweep_theta);
      sc.order = order_for_theta(sc.theta.size(), -1);
      sc.hidden = sweep_args.hidden;
      sc.train = train_config(sweep_args);
      sc.seeds = sweep_seeds;
      sc.parallelism = env_workers(sweep_args.workers);
      const auto rows = reduced_dataset_sweep(sc, data);
      with_output(sweep_out, out, [&](std::ostream& os) { write_sweep_csv(os, rows); });
      return 0;
    }

    if (*pcount) {
      const std::size_t count = pc_trimmed
                                    ? build_term_table(pc_n, pc_k, true, pc_n - 1).param_count()
                                    : param_count(pc_n, pc_k);
      out << count << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace taylorglo
