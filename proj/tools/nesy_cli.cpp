// Command-line front end. Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "nesy/dcopt.hpp"
#include "nesy/error.hpp"
#include "nesy/perception.hpp"
#include "nesy/reasoner.hpp"
#include "nesy/tasks.hpp"
#include "nesy/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nesy;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError("'" + path + "' is not valid JSON: " + e.what());
  }
}

// "a.b=3" sets /a/b; the value is parsed as JSON and falls back to a string.
void apply_override(json& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("override '" + kv + "' is not of the form key=value");
  std::string path = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  std::string pointer = "/";
  for (char ch : path) pointer += ch == '.' ? '/' : ch;
  cfg[json::json_pointer(pointer)] = value;
}

int threads_from_env() {
  const char* env = std::getenv("NESY_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw UsageError(std::string("NESY_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<int>(n);
}

struct Common {
  std::string out = "out";
  std::string config_path;
  std::vector<std::string> overrides;
};

// File values, then overrides; unknown keys are rejected by the parser.
TrainConfig resolve_config(const Common& c, json base = json::object()) {
  if (!c.config_path.empty()) base.update(read_json(c.config_path));
  for (const auto& kv : c.overrides) apply_override(base, kv);
  return train_config_from_json(base);
}

void write_snapshot(const Common& c, const std::string& command, const json& flags, const TrainConfig& cfg) {
  fs::create_directories(c.out);
  json snap{{"command", command}, {"flags", flags}, {"config", to_json(cfg)}, {"threads", threads_from_env()}};
  atomic_write((fs::path(c.out) / (command + ".config.json")).string(), snap.dump(2) + "\n");
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--out", c.out, "Output directory")->capture_default_str();
  sub->add_option("--config", c.config_path, "JSON config file mirroring the training keys");
  sub->add_option("--set", c.overrides, "Override key=value (dot paths allowed); repeatable");
}

CardinalitySystem load_system(const std::string& path) {
  if (fs::path(path).extension() == ".opb") return parse_opb(read_file(path));
  return system_from_json(read_json(path));
}

std::optional<MlpModel> load_model(const std::string& checkpoint) {
  if (checkpoint.empty()) return std::nullopt;
  return load_checkpoint(checkpoint).first.model;
}

Dataset load_dataset(const std::string& path) { return dataset_from_jsonl(read_file(path)); }

SearchLimits limits_from(std::uint64_t nodes, double seconds) {
  SearchLimits l;
  l.node_budget = nodes;
  l.time_budget_seconds = seconds;
  return l;
}

std::string config_help() {
  std::ostringstream ss;
  ss << "Config keys (JSON file via --config, or --set key=value):\n";
  for (const auto& [key, text] : train_config_help()) ss << "  " << key << " = " << text << "\n";
  ss << "Environment: NESY_THREADS caps internal parallelism (default 1).\n";
  return ss.str();
}

bool is_validation(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::SyntaxError:
    case ErrorKind::DomainViolation:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::SpaceMismatch:
    case ErrorKind::CorruptFile:
    case ErrorKind::VersionMismatch:
    case ErrorKind::BadMagic:
    case ErrorKind::TruncatedFile:
    case ErrorKind::InconsistentFixed:
      return true;
    default:
      return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neuro-symbolic constraint learning: generate tasks, train, export, solve and evaluate."};
  app.footer(config_help());
  app.require_subcommand(1);

  // gen
  Common gen_c;
  std::string task;
  int n_samples = 100, L = 20, size = 4, H = 10, W = 10, obstacles = 20, split = 0, min_givens = 6, max_givens = 10;
  std::uint64_t gen_seed = 0;
  double noise = 0.05, fill = 0.4;
  std::string mode = "symbolic", idx_images, idx_labels;
  auto* gen = app.add_subcommand("gen", "Generate a dataset; writes <out>/dataset.jsonl");
  add_common(gen, gen_c);
  gen->add_option("--task", task, "xor | sudoku | nonogram | gridpath")->required()
      ->check(CLI::IsMember({"xor", "sudoku", "nonogram", "gridpath"}));
  gen->add_option("--N", n_samples, "Number of samples")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
  gen->add_option("--split", split, "Split index (0 train, 1 test, ...)")->capture_default_str();
  gen->add_option("--L", L, "XOR chain length")->capture_default_str();
  gen->add_option("--size", size, "Sudoku or nonogram size")->capture_default_str();
  gen->add_option("--mode", mode, "Sudoku glyphs: symbolic | synthetic | idx")->capture_default_str();
  gen->add_option("--noise", noise, "Glyph flip rate or gridpath input noise")->capture_default_str();
  gen->add_option("--min-givens", min_givens, "Sudoku minimum givens")->capture_default_str();
  gen->add_option("--max-givens", max_givens, "Sudoku maximum givens")->capture_default_str();
  gen->add_option("--idx-images", idx_images, "IDX image file for idx mode");
  gen->add_option("--idx-labels", idx_labels, "IDX label file for idx mode");
  gen->add_option("--fill", fill, "Nonogram fill probability")->capture_default_str();
  gen->add_option("--H", H, "Grid rows")->capture_default_str();
  gen->add_option("--W", W, "Grid columns")->capture_default_str();
  gen->add_option("--obstacles", obstacles, "Grid obstacles")->capture_default_str();

  // train
  Common train_c;
  std::string train_data;
  bool resume = false;
  auto* train = app.add_subcommand(
      "train", "Train; writes model.ckpt.json, constraints.json, metrics.csv and metrics.jsonl under --out");
  add_common(train, train_c);
  train->add_option("--data", train_data, "Training dataset (JSONL)")->required();
  train->add_flag("--resume", resume, "Continue from <out>/model.ckpt.json");

  // export
  Common export_c;
  std::string export_in;
  auto* exp = app.add_subcommand("export", "Write export.opb and export.smt2 under --out");
  add_common(exp, export_c);
  exp->add_option("--constraints", export_in, "constraints.json or .opb")->required();

  // solve
  Common solve_c;
  std::string solve_in, solve_sample, solve_data, solve_ckpt;
  std::size_t solve_index = 0;
  std::uint64_t nodes = 10'000'000;
  double seconds = 60.0;
  auto* slv = app.add_subcommand("solve", "Solve one instance and print the solution JSON");
  add_common(slv, solve_c);
  slv->add_option("--constraints", solve_in, "constraints.json or .opb")->required();
  auto* sample_opt =
      slv->add_option("--sample", solve_sample, "JSON object with optional 'fixed' (-1/0/1) and 'probabilities'");
  auto* data_opt = slv->add_option("--data", solve_data, "Dataset JSONL; solves sample --index");
  sample_opt->excludes(data_opt);
  slv->add_option("--index", solve_index, "Sample index in --data")->capture_default_str();
  slv->add_option("--checkpoint", solve_ckpt, "Checkpoint providing the perception model");
  slv->add_option("--node-budget", nodes, "Search node budget")->capture_default_str();
  slv->add_option("--time-budget", seconds, "Search time budget in seconds")->capture_default_str();

  // eval
  Common eval_c;
  std::string eval_in, eval_data, eval_ckpt;
  auto* ev = app.add_subcommand("eval", "Print perception, solving and total accuracy");
  add_common(ev, eval_c);
  ev->add_option("--constraints", eval_in, "constraints.json or .opb")->required();
  ev->add_option("--data", eval_data, "Test dataset (JSONL)")->required();
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint providing the perception model");
  ev->add_option("--node-budget", nodes, "Search node budget")->capture_default_str();
  ev->add_option("--time-budget", seconds, "Search time budget in seconds")->capture_default_str();

  // check-props
  Common props_c;
  std::uint64_t props_seed = 7;
  int instances = 50, max_n = 10;
  auto* props = app.add_subcommand("check-props", "Run the exact-penalty and stationarity suites");
  add_common(props, props_c);
  props->add_option("--seed", props_seed, "Suite seed")->capture_default_str();
  props->add_option("--instances", instances, "Instances per suite")->capture_default_str()->check(CLI::PositiveNumber);
  props->add_option("--max-n", max_n, "Largest instance dimension")->capture_default_str()->check(CLI::Range(1, 20));

  // grad-check
  Common grad_c;
  std::uint64_t grad_seed = 0;
  int nets = 20;
  double grad_tol = 1e-4;
  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of network gradients");
  add_common(grad, grad_c);
  grad->add_option("--seed", grad_seed, "Suite seed")->capture_default_str();
  grad->add_option("--nets", nets, "Random networks")->capture_default_str()->check(CLI::PositiveNumber);
  grad->add_option("--tol", grad_tol, "Relative error tolerance")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const TrainConfig cfg = resolve_config(gen_c);
      json flags{{"task", task}, {"N", n_samples}, {"seed", gen_seed}, {"split", split}};
      Dataset ds;
      if (task == "xor") {
        flags["L"] = L;
        ds = gen_xor(L, n_samples, gen_seed, split);
      } else if (task == "sudoku") {
        SudokuConfig sc;
        sc.size = size;
        sc.N = n_samples;
        sc.min_givens = min_givens;
        sc.max_givens = max_givens;
        sc.mode = glyph_mode_from_string(mode);
        sc.noise = noise;
        sc.idx_images = idx_images;
        sc.idx_labels = idx_labels;
        sc.seed = gen_seed;
        sc.split = split;
        flags.update({{"size", size}, {"mode", mode}, {"noise", noise}, {"min_givens", min_givens},
                      {"max_givens", max_givens}, {"idx_images", idx_images}, {"idx_labels", idx_labels}});
        ds = gen_sudoku(sc);
      } else if (task == "nonogram") {
        flags.update({{"size", size}, {"fill", fill}});
        ds = gen_nonogram(size, n_samples, gen_seed, fill, split);
      } else {
        GridPathConfig gc;
        gc.H = H;
        gc.W = W;
        gc.obstacles = obstacles;
        gc.N = n_samples;
        gc.noise = noise;
        gc.seed = gen_seed;
        gc.split = split;
        flags.update({{"H", H}, {"W", W}, {"obstacles", obstacles}, {"noise", noise}});
        ds = gen_gridpath(gc);
      }
      write_snapshot(gen_c, "gen", flags, cfg);
      const std::string path = (fs::path(gen_c.out) / "dataset.jsonl").string();
      atomic_write(path, to_jsonl(ds));
      std::cout << "wrote " << ds.samples.size() << " samples to " << path << "\n";
      return 0;
    }

    if (*train) {
      const fs::path out(train_c.out);
      const std::string ckpt = (out / "model.ckpt.json").string();
      const Dataset ds = load_dataset(train_data);
      TrainResult res;
      TrainConfig cfg;
      if (resume) {
        auto [state, saved] = load_checkpoint(ckpt);
        cfg = resolve_config(train_c, to_json(saved));
        write_snapshot(train_c, "train", {{"data", train_data}, {"resume", true}}, cfg);
        res = resume_training(std::move(state), cfg, ds);
      } else {
        cfg = resolve_config(train_c);
        write_snapshot(train_c, "train", {{"data", train_data}, {"resume", false}}, cfg);
        res = run_training(cfg, ds);
      }
      json cj = to_json(res.system);
      json prov = json::array();
      for (const auto& p : res.provenance) prov.push_back({{"b", p.b}, {"learner", p.learner}});
      cj["provenance"] = prov;
      cj["raw_rank"] = res.raw_rank;
      cj["final_rank"] = res.final_rank;
      atomic_write((out / "constraints.json").string(), cj.dump(1) + "\n");
      std::string csv = metrics_csv_header() + "\n";
      std::string jsonl;
      for (const auto& r : res.metrics) {
        csv += to_csv(r) + "\n";
        jsonl += to_json(r).dump() + "\n";
      }
      atomic_write((out / "metrics.csv").string(), csv);
      atomic_write((out / "metrics.jsonl").string(), jsonl);
      save_checkpoint(res.state, cfg, ckpt);
      std::cout << "epochs " << res.metrics.size() << ", learned " << res.system.size() << " constraints, rank "
                << res.final_rank << "\n";
      return 0;
    }

    if (*exp) {
      const TrainConfig cfg = resolve_config(export_c);
      write_snapshot(export_c, "export", {{"constraints", export_in}}, cfg);
      const CardinalitySystem sys = load_system(export_in);
      atomic_write((fs::path(export_c.out) / "export.opb").string(), export_opb(sys));
      atomic_write((fs::path(export_c.out) / "export.smt2").string(), export_smt2(sys));
      std::cout << "exported " << sys.size() << " constraints\n";
      return 0;
    }

    if (*slv) {
      const TrainConfig cfg = resolve_config(solve_c);
      write_snapshot(solve_c, "solve",
                     {{"constraints", solve_in}, {"sample", solve_sample}, {"data", solve_data}, {"index", solve_index},
                      {"checkpoint", solve_ckpt}, {"node_budget", nodes}, {"time_budget", seconds}},
                     cfg);
      const CardinalitySystem sys = load_system(solve_in);
      InferenceProblem prob;
      if (!solve_data.empty()) {
        prob = sample_problem(sys, load_model(solve_ckpt), load_dataset(solve_data), solve_index,
                              limits_from(nodes, seconds))
                   .problem;
      } else {
        prob.system = sys;
        prob.limits = limits_from(nodes, seconds);
        if (!solve_sample.empty()) {
          const json s = read_json(solve_sample);
          if (s.contains("fixed")) prob.fixed = s.at("fixed").get<std::vector<std::int8_t>>();
          if (s.contains("probabilities"))
            prob.preferences = preferences_from_probabilities(s.at("probabilities").get<std::vector<double>>());
        }
      }
      std::cout << to_json(solve(prob)).dump() << "\n";
      return 0;
    }

    if (*ev) {
      const TrainConfig cfg = resolve_config(eval_c);
      write_snapshot(eval_c, "eval",
                     {{"constraints", eval_in}, {"data", eval_data}, {"checkpoint", eval_ckpt}, {"node_budget", nodes},
                      {"time_budget", seconds}},
                     cfg);
      const EvalReport rep =
          evaluate(load_system(eval_in), load_model(eval_ckpt), load_dataset(eval_data), limits_from(nodes, seconds));
      std::printf("perception %.1f%%, solving %.1f%%, total %.1f%%\n", 100 * rep.perception_acc, 100 * rep.solving_acc,
                  100 * rep.total_acc);
      std::cout << to_json(rep).dump() << "\n";
      return 0;
    }

    if (*props) {
      const TrainConfig cfg = resolve_config(props_c);
      write_snapshot(props_c, "check-props", {{"seed", props_seed}, {"instances", instances}, {"max_n", max_n}}, cfg);
      const SuiteReport p1 = proposition1_suite(props_seed, instances, max_n);
      const SuiteReport p2 = proposition2_suite(props_seed, instances, max_n);
      std::cout << "prop1: " << p1.passed << "/" << p1.total << ", prop2: " << p2.passed << "/" << p2.total << "\n";
      return p1.passed == p1.total && p2.passed == p2.total ? 0 : 2;
    }

    if (*grad) {
      const TrainConfig cfg = resolve_config(grad_c);
      write_snapshot(grad_c, "grad-check", {{"seed", grad_seed}, {"nets", nets}, {"tol", grad_tol}}, cfg);
      const std::vector<double> errs = gradient_suite(grad_seed, nets);
      int ok = 0;
      double worst = 0;
      for (double e : errs) {
        ok += e < grad_tol;
        worst = std::max(worst, e);
      }
      std::cout << "grad: " << ok << "/" << errs.size() << " below " << grad_tol << ", worst " << worst << "\n";
      return ok == static_cast<int>(errs.size()) ? 0 : 2;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed input: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_validation(e.kind()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
