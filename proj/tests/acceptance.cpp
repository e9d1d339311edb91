// Acceptance run: one PASS/FAIL line per criterion with the tolerance it
// was judged against. Exits 0 when every criterion ran to completion, so a
// failing criterion shows up in the report rather than as a crashed test.
// Set NESY_LONG=1 to add the 9x9 Sudoku recovery run.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nesy/dcopt.hpp"
#include "nesy/perception.hpp"
#include "nesy/reasoner.hpp"
#include "nesy/tasks.hpp"
#include "nesy/trainer.hpp"

using namespace nesy;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int passed_count = 0;
int criteria_run = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  ++criteria_run;
  passed_count += pass;
  std::printf("[%s] criterion %d %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

Dataset sudoku(int N, std::uint64_t seed, int split, GlyphMode mode = GlyphMode::Symbolic, double noise = 0.05,
               int size = 4) {
  SudokuConfig c;
  c.size = size;
  c.N = N;
  c.seed = seed;
  c.split = split;
  c.mode = mode;
  c.noise = noise;
  if (size == 9) {
    c.min_givens = 30;
    c.max_givens = 40;
  }
  return gen_sudoku(c);
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string s = metrics_csv_header() + "\n";
  for (const auto& r : rows) s += to_csv(r) + "\n";
  return s;
}

std::string constraints_json(const TrainResult& r) {
  nlohmann::json j = to_json(r.system);
  nlohmann::json prov = nlohmann::json::array();
  for (const auto& p : r.provenance) prov.push_back({{"b", p.b}, {"learner", p.learner}});
  j["provenance"] = prov;
  j["raw_rank"] = r.raw_rank;
  j["final_rank"] = r.final_rank;
  return j.dump(1);
}

// Mean of a metric over the first and last tenth of the history.
std::pair<double, double> tenth_means(const std::vector<MetricsRow>& rows, double MetricsRow::*field) {
  const std::size_t k = std::max<std::size_t>(1, rows.size() / 10);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < k; ++i) {
    first += rows[i].*field;
    last += rows[rows.size() - 1 - i].*field;
  }
  return {first / static_cast<double>(k), last / static_cast<double>(k)};
}

// Runs one criterion, turning an escaped exception into a FAIL line.
void guarded(int id, const char* name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

// Train and evaluate a chained-XOR instance; equivalence is checked on the
// projection onto observed and output bits (auxiliaries existentially bound).
struct XorOutcome {
  double accuracy = 0;
  bool equivalent = false;
  bool exhaustive = false;
  std::uint64_t checked = 0;
};

XorOutcome run_xor(int L, int N, const TrainConfig& cfg, std::uint64_t samples) {
  const Dataset train = gen_xor(L, N, 1, 0);
  const Dataset test = gen_xor(L, 1000, 1, 1);
  const TrainResult r = run_training(cfg, train);
  XorOutcome out;
  out.accuracy = evaluate(r.system, r.model, test).solving_acc;
  std::vector<int> proj;
  for (int i = 0; i < L; ++i) proj.push_back(i);
  proj.push_back(train.space.output_begin());
  const auto pe = projected_equivalence(
      r.system, proj,
      [L](const Assignment& a) { return parity(Assignment(a.begin(), a.begin() + L)) == (a[L] == 1); }, 24, samples,
      5);
  out.equivalent = pe.equivalent;
  out.exhaustive = pe.exhaustive;
  out.checked = pe.checked;
  return out;
}

}  // namespace

int main() {
  const auto t_all = Clock::now();
  std::printf("acceptance run (tolerances pinned per line)\n");

  guarded(1, "exact penalty equivalence", [] {
    const auto t0 = Clock::now();
    const SuiteReport r = proposition1_suite(2024, 50, 10);
    const double s = seconds_since(t0);
    report(1, "exact penalty equivalence", r.passed == 50 && r.total == 50 && s < 60,
           fmt("%d/%d exact vertex matches (need 50/50), %.1fs (limit 60s)", r.passed, r.total, s));
  });

  guarded(2, "stationarity of annealed Boolean points", [] {
    const auto t0 = Clock::now();
    const SuiteReport r = proposition2_suite(2024, 20, 10, 1e-8);
    const double s = seconds_since(t0);
    report(2, "stationarity of annealed Boolean points", r.passed == 20 && r.total == 20 && s < 60,
           fmt("%d/%d pass stationarity and diagonal checks at tol 1e-8 (need 20/20), %.1fs (limit 60s)", r.passed,
               r.total, s));
  });

  guarded(3, "chained XOR", [] {
    const auto t0 = Clock::now();
    TrainConfig cfg;
    cfg.m = 128;
    cfg.b_values = {1, 2};
    const XorOutcome a = run_xor(20, 9000, cfg, 100000);
    const XorOutcome b = run_xor(40, 9000, cfg, 100000);
    const double s = seconds_since(t0);
    const bool pass = a.accuracy == 1.0 && a.equivalent && a.exhaustive && b.accuracy == 1.0 && b.equivalent &&
                      s <= 900;
    report(3, "chained XOR", pass,
           fmt("L=20 acc %.3f (need 1.000), parity equivalence %s (exhaustive, stopped after %llu); "
               "L=40 acc %.3f, sampled equivalence %s (%llu points); %.0fs (limit 900s)",
               a.accuracy, a.equivalent ? "yes" : "no", static_cast<unsigned long long>(a.checked), b.accuracy,
               b.equivalent ? "yes" : "no", static_cast<unsigned long long>(b.checked), s));
  });

  guarded(4, "nonograms 7x7", [] {
    const auto t0 = Clock::now();
    TrainConfig cfg;
    cfg.m = 128;
    cfg.b_values = {1, 2, 3};
    const Dataset train = gen_nonogram(7, 1000, 1, 0.4, 0);
    const Dataset test = gen_nonogram(7, 500, 1, 0.4, 1);
    const TrainResult r = run_training(cfg, train);
    const EvalReport rep = evaluate(r.system, r.model, test);
    const double s = seconds_since(t0);
    report(4, "nonograms 7x7", rep.solving_acc == 1.0 && s <= 600,
           fmt("line accuracy %.3f on 500 held-out lines (need 1.000), cell accuracy %.3f, %zu constraints, "
               "%.0fs (limit 600s)",
               rep.solving_acc, rep.cell_solving_acc, r.system.size(), s));
  });

  // Shared by criteria 5, 9 and 10.
  std::optional<TrainResult> symbolic_run, glyph_run;

  guarded(5, "Sudoku constraint recovery", [&] {
    const auto t0 = Clock::now();
    const CardinalitySystem gt = sudoku_ground_truth(4);
    const long gt_rank = static_cast<long>(rank(gt.weight_matrix()));
    symbolic_run = run_training(TrainConfig{}, sudoku(2000, 11, 0));
    const Dataset test = sudoku(200, 11, 1);
    const EvalReport sym = evaluate(symbolic_run->system, symbolic_run->model, test);
    const bool exact = canonical(symbolic_run->system) == canonical(gt);

    glyph_run = run_training(TrainConfig{}, sudoku(1000, 11, 0, GlyphMode::Synthetic, 0.05));
    const EvalReport vis = evaluate(glyph_run->system, glyph_run->model, sudoku(200, 11, 1, GlyphMode::Synthetic, 0.05));
    const double gap = 100 * std::abs(sym.total_acc - vis.total_acc);
    const double s = seconds_since(t0);
    const bool pass =
        exact && symbolic_run->raw_rank == gt_rank && sym.solving_acc == 1.0 && gap <= 5.0 && s <= 1200;
    report(5, "Sudoku constraint recovery", pass,
           fmt("learned %zu constraints, equal to the %zu ground-truth set: %s; rank(binarized W) %ld vs ground "
               "truth %ld; symbolic solving %.1f%% (need 100%%); synthetic glyphs sigma=0.05 total %.1f%% vs symbolic "
               "%.1f%%, gap %.1f points (limit 5); %.0fs (limit 1200s)",
               symbolic_run->system.size(), gt.size(), exact ? "yes" : "no", symbolic_run->raw_rank, gt_rank,
               100 * sym.solving_acc, 100 * vis.total_acc, 100 * sym.total_acc, gap, s));
  });

  if (const char* env = std::getenv("NESY_LONG"); env && std::string(env) == "1") {
    guarded(5, "Sudoku 9x9 recovery (opt-in)", [] {
      const auto t0 = Clock::now();
      const CardinalitySystem gt = sudoku_ground_truth(9);
      TrainConfig cfg;
      cfg.m = 1024;
      const TrainResult r = run_training(cfg, sudoku(4000, 11, 0, GlyphMode::Symbolic, 0.0, 9));
      const bool exact = canonical(r.system) == canonical(gt);
      std::printf("[%s] criterion 5 (opt-in) Sudoku 9x9 recovery: %zu constraints, equal to ground truth: %s, "
                  "rank %ld (need 249), %.0fs\n",
                  exact && r.raw_rank == 249 ? "PASS" : "FAIL", r.system.size(), exact ? "yes" : "no", r.raw_rank,
                  seconds_since(t0));
    });
  }

  guarded(6, "ablations", [] {
    const auto t0 = Clock::now();
    constexpr int kPairs = 20;
    constexpr int kNdcPairs = 5;
    int strictly_below = 0, not_above = 0, ndc_below = 0;
    std::string ndc_detail;
    for (int seed = 1; seed <= kPairs; ++seed) {
      const Dataset train = sudoku(2000, static_cast<std::uint64_t>(100 + seed), 0);
      TrainConfig full;
      full.seed = static_cast<std::uint64_t>(seed);
      TrainConfig ntr = full;
      ntr.lambda = 0.0;
      const TrainResult a = run_training(full, train);
      const TrainResult b = run_training(ntr, train);
      strictly_below += b.raw_rank < a.raw_rank;
      not_above += b.raw_rank <= a.raw_rank;
      if (seed <= kNdcPairs) {
        const Dataset test = sudoku(100, static_cast<std::uint64_t>(100 + seed), 1);
        TrainConfig ndc = full;
        ndc.ndc = true;
        ndc.epochs = 600;
        const TrainResult c = run_training(ndc, train);
        const double acc_full = evaluate(a.system, a.model, test).solving_acc;
        const double acc_ndc = evaluate(c.system, c.model, test).solving_acc;
        ndc_below += acc_ndc < acc_full;
        ndc_detail += fmt(" %.2f<%.2f", acc_ndc, acc_full);
      }
    }
    const double s = seconds_since(t0);
    const bool ntr_pass = strictly_below >= (kPairs * 8 + 9) / 10;
    const bool ndc_pass = ndc_below == kNdcPairs;
    report(6, "ablations", ntr_pass && ndc_pass && s <= 2400,
           fmt("NTR rank strictly below full in %d/%d pairs (need >=80%%; rank not above in %d/%d); NDC solving below "
               "full in %d/%d pairs (need all; ndc<full:%s); %.0fs (limit 2400s)",
               strictly_below, kPairs, not_above, kPairs, ndc_below, kNdcPairs, ndc_detail.c_str(), s));
  });

  guarded(7, "reasoner oracle equivalence", [] {
    const auto t0 = Clock::now();
    RngState root(7);
    int agree = 0, satisfied = 0, feasible = 0;
    for (int k = 0; k < 200; ++k) {
      RngState rng = root.fork(static_cast<std::uint64_t>(k));
      InferenceProblem p;
      const int d = 1 + static_cast<int>(rng.below(16));
      p.system.space.latent_bits = d;
      const int m = static_cast<int>(rng.below(9));
      for (int i = 0; i < m; ++i) {
        CardinalityConstraint c;
        for (int j = 0; j < d; ++j)
          if (rng.bernoulli(0.4)) c.support.push_back(j);
        if (c.support.empty()) c.support.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(d))));
        c.lo = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.width()) + 1));
        c.hi = c.lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(c.width() - c.lo) + 1));
        p.system.constraints.push_back(c);
      }
      for (int j = 0; j < d; ++j) p.preferences.push_back({static_cast<std::uint8_t>(rng.below(2)), rng.uniform()});
      const Solution a = solve(p);
      const Solution b = brute_force_solve(p);
      const bool a_ok = a.status == SolveStatus::Optimal;
      const bool b_ok = b.status == SolveStatus::Optimal;
      if (a_ok != b_ok) continue;
      if (!a_ok) {
        ++agree;
        ++satisfied;
        continue;
      }
      ++feasible;
      agree += std::abs(a.cost - b.cost) <= 1e-9;
      satisfied += evaluate(p.system, a.assignment).satisfied;
    }
    const double s = seconds_since(t0);
    report(7, "reasoner oracle equivalence", agree == 200 && satisfied == 200 && s < 120,
           fmt("cost equal to brute force (tol 1e-9) in %d/200, hard constraints hold in %d/200 (%d feasible), "
               "%.1fs (limit 120s)",
               agree, satisfied, feasible, s));
  });

  guarded(8, "gradient correctness", [] {
    const auto t0 = Clock::now();
    const std::vector<double> errs = gradient_suite(2024, 20);
    int ok = 0;
    double worst = 0;
    for (double e : errs) {
      ok += e < 1e-4;
      worst = std::max(worst, e);
    }
    const double s = seconds_since(t0);
    report(8, "gradient correctness", ok == 20 && s < 60,
           fmt("%d/20 nets below relative error 1e-4 (worst %.2e), %.1fs (limit 60s)", ok, worst, s));
  });

  guarded(9, "update norms trend", [&] {
    if (!glyph_run || !symbolic_run) throw std::runtime_error("criterion 5 runs unavailable");
    const auto [w_first, w_last] = tenth_means(glyph_run->metrics, &MetricsRow::w_update_sq);
    const auto [th_first, th_last] = tenth_means(glyph_run->metrics, &MetricsRow::theta_update_sq);
    const auto [ws_first, ws_last] = tenth_means(symbolic_run->metrics, &MetricsRow::w_update_sq);
    const bool pass = w_last <= w_first && th_last <= th_first && ws_last <= ws_first;
    report(9, "update norms trend", pass,
           fmt("synthetic run (%zu epochs): mean ||dW||^2 first/last tenth %.3e/%.3e, ||dtheta||^2 %.3e/%.3e; "
               "symbolic run ||dW||^2 %.3e/%.3e (need last <= first)",
               glyph_run->metrics.size(), w_first, w_last, th_first, th_last, ws_first, ws_last));
  });

  guarded(10, "determinism", [&] {
    if (!symbolic_run) throw std::runtime_error("criterion 5 run unavailable");
    const TrainResult again = run_training(TrainConfig{}, sudoku(2000, 11, 0));
    const bool csv_same = metrics_csv(again.metrics) == metrics_csv(symbolic_run->metrics);
    const bool json_same = constraints_json(again) == constraints_json(*symbolic_run);
    report(10, "determinism", csv_same && json_same,
           fmt("metrics CSV byte-identical: %s, constraints JSON byte-identical: %s", csv_same ? "yes" : "no",
               json_same ? "yes" : "no"));
  });

  std::printf("acceptance summary: %d/%d criteria passed, %.0fs total\n", passed_count, criteria_run,
              seconds_since(t_all));
  return criteria_run == 10 ? 0 : 1;
}
