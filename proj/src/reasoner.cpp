#include "nesy/reasoner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace nesy {

const char* to_string(SolveStatus status) noexcept {
  switch (status) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Feasible: return "Feasible";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::BudgetExceeded: return "BudgetExceeded";
  }
  return "Unknown";
}

void InferenceProblem::validate() const {
  system.validate();
  const auto d = static_cast<std::size_t>(system.dim());
  if (!preferences.empty() && preferences.size() != d)
    throw Error(ErrorKind::DimensionMismatch, "inference: preferences must cover every variable");
  if (!fixed.empty() && fixed.size() != d)
    throw Error(ErrorKind::DimensionMismatch, "inference: fixed assignment must cover every variable");
  for (const auto& p : preferences)
    if (!(p.weight >= 0) || !std::isfinite(p.weight) || p.value > 1)
      throw Error(ErrorKind::InvalidArgument, "inference: preference weights must be finite and >= 0");
  for (auto f : fixed)
    if (f < -1 || f > 1) throw Error(ErrorKind::InvalidArgument, "inference: fixed values must be -1, 0 or 1");
}

std::vector<Preference> preferences_from_probabilities(const std::vector<double>& p) {
  std::vector<Preference> out;
  out.reserve(p.size());
  for (double x : p) {
    const double c = std::clamp(x, 0.0, 1.0);
    out.push_back({static_cast<std::uint8_t>(c >= 0.5 ? 1 : 0), std::abs(2.0 * c - 1.0)});
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

// Depth-first search state with an undo trail. Per constraint we keep the
// number of variables assigned 1 and the number still free; a constraint is
// violated once ones > hi or ones + free < lo.
class Search {
 public:
  Search(const CardinalitySystem& sys, const std::vector<Preference>& prefs)
      : sys_(sys),
        d_(sys.dim()),
        occurs_(static_cast<std::size_t>(d_)),
        value_(static_cast<std::size_t>(d_), -1),
        ones_(sys.constraints.size(), 0),
        free_(sys.constraints.size(), 0),
        weight_(static_cast<std::size_t>(d_), 0.0),
        pref_(static_cast<std::size_t>(d_), 0) {
    for (std::size_t c = 0; c < sys.constraints.size(); ++c) {
      for (int v : sys.constraints[c].support) occurs_[v].push_back(static_cast<int>(c));
      free_[c] = sys.constraints[c].width();
    }
    for (int v = 0; v < d_ && !prefs.empty(); ++v) {
      weight_[v] = prefs[v].weight;
      pref_[v] = prefs[v].value;
    }
    order_.resize(static_cast<std::size_t>(d_));
    for (int v = 0; v < d_; ++v) order_[v] = v;
    std::stable_sort(order_.begin(), order_.end(), [&](int a, int b) { return weight_[a] > weight_[b]; });
  }

  // Assigns without propagating; returns false if some constraint became violated.
  bool set(int v, std::int8_t val) {
    value_[v] = val;
    trail_.push_back(v);
    if (val != pref_[v]) cost_ += weight_[v];
    bool ok = true;
    for (int c : occurs_[v]) {
      --free_[c];
      ones_[c] += val;
      const auto& k = sys_.constraints[c];
      if (ones_[c] > k.hi || ones_[c] + free_[c] < k.lo) ok = false;
      pending_.push_back(c);
    }
    return ok;
  }

  bool propagate() {
    while (!pending_.empty()) {
      const int c = pending_.back();
      pending_.pop_back();
      const auto& k = sys_.constraints[c];
      if (ones_[c] > k.hi || ones_[c] + free_[c] < k.lo) return fail();
      if (free_[c] == 0) continue;
      std::int8_t forced = -1;
      if (ones_[c] == k.hi) {
        forced = 0;
      } else if (ones_[c] + free_[c] == k.lo) {
        forced = 1;
      }
      if (forced < 0) continue;
      for (int u : k.support) {
        if (value_[u] >= 0) continue;
        if (!set(u, forced)) return fail();
      }
    }
    return true;
  }

  void undo(std::size_t mark) {
    while (trail_.size() > mark) {
      const int v = trail_.back();
      trail_.pop_back();
      const std::int8_t val = value_[v];
      if (val != pref_[v]) cost_ -= weight_[v];
      for (int c : occurs_[v]) {
        ++free_[c];
        ones_[c] -= val;
      }
      value_[v] = -1;
    }
    if (trail_.empty()) cost_ = 0;  // keeps rounding drift from accumulating
  }

  int pick() const {
    for (int v : order_)
      if (value_[v] < 0) return v;
    return -1;
  }

  // Queues every constraint so the next propagate() examines all of them.
  void touch_all() {
    for (std::size_t c = 0; c < sys_.constraints.size(); ++c) pending_.push_back(static_cast<int>(c));
  }

  std::size_t mark() const { return trail_.size(); }
  double cost() const { return cost_; }
  std::int8_t pref(int v) const { return static_cast<std::int8_t>(pref_[v]); }
  Assignment snapshot() const {
    Assignment a(static_cast<std::size_t>(d_));
    for (int v = 0; v < d_; ++v) a[v] = static_cast<std::uint8_t>(value_[v]);
    return a;
  }

 private:
  bool fail() {
    pending_.clear();
    return false;
  }

  const CardinalitySystem& sys_;
  int d_;
  std::vector<std::vector<int>> occurs_;
  std::vector<std::int8_t> value_;
  std::vector<int> ones_;
  std::vector<int> free_;
  std::vector<double> weight_;
  std::vector<std::uint8_t> pref_;
  std::vector<int> order_;
  std::vector<int> trail_;
  std::vector<int> pending_;
  double cost_ = 0;
};

struct Driver {
  explicit Driver(Search& s) : search(s) {}

  Search& search;
  SearchLimits limits;
  bool first_solution_only = false;
  Clock::time_point start = Clock::now();
  std::uint64_t nodes = 0;
  bool out_of_budget = false;
  bool have_incumbent = false;
  double best = std::numeric_limits<double>::infinity();
  Assignment incumbent;

  bool budget_hit() {
    if (nodes >= limits.node_budget) return true;
    if ((nodes & 1023U) == 0) {
      const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
      if (elapsed > limits.time_budget_seconds) return true;
    }
    return false;
  }

  // Returns true to stop the whole search.
  bool dfs() {
    ++nodes;
    if (budget_hit()) {
      out_of_budget = true;
      return true;
    }
    if (have_incumbent && search.cost() >= best) return false;
    const int v = search.pick();
    if (v < 0) {
      have_incumbent = true;
      best = search.cost();
      incumbent = search.snapshot();
      return first_solution_only;
    }
    const std::int8_t first = search.pref(v);
    for (std::int8_t val : {first, static_cast<std::int8_t>(1 - first)}) {
      const std::size_t m = search.mark();
      if (search.set(v, val) && search.propagate()) {
        if (dfs()) return true;
      }
      search.undo(m);
    }
    return false;
  }
};

Solution run(const InferenceProblem& problem, bool first_solution_only) {
  problem.validate();
  const CardinalitySystem& sys = problem.system;
  const int d = sys.dim();
  Search search(sys, problem.preferences);
  Solution sol;
  sol.status = SolveStatus::Infeasible;

  if (!problem.fixed.empty()) {
    bool ok = true;
    for (int v = 0; v < d; ++v)
      if (problem.fixed[v] >= 0) ok = search.set(v, problem.fixed[v]) && ok;
    if (!ok) throw Error(ErrorKind::InconsistentFixed, "fixed assignment violates a constraint");
  }
  search.touch_all();
  if (!search.propagate()) return sol;

  Driver drv{search};
  drv.limits = problem.limits;
  drv.first_solution_only = first_solution_only;
  drv.dfs();
  sol.nodes = drv.nodes;
  if (drv.have_incumbent) {
    sol.assignment = std::move(drv.incumbent);
    sol.cost = drv.best;
    sol.status = drv.out_of_budget ? SolveStatus::Feasible : SolveStatus::Optimal;
  } else if (drv.out_of_budget) {
    sol.status = SolveStatus::BudgetExceeded;
  }
  return sol;
}

double flip_cost(const std::vector<Preference>& prefs, const Assignment& a) {
  double c = 0;
  for (std::size_t v = 0; v < prefs.size(); ++v)
    if (a[v] != prefs[v].value) c += prefs[v].weight;
  return c;
}

}  // namespace

Solution solve(const InferenceProblem& problem) { return run(problem, false); }

bool satisfiable(const CardinalitySystem& system, const std::vector<std::int8_t>& fixed) {
  InferenceProblem p;
  p.system = system;
  p.fixed = fixed;
  p.limits.node_budget = std::numeric_limits<std::uint64_t>::max();
  p.limits.time_budget_seconds = std::numeric_limits<double>::infinity();
  try {
    return run(p, true).status != SolveStatus::Infeasible;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InconsistentFixed) return false;
    throw;
  }
}

Solution brute_force_solve(const InferenceProblem& problem, int max_free) {
  problem.validate();
  const auto d = static_cast<std::size_t>(problem.system.dim());
  std::vector<int> free_vars;
  Assignment a(d, 0);
  for (std::size_t v = 0; v < d; ++v) {
    if (problem.fixed.empty() || problem.fixed[v] < 0)
      free_vars.push_back(static_cast<int>(v));
    else
      a[v] = static_cast<std::uint8_t>(problem.fixed[v]);
  }
  if (static_cast<int>(free_vars.size()) > max_free)
    throw Error(ErrorKind::TooLarge, "brute_force_solve: " + std::to_string(free_vars.size()) + " free variables");
  if (!problem.fixed.empty()) {
    // Same root check as solve(): fixed values alone must not break a constraint.
    for (const auto& k : problem.system.constraints) {
      int ones = 0;
      int open = 0;
      for (int v : k.support) {
        if (problem.fixed[v] < 0) ++open;
        else ones += problem.fixed[v];
      }
      if (ones > k.hi || ones + open < k.lo)
        throw Error(ErrorKind::InconsistentFixed, "fixed assignment violates a constraint");
    }
  }
  const std::size_t n = free_vars.size();
  Solution best;
  best.status = SolveStatus::Infeasible;
  double best_cost = std::numeric_limits<double>::infinity();
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t code = 0; code < total; ++code) {
    for (std::size_t j = 0; j < n; ++j) a[free_vars[j]] = static_cast<std::uint8_t>((code >> (n - 1 - j)) & 1U);
    ++best.nodes;
    if (!evaluate(problem.system, a).satisfied) continue;
    const double c = problem.preferences.empty() ? 0.0 : flip_cost(problem.preferences, a);
    if (c < best_cost) {
      best_cost = c;
      best.assignment = a;
      best.cost = c;
      best.status = SolveStatus::Optimal;
    }
  }
  return best;
}

ProjectedEquivalence projected_equivalence(const CardinalitySystem& system, const std::vector<int>& projected,
                                           const std::function<bool(const Assignment&)>& predicate, int max_vars,
                                           std::uint64_t samples, std::uint64_t seed) {
  system.validate();
  const int d = system.dim();
  for (int v : projected)
    if (v < 0 || v >= d) throw Error(ErrorKind::DimensionMismatch, "projected_equivalence: variable out of range");
  const std::size_t k = projected.size();
  ProjectedEquivalence out;
  out.exhaustive = static_cast<int>(k) <= max_vars;
  Assignment x(k, 0);
  std::vector<std::int8_t> fixed(static_cast<std::size_t>(d), -1);
  auto check = [&]() {
    for (std::size_t j = 0; j < k; ++j) fixed[projected[j]] = static_cast<std::int8_t>(x[j]);
    ++out.checked;
    if (satisfiable(system, fixed) != predicate(x)) {
      out.equivalent = false;
      out.witness = x;
      return false;
    }
    return true;
  };
  if (out.exhaustive) {
    const std::uint64_t total = std::uint64_t{1} << k;
    for (std::uint64_t code = 0; code < total; ++code) {
      for (std::size_t j = 0; j < k; ++j) x[j] = static_cast<std::uint8_t>((code >> (k - 1 - j)) & 1U);
      if (!check()) break;
    }
  } else {
    RngState rng(seed);
    for (std::uint64_t s = 0; s < samples; ++s) {
      for (std::size_t j = 0; j < k; ++j) x[j] = static_cast<std::uint8_t>(rng.bernoulli(0.5) ? 1 : 0);
      if (!check()) break;
    }
  }
  return out;
}

CardinalitySystem parse_opb(const std::string& text, const std::optional<VariableSpace>& space) {
  struct Line {
    std::vector<int> support;
    int coef = 0;
    int rhs = 0;
    int line_no = 0;
  };
  std::vector<Line> lines;
  int declared_vars = -1;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  auto syntax = [&](const std::string& msg) {
    return Error(ErrorKind::SyntaxError, "opb line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    if (raw.empty()) continue;
    if (raw[0] == '*') {
      const auto pos = raw.find("#variable=");
      if (pos != std::string::npos) {
        std::istringstream h(raw.substr(pos + 10));
        if (!(h >> declared_vars)) throw syntax("bad #variable= header");
      }
      continue;
    }
    std::istringstream ls(raw);
    std::string tok;
    Line ln;
    ln.line_no = line_no;
    bool seen_ge = false;
    bool seen_end = false;
    while (ls >> tok) {
      if (seen_end) throw syntax("trailing tokens after ';'");
      if (tok == ">=") {
        std::string rhs;
        if (!(ls >> rhs)) throw syntax("missing right-hand side");
        try {
          std::size_t used = 0;
          ln.rhs = std::stoi(rhs, &used);
          if (used != rhs.size()) throw syntax("bad right-hand side '" + rhs + "'");
        } catch (const std::logic_error&) {
          throw syntax("bad right-hand side '" + rhs + "'");
        }
        seen_ge = true;
        continue;
      }
      if (tok == ";") {
        if (!seen_ge) throw syntax("missing '>='");
        seen_end = true;
        continue;
      }
      if (seen_ge) throw syntax("unexpected token '" + tok + "'");
      int coef = 0;
      if (tok == "+1") coef = 1;
      else if (tok == "-1") coef = -1;
      else throw syntax("only unit coefficients are supported, got '" + tok + "'");
      std::string var;
      if (!(ls >> var) || var.size() < 2 || var[0] != 'x') throw syntax("expected a variable after coefficient");
      int idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoi(var.substr(1), &used);
        if (used != var.size() - 1 || idx < 1) throw syntax("bad variable '" + var + "'");
      } catch (const std::logic_error&) {
        throw syntax("bad variable '" + var + "'");
      }
      if (ln.coef != 0 && ln.coef != coef) throw syntax("mixed coefficient signs");
      ln.coef = coef;
      ln.support.push_back(idx - 1);
    }
    if (!seen_end) throw syntax("missing ';'");
    if (ln.support.empty()) throw syntax("empty left-hand side");
    std::sort(ln.support.begin(), ln.support.end());
    if (std::adjacent_find(ln.support.begin(), ln.support.end()) != ln.support.end())
      throw syntax("repeated variable");
    lines.push_back(std::move(ln));
  }

  CardinalitySystem sys;
  if (space) {
    sys.space = *space;
  } else {
    int maxv = declared_vars;
    for (const auto& l : lines) maxv = std::max(maxv, l.support.back() + 1);
    sys.space.latent_bits = std::max(maxv, 0);
  }
  const int d = sys.space.dim();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const Line& l = lines[i];
    line_no = l.line_no;
    if (l.support.back() >= d) throw syntax("variable index exceeds the space");
    if (l.coef < 0) throw syntax("upper-bound line without a preceding lower-bound line");
    CardinalityConstraint c;
    c.support = l.support;
    c.lo = std::max(l.rhs, 0);
    c.hi = c.width();
    if (i + 1 < lines.size() && lines[i + 1].coef < 0 && lines[i + 1].support == l.support) {
      c.hi = -lines[i + 1].rhs;
      ++i;
    }
    if (c.lo > c.hi) {
      line_no = lines[i].line_no;
      throw syntax("empty bound interval");
    }
    sys.constraints.push_back(std::move(c));
  }
  return sys;
}

nlohmann::json to_json(const Solution& s) {
  nlohmann::json j;
  j["status"] = to_string(s.status);
  j["cost"] = s.cost;
  j["nodes"] = s.nodes;
  j["assignment"] = s.assignment;
  return j;
}

}  // namespace nesy
