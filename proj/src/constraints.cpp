#include "nesy/constraints.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace nesy {

void VariableSpace::validate() const {
  if (observed_input_bits < 0 || latent_bits < 0 || output_bits < 0)
    throw Error(ErrorKind::InvalidArgument, "variable space: negative segment size");
  const int d = dim();
  std::vector<char> seen(static_cast<std::size_t>(d), 0);
  for (const auto& group : one_hot_groups) {
    for (int v : group) {
      if (v < 0 || v >= d) throw Error(ErrorKind::InvalidArgument, "variable space: group index out of range");
      if (seen[v]++) throw Error(ErrorKind::InvalidArgument, "variable space: one-hot groups overlap");
    }
  }
  if (!names.empty() && static_cast<int>(names.size()) != d)
    throw Error(ErrorKind::InvalidArgument, "variable space: names must cover every variable");
}

int CardinalityConstraint::sum(const Assignment& s) const {
  int total = 0;
  for (int v : support) total += s[v];
  return total;
}

void CardinalitySystem::validate() const {
  space.validate();
  const int d = dim();
  for (const auto& c : constraints) {
    if (c.support.empty()) throw Error(ErrorKind::InvalidArgument, "constraint with all-zero weights");
    if (!std::is_sorted(c.support.begin(), c.support.end()) ||
        std::adjacent_find(c.support.begin(), c.support.end()) != c.support.end())
      throw Error(ErrorKind::InvalidArgument, "constraint support must be strictly increasing");
    if (c.support.front() < 0 || c.support.back() >= d)
      throw Error(ErrorKind::DimensionMismatch, "constraint support outside the variable space");
    if (c.lo < 0 || c.lo > c.hi || c.hi > c.width())
      throw Error(ErrorKind::InvalidArgument, "constraint bounds violate 0 <= lo <= hi <= |w|");
  }
}

Matrix CardinalitySystem::weight_matrix() const {
  Matrix w = Matrix::Zero(static_cast<Eigen::Index>(constraints.size()), dim());
  for (std::size_t i = 0; i < constraints.size(); ++i)
    for (int v : constraints[i].support) w(static_cast<Eigen::Index>(i), v) = 1.0;
  return w;
}

CardinalitySystem canonical(CardinalitySystem sys) {
  std::sort(sys.constraints.begin(), sys.constraints.end());
  return sys;
}

BoolMatrix binarize(const Matrix& m, double eps) {
  BoolMatrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double x = m(i, j);
      if (std::abs(x) <= eps) {
        out(i, j) = 0;
      } else if (std::abs(1.0 - x) <= eps) {
        out(i, j) = 1;
      } else {
        std::ostringstream msg;
        msg << "entry (" << i << ", " << j << ") = " << x << " is farther than " << eps << " from {0,1}";
        throw Error(ErrorKind::NotBoolean, msg.str());
      }
    }
  }
  return out;
}

BinarizedRows binarize_system(const RelaxedSystem& rs, double eps) { return {binarize(rs.W, eps), rs.b}; }

CardinalitySystem deduplicate(const CardinalitySystem& sys) {
  CardinalitySystem out{sys.space, {}};
  std::set<CardinalityConstraint> seen;
  for (const auto& c : sys.constraints) {
    if (c.support.empty() || c.vacuous()) continue;
    if (!seen.insert(c).second) continue;
    out.constraints.push_back(c);
  }
  return out;
}

Bounds estimate_bounds_from_sums(std::vector<int> sums, double coverage) {
  if (sums.empty()) throw Error(ErrorKind::InvalidArgument, "estimate_bounds: no samples");
  if (!(coverage > 0 && coverage <= 1)) throw Error(ErrorKind::InvalidArgument, "estimate_bounds: coverage outside (0,1]");
  std::sort(sums.begin(), sums.end());
  const std::size_t n = sums.size();
  // Smallest count k with k/n >= coverage; the epsilon absorbs decimal coverages like 0.8.
  std::size_t need = static_cast<std::size_t>(std::ceil(coverage * static_cast<double>(n) - 1e-9));
  need = std::clamp<std::size_t>(need, 1, n);
  Bounds best{sums.front(), sums.back()};
  int best_width = best.hi - best.lo;
  for (std::size_t i = 0; i + need <= n; ++i) {
    const int lo = sums[i];
    const int hi = sums[i + need - 1];
    if (hi - lo < best_width || (hi - lo == best_width && lo < best.lo)) {
      best = {lo, hi};
      best_width = hi - lo;
    }
  }
  return best;
}

Bounds estimate_bounds(const std::vector<int>& support, const std::vector<Assignment>& samples, double coverage) {
  if (samples.empty()) throw Error(ErrorKind::InvalidArgument, "estimate_bounds: no samples");
  std::vector<int> sums;
  sums.reserve(samples.size());
  for (const auto& s : samples) {
    int total = 0;
    for (int v : support) total += s[v];
    sums.push_back(total);
  }
  return estimate_bounds_from_sums(std::move(sums), coverage);
}

CardinalitySystem system_from_rows(const VariableSpace& space, const BoolMatrix& weights,
                                   const std::vector<Assignment>& samples, double coverage) {
  if (weights.cols() != space.dim()) throw Error(ErrorKind::DimensionMismatch, "weight columns differ from space");
  CardinalitySystem sys{space, {}};
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    CardinalityConstraint c;
    for (Eigen::Index j = 0; j < weights.cols(); ++j)
      if (weights(i, j)) c.support.push_back(static_cast<int>(j));
    if (!c.support.empty()) {
      const Bounds b = estimate_bounds(c.support, samples, coverage);
      c.lo = b.lo;
      c.hi = b.hi;
    }
    sys.constraints.push_back(std::move(c));
  }
  return sys;
}

Evaluation evaluate(const CardinalitySystem& sys, const Assignment& s) {
  if (static_cast<int>(s.size()) != sys.dim())
    throw Error(ErrorKind::DimensionMismatch, "evaluate: assignment length " + std::to_string(s.size()) +
                                                  " != space dimension " + std::to_string(sys.dim()));
  Evaluation ev;
  ev.sums.reserve(sys.constraints.size());
  for (const auto& c : sys.constraints) {
    const int v = c.sum(s);
    ev.sums.push_back(v);
    if (v < c.lo || v > c.hi) ev.satisfied = false;
  }
  return ev;
}

namespace {

bool accepts(const CardinalitySystem& sys, const Assignment& s) {
  for (const auto& c : sys.constraints)
    if (!c.satisfied_by(s)) return false;
  return true;
}

}  // namespace

EquivalenceResult semantic_equivalence(const CardinalitySystem& a, const CardinalitySystem& b, int max_vars,
                                       std::uint64_t samples, std::uint64_t seed) {
  if (!(a.space == b.space)) throw Error(ErrorKind::SpaceMismatch, "semantic_equivalence: different variable spaces");
  const int d = a.dim();
  EquivalenceResult res;
  Assignment s(static_cast<std::size_t>(d), 0);
  if (d <= max_vars) {
    const std::uint64_t total = std::uint64_t{1} << d;
    for (std::uint64_t code = 0; code < total; ++code) {
      for (int j = 0; j < d; ++j) s[j] = static_cast<std::uint8_t>((code >> j) & 1U);
      ++res.checked;
      if (accepts(a, s) != accepts(b, s)) {
        res.equivalent = false;
        res.witness = s;
        return res;
      }
    }
    return res;
  }
  res.exhaustive = false;
  RngState rng(seed);
  for (std::uint64_t k = 0; k < samples; ++k) {
    for (int j = 0; j < d; ++j) s[j] = static_cast<std::uint8_t>(rng.next_u64() >> 63);
    ++res.checked;
    if (accepts(a, s) != accepts(b, s)) {
      res.equivalent = false;
      res.witness = s;
      return res;
    }
  }
  return res;
}

std::string export_opb(const CardinalitySystem& sys) {
  std::ostringstream body;
  std::size_t lines = 0;
  for (const auto& c : sys.constraints) {
    for (int v : c.support) body << "+1 x" << (v + 1) << ' ';
    body << ">= " << c.lo << " ;\n";
    // The upper line is written even when hi equals the width, so every
    // constraint is a lower/upper pair.
    for (int v : c.support) body << "-1 x" << (v + 1) << ' ';
    body << ">= " << -c.hi << " ;\n";
    lines += 2;
  }
  std::ostringstream out;
  out << "* #variable= " << sys.dim() << " #constraint= " << lines << '\n' << body.str();
  return out.str();
}

std::string export_smt2(const CardinalitySystem& sys) {
  std::ostringstream out;
  out << "(set-logic QF_LIA)\n";
  for (int v = 1; v <= sys.dim(); ++v) {
    out << "(declare-fun x" << v << " () Int)\n";
    out << "(assert (and (<= 0 x" << v << ") (<= x" << v << " 1)))\n";
  }
  for (const auto& c : sys.constraints) {
    out << "(assert (<= " << c.lo << ' ';
    if (c.support.size() == 1) {
      out << 'x' << (c.support.front() + 1);
    } else {
      out << "(+";
      for (int v : c.support) out << " x" << (v + 1);
      out << ')';
    }
    out << ' ' << c.hi << "))\n";
  }
  out << "(check-sat)\n";
  return out.str();
}

nlohmann::json to_json(const VariableSpace& space) {
  return nlohmann::json{{"observed_input_bits", space.observed_input_bits},
                        {"latent_bits", space.latent_bits},
                        {"output_bits", space.output_bits},
                        {"one_hot_groups", space.one_hot_groups},
                        {"names", space.names}};
}

VariableSpace space_from_json(const nlohmann::json& j) {
  VariableSpace s;
  s.observed_input_bits = j.at("observed_input_bits").get<int>();
  s.latent_bits = j.at("latent_bits").get<int>();
  s.output_bits = j.at("output_bits").get<int>();
  if (j.contains("one_hot_groups")) s.one_hot_groups = j.at("one_hot_groups").get<std::vector<std::vector<int>>>();
  if (j.contains("names")) s.names = j.at("names").get<std::vector<std::string>>();
  s.validate();
  return s;
}

nlohmann::json to_json(const CardinalitySystem& sys) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : sys.constraints) {
    std::vector<int> w = c.support;
    std::sort(w.begin(), w.end());
    rows.push_back({{"w", w}, {"lo", c.lo}, {"hi", c.hi}});
  }
  return nlohmann::json{{"version", 1}, {"space", to_json(sys.space)}, {"constraints", rows}};
}

CardinalitySystem system_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1)
    throw Error(ErrorKind::VersionMismatch, "constraint system version " + j.at("version").dump());
  CardinalitySystem sys;
  sys.space = space_from_json(j.at("space"));
  for (const auto& row : j.at("constraints")) {
    CardinalityConstraint c;
    c.support = row.at("w").get<std::vector<int>>();
    std::sort(c.support.begin(), c.support.end());
    c.lo = row.at("lo").get<int>();
    c.hi = row.at("hi").get<int>();
    sys.constraints.push_back(std::move(c));
  }
  sys.validate();
  return sys;
}

}  // namespace nesy
