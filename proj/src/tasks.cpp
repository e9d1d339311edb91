#include "nesy/tasks.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>
#include <tuple>

#include "nesy/perception.hpp"

namespace nesy {

// ---- JSONL ------------------------------------------------------------

std::string to_jsonl(const Dataset& ds) {
  std::ostringstream out;
  nlohmann::json header{{"task", ds.task}, {"space", to_json(ds.space)}, {"meta", ds.meta},
                        {"count", ds.samples.size()}};
  out << header.dump() << '\n';
  for (const auto& s : ds.samples) {
    nlohmann::json j;
    j["x"] = s.x ? nlohmann::json(*s.x) : nlohmann::json(nullptr);
    j["y"] = s.y;
    j["z"] = s.z ? nlohmann::json(*s.z) : nlohmann::json(nullptr);
    j["mask"] = s.mask;
    out << j.dump() << '\n';
  }
  return out.str();
}

Dataset dataset_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Dataset ds;
  int line_no = 0;
  try {
    if (!std::getline(in, line)) throw Error(ErrorKind::CorruptFile, "dataset: missing header line");
    ++line_no;
    const auto header = nlohmann::json::parse(line);
    ds.task = header.at("task").get<std::string>();
    ds.space = space_from_json(header.at("space"));
    if (header.contains("meta")) ds.meta = header.at("meta");
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      TaskSample s;
      if (!j.at("x").is_null()) s.x = j.at("x").get<std::vector<double>>();
      s.y = j.at("y").get<Assignment>();
      if (!j.at("z").is_null()) s.z = j.at("z").get<Assignment>();
      s.mask = j.at("mask").get<Assignment>();
      ds.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptFile, "dataset line " + std::to_string(line_no) + ": " + e.what());
  }
  return ds;
}

namespace {

RngState sample_rng(std::uint64_t seed, int split, std::size_t index) {
  return RngState(seed).fork((static_cast<std::uint64_t>(split) << 32) | index);
}

}  // namespace

// ---- chained XOR -------------------------------------------------------

bool parity(const Assignment& bits) {
  int ones = 0;
  for (auto b : bits) ones += b;
  return (ones & 1) != 0;
}

Dataset gen_xor(int L, int N, std::uint64_t seed, int split) {
  if (L < 1 || N < 1) throw Error(ErrorKind::InvalidArgument, "gen_xor: L and N must be >= 1");
  Dataset ds;
  ds.task = "xor";
  ds.space.observed_input_bits = L;
  ds.space.latent_bits = L - 1;
  ds.space.output_bits = 1;
  ds.meta = {{"L", L}, {"seed", seed}, {"split", split}};
  for (int n = 0; n < N; ++n) {
    RngState rng = sample_rng(seed, split, static_cast<std::size_t>(n));
    Assignment bits(static_cast<std::size_t>(L));
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng.below(2));
    TaskSample s;
    s.x = std::vector<double>(bits.begin(), bits.end());
    s.y = {static_cast<std::uint8_t>(parity(bits))};
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

// ---- Sudoku -----------------------------------------------------------

GlyphMode glyph_mode_from_string(const std::string& s) {
  if (s == "symbolic") return GlyphMode::Symbolic;
  if (s == "synthetic") return GlyphMode::Synthetic;
  if (s == "idx") return GlyphMode::Idx;
  throw Error(ErrorKind::InvalidArgument, "unknown glyph mode '" + s + "' (symbolic, synthetic, idx)");
}

const char* to_string(GlyphMode m) noexcept {
  switch (m) {
    case GlyphMode::Symbolic: return "symbolic";
    case GlyphMode::Synthetic: return "synthetic";
    case GlyphMode::Idx: return "idx";
  }
  return "symbolic";
}

namespace {

int box_side(int size) {
  int b = 1;
  while (b * b < size) ++b;
  if (b * b != size) throw Error(ErrorKind::InvalidArgument, "sudoku: size must be a perfect square");
  return b;
}

bool allowed(int size, int bs, const std::vector<int>& board, int cell, int digit) {
  const int r = cell / size;
  const int c = cell % size;
  for (int k = 0; k < size; ++k) {
    if (board[r * size + k] == digit || board[k * size + c] == digit) return false;
  }
  const int r0 = r / bs * bs;
  const int c0 = c / bs * bs;
  for (int i = 0; i < bs; ++i)
    for (int j = 0; j < bs; ++j)
      if (board[(r0 + i) * size + c0 + j] == digit) return false;
  return true;
}

bool fill_random(int size, int bs, std::vector<int>& board, int cell, RngState& rng) {
  if (cell == size * size) return true;
  if (board[cell] != 0) return fill_random(size, bs, board, cell + 1, rng);
  std::vector<int> digits(static_cast<std::size_t>(size));
  for (int d = 0; d < size; ++d) digits[d] = d + 1;
  shuffle(rng, digits);
  for (int d : digits) {
    if (!allowed(size, bs, board, cell, d)) continue;
    board[cell] = d;
    if (fill_random(size, bs, board, cell + 1, rng)) return true;
  }
  board[cell] = 0;
  return false;
}

int count_from(int size, int bs, std::vector<int>& board, int limit) {
  // Branch on the blank cell with the fewest candidates.
  int best = -1;
  int best_count = size + 1;
  for (int cell = 0; cell < size * size; ++cell) {
    if (board[cell] != 0) continue;
    int n = 0;
    for (int d = 1; d <= size; ++d) n += allowed(size, bs, board, cell, d);
    if (n < best_count) {
      best_count = n;
      best = cell;
      if (n == 0) return 0;
    }
  }
  if (best < 0) return 1;
  int total = 0;
  for (int d = 1; d <= size && total < limit; ++d) {
    if (!allowed(size, bs, board, best, d)) continue;
    board[best] = d;
    total += count_from(size, bs, board, limit - total);
    board[best] = 0;
  }
  return total;
}

}  // namespace

CardinalitySystem sudoku_ground_truth(int size) {
  const int bs = box_side(size);
  CardinalitySystem sys;
  sys.space.latent_bits = size * size * size;
  for (int cell = 0; cell < size * size; ++cell) {
    std::vector<int> g;
    for (int d = 0; d < size; ++d) g.push_back(cell * size + d);
    sys.space.one_hot_groups.push_back(g);
  }
  auto add = [&](std::vector<int> support) {
    std::sort(support.begin(), support.end());
    sys.constraints.push_back({std::move(support), 1, 1});
  };
  for (int d = 0; d < size; ++d) {
    for (int r = 0; r < size; ++r) {
      std::vector<int> s;
      for (int c = 0; c < size; ++c) s.push_back(sudoku_var(size, r, c, d));
      add(s);
    }
    for (int c = 0; c < size; ++c) {
      std::vector<int> s;
      for (int r = 0; r < size; ++r) s.push_back(sudoku_var(size, r, c, d));
      add(s);
    }
    for (int b = 0; b < size; ++b) {
      std::vector<int> s;
      const int r0 = b / bs * bs;
      const int c0 = b % bs * bs;
      for (int i = 0; i < bs; ++i)
        for (int j = 0; j < bs; ++j) s.push_back(sudoku_var(size, r0 + i, c0 + j, d));
      add(s);
    }
  }
  for (int cell = 0; cell < size * size; ++cell) add(sys.space.one_hot_groups[cell]);
  return canonical(std::move(sys));
}

int count_sudoku_solutions(int size, std::vector<int> board, int limit) {
  const int bs = box_side(size);
  if (board.size() != static_cast<std::size_t>(size * size))
    throw Error(ErrorKind::DimensionMismatch, "sudoku: board has the wrong size");
  for (int cell = 0; cell < size * size; ++cell) {
    const int d = board[cell];
    if (d == 0) continue;
    board[cell] = 0;
    const bool ok = allowed(size, bs, board, cell, d);
    board[cell] = d;
    if (!ok) return 0;
  }
  return count_from(size, bs, board, limit);
}

std::vector<int> decode_board(int size, const Assignment& onehot) {
  std::vector<int> board(static_cast<std::size_t>(size * size), 0);
  for (int cell = 0; cell < size * size; ++cell)
    for (int d = 0; d < size; ++d)
      if (onehot[static_cast<std::size_t>(cell * size + d)]) board[cell] = d + 1;
  return board;
}

std::vector<std::uint8_t> glyph_bitmap(int digit) {
  static const std::array<std::array<const char*, 8>, 9> font = {{
      {"...##...", "..###...", ".####...", "...##...", "...##...", "...##...", ".######.", "........"},
      {"..####..", ".##..##.", ".....##.", "....##..", "...##...", "..##....", ".######.", "........"},
      {".#####..", ".....##.", ".....##.", "..####..", ".....##.", ".....##.", ".#####..", "........"},
      {"....##..", "...###..", "..####..", ".##.##..", ".######.", "....##..", "....##..", "........"},
      {".######.", ".##.....", ".#####..", ".....##.", ".....##.", ".##..##.", "..####..", "........"},
      {"..####..", ".##.....", ".##.....", ".#####..", ".##..##.", ".##..##.", "..####..", "........"},
      {".######.", ".....##.", "....##..", "...##...", "..##....", "..##....", "..##....", "........"},
      {"..####..", ".##..##.", ".##..##.", "..####..", ".##..##.", ".##..##.", "..####..", "........"},
      {"..####..", ".##..##.", ".##..##.", "..#####.", ".....##.", "....##..", "..###...", "........"},
  }};
  if (digit < 1 || digit > 9) throw Error(ErrorKind::InvalidArgument, "glyph_bitmap: digit must be 1..9");
  std::vector<std::uint8_t> out;
  out.reserve(kGlyphSide * kGlyphSide);
  for (const char* row : font[digit - 1])
    for (int c = 0; c < kGlyphSide; ++c) out.push_back(row[c] == '#' ? 1 : 0);
  return out;
}

Dataset gen_sudoku(const SudokuConfig& cfg) {
  const int size = cfg.size;
  if (size != 4 && size != 9) throw Error(ErrorKind::InvalidArgument, "gen_sudoku: size must be 4 or 9");
  const int bs = box_side(size);
  const int cells = size * size;
  if (cfg.N < 1 || cfg.min_givens < 1 || cfg.min_givens > cfg.max_givens || cfg.max_givens > cells)
    throw Error(ErrorKind::InvalidArgument, "gen_sudoku: infeasible givens range or N");
  if (cfg.noise < 0 || cfg.noise > 1) throw Error(ErrorKind::InvalidArgument, "gen_sudoku: noise must be in [0,1]");

  // idx mode: a pool of digit images per label.
  std::vector<std::vector<std::size_t>> pool(static_cast<std::size_t>(size + 1));
  IdxImages images;
  int pixels = kGlyphSide * kGlyphSide;
  if (cfg.mode == GlyphMode::Idx) {
    if (cfg.idx_images.empty() || cfg.idx_labels.empty() || !std::ifstream(cfg.idx_images) ||
        !std::ifstream(cfg.idx_labels))
      throw Error(ErrorKind::IdxUnavailable, "gen_sudoku: idx mode needs readable image and label files");
    images = load_idx_images(cfg.idx_images);
    const auto labels = load_idx_labels(cfg.idx_labels);
    if (static_cast<int>(labels.size()) != images.count)
      throw Error(ErrorKind::IdxUnavailable, "gen_sudoku: image and label counts differ");
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] >= 1 && labels[i] <= size) pool[labels[i]].push_back(i);
    for (int d = 1; d <= size; ++d)
      if (pool[d].empty()) throw Error(ErrorKind::IdxUnavailable, "gen_sudoku: no image for digit " + std::to_string(d));
    pixels = images.rows * images.cols;
  }

  Dataset ds;
  ds.task = "sudoku";
  ds.space = sudoku_ground_truth(size).space;
  ds.meta = {{"size", size},          {"mode", to_string(cfg.mode)}, {"noise", cfg.noise},
             {"seed", cfg.seed},      {"split", cfg.split},          {"min_givens", cfg.min_givens},
             {"max_givens", cfg.max_givens}, {"pixels", cfg.mode == GlyphMode::Symbolic ? 0 : pixels}};
  for (int n = 0; n < cfg.N; ++n) {
    RngState rng = sample_rng(cfg.seed, cfg.split, static_cast<std::size_t>(n));
    std::vector<int> solution(static_cast<std::size_t>(cells), 0);
    fill_random(size, bs, solution, 0, rng);
    const int target = cfg.min_givens + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_givens - cfg.min_givens + 1)));
    std::vector<int> order(static_cast<std::size_t>(cells));
    for (int i = 0; i < cells; ++i) order[i] = i;
    shuffle(rng, order);
    std::vector<int> puzzle = solution;
    int givens = cells;
    for (int cell : order) {
      if (givens == target) break;
      const int keep = puzzle[cell];
      puzzle[cell] = 0;
      if (count_sudoku_solutions(size, puzzle, 2) == 1) {
        --givens;
      } else {
        puzzle[cell] = keep;
      }
    }

    TaskSample s;
    s.mask.assign(static_cast<std::size_t>(cells), 0);
    s.y.assign(static_cast<std::size_t>(cells * size), 0);
    Assignment z(static_cast<std::size_t>(cells * size), 0);
    for (int cell = 0; cell < cells; ++cell) {
      const int v = cell * size + solution[cell] - 1;
      if (puzzle[cell] != 0) {
        s.mask[cell] = 1;
        z[v] = 1;
      } else {
        s.y[v] = 1;
      }
    }
    s.z = z;
    if (cfg.mode != GlyphMode::Symbolic) {
      std::vector<double> x(static_cast<std::size_t>(cells * pixels), 0.0);
      for (int cell = 0; cell < cells; ++cell) {
        if (puzzle[cell] == 0) continue;  // blank cells render as empty images
        double* px = x.data() + static_cast<std::size_t>(cell) * pixels;
        if (cfg.mode == GlyphMode::Synthetic) {
          const auto glyph = glyph_bitmap(puzzle[cell]);
          for (int p = 0; p < pixels; ++p) px[p] = glyph[p] ^ static_cast<std::uint8_t>(rng.bernoulli(cfg.noise));
        } else {
          const auto& ids = pool[puzzle[cell]];
          const std::size_t pick = ids[rng.below(ids.size())];
          for (int p = 0; p < pixels; ++p) px[p] = images.pixels[pick * pixels + p] / 255.0;
        }
      }
      s.x = std::move(x);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

// ---- nonograms --------------------------------------------------------

Clue line_clue(const Assignment& line) {
  Clue clue;
  int run = 0;
  for (auto b : line) {
    if (b) {
      ++run;
    } else if (run > 0) {
      clue.push_back(run);
      run = 0;
    }
  }
  if (run > 0) clue.push_back(run);
  return clue;
}

std::vector<Clue> enumerate_clues(int n) {
  if (n < 1 || n > 24) throw Error(ErrorKind::InvalidArgument, "enumerate_clues: n must be in [1, 24]");
  std::vector<Clue> out;
  Assignment line(static_cast<std::size_t>(n));
  for (std::uint32_t code = 0; code < (1U << n); ++code) {
    for (int i = 0; i < n; ++i) line[i] = static_cast<std::uint8_t>((code >> i) & 1U);
    out.push_back(line_clue(line));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Dataset gen_nonogram(int size, int N, std::uint64_t seed, double fill, int split) {
  if (size < 2 || N < 1) throw Error(ErrorKind::InvalidArgument, "gen_nonogram: size >= 2 and N >= 1 required");
  const auto clues = enumerate_clues(size);
  Dataset ds;
  ds.task = "nonogram";
  ds.space.observed_input_bits = static_cast<int>(clues.size());
  ds.space.latent_bits = size - 1;
  ds.space.output_bits = size;
  ds.space.one_hot_groups.push_back({});
  for (int i = 0; i < static_cast<int>(clues.size()); ++i) ds.space.one_hot_groups[0].push_back(i);
  ds.meta = {{"size", size}, {"seed", seed}, {"split", split}, {"fill", fill}, {"clues", clues}};
  // One board yields 2*size lines; lines are drawn from consecutive boards.
  Assignment board;
  for (int n = 0; n < N; ++n) {
    const int line = n % (2 * size);
    if (line == 0) {
      RngState rng = sample_rng(seed, split, static_cast<std::size_t>(n / (2 * size)));
      board.assign(static_cast<std::size_t>(size * size), 0);
      for (auto& c : board) c = static_cast<std::uint8_t>(rng.bernoulli(fill));
    }
    TaskSample s;
    s.y.resize(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i)
      s.y[i] = line < size ? board[line * size + i] : board[i * size + (line - size)];
    const auto clue = line_clue(s.y);
    const auto at = std::lower_bound(clues.begin(), clues.end(), clue) - clues.begin();
    std::vector<double> x(clues.size(), 0.0);
    x[static_cast<std::size_t>(at)] = 1.0;
    s.x = std::move(x);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

// ---- grid path planning ----------------------------------------------

std::vector<Cell> astar(const std::vector<std::uint8_t>& blocked, int H, int W, Cell start, Cell goal) {
  if (blocked.size() != static_cast<std::size_t>(H * W))
    throw Error(ErrorKind::DimensionMismatch, "astar: grid has the wrong size");
  auto inside = [&](Cell c) { return c.row >= 0 && c.row < H && c.col >= 0 && c.col < W; };
  if (!inside(start) || !inside(goal) || blocked[start.row * W + start.col] || blocked[goal.row * W + goal.col])
    throw Error(ErrorKind::InvalidArgument, "astar: start and goal must be free cells inside the grid");
  auto h = [&](Cell c) { return std::abs(c.row - goal.row) + std::abs(c.col - goal.col); };
  const int total = H * W;
  std::vector<int> g(static_cast<std::size_t>(total), -1);
  std::vector<int> parent(static_cast<std::size_t>(total), -1);
  std::vector<char> closed(static_cast<std::size_t>(total), 0);
  using Entry = std::tuple<int, int, int>;  // (f, row, col)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  g[start.row * W + start.col] = 0;
  open.emplace(h(start), start.row, start.col);
  const std::array<Cell, 4> steps{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
  while (!open.empty()) {
    const auto [f, r, c] = open.top();
    open.pop();
    const int id = r * W + c;
    if (closed[id]) continue;
    closed[id] = 1;
    if (Cell{r, c} == goal) {
      std::vector<Cell> path;
      for (int at = id; at >= 0; at = parent[at]) path.push_back({at / W, at % W});
      std::reverse(path.begin(), path.end());
      return path;
    }
    for (const Cell& s : steps) {
      const Cell n{r + s.row, c + s.col};
      if (!inside(n)) continue;
      const int nid = n.row * W + n.col;
      if (blocked[nid] || closed[nid]) continue;
      const int ng = g[id] + 1;
      if (g[nid] < 0 || ng < g[nid]) {
        g[nid] = ng;
        parent[nid] = id;
        open.emplace(ng + h(n), n.row, n.col);
      }
    }
  }
  throw Error(ErrorKind::NoPath, "astar: goal unreachable");
}

Dataset gen_gridpath(const GridPathConfig& cfg) {
  const int cells = cfg.H * cfg.W;
  if (cfg.H < 1 || cfg.W < 1 || cfg.N < 1 || cfg.obstacles < 0 || cfg.obstacles > cells - 2)
    throw Error(ErrorKind::InvalidArgument, "gen_gridpath: invalid grid, obstacle count or N");
  Dataset ds;
  ds.task = "gridpath";
  ds.space.latent_bits = cells;
  ds.space.output_bits = cells;
  ds.meta = {{"H", cfg.H}, {"W", cfg.W}, {"obstacles", cfg.obstacles}, {"noise", cfg.noise},
             {"seed", cfg.seed}, {"split", cfg.split}};
  for (int n = 0; n < cfg.N; ++n) {
    RngState rng = sample_rng(cfg.seed, cfg.split, static_cast<std::size_t>(n));
    std::vector<Cell> path;
    std::vector<std::uint8_t> blocked;
    while (path.empty()) {
      blocked.assign(static_cast<std::size_t>(cells), 0);
      std::vector<int> order(static_cast<std::size_t>(cells - 1));
      for (int i = 1; i < cells; ++i) order[i - 1] = i;  // never block the start
      shuffle(rng, order);
      for (int i = 0; i < cfg.obstacles; ++i) blocked[order[i]] = 1;
      std::vector<int> free_cells;
      for (int i = 1; i < cells; ++i)
        if (!blocked[i]) free_cells.push_back(i);
      if (free_cells.empty()) continue;
      const int goal = free_cells[rng.below(free_cells.size())];
      try {
        path = astar(blocked, cfg.H, cfg.W, {0, 0}, {goal / cfg.W, goal % cfg.W});
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NoPath) throw;
      }
    }
    TaskSample s;
    s.z = Assignment(blocked.begin(), blocked.end());
    s.y.assign(static_cast<std::size_t>(cells), 0);
    for (const Cell& c : path) s.y[c.row * cfg.W + c.col] = 1;
    std::vector<double> x(static_cast<std::size_t>(cells));
    for (int i = 0; i < cells; ++i) x[i] = blocked[i] + (cfg.noise > 0 ? rng.uniform(-cfg.noise, cfg.noise) : 0.0);
    s.x = std::move(x);
    s.mask.assign(static_cast<std::size_t>(cells), 0);
    s.mask[0] = 1;
    s.mask[path.back().row * cfg.W + path.back().col] = 1;  // endpoints
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace nesy
