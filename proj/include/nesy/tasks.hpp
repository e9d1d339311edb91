#pragma once

// Dataset generators with known ground truth. Every sample draws from its own
// forked random stream, so generation is deterministic per (seed, split, index).

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "nesy/constraints.hpp"

namespace nesy {

struct TaskSample {
  std::optional<std::vector<double>> x;  // perception input or observed bits
  Assignment y;                          // output bits
  std::optional<Assignment> z;           // hidden latent bits (evaluation only)
  Assignment mask;                       // task-specific given/blank indicators
};

struct Dataset {
  std::string task;
  VariableSpace space;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<TaskSample> samples;
};

std::string to_jsonl(const Dataset& ds);
Dataset dataset_from_jsonl(const std::string& text);

// ---- chained XOR -------------------------------------------------------

/// Space: L observed bits, L-1 auxiliary latent bits, one output bit.
Dataset gen_xor(int L, int N, std::uint64_t seed, int split = 0);
bool parity(const Assignment& bits);

// ---- Sudoku -----------------------------------------------------------

enum class GlyphMode { Symbolic, Synthetic, Idx };
GlyphMode glyph_mode_from_string(const std::string& s);
const char* to_string(GlyphMode m) noexcept;

struct SudokuConfig {
  int size = 4;
  int N = 100;
  int min_givens = 6;
  int max_givens = 10;
  GlyphMode mode = GlyphMode::Symbolic;
  double noise = 0.05;       // pixel flip rate for synthetic glyphs
  std::string idx_images;    // idx mode only
  std::string idx_labels;
  std::uint64_t seed = 0;
  int split = 0;
};

/// Board variable for digit `digit` (0-based) in cell (r, c).
inline int sudoku_var(int size, int r, int c, int digit) { return (r * size + c) * size + digit; }

/// Rows x digits, columns x digits, blocks x digits and cells, each summing to exactly one.
CardinalitySystem sudoku_ground_truth(int size);

/// Number of completions of a partial board (0 = blank), stopping at `limit`.
int count_sudoku_solutions(int size, std::vector<int> board, int limit = 2);

/// Samples carry z = one-hot of given cells, y = one-hot of blank cells and a
/// per-cell mask (1 = given). Puzzles always have a unique solution.
Dataset gen_sudoku(const SudokuConfig& cfg);

/// Board digits (1-based, 0 = blank) from a one-hot board vector.
std::vector<int> decode_board(int size, const Assignment& onehot);

/// 8x8 reference bitmap for digit 1..9, row-major, 0/1.
std::vector<std::uint8_t> glyph_bitmap(int digit);
inline constexpr int kGlyphSide = 8;

// ---- nonograms --------------------------------------------------------

using Clue = std::vector<int>;
Clue line_clue(const Assignment& line);
/// Every clue realizable on a line of length n, in lexicographic order.
std::vector<Clue> enumerate_clues(int n);

/// Per-line samples: x = clue one-hot (observed bits), y = line cells.
/// Space: |clues| observed bits, n-1 separator latent bits, n output bits.
Dataset gen_nonogram(int size, int N, std::uint64_t seed, double fill = 0.4, int split = 0);

// ---- grid path planning ----------------------------------------------

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// 4-neighbour unit-cost A* with Manhattan heuristic; open-list ties broken by
/// (f, row, col). `blocked` is row-major H x W. Throws NoPath.
std::vector<Cell> astar(const std::vector<std::uint8_t>& blocked, int H, int W, Cell start, Cell goal);

struct GridPathConfig {
  int H = 10;
  int W = 10;
  int obstacles = 20;
  int N = 100;
  double noise = 0.3;  // x = obstacle bit + uniform(-noise, noise)
  std::uint64_t seed = 0;
  int split = 0;
};

/// Start fixed at (0,0), random reachable goal. z = obstacle bits, y = path bits.
Dataset gen_gridpath(const GridPathConfig& cfg);

}  // namespace nesy
