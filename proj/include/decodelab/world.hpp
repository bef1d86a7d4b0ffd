#pragma once

// Symbolic scenes and referential games.
//
// A scene is a small grid of objects, each with a category, a color, a size
// and a cell. A game picks 3 to 6 of the scene objects as candidates and one
// of them as the secret target; the remaining objects are distractors that
// still count as "present" for hallucination scoring.

#include <algorithm>
#include <array>
#include <cstdlib>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace decodelab {

inline constexpr std::string_view kLexiconVersion = "v1";
inline constexpr int kMinCandidates = 3;
inline constexpr int kMaxCandidates = 6;
inline constexpr int kMaxDistractors = 2;
inline constexpr int kMaxObjects = kMaxCandidates + kMaxDistractors;
inline constexpr double kCellSize = 100.0;

struct CategoryWord {
  std::string_view singular;
  std::string_view plural;
};

/// Closed world lexicon. Order is part of lexicon_version.
struct Lexicon {
  static constexpr std::array<CategoryWord, 24> categories{{
      {"bird", "birds"},     {"dog", "dogs"},         {"person", "people"},
      {"car", "cars"},       {"chair", "chairs"},     {"cat", "cats"},
      {"horse", "horses"},   {"bus", "buses"},        {"truck", "trucks"},
      {"boat", "boats"},     {"bottle", "bottles"},   {"cup", "cups"},
      {"bench", "benches"},  {"bicycle", "bicycles"}, {"bear", "bears"},
      {"cow", "cows"},       {"zebra", "zebras"},     {"giraffe", "giraffes"},
      {"pizza", "pizzas"},   {"laptop", "laptops"},   {"kite", "kites"},
      {"tie", "ties"},       {"vase", "vases"},       {"book", "books"},
  }};
  static constexpr std::array<std::string_view, 10> colors{
      "red", "blue", "green", "white", "black", "brown", "gray", "yellow", "pink", "purple"};
  static constexpr std::array<std::string_view, 2> sizes{"small", "large"};
  static constexpr std::array<std::string_view, 2> sides{"left", "right"};
  static constexpr std::array<std::string_view, kMaxObjects> ordinals{
      "1st", "2nd", "3rd", "4th", "5th", "6th", "7th", "8th"};
  // counts[i] is the word for i + 2
  static constexpr std::array<std::string_view, kMaxObjects - 2> counts{
      "two", "three", "four", "five", "six", "seven"};

  static bool is_category(std::string_view s) {
    return std::any_of(categories.begin(), categories.end(),
                       [&](const CategoryWord& c) { return c.singular == s; });
  }
  static bool is_color(std::string_view s) {
    return std::find(colors.begin(), colors.end(), s) != colors.end();
  }
  static bool is_size(std::string_view s) {
    return std::find(sizes.begin(), sizes.end(), s) != sizes.end();
  }
  static std::optional<std::string_view> plural_of(std::string_view singular) {
    for (const auto& c : categories)
      if (c.singular == singular) return c.plural;
    return std::nullopt;
  }
};

struct BBox {
  double x = 0, y = 0, w = 0, h = 0;
  bool operator==(const BBox&) const = default;
};

struct SceneObject {
  int id = 0;
  std::string category;
  std::string color;
  std::string size;  // "small" | "large"
  int row = 0;
  int col = 0;
  BBox bbox;
  bool operator==(const SceneObject&) const = default;
};

struct Scene {
  int rows = 0;
  int cols = 0;
  std::vector<SceneObject> objects;

  const SceneObject* find(int id) const {
    for (const auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }

  /// 1-based position of `obj` when the scene is read left to right
  /// (column, then row, then id).
  int rank_from_left(const SceneObject& obj) const {
    int rank = 1;
    for (const auto& o : objects) {
      if (std::tie(o.col, o.row, o.id) < std::tie(obj.col, obj.row, obj.id)) ++rank;
    }
    return rank;
  }

  bool has_category(std::string_view cat) const {
    return std::any_of(objects.begin(), objects.end(),
                       [&](const SceneObject& o) { return o.category == cat; });
  }

  bool operator==(const Scene&) const = default;
};

struct Game {
  std::string game_id;
  Scene scene;
  int target_id = 0;
  std::vector<int> candidate_ids;

  const SceneObject& object(int id) const {
    const SceneObject* o = scene.find(id);
    if (!o) throw Error(Errc::validation, "game " + game_id + ": no object " + std::to_string(id));
    return *o;
  }
  bool is_candidate(int id) const {
    return std::find(candidate_ids.begin(), candidate_ids.end(), id) != candidate_ids.end();
  }
  bool operator==(const Game&) const = default;
};

struct Dataset {
  std::vector<Game> games;
  std::uint64_t generation_seed = 0;
  std::string lexicon_version{kLexiconVersion};
  int rows = 0;
  int cols = 0;
  bool operator==(const Dataset&) const = default;
};

// ---------------------------------------------------------------------------
// Predicates

enum class Attr { category, color, size, side, ordinal, row, near, among_first };

inline const char* attr_name(Attr a) {
  switch (a) {
    case Attr::category: return "category";
    case Attr::color: return "color";
    case Attr::size: return "size";
    case Attr::side: return "side";
    case Attr::ordinal: return "ordinal";
    case Attr::row: return "row";
    case Attr::near: return "near";
    case Attr::among_first: return "among_first";
  }
  return "?";
}

inline std::optional<Attr> attr_from_name(std::string_view s) {
  for (Attr a : {Attr::category, Attr::color, Attr::size, Attr::side, Attr::ordinal, Attr::row,
                 Attr::near, Attr::among_first})
    if (s == attr_name(a)) return a;
  return std::nullopt;
}

/// One askable binary property. Symbolic attributes use `symbol`, positional
/// ones use `number` (1-based).
struct Atom {
  Attr attr = Attr::category;
  std::string symbol;
  int number = 0;

  bool holds(const Scene& scene, const SceneObject& obj) const {
    switch (attr) {
      case Attr::category: return obj.category == symbol;
      case Attr::color: return obj.color == symbol;
      case Attr::size: return obj.size == symbol;
      case Attr::side: {
        const bool left = 2 * obj.col < scene.cols;
        return symbol == "left" ? left : !left;
      }
      case Attr::ordinal: return scene.rank_from_left(obj) == number;
      case Attr::row: return obj.row + 1 == number;
      case Attr::near:
        for (const auto& o : scene.objects) {
          if (o.id == obj.id || o.category != symbol) continue;
          if (std::abs(o.row - obj.row) <= 1 && std::abs(o.col - obj.col) <= 1) return true;
        }
        return false;
      case Attr::among_first: return scene.rank_from_left(obj) <= number;
    }
    return false;
  }

  std::string describe() const {
    std::string s = attr_name(attr);
    s += '(';
    s += symbol.empty() ? std::to_string(number) : symbol;
    s += ')';
    return s;
  }

  bool operator==(const Atom&) const = default;
};

/// Conjunction of atoms. The empty conjunction is true of every object.
struct Predicate {
  std::vector<Atom> atoms;

  bool holds(const Scene& scene, const SceneObject& obj) const {
    return std::all_of(atoms.begin(), atoms.end(),
                       [&](const Atom& a) { return a.holds(scene, obj); });
  }

  std::string describe() const {
    if (atoms.empty()) return "true";
    std::string s;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (i) s += " & ";
      s += atoms[i].describe();
    }
    return s;
  }

  bool operator==(const Predicate&) const = default;
};

/// All single-atom predicates a question can express about this scene.
inline std::vector<Predicate> object_predicates(const Scene& scene) {
  if (scene.objects.empty()) throw Error(Errc::validation, "object_predicates: empty scene");
  std::vector<Predicate> out;
  auto add = [&](Attr a, std::string sym, int num) {
    out.push_back(Predicate{{Atom{a, std::move(sym), num}}});
  };
  for (const auto& c : Lexicon::categories) add(Attr::category, std::string(c.singular), 0);
  for (auto c : Lexicon::colors) add(Attr::color, std::string(c), 0);
  for (auto s : Lexicon::sizes) add(Attr::size, std::string(s), 0);
  for (auto s : Lexicon::sides) add(Attr::side, std::string(s), 0);
  for (int i = 1; i <= kMaxObjects; ++i) add(Attr::ordinal, "", i);
  for (int i = 1; i <= std::max(scene.rows, kMaxObjects); ++i) add(Attr::row, "", i);
  for (const auto& c : Lexicon::categories) add(Attr::near, std::string(c.singular), 0);
  for (int i = 2; i < kMaxObjects; ++i) add(Attr::among_first, "", i);
  return out;
}

/// True when every pair of candidates is told apart by some predicate.
inline bool candidates_distinguishable(const Game& game) {
  const auto preds = object_predicates(game.scene);
  for (std::size_t i = 0; i < game.candidate_ids.size(); ++i) {
    for (std::size_t j = i + 1; j < game.candidate_ids.size(); ++j) {
      const auto& a = game.object(game.candidate_ids[i]);
      const auto& b = game.object(game.candidate_ids[j]);
      const bool split = std::any_of(preds.begin(), preds.end(), [&](const Predicate& p) {
        return p.holds(game.scene, a) != p.holds(game.scene, b);
      });
      if (!split) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Validation

inline void validate_game(const Game& g, int rows, int cols) {
  auto fail = [&](const std::string& why) {
    throw Error(Errc::validation, "game " + g.game_id + ": " + why);
  };
  if (g.scene.objects.empty()) fail("scene has no objects");
  std::unordered_set<int> ids;
  for (const auto& o : g.scene.objects) {
    if (!ids.insert(o.id).second) fail("duplicate object id " + std::to_string(o.id));
    if (!Lexicon::is_category(o.category)) fail("unknown category '" + o.category + "'");
    if (!Lexicon::is_color(o.color)) fail("unknown color '" + o.color + "'");
    if (!Lexicon::is_size(o.size)) fail("unknown size '" + o.size + "'");
    if (o.row < 0 || o.row >= rows || o.col < 0 || o.col >= cols)
      fail("object " + std::to_string(o.id) + " outside the grid");
    if (!(o.bbox.w > 0) || !(o.bbox.h > 0) || o.bbox.x < 0 || o.bbox.y < 0)
      fail("object " + std::to_string(o.id) + " has an invalid bbox");
  }
  const auto n = static_cast<int>(g.candidate_ids.size());
  if (n < kMinCandidates || n > kMaxCandidates)
    fail(std::to_string(n) + " candidates, expected between 3 and 6");
  std::unordered_set<int> cands;
  for (int c : g.candidate_ids) {
    if (!ids.count(c)) fail("candidate " + std::to_string(c) + " is not a scene object");
    if (!cands.insert(c).second) fail("duplicate candidate " + std::to_string(c));
  }
  if (!cands.count(g.target_id)) fail("target_id " + std::to_string(g.target_id) + " is not a candidate");
}

inline void validate_dataset(const Dataset& d) {
  if (d.lexicon_version != kLexiconVersion)
    throw Error(Errc::validation, "unsupported lexicon_version '" + d.lexicon_version + "'");
  if (d.rows < 1 || d.cols < 1 || d.rows * d.cols < kMinCandidates)
    throw Error(Errc::validation, "invalid grid");
  std::unordered_set<std::string> seen;
  for (const auto& g : d.games) {
    if (!seen.insert(g.game_id).second) throw Error(Errc::validation, "duplicate game_id " + g.game_id);
    if (g.scene.rows != d.rows || g.scene.cols != d.cols)
      throw Error(Errc::validation, "game " + g.game_id + ": grid differs from dataset grid");
    validate_game(g, d.rows, d.cols);
  }
}

// ---------------------------------------------------------------------------
// Generation

struct GeneratorConfig {
  std::uint64_t seed = 1;
  int n_games = 2000;
  int rows = 3;
  int cols = 4;
  int category_pool_size = 5;
};

inline std::string format_game_id(int index) {
  std::string digits = std::to_string(index);
  return "g" + std::string(digits.size() < 6 ? 6 - digits.size() : 0, '0') + digits;
}

namespace detail {

inline Game draw_game(Rng& rng, const GeneratorConfig& cfg, int index) {
  const int cells = cfg.rows * cfg.cols;
  const int n_cand = rng.uniform_int(kMinCandidates, std::min(kMaxCandidates, cells));
  const int n_distr = std::min(rng.uniform_int(0, kMaxDistractors), cells - n_cand);
  const int n_obj = n_cand + n_distr;

  std::vector<int> pool(Lexicon::categories.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
  rng.shuffle(pool);
  pool.resize(static_cast<std::size_t>(cfg.category_pool_size));

  std::vector<int> cell_ids(static_cast<std::size_t>(cells));
  for (int i = 0; i < cells; ++i) cell_ids[static_cast<std::size_t>(i)] = i;
  rng.shuffle(cell_ids);

  Game g;
  g.game_id = format_game_id(index);
  g.scene.rows = cfg.rows;
  g.scene.cols = cfg.cols;
  for (int i = 0; i < n_obj; ++i) {
    SceneObject o;
    o.id = i;
    o.category = std::string(Lexicon::categories[static_cast<std::size_t>(
        pool[rng.uniform_index(pool.size())])].singular);
    o.color = std::string(Lexicon::colors[rng.uniform_index(Lexicon::colors.size())]);
    o.size = std::string(Lexicon::sizes[rng.uniform_index(Lexicon::sizes.size())]);
    o.row = cell_ids[static_cast<std::size_t>(i)] / cfg.cols;
    o.col = cell_ids[static_cast<std::size_t>(i)] % cfg.cols;
    const double side = (o.size == "small" ? 40.0 : 80.0) + rng.uniform_int(-5, 5);
    const double dx = rng.uniform_int(-5, 5);
    const double dy = rng.uniform_int(-5, 5);
    o.bbox = BBox{o.col * kCellSize + (kCellSize - side) / 2 + dx,
                  o.row * kCellSize + (kCellSize - side) / 2 + dy, side, side};
    g.scene.objects.push_back(std::move(o));
  }

  std::vector<int> ids(static_cast<std::size_t>(n_obj));
  for (int i = 0; i < n_obj; ++i) ids[static_cast<std::size_t>(i)] = i;
  rng.shuffle(ids);
  ids.resize(static_cast<std::size_t>(n_cand));
  std::sort(ids.begin(), ids.end());
  g.candidate_ids = ids;
  g.target_id = ids[rng.uniform_index(ids.size())];
  return g;
}

}  // namespace detail

/// Deterministic in `cfg`; undistinguishable games are redrawn.
inline Dataset generate_dataset(const GeneratorConfig& cfg) {
  if (cfg.n_games < 1) throw Error(Errc::configuration, "n_games must be positive");
  if (cfg.rows < 1 || cfg.cols < 1 || cfg.rows * cfg.cols < 6)
    throw Error(Errc::configuration, "grid must have at least 6 cells");
  if (cfg.rows > kMaxObjects)
    throw Error(Errc::configuration, "grid may have at most 8 rows");
  if (cfg.category_pool_size < 1 ||
      cfg.category_pool_size > static_cast<int>(Lexicon::categories.size()))
    throw Error(Errc::configuration, "category_pool_size must be in [1, 24]");

  Dataset d;
  d.generation_seed = cfg.seed;
  d.rows = cfg.rows;
  d.cols = cfg.cols;
  d.games.reserve(static_cast<std::size_t>(cfg.n_games));
  Rng rng(splitmix64(cfg.seed));
  for (int i = 0; i < cfg.n_games; ++i) {
    Game g = detail::draw_game(rng, cfg, i);
    while (!candidates_distinguishable(g)) g = detail::draw_game(rng, cfg, i);
    d.games.push_back(std::move(g));
  }
  return d;
}

/// Fraction of games in which at least two candidates share a category.
inline double duplicated_category_fraction(const Dataset& d) {
  if (d.games.empty()) return 0.0;
  int dup = 0;
  for (const auto& g : d.games) {
    std::unordered_set<std::string> cats;
    for (int c : g.candidate_ids) {
      if (!cats.insert(g.object(c).category).second) {
        ++dup;
        break;
      }
    }
  }
  return static_cast<double>(dup) / static_cast<double>(d.games.size());
}

}  // namespace decodelab
