#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <decodelab/grammar_io.hpp>
#include <decodelab/grammar_lm.hpp>
#include <decodelab/world.hpp>

namespace testing_support {

using namespace decodelab;

inline std::filesystem::path source_path(const std::string& rel) {
  return std::filesystem::path(DECODELAB_SOURCE_DIR) / rel;
}

inline GrammarSpec fixture_grammar() { return load_grammar(source_path("tests/fixtures/fixture_grammar.json")); }
inline GrammarSpec two_step_grammar() { return load_grammar(source_path("tests/fixtures/two_step_grammar.json")); }

inline SceneObject obj(int id, std::string category, std::string color, std::string size, int row, int col) {
  SceneObject o;
  o.id = id;
  o.category = std::move(category);
  o.color = std::move(color);
  o.size = std::move(size);
  o.row = row;
  o.col = col;
  o.bbox = {col * kCellSize + 10.0, row * kCellSize + 10.0, 40.0, 40.0};
  return o;
}

inline Game make_game(std::vector<SceneObject> objects, std::vector<int> candidates, int target, int rows = 3,
                      int cols = 4, std::string id = "g000000") {
  Game g;
  g.game_id = std::move(id);
  g.scene.rows = rows;
  g.scene.cols = cols;
  g.scene.objects = std::move(objects);
  g.candidate_ids = std::move(candidates);
  g.target_id = target;
  return g;
}

/// Two birds, a dog and a person as candidates plus a distractor car.
inline Game bird_game(int target = 0) {
  return make_game({obj(0, "bird", "red", "small", 0, 0), obj(1, "bird", "blue", "large", 1, 3),
                    obj(2, "dog", "red", "large", 2, 1), obj(3, "person", "blue", "small", 0, 2),
                    obj(4, "car", "red", "large", 2, 3)},
                   {0, 1, 2, 3}, target);
}

/// Question probabilities straight from the mixture definition, without the
/// trie: w = (lambda * g + (1 - lambda) * prior) * penalty^asked, normalized.
inline std::vector<double> oracle_question_probs(const GrammarLm& lm, const Game& game,
                                                 const std::vector<std::vector<int>>& history = {}) {
  const auto& qs = lm.questions();
  std::vector<double> raw(qs.size(), 0.0);
  for (std::size_t q = 0; q < qs.size(); ++q) {
    const auto& rule = lm.template_spec(qs[q].template_index).grounding;
    if (rule.kind == GroundingRule::constant) {
      raw[q] = 1.0;
      continue;
    }
    bool any = false;
    for (const auto& o : game.scene.objects) any = any || qs[q].predicate.holds(game.scene, o);
    if (!any) continue;
    if (rule.kind == GroundingRule::satisfiable) {
      raw[q] = 1.0;
      continue;
    }
    double yes = 0.0;
    for (int id : game.candidate_ids) yes += qs[q].predicate.holds(game.scene, game.object(id)) ? 1.0 : 0.0;
    const double f = yes / static_cast<double>(game.candidate_ids.size());
    raw[q] = rule.floor + 4.0 * f * (1.0 - f);
  }
  std::vector<double> total(lm.template_count(), 0.0);
  for (std::size_t q = 0; q < qs.size(); ++q) total[static_cast<std::size_t>(qs[q].template_index)] += raw[q];
  std::vector<double> w(qs.size(), 0.0);
  double sum = 0.0;
  for (std::size_t q = 0; q < qs.size(); ++q) {
    const auto& rule = lm.template_spec(qs[q].template_index).grounding;
    double g = raw[q];
    if (rule.normalize) {
      const double t = total[static_cast<std::size_t>(qs[q].template_index)];
      g = t > 0.0 ? g / t : 0.0;
    }
    w[q] = lm.grounding_weight() * rule.scale * g + (1.0 - lm.grounding_weight()) * qs[q].prior;
    for (const auto& h : history)
      if (h == qs[q].tokens) w[q] *= lm.history_penalty();
    sum += w[q];
  }
  for (auto& x : w) x /= sum;
  return w;
}

inline double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

}  // namespace testing_support
