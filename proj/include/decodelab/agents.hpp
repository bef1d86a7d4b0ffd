#pragma once

// Oracle and Guesser.
//
// The Oracle is truthful: it parses the question with the grammar and
// evaluates the predicate on the target. The Guesser keeps a posterior over
// the candidates and applies a Bayes update with a symmetric noise rate
// epsilon (epsilon = 0 is hard filtering).

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "grammar_lm.hpp"
#include "world.hpp"

namespace decodelab {

enum class Answer { yes, no, na };

inline const char* answer_name(Answer a) {
  switch (a) {
    case Answer::yes: return "yes";
    case Answer::no: return "no";
    case Answer::na: return "na";
  }
  return "na";
}

inline std::optional<Answer> answer_from_name(std::string_view s) {
  if (s == "yes") return Answer::yes;
  if (s == "no") return Answer::no;
  if (s == "na") return Answer::na;
  return std::nullopt;
}

/// Answer for `hypothesis_id` as if it were the target.
inline Answer internal_oracle_answer(const GrammarLm& lm, const Game& game, std::span<const int> question,
                                     int hypothesis_id) {
  if (!game.is_candidate(hypothesis_id))
    throw Error(Errc::validation, "hypothesis " + std::to_string(hypothesis_id) + " is not a candidate");
  const auto q = lm.find_question(question);
  if (!q) return Answer::na;
  const auto& pred = lm.questions()[static_cast<std::size_t>(*q)].predicate;
  return pred.holds(game.scene, game.object(hypothesis_id)) ? Answer::yes : Answer::no;
}

inline Answer oracle_answer(const GrammarLm& lm, const Game& game, std::span<const int> question) {
  return internal_oracle_answer(lm, game, question, game.target_id);
}

/// Posterior over candidate ids (kept sorted by id).
struct GuesserState {
  std::vector<int> ids;
  std::vector<double> probs;
  double epsilon = 0.0;
  bool was_reset = false;

  static GuesserState uniform(const Game& game, double epsilon = 0.0) {
    if (!(epsilon >= 0.0 && epsilon < 0.5)) throw Error(Errc::configuration, "epsilon must be in [0, 0.5)");
    GuesserState g;
    g.ids = game.candidate_ids;
    std::sort(g.ids.begin(), g.ids.end());
    g.probs.assign(g.ids.size(), 1.0 / static_cast<double>(g.ids.size()));
    g.epsilon = epsilon;
    return g;
  }

  double prob(int id) const {
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == id) return probs[i];
    throw Error(Errc::validation, "candidate " + std::to_string(id) + " not in posterior");
  }

  /// Highest posterior, ties to the lowest id.
  int argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < ids.size(); ++i)
      if (quantize(probs[i]) > quantize(probs[best])) best = i;
    return ids[best];
  }

  /// Candidates that still have mass.
  int consistent_count() const {
    int n = 0;
    for (double p : probs)
      if (p > 0.0) ++n;
    return n;
  }
};

inline GuesserState guesser_update(const GuesserState& g, const Predicate& pred, Answer answer,
                                   const Game& game) {
  if (answer == Answer::na) return g;
  GuesserState out = g;
  out.was_reset = false;
  double total = 0.0;
  for (std::size_t i = 0; i < out.ids.size(); ++i) {
    const bool holds = pred.holds(game.scene, game.object(out.ids[i]));
    const bool matches = holds == (answer == Answer::yes);
    out.probs[i] *= matches ? 1.0 - g.epsilon : g.epsilon;
    total += out.probs[i];
  }
  if (!(total > 0.0)) {
    out.probs.assign(out.ids.size(), 1.0 / static_cast<double>(out.ids.size()));
    out.was_reset = true;
    return out;
  }
  for (double& p : out.probs) p /= total;
  return out;
}

inline GuesserState guesser_update(const GuesserState& g, const GrammarLm& lm, std::span<const int> question,
                                   Answer answer, const Game& game) {
  if (answer == Answer::na) return g;
  const auto q = lm.find_question(question);
  if (!q) return g;
  return guesser_update(g, lm.questions()[static_cast<std::size_t>(*q)].predicate, answer, game);
}

}  // namespace decodelab
