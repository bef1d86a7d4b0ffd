#pragma once

// The dialogue loop: Questioner -> Oracle -> Guesser, repeated for a fixed
// number of turns.

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "agents.hpp"
#include "decoding.hpp"
#include "grammar_lm.hpp"
#include "rng.hpp"
#include "world.hpp"

namespace decodelab {

inline constexpr int kDefaultTurns = 5;
inline constexpr int kPerTurnStudyTurns = 10;

struct Turn {
  std::vector<std::string> question;  // words, ending with the EOQ marker
  Answer answer = Answer::na;
  std::vector<double> posterior;  // aligned with Transcript::candidate_ids
  bool operator==(const Turn&) const = default;
};

struct Transcript {
  std::string game_id;
  std::string config;         // strategy label, e.g. "nucleus(p=0.3)"
  std::string config_digest;  // label plus every run setting
  std::uint64_t seed = 0;
  std::vector<int> candidate_ids;  // sorted
  int target_id = 0;
  std::vector<Turn> turns;
  int final_guess = 0;
  bool success = false;
  bool operator==(const Transcript&) const = default;

  /// Guess after `turn` questions (0 = prior), ties to the lowest id.
  int guess_after(std::size_t turn) const {
    if (turn == 0) return candidate_ids.front();
    const auto& post = turns.at(turn - 1).posterior;
    std::size_t best = 0;
    for (std::size_t i = 1; i < post.size(); ++i)
      if (quantize(post[i]) > quantize(post[best])) best = i;
    return candidate_ids[best];
  }
};

struct RunSettings {
  int turns = kDefaultTurns;
  double epsilon = 0.0;
};

inline std::string config_digest(const DecodingConfig& config, const GrammarLm& lm, const RunSettings& run) {
  return fmt::format("{} seed={} turns={} lambda={} penalty={} epsilon={}", config.label(), config.rng_seed,
                     run.turns, lm.grounding_weight(), lm.history_penalty(), run.epsilon);
}

/// Chooses the next question from the live dialogue state.
using Questioner = std::function<std::vector<int>(const LmState& root, const GuesserState& guesser, int turn)>;

/// Runs `turns` rounds with any questioner; the Oracle and Guesser are fixed.
inline Transcript play_dialogue(const GrammarLm& lm, const Game& game, const Questioner& questioner,
                                const RunSettings& run, std::string config_label, std::string digest,
                                std::uint64_t seed) {
  if (run.turns < 1) throw Error(Errc::configuration, "turns must be >= 1");
  Transcript t;
  t.game_id = game.game_id;
  t.config = std::move(config_label);
  t.config_digest = std::move(digest);
  t.seed = seed;
  t.target_id = game.target_id;
  auto grounded = lm.ground(game);
  GuesserState guesser = GuesserState::uniform(game, run.epsilon);
  t.candidate_ids = guesser.ids;
  std::vector<std::vector<int>> history;
  for (int turn = 0; turn < run.turns; ++turn) {
    const LmState root = lm.start(*grounded, history);
    std::vector<int> question = questioner(root, guesser, turn);
    const Answer answer = oracle_answer(lm, game, question);
    guesser = guesser_update(guesser, lm, question, answer, game);
    Turn record;
    for (int tok : question) record.question.push_back(lm.vocab().token(tok));
    record.answer = answer;
    record.posterior = guesser.probs;
    t.turns.push_back(std::move(record));
    history.push_back(std::move(question));
  }
  t.final_guess = guesser.argmax();
  t.success = t.final_guess == game.target_id;
  return t;
}

inline Transcript play_game(const GrammarLm& lm, const Game& game, const DecodingConfig& config,
                            const RunSettings& run = {}) {
  config.validate();
  const int max_len = lm.max_question_length();
  Questioner q = [&](const LmState& root, const GuesserState& guesser, int turn) {
    Rng rng(derive_seed(config.rng_seed, game.game_id, static_cast<std::uint64_t>(turn)));
    return decode_question(lm, root, config, &guesser, &game, rng, max_len).tokens;
  };
  return play_dialogue(lm, game, q, run, config.label(), config_digest(config, lm, run), config.rng_seed);
}

/// Ideal scripted questioner: asks the grammar question that splits the
/// still-consistent candidates most evenly (first such question in grammar
/// order on ties).
inline std::vector<int> bisection_question(const GrammarLm& lm, const Game& game, const GuesserState& guesser) {
  std::vector<const SceneObject*> alive;
  for (std::size_t i = 0; i < guesser.ids.size(); ++i)
    if (guesser.probs[i] > 0.0) alive.push_back(&game.object(guesser.ids[i]));
  const auto n = static_cast<int>(alive.size());
  int best_q = 0;
  int best_worst = std::numeric_limits<int>::max();
  for (std::size_t q = 0; q < lm.questions().size(); ++q) {
    const auto& pred = lm.questions()[q].predicate;
    int yes = 0;
    for (const auto* o : alive)
      if (pred.holds(game.scene, *o)) ++yes;
    const int worst = std::max(yes, n - yes);
    if (worst < best_worst) {
      best_worst = worst;
      best_q = static_cast<int>(q);
    }
  }
  return lm.questions()[static_cast<std::size_t>(best_q)].tokens;
}

inline Transcript play_bisection(const GrammarLm& lm, const Game& game, const RunSettings& run) {
  Questioner q = [&](const LmState&, const GuesserState& guesser, int) {
    return bisection_question(lm, game, guesser);
  };
  return play_dialogue(lm, game, q, run, "bisection", fmt::format("bisection turns={}", run.turns), 0);
}

}  // namespace decodelab
