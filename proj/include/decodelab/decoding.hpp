#pragma once

// Decoding strategies: distribution filters, a seeded sampler, and the
// greedy / beam / Confirm-it search drivers over the grammar LM.
//
// Ordering convention used everywhere: probability (or log-probability)
// descending after quantization to 1e-12, then token index / token sequence
// ascending. This makes greedy, beam(B=1), top-k(k=1) and nucleus(p->0)
// agree exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "agents.hpp"
#include "error.hpp"
#include "grammar_lm.hpp"
#include "rng.hpp"

namespace decodelab {

enum class Strategy { greedy, beam, confirm_it, pure_sampling, top_k, nucleus, typical };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::greedy: return "greedy";
    case Strategy::beam: return "beam";
    case Strategy::confirm_it: return "confirm_it";
    case Strategy::pure_sampling: return "pure_sampling";
    case Strategy::top_k: return "top_k";
    case Strategy::nucleus: return "nucleus";
    case Strategy::typical: return "typical";
  }
  return "?";
}

inline std::optional<Strategy> strategy_from_name(std::string_view s) {
  for (Strategy st : {Strategy::greedy, Strategy::beam, Strategy::confirm_it, Strategy::pure_sampling,
                      Strategy::top_k, Strategy::nucleus, Strategy::typical})
    if (s == strategy_name(st)) return st;
  if (s == "pure") return Strategy::pure_sampling;
  if (s == "topk") return Strategy::top_k;
  if (s == "confirmit") return Strategy::confirm_it;
  return std::nullopt;
}

struct DecodingConfig {
  Strategy strategy = Strategy::greedy;
  std::optional<int> beam_size;  // beam, confirm_it
  std::optional<int> k;          // top_k
  std::optional<double> p;       // nucleus
  std::optional<double> tau;     // typical
  std::uint64_t rng_seed = 1;

  static DecodingConfig make(Strategy s) {
    DecodingConfig c;
    c.strategy = s;
    return c;
  }
  static DecodingConfig greedy() { return make(Strategy::greedy); }
  static DecodingConfig beam(int b = 3) {
    auto c = make(Strategy::beam);
    c.beam_size = b;
    return c;
  }
  static DecodingConfig confirm_it(int b = 3) {
    auto c = make(Strategy::confirm_it);
    c.beam_size = b;
    return c;
  }
  static DecodingConfig pure() { return make(Strategy::pure_sampling); }
  static DecodingConfig top_k(int k) {
    auto c = make(Strategy::top_k);
    c.k = k;
    return c;
  }
  static DecodingConfig nucleus(double p) {
    auto c = make(Strategy::nucleus);
    c.p = p;
    return c;
  }
  static DecodingConfig typical(double tau) {
    auto c = make(Strategy::typical);
    c.tau = tau;
    return c;
  }

  DecodingConfig with_seed(std::uint64_t seed) const {
    DecodingConfig c = *this;
    c.rng_seed = seed;
    return c;
  }

  void validate() const {
    auto need = [&](bool present, bool required, const char* name) {
      if (present != required)
        throw Error(Errc::configuration, fmt::format("{} {} for strategy {}", name,
                                                     required ? "is required" : "is not allowed",
                                                     strategy_name(strategy)));
    };
    const bool uses_beam = strategy == Strategy::beam || strategy == Strategy::confirm_it;
    need(beam_size.has_value(), uses_beam, "beam size");
    need(k.has_value(), strategy == Strategy::top_k, "k");
    need(p.has_value(), strategy == Strategy::nucleus, "p");
    need(tau.has_value(), strategy == Strategy::typical, "tau");
    if (beam_size && *beam_size < 1) throw Error(Errc::configuration, "beam size must be >= 1");
    if (k && *k < 1) throw Error(Errc::configuration, "k must be >= 1");
    if (p && !(*p > 0.0 && *p <= 1.0)) throw Error(Errc::configuration, "p must be in (0, 1]");
    if (tau && !(*tau > 0.0 && *tau <= 1.0)) throw Error(Errc::configuration, "tau must be in (0, 1]");
  }

  /// Short name without the seed, e.g. "nucleus(p=0.3)".
  std::string label() const {
    switch (strategy) {
      case Strategy::beam: return fmt::format("beam(B={})", beam_size.value_or(0));
      case Strategy::confirm_it: return fmt::format("confirm_it(B={})", beam_size.value_or(0));
      case Strategy::top_k: return fmt::format("top_k(k={})", k.value_or(0));
      case Strategy::nucleus: return fmt::format("nucleus(p={})", p.value_or(0.0));
      case Strategy::typical: return fmt::format("typical(tau={})", tau.value_or(0.0));
      default: return strategy_name(strategy);
    }
  }

  /// The hyper-parameter value, when the strategy has one.
  std::optional<double> parameter() const {
    if (k) return static_cast<double>(*k);
    if (p) return *p;
    if (tau) return *tau;
    if (beam_size) return static_cast<double>(*beam_size);
    return std::nullopt;
  }

  bool stochastic() const {
    return strategy == Strategy::pure_sampling || strategy == Strategy::top_k ||
           strategy == Strategy::nucleus || strategy == Strategy::typical;
  }
};

// ---------------------------------------------------------------------------
// Filters

namespace detail {

inline TokenDistribution restrict_to(const TokenDistribution& d, const std::vector<int>& keep) {
  std::vector<double> w(d.size(), 0.0);
  for (int i : keep) w[static_cast<std::size_t>(i)] = d[static_cast<std::size_t>(i)];
  return TokenDistribution::from_weights(std::move(w));
}

}  // namespace detail

inline TokenDistribution topk_filter(const TokenDistribution& d, int k) {
  if (k < 1) throw Error(Errc::parameter, "top-k needs k >= 1");
  auto ranked = d.ranked();
  if (ranked.size() > static_cast<std::size_t>(k)) ranked.resize(static_cast<std::size_t>(k));
  return detail::restrict_to(d, ranked);
}

/// Smallest probability-ranked prefix whose mass reaches p.
inline TokenDistribution nucleus_filter(const TokenDistribution& d, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw Error(Errc::parameter, "nucleus needs 0 < p <= 1");
  const auto ranked = d.ranked();
  std::vector<int> keep;
  double mass = 0.0;
  for (int i : ranked) {
    keep.push_back(i);
    mass += d[static_cast<std::size_t>(i)];
    if (mass >= p) break;
  }
  return detail::restrict_to(d, keep);
}

/// Tokens ordered by |-ln p - H| ascending (ties: higher probability, then
/// lower index); keeps the smallest prefix whose original mass reaches tau.
inline TokenDistribution typical_filter(const TokenDistribution& d, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(Errc::parameter, "typical needs 0 < tau <= 1");
  const double h = d.entropy_nats();
  auto ids = d.support();
  struct Key {
    long long score;
    long long prob;
  };
  std::vector<Key> keys(d.size());
  for (int i : ids) {
    const double p = d[static_cast<std::size_t>(i)];
    keys[static_cast<std::size_t>(i)] = {quantize(std::abs(-std::log(p) - h)), quantize(p)};
  }
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    const auto& ka = keys[static_cast<std::size_t>(a)];
    const auto& kb = keys[static_cast<std::size_t>(b)];
    if (ka.score != kb.score) return ka.score < kb.score;
    if (ka.prob != kb.prob) return ka.prob > kb.prob;
    return a < b;
  });
  std::vector<int> keep;
  double mass = 0.0;
  for (int i : ids) {
    keep.push_back(i);
    mass += d[static_cast<std::size_t>(i)];
    if (mass >= tau) break;
  }
  return detail::restrict_to(d, keep);
}

/// Inverse-CDF draw in vocabulary order.
inline int sample_token(const TokenDistribution& d, Rng& rng) {
  double total = 0.0;
  int last = -1;
  for (std::size_t i = 0; i < d.size(); ++i) {
    total += d[i];
    if (d[i] > 0.0) last = static_cast<int>(i);
  }
  if (std::abs(total - 1.0) > 1e-9 || last < 0)
    throw Error(Errc::internal, "sampling from an unnormalized distribution");
  const double u = rng.uniform01();
  double cum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] <= 0.0) continue;
    cum += d[i];
    if (u < cum) return static_cast<int>(i);
  }
  return last;
}

// ---------------------------------------------------------------------------
// Search

struct ScoredSequence {
  std::vector<int> tokens;
  double logprob = 0.0;
  bool operator==(const ScoredSequence&) const = default;
};

namespace detail {

inline void check_length(const LmState& s, int max_len) {
  if (static_cast<int>(s.tokens().size()) > max_len)
    throw Error(Errc::length, "question exceeded max_len " + std::to_string(max_len));
}

}  // namespace detail

inline ScoredSequence greedy_decode(const GrammarLm& lm, LmState state, int max_len) {
  double logprob = 0.0;
  while (!state.complete()) {
    const auto d = lm.next_token_distribution(state);
    const int tok = d.argmax();
    logprob += std::log(d[static_cast<std::size_t>(tok)]);
    state = lm.advance(state, tok);
    detail::check_length(state, max_len);
  }
  return {state.tokens(), logprob};
}

/// Keeps the `beam_size` best partial or finished hypotheses per step.
/// Finished hypotheses compete with partial ones on log-probability.
inline std::vector<ScoredSequence> beam_decode(const GrammarLm& lm, const LmState& state, int beam_size,
                                               int max_len) {
  if (beam_size < 1) throw Error(Errc::parameter, "beam size must be >= 1");
  struct Hyp {
    LmState state;
    double logprob;
  };
  auto better = [](const Hyp& a, const Hyp& b) {
    const auto ka = quantize(a.logprob);
    const auto kb = quantize(b.logprob);
    return ka != kb ? ka > kb : a.state.tokens() < b.state.tokens();
  };
  std::vector<Hyp> beam{{state, 0.0}};
  while (!std::all_of(beam.begin(), beam.end(), [](const Hyp& h) { return h.state.complete(); })) {
    std::vector<Hyp> next;
    for (const auto& h : beam) {
      if (h.state.complete()) {
        next.push_back(h);
        continue;
      }
      const auto d = lm.next_token_distribution(h.state);
      for (int tok : d.support()) {
        next.push_back({lm.advance(h.state, tok), h.logprob + std::log(d[static_cast<std::size_t>(tok)])});
        detail::check_length(next.back().state, max_len);
      }
    }
    std::sort(next.begin(), next.end(), better);
    if (next.size() > static_cast<std::size_t>(beam_size)) next.resize(static_cast<std::size_t>(beam_size));
    beam = std::move(next);
  }
  std::vector<ScoredSequence> out;
  out.reserve(beam.size());
  for (auto& h : beam) out.push_back({h.state.tokens(), h.logprob});
  return out;
}

/// Re-ranks the beam by how much each question, answered by the internal
/// oracle as if the Guesser's current top candidate were the target, raises
/// that candidate's posterior.
inline ScoredSequence confirmit_select(const GrammarLm& lm, const LmState& state, int beam_size,
                                       const GuesserState& guesser, const Game& game, int max_len) {
  const auto candidates = beam_decode(lm, state, beam_size, max_len);
  const int hypothesis = guesser.argmax();
  const double prior = guesser.prob(hypothesis);
  std::size_t best = 0;
  long long best_key = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& q = candidates[i];
    double confirmed = prior;
    if (const auto parsed = lm.find_question(q.tokens)) {
      const auto answer = internal_oracle_answer(lm, game, q.tokens, hypothesis);
      confirmed = guesser_update(guesser, lm.questions()[static_cast<std::size_t>(*parsed)].predicate,
                                 answer, game)
                      .prob(hypothesis);
    }
    const long long key = quantize(confirmed);
    if (i == 0 || key > best_key) {
      best = i;
      best_key = key;
    }
    // Equal keys keep the earlier candidate: beam output is already ordered
    // by log-probability, then token sequence.
  }
  return candidates[best];
}

inline ScoredSequence decode_question(const GrammarLm& lm, const LmState& state, const DecodingConfig& config,
                                      const GuesserState* guesser, const Game* game, Rng& rng,
                                      int max_len) {
  config.validate();
  switch (config.strategy) {
    case Strategy::greedy: return greedy_decode(lm, state, max_len);
    case Strategy::beam: return beam_decode(lm, state, *config.beam_size, max_len).front();
    case Strategy::confirm_it:
      if (!guesser || !game) throw Error(Errc::configuration, "confirm_it needs the guesser state");
      return confirmit_select(lm, state, *config.beam_size, *guesser, *game, max_len);
    default: break;
  }
  LmState s = state;
  double logprob = 0.0;
  while (!s.complete()) {
    const auto d = lm.next_token_distribution(s);
    int tok = 0;
    switch (config.strategy) {
      case Strategy::top_k: tok = sample_token(topk_filter(d, *config.k), rng); break;
      case Strategy::nucleus: tok = sample_token(nucleus_filter(d, *config.p), rng); break;
      case Strategy::typical: tok = sample_token(typical_filter(d, *config.tau), rng); break;
      default: tok = sample_token(d, rng); break;
    }
    logprob += std::log(d[static_cast<std::size_t>(tok)]);
    s = lm.advance(s, tok);
    detail::check_length(s, max_len);
  }
  return {s.tokens(), logprob};
}

inline ScoredSequence decode_question(const GrammarLm& lm, const LmState& state, const DecodingConfig& config,
                                      const GuesserState* guesser, const Game* game, Rng& rng) {
  return decode_question(lm, state, config, guesser, game, rng, lm.max_question_length());
}

}  // namespace decodelab
