#pragma once

// Dialogue metrics: task accuracy (final and per turn), CHAIR-i / CHAIR-s
// object hallucination, repetition rate, vocabulary size and rare words, plus
// mean / population-std aggregation over seeds.
//
// Ratios are accumulated as exact rationals and converted to a percentage
// once, so fixture values can be compared with zero tolerance.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "error.hpp"
#include "game.hpp"
#include "grammar_lm.hpp"
#include "world.hpp"

namespace decodelab {

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational() = default;
  Rational(std::int64_t n, std::int64_t d) : num(n), den(d) {
    if (den == 0) throw Error(Errc::internal, "zero denominator");
    reduce();
  }

  Rational& operator+=(const Rational& o) {
    const __int128 n = static_cast<__int128>(num) * o.den + static_cast<__int128>(o.num) * den;
    const __int128 d = static_cast<__int128>(den) * o.den;
    const __int128 g = gcd128(n < 0 ? -n : n, d);
    num = static_cast<std::int64_t>(n / g);
    den = static_cast<std::int64_t>(d / g);
    return *this;
  }

  Rational divided_by(std::int64_t k) const { return Rational(num, den * k); }

  /// 100 * num / den, evaluated once in double.
  double percent() const { return 100.0 * static_cast<double>(num) / static_cast<double>(den); }

  bool operator==(const Rational&) const = default;

 private:
  static __int128 gcd128(__int128 a, __int128 b) {
    while (b != 0) {
      const __int128 t = a % b;
      a = b;
      b = t;
    }
    return a == 0 ? 1 : a;
  }
  void reduce() {
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const auto g = std::gcd(num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }
};

inline bool is_eoq(std::string_view w) { return w == kEoq; }

/// Counted words exclude the EOQ marker and punctuation.
inline bool is_word(std::string_view w) {
  if (is_eoq(w)) return false;
  for (char c : w)
    if (std::isalnum(static_cast<unsigned char>(c))) return true;
  return false;
}

inline std::vector<std::string> strip_eoq(const std::vector<std::string>& q) {
  std::vector<std::string> out;
  for (const auto& w : q)
    if (!is_eoq(w)) out.push_back(w);
  return out;
}

// ---------------------------------------------------------------------------
// Accuracy

inline double task_accuracy(const std::vector<Transcript>& ts) {
  if (ts.empty()) throw Error(Errc::empty_collection, "task_accuracy of no transcripts");
  std::int64_t ok = 0;
  for (const auto& t : ts) ok += t.success ? 1 : 0;
  return Rational(ok, static_cast<std::int64_t>(ts.size())).percent();
}

/// Entry t (0-based) is the accuracy after t + 1 questions.
inline std::vector<double> per_turn_accuracy(const std::vector<Transcript>& ts, int turns) {
  if (ts.empty()) throw Error(Errc::empty_collection, "per_turn_accuracy of no transcripts");
  for (const auto& t : ts)
    if (static_cast<int>(t.turns.size()) < turns)
      throw Error(Errc::shape, "transcript " + t.game_id + " has " + std::to_string(t.turns.size()) +
                                   " turns, expected " + std::to_string(turns));
  std::vector<double> out;
  for (int turn = 1; turn <= turns; ++turn) {
    std::int64_t ok = 0;
    for (const auto& t : ts) ok += t.guess_after(static_cast<std::size_t>(turn)) == t.target_id ? 1 : 0;
    out.push_back(Rational(ok, static_cast<std::int64_t>(ts.size())).percent());
  }
  return out;
}

/// Accuracy of the prior guess (lowest candidate id) before any question.
inline double initial_guess_accuracy(const std::vector<Transcript>& ts) {
  if (ts.empty()) throw Error(Errc::empty_collection, "initial_guess_accuracy of no transcripts");
  std::int64_t ok = 0;
  for (const auto& t : ts) ok += t.guess_after(0) == t.target_id ? 1 : 0;
  return Rational(ok, static_cast<std::int64_t>(ts.size())).percent();
}

// ---------------------------------------------------------------------------
// Hallucination

/// Surface word -> category symbol (singular and plural forms).
class MentionLexicon {
 public:
  MentionLexicon() {
    for (const auto& c : Lexicon::categories) {
      words_.emplace(std::string(c.singular), std::string(c.singular));
      words_.emplace(std::string(c.plural), std::string(c.singular));
    }
  }

  void add(std::string surface, std::string category) { words_[std::move(surface)] = std::move(category); }

  const std::string* lookup(std::string_view w) const {
    auto it = words_.find(std::string(w));
    return it == words_.end() ? nullptr : &it->second;
  }

 private:
  std::unordered_map<std::string, std::string> words_;
};

/// Every object mention in order, repeated mentions included.
inline std::vector<std::string> mention_instances(const std::vector<std::string>& question,
                                                  const MentionLexicon& lex) {
  std::vector<std::string> out;
  for (const auto& w : question)
    if (const auto* cat = lex.lookup(w)) out.push_back(*cat);
  return out;
}

inline std::set<std::string> extract_mentions(const std::vector<std::string>& question, const MentionLexicon& lex) {
  const auto all = mention_instances(question, lex);
  return {all.begin(), all.end()};
}

struct ChairOptions {
  bool pooled = false;           // CHAIR-i over all mentions instead of per-dialogue mean
  bool per_type = false;         // count each hallucinated category once per dialogue
};

struct ChairScores {
  double chair_i = 0.0;
  double chair_s = 0.0;
  Rational chair_i_exact;
  Rational chair_s_exact;
};

inline std::map<std::string, const Game*> index_games(const std::vector<Game>& games) {
  std::map<std::string, const Game*> out;
  for (const auto& g : games) out.emplace(g.game_id, &g);
  return out;
}

inline ChairScores chair_metrics(const std::vector<Transcript>& ts, const std::map<std::string, const Game*>& games,
                                 const ChairOptions& opt = {}, const MentionLexicon& lex = {}) {
  ChairScores out;
  if (ts.empty()) return out;
  Rational ratio_sum;
  std::int64_t with_mentions = 0;
  std::int64_t pooled_hall = 0;
  std::int64_t pooled_total = 0;
  std::int64_t hallucinating = 0;
  for (const auto& t : ts) {
    auto it = games.find(t.game_id);
    if (it == games.end()) throw Error(Errc::validation, "no game for transcript " + t.game_id);
    const Scene& scene = it->second->scene;
    std::vector<std::string> mentions;
    for (const auto& turn : t.turns) {
      auto m = mention_instances(turn.question, lex);
      mentions.insert(mentions.end(), m.begin(), m.end());
    }
    if (opt.per_type) {
      std::set<std::string> uniq(mentions.begin(), mentions.end());
      mentions.assign(uniq.begin(), uniq.end());
    }
    std::int64_t hall = 0;
    for (const auto& m : mentions)
      if (!scene.has_category(m)) ++hall;
    if (hall > 0) ++hallucinating;
    if (!mentions.empty()) {
      ratio_sum += Rational(hall, static_cast<std::int64_t>(mentions.size()));
      ++with_mentions;
    }
    pooled_hall += hall;
    pooled_total += static_cast<std::int64_t>(mentions.size());
  }
  if (opt.pooled) {
    out.chair_i_exact = pooled_total > 0 ? Rational(pooled_hall, pooled_total) : Rational();
  } else {
    out.chair_i_exact = with_mentions > 0 ? ratio_sum.divided_by(with_mentions) : Rational();
  }
  out.chair_s_exact = Rational(hallucinating, static_cast<std::int64_t>(ts.size()));
  out.chair_i = out.chair_i_exact.percent();
  out.chair_s = out.chair_s_exact.percent();
  return out;
}

// ---------------------------------------------------------------------------
// Linguistic quality

inline bool has_repeated_question(const Transcript& t) {
  std::set<std::vector<std::string>> seen;
  for (const auto& turn : t.turns)
    if (!seen.insert(strip_eoq(turn.question)).second) return true;
  return false;
}

inline double repetition_rate(const std::vector<Transcript>& ts) {
  if (ts.empty()) return 0.0;
  std::int64_t rep = 0;
  for (const auto& t : ts) rep += has_repeated_question(t) ? 1 : 0;
  return Rational(rep, static_cast<std::int64_t>(ts.size())).percent();
}

/// Word counts of the reference ("training") corpus.
struct FrequencyTable {
  std::map<std::string, std::int64_t> counts;
  std::string source_descriptor;

  std::int64_t count(const std::string& w) const {
    auto it = counts.find(w);
    return it == counts.end() ? 0 : it->second;
  }

  void add_question(const std::vector<std::string>& q) {
    for (const auto& w : q)
      if (is_word(w)) ++counts[w];
  }
};

inline constexpr std::int64_t kRareThreshold = 20;

struct VocabularyStats {
  std::int64_t vocabulary_size = 0;
  std::int64_t rare_words = 0;
};

/// Word types over the whole run; rare = types seen fewer than `threshold`
/// times in the reference corpus.
inline VocabularyStats vocabulary_stats(const std::vector<Transcript>& ts, const FrequencyTable& freq,
                                        std::int64_t threshold = kRareThreshold) {
  std::set<std::string> types;
  for (const auto& t : ts)
    for (const auto& turn : t.turns)
      for (const auto& w : turn.question)
        if (is_word(w)) types.insert(w);
  VocabularyStats out;
  out.vocabulary_size = static_cast<std::int64_t>(types.size());
  for (const auto& w : types)
    if (freq.count(w) < threshold) ++out.rare_words;
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct Stat {
  double mean = 0.0;
  double std = 0.0;
  bool operator==(const Stat&) const = default;
};

struct MetricReport {
  std::string config;  // strategy label; seeds are aggregated away
  int turns = 0;
  int n = 1;           // number of seeds aggregated
  Stat accuracy;
  std::vector<Stat> per_turn_accuracy;
  Stat chair_i;
  Stat chair_s;
  Stat repetition_rate;
  Stat vocabulary_size;
  Stat rare_words;
  bool operator==(const MetricReport&) const = default;
};

inline MetricReport compute_report(const std::vector<Transcript>& ts, const std::map<std::string, const Game*>& games,
                                   const FrequencyTable& freq, int turns) {
  if (ts.empty()) throw Error(Errc::empty_collection, "no transcripts to score");
  MetricReport r;
  r.config = ts.front().config;
  for (const auto& t : ts)
    if (t.config != r.config) throw Error(Errc::aggregation, "transcripts from different configs");
  r.turns = turns;
  r.accuracy = {task_accuracy(ts), 0.0};
  for (double a : per_turn_accuracy(ts, turns)) r.per_turn_accuracy.push_back({a, 0.0});
  const auto chair = chair_metrics(ts, games);
  r.chair_i = {chair.chair_i, 0.0};
  r.chair_s = {chair.chair_s, 0.0};
  r.repetition_rate = {repetition_rate(ts), 0.0};
  const auto vocab = vocabulary_stats(ts, freq);
  r.vocabulary_size = {static_cast<double>(vocab.vocabulary_size), 0.0};
  r.rare_words = {static_cast<double>(vocab.rare_words), 0.0};
  return r;
}

inline Stat mean_std(const std::vector<double>& xs) {
  Stat s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

/// Mean and population standard deviation of every field.
inline MetricReport aggregate_over_seeds(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw Error(Errc::empty_collection, "nothing to aggregate");
  const auto& first = reports.front();
  for (const auto& r : reports) {
    if (r.config != first.config || r.turns != first.turns ||
        r.per_turn_accuracy.size() != first.per_turn_accuracy.size())
      throw Error(Errc::aggregation, "cannot aggregate '" + r.config + "' with '" + first.config + "'");
  }
  auto field = [&](auto get) {
    std::vector<double> xs;
    for (const auto& r : reports) xs.push_back(get(r).mean);
    return mean_std(xs);
  };
  MetricReport out;
  out.config = first.config;
  out.turns = first.turns;
  out.n = static_cast<int>(reports.size());
  out.accuracy = field([](const MetricReport& r) { return r.accuracy; });
  out.chair_i = field([](const MetricReport& r) { return r.chair_i; });
  out.chair_s = field([](const MetricReport& r) { return r.chair_s; });
  out.repetition_rate = field([](const MetricReport& r) { return r.repetition_rate; });
  out.vocabulary_size = field([](const MetricReport& r) { return r.vocabulary_size; });
  out.rare_words = field([](const MetricReport& r) { return r.rare_words; });
  for (std::size_t i = 0; i < first.per_turn_accuracy.size(); ++i)
    out.per_turn_accuracy.push_back(field([i](const MetricReport& r) { return r.per_turn_accuracy[i]; }));
  return out;
}

}  // namespace decodelab
