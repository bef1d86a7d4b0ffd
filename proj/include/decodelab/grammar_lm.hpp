#pragma once

// Weighted question-template automaton used as the Questioner's language
// model.
//
// Every template expands into a finite set of questions (one per slot
// assignment). Each question q gets a weight
//
//   w(q) = (lambda * grounded(q, game) + (1 - lambda) * prior(q)) * penalty^asked(q)
//
// and all questions are stored in a token trie. The conditional probability
// of a token after a prefix is the weight below the extended prefix divided by
// the weight below the prefix, so the chain rule recovers w(q) / sum(w)
// exactly and every decoding strategy can be checked against enumeration.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "error.hpp"
#include "world.hpp"

namespace decodelab {

inline constexpr std::string_view kEoq = "<eoq>";

/// Probabilities and log-probabilities closer than this are treated as equal
/// before tie-breaking.
inline constexpr double kTieEpsilon = 1e-12;

inline long long quantize(double x) { return std::llround(x / kTieEpsilon); }

// ---------------------------------------------------------------------------

class Vocabulary {
 public:
  Vocabulary() = default;

  int add(std::string_view token) {
    if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.emplace_back(token);
    index_.emplace(tokens_.back(), id);
    return id;
  }

  std::optional<int> find(std::string_view token) const {
    if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
    return std::nullopt;
  }

  int id(std::string_view token) const {
    auto found = find(token);
    if (!found) throw Error(Errc::parse, "unknown token '" + std::string(token) + "'");
    return *found;
  }

  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  int eoq() const { return id(kEoq); }

  std::vector<int> encode(std::string_view text) const {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      const auto next = text.find(' ', pos);
      const auto word = text.substr(pos, next == std::string_view::npos ? text.npos : next - pos);
      if (!word.empty()) out.push_back(id(word));
      if (next == std::string_view::npos) break;
      pos = next + 1;
    }
    return out;
  }

  std::string decode(std::span<const int> ids, bool keep_eoq = false) const {
    std::string out;
    for (int t : ids) {
      if (!keep_eoq && token(t) == kEoq) continue;
      if (!out.empty()) out += ' ';
      out += token(t);
    }
    return out;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// ---------------------------------------------------------------------------

/// Normalized distribution over the vocabulary with its entropy cached.
class TokenDistribution {
 public:
  TokenDistribution() = default;

  explicit TokenDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    double total = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0)) throw Error(Errc::internal, "negative or NaN probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw Error(Errc::internal, "distribution sums to " + std::to_string(total));
    entropy_ = 0.0;
    for (double p : probs_)
      if (p > 0.0) entropy_ -= p * std::log(p);
  }

  /// Renormalizes non-negative weights.
  static TokenDistribution from_weights(std::vector<double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw Error(Errc::internal, "cannot normalize zero mass");
    for (double& w : weights) w /= total;
    return TokenDistribution(std::move(weights));
  }

  const std::vector<double>& probs() const { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::size_t size() const { return probs_.size(); }
  double entropy_nats() const { return entropy_; }

  std::vector<int> support() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < probs_.size(); ++i)
      if (probs_[i] > 0.0) out.push_back(static_cast<int>(i));
    return out;
  }

  /// Support ordered by probability (descending), then token index.
  std::vector<int> ranked() const {
    std::vector<int> ids = support();
    std::vector<long long> keys(probs_.size());
    for (int i : ids) keys[static_cast<std::size_t>(i)] = quantize(probs_[static_cast<std::size_t>(i)]);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
      const auto ka = keys[static_cast<std::size_t>(a)];
      const auto kb = keys[static_cast<std::size_t>(b)];
      return ka != kb ? ka > kb : a < b;
    });
    return ids;
  }

  int argmax() const {
    const auto r = ranked();
    if (r.empty()) throw Error(Errc::internal, "empty distribution");
    return r.front();
  }

 private:
  std::vector<double> probs_;
  double entropy_ = 0.0;
};

// ---------------------------------------------------------------------------
// Grammar description

enum class SlotType { category, category_plural, color, size, side, ordinal, count };

inline std::optional<SlotType> slot_type_from_name(std::string_view s) {
  if (s == "category") return SlotType::category;
  if (s == "category_plural") return SlotType::category_plural;
  if (s == "color") return SlotType::color;
  if (s == "size") return SlotType::size;
  if (s == "side") return SlotType::side;
  if (s == "ordinal") return SlotType::ordinal;
  if (s == "count") return SlotType::count;
  return std::nullopt;
}

struct Piece {
  std::string text;  // literal word, or the slot name when `slot` is set
  std::optional<SlotType> slot;
};

struct AtomSpec {
  Attr attr = Attr::category;
  std::string slot;     // bound slot name, empty for a literal
  std::string literal;  // used when slot is empty
};

enum class GroundingRule { constant, satisfiable, discriminative };

struct GroundingSpec {
  GroundingRule kind = GroundingRule::satisfiable;
  double scale = 1.0;
  bool normalize = false;
  double floor = 0.1;  // discriminative only
};

struct TemplateSpec {
  std::string id;
  std::vector<Piece> pieces;
  std::vector<AtomSpec> predicate;
  GroundingSpec grounding;
  double prior_weight = 1.0;
};

struct GrammarSpec {
  std::vector<TemplateSpec> templates;
  // Optional restrictions of slot domains; empty means the full lexicon.
  std::vector<std::string> categories;
  std::vector<std::string> colors;
};

struct SlotValue {
  std::string surface;
  std::string symbol;
  int number = 0;
};

inline std::vector<SlotValue> slot_domain(SlotType type, const GrammarSpec& spec) {
  std::vector<SlotValue> out;
  switch (type) {
    case SlotType::category:
    case SlotType::category_plural:
      if (spec.categories.empty()) {
        for (const auto& c : Lexicon::categories)
          out.push_back({std::string(type == SlotType::category ? c.singular : c.plural),
                         std::string(c.singular), 0});
      } else {
        for (const auto& c : spec.categories) {
          auto plural = Lexicon::plural_of(c);
          if (!plural) throw Error(Errc::configuration, "grammar: unknown category '" + c + "'");
          out.push_back({type == SlotType::category ? c : std::string(*plural), c, 0});
        }
      }
      break;
    case SlotType::color:
      if (spec.colors.empty()) {
        for (auto c : Lexicon::colors) out.push_back({std::string(c), std::string(c), 0});
      } else {
        for (const auto& c : spec.colors) {
          if (!Lexicon::is_color(c)) throw Error(Errc::configuration, "grammar: unknown color '" + c + "'");
          out.push_back({c, c, 0});
        }
      }
      break;
    case SlotType::size:
      for (auto s : Lexicon::sizes) out.push_back({std::string(s), std::string(s), 0});
      break;
    case SlotType::side:
      for (auto s : Lexicon::sides) out.push_back({std::string(s), std::string(s), 0});
      break;
    case SlotType::ordinal:
      for (std::size_t i = 0; i < Lexicon::ordinals.size(); ++i)
        out.push_back({std::string(Lexicon::ordinals[i]), "", static_cast<int>(i) + 1});
      break;
    case SlotType::count:
      for (std::size_t i = 0; i < Lexicon::counts.size(); ++i)
        out.push_back({std::string(Lexicon::counts[i]), "", static_cast<int>(i) + 2});
      break;
  }
  return out;
}

/// One instantiated question: a template with all slots filled.
struct Question {
  int template_index = 0;
  std::vector<int> tokens;  // ends with EOQ
  Predicate predicate;
  std::vector<std::string> slot_symbols;  // lexical arguments, for display
  double prior = 0.0;
};

struct ParsedQuestion {
  Predicate predicate;
  std::string template_id;
  int question_index = 0;
};

struct EnumeratedQuestion {
  std::vector<int> tokens;
  double probability = 0.0;
  double logprob = 0.0;
};

class GrammarLm;

/// Weights of every question for one (game, history) pair, and the trie
/// masses derived from them. Shared by all states branched from one start().
struct LmContext {
  const GrammarLm* lm = nullptr;
  std::vector<std::vector<int>> history;
  std::vector<double> weights;  // per question
  std::vector<double> mass;     // per trie node
};

/// Immutable snapshot of a question under construction.
class LmState {
 public:
  LmState() = default;
  LmState(std::shared_ptr<const LmContext> ctx, int node, std::vector<int> partial)
      : ctx_(std::move(ctx)), node_(node), partial_(std::move(partial)) {}

  const std::vector<int>& tokens() const { return partial_; }
  const std::vector<std::vector<int>>& history() const { return ctx_->history; }
  int node() const { return node_; }
  const LmContext& context() const { return *ctx_; }
  const std::shared_ptr<const LmContext>& context_ptr() const { return ctx_; }
  bool complete() const;

 private:
  std::shared_ptr<const LmContext> ctx_;
  int node_ = 0;
  std::vector<int> partial_;
};

/// Per-game base weights (before the history penalty). Computing them
/// evaluates every question predicate, so play loops cache this.
struct GroundedWeights {
  std::vector<double> base;
};

class GrammarLm {
 public:
  GrammarLm(GrammarSpec spec, double grounding_weight, double history_penalty)
      : spec_(std::move(spec)), lambda_(grounding_weight), penalty_(history_penalty) {
    if (!(lambda_ >= 0.0 && lambda_ <= 1.0))
      throw Error(Errc::configuration, "grounding weight must be in [0, 1]");
    if (!(penalty_ > 0.0 && penalty_ <= 1.0))
      throw Error(Errc::configuration, "history penalty must be in (0, 1]");
    if (spec_.templates.empty()) throw Error(Errc::configuration, "grammar has no templates");
    build();
  }

  const GrammarSpec& spec() const { return spec_; }
  const Vocabulary& vocab() const { return vocab_; }
  double grounding_weight() const { return lambda_; }
  double history_penalty() const { return penalty_; }
  const std::vector<Question>& questions() const { return questions_; }
  std::size_t template_count() const { return spec_.templates.size(); }
  const TemplateSpec& template_spec(int i) const { return spec_.templates.at(static_cast<std::size_t>(i)); }
  int max_question_length() const { return max_len_; }

  /// Scene-conditioned weight of a question before mixing.
  std::vector<double> grounded_weights(const Game& game) const {
    std::vector<double> raw(questions_.size(), 0.0);
    for (std::size_t q = 0; q < questions_.size(); ++q) {
      const auto& rule = spec_.templates[static_cast<std::size_t>(questions_[q].template_index)].grounding;
      raw[q] = raw_grounding(rule, questions_[q].predicate, game);
    }
    std::vector<double> template_total(spec_.templates.size(), 0.0);
    for (std::size_t q = 0; q < questions_.size(); ++q)
      template_total[static_cast<std::size_t>(questions_[q].template_index)] += raw[q];
    for (std::size_t q = 0; q < questions_.size(); ++q) {
      const auto t = static_cast<std::size_t>(questions_[q].template_index);
      const auto& rule = spec_.templates[t].grounding;
      double g = raw[q];
      if (rule.normalize) g = template_total[t] > 0.0 ? g / template_total[t] : 0.0;
      raw[q] = rule.scale * g;
    }
    return raw;
  }

  std::shared_ptr<const GroundedWeights> ground(const Game& game) const {
    auto out = std::make_shared<GroundedWeights>();
    out->base = grounded_weights(game);
    for (std::size_t q = 0; q < questions_.size(); ++q)
      out->base[q] = lambda_ * out->base[q] + (1.0 - lambda_) * questions_[q].prior;
    return out;
  }

  /// Root state for the next question given the questions already asked.
  LmState start(const GroundedWeights& grounded, std::vector<std::vector<int>> history) const {
    auto ctx = std::make_shared<LmContext>();
    ctx->lm = this;
    ctx->weights = grounded.base;
    for (const auto& h : history) {
      if (auto q = find_question(h)) ctx->weights[static_cast<std::size_t>(*q)] *= penalty_;
    }
    ctx->history = std::move(history);
    ctx->mass.assign(nodes_.size(), 0.0);
    for (std::size_t n = nodes_.size(); n-- > 0;) {
      const auto& node = nodes_[n];
      if (node.question >= 0) {
        ctx->mass[n] = ctx->weights[static_cast<std::size_t>(node.question)];
      } else {
        double m = 0.0;
        for (const auto& [tok, child] : node.children) m += ctx->mass[static_cast<std::size_t>(child)];
        ctx->mass[n] = m;
      }
    }
    if (!(ctx->mass[0] > 0.0))
      throw Error(Errc::configuration, "grammar assigns zero mass to every question for this scene");
    return LmState(std::move(ctx), 0, {});
  }

  LmState start(const Game& game, std::vector<std::vector<int>> history = {}) const {
    return start(*ground(game), std::move(history));
  }

  TokenDistribution next_token_distribution(const LmState& state) const {
    check_owner(state);
    const auto& node = nodes_[static_cast<std::size_t>(state.node())];
    if (node.question >= 0) throw Error(Errc::sequence_complete, "question already ended");
    const auto& mass = state.context().mass;
    const double total = mass[static_cast<std::size_t>(state.node())];
    if (!(total > 0.0)) throw Error(Errc::internal, "state has no positive-mass continuation");
    std::vector<double> probs(vocab_.size(), 0.0);
    for (const auto& [tok, child] : node.children)
      probs[static_cast<std::size_t>(tok)] = mass[static_cast<std::size_t>(child)] / total;
    return TokenDistribution(std::move(probs));
  }

  LmState advance(const LmState& state, int token) const {
    check_owner(state);
    const auto& node = nodes_[static_cast<std::size_t>(state.node())];
    if (node.question >= 0) throw Error(Errc::sequence_complete, "question already ended");
    for (const auto& [tok, child] : node.children) {
      if (tok != token) continue;
      if (!(state.context().mass[static_cast<std::size_t>(child)] > 0.0)) break;
      std::vector<int> partial = state.tokens();
      partial.push_back(token);
      return LmState(state.context_ptr(), child, std::move(partial));
    }
    throw Error(Errc::invalid_continuation,
                "token " + std::to_string(token) + " has zero probability after '" +
                    vocab_.decode(state.tokens()) + "'");
  }

  bool is_complete(const LmState& state) const {
    return nodes_[static_cast<std::size_t>(state.node())].question >= 0;
  }

  /// Every complete question reachable from `state` with its probability as
  /// the product of the step conditionals. Sorted by probability descending,
  /// ties by token ids.
  std::vector<EnumeratedQuestion> enumerate_questions(const LmState& state, int max_len) const {
    check_owner(state);
    if (max_len < max_len_)
      throw Error(Errc::truncation, "max_len " + std::to_string(max_len) +
                                        " is shorter than the longest template (" +
                                        std::to_string(max_len_) + ")");
    std::vector<EnumeratedQuestion> out;
    std::vector<int> prefix = state.tokens();
    enumerate_from(state, state.node(), 1.0, 0.0, prefix, out);
    std::sort(out.begin(), out.end(), [](const EnumeratedQuestion& a, const EnumeratedQuestion& b) {
      const auto ka = quantize(a.probability);
      const auto kb = quantize(b.probability);
      return ka != kb ? ka > kb : a.tokens < b.tokens;
    });
    return out;
  }

  std::optional<int> find_question(std::span<const int> tokens) const {
    int node = 0;
    for (int t : tokens) {
      const auto& children = nodes_[static_cast<std::size_t>(node)].children;
      auto it = std::find_if(children.begin(), children.end(),
                             [&](const auto& c) { return c.first == t; });
      if (it == children.end()) return std::nullopt;
      node = it->second;
    }
    const int q = nodes_[static_cast<std::size_t>(node)].question;
    if (q < 0) return std::nullopt;
    return q;
  }

  ParsedQuestion parse_question(std::span<const int> tokens) const {
    auto q = find_question(tokens);
    if (!q) throw Error(Errc::parse, "not a complete question: '" + vocab_.decode(tokens, true) + "'");
    const auto& question = questions_[static_cast<std::size_t>(*q)];
    return ParsedQuestion{question.predicate,
                          spec_.templates[static_cast<std::size_t>(question.template_index)].id, *q};
  }

  ParsedQuestion parse_question(std::string_view text) const {
    std::vector<int> ids;
    try {
      ids = vocab_.encode(text);
    } catch (const Error&) {
      throw Error(Errc::parse, "unknown word in '" + std::string(text) + "'");
    }
    return parse_question(ids);
  }

 private:
  struct Node {
    std::vector<std::pair<int, int>> children;  // (token, node), sorted by token
    int question = -1;
  };

  static double raw_grounding(const GroundingSpec& rule, const Predicate& pred, const Game& game) {
    if (rule.kind == GroundingRule::constant) return 1.0;
    const bool satisfiable =
        std::any_of(game.scene.objects.begin(), game.scene.objects.end(),
                    [&](const SceneObject& o) { return pred.holds(game.scene, o); });
    if (!satisfiable) return 0.0;
    if (rule.kind == GroundingRule::satisfiable) return 1.0;
    int yes = 0;
    for (int id : game.candidate_ids)
      if (pred.holds(game.scene, game.object(id))) ++yes;
    const double f = static_cast<double>(yes) / static_cast<double>(game.candidate_ids.size());
    return rule.floor + 4.0 * f * (1.0 - f);
  }

  void check_owner(const LmState& state) const {
    if (!state.context_ptr() || state.context().lm != this)
      throw Error(Errc::internal, "state belongs to a different grammar");
  }

  void enumerate_from(const LmState& state, int node_id, double prob, double logprob,
                      std::vector<int>& prefix, std::vector<EnumeratedQuestion>& out) const {
    const auto& node = nodes_[static_cast<std::size_t>(node_id)];
    if (node.question >= 0) {
      out.push_back({prefix, prob, logprob});
      return;
    }
    const auto& mass = state.context().mass;
    const double total = mass[static_cast<std::size_t>(node_id)];
    for (const auto& [tok, child] : node.children) {
      const double m = mass[static_cast<std::size_t>(child)];
      if (!(m > 0.0)) continue;
      const double p = m / total;
      prefix.push_back(tok);
      enumerate_from(state, child, prob * p, logprob + std::log(p), prefix, out);
      prefix.pop_back();
    }
  }

  static Atom bind(const AtomSpec& spec, const std::map<std::string, SlotValue>& values,
                   const std::string& template_id) {
    Atom a;
    a.attr = spec.attr;
    if (!spec.slot.empty()) {
      auto it = values.find(spec.slot);
      if (it == values.end())
        throw Error(Errc::configuration,
                    "template " + template_id + ": predicate uses unknown slot '" + spec.slot + "'");
      a.symbol = it->second.symbol;
      a.number = it->second.number;
    } else if (spec.attr == Attr::ordinal || spec.attr == Attr::row || spec.attr == Attr::among_first) {
      a.number = std::stoi(spec.literal);
    } else {
      a.symbol = spec.literal;
    }
    return a;
  }

  void build() {
    // Vocabulary: literals in order of appearance, then slot words, then EOQ.
    for (const auto& t : spec_.templates)
      for (const auto& p : t.pieces)
        if (!p.slot) vocab_.add(p.text);
    for (SlotType type : {SlotType::category, SlotType::category_plural, SlotType::color,
                          SlotType::size, SlotType::side, SlotType::ordinal, SlotType::count})
      for (const auto& v : slot_domain(type, spec_)) vocab_.add(v.surface);
    const int eoq = vocab_.add(kEoq);

    nodes_.push_back(Node{});
    std::map<std::vector<int>, std::string> seen;
    for (std::size_t ti = 0; ti < spec_.templates.size(); ++ti) {
      const auto& t = spec_.templates[ti];
      if (!(t.prior_weight > 0.0))
        throw Error(Errc::configuration, "template " + t.id + ": prior_weight must be positive");
      if (!(t.grounding.scale > 0.0))
        throw Error(Errc::configuration, "template " + t.id + ": grounded scale must be positive");
      std::vector<std::size_t> slot_pieces;
      std::vector<std::vector<SlotValue>> domains;
      for (std::size_t i = 0; i < t.pieces.size(); ++i) {
        if (!t.pieces[i].slot) continue;
        slot_pieces.push_back(i);
        domains.push_back(slot_domain(*t.pieces[i].slot, spec_));
      }
      const std::size_t first = questions_.size();
      std::vector<std::size_t> choice(domains.size(), 0);
      while (true) {
        Question q;
        q.template_index = static_cast<int>(ti);
        std::map<std::string, SlotValue> values;
        std::size_t s = 0;
        for (std::size_t i = 0; i < t.pieces.size(); ++i) {
          if (t.pieces[i].slot) {
            const auto& v = domains[s][choice[s]];
            values[t.pieces[i].text] = v;
            q.tokens.push_back(vocab_.id(v.surface));
            q.slot_symbols.push_back(v.symbol.empty() ? std::to_string(v.number) : v.symbol);
            ++s;
          } else {
            q.tokens.push_back(vocab_.id(t.pieces[i].text));
          }
        }
        q.tokens.push_back(eoq);
        for (const auto& a : t.predicate) q.predicate.atoms.push_back(bind(a, values, t.id));
        if (auto [it, inserted] = seen.emplace(q.tokens, t.id); !inserted)
          throw Error(Errc::configuration, "ambiguous grammar: '" + vocab_.decode(q.tokens) +
                                               "' produced by " + it->second + " and " + t.id);
        insert(q.tokens, static_cast<int>(questions_.size()));
        max_len_ = std::max(max_len_, static_cast<int>(q.tokens.size()));
        questions_.push_back(std::move(q));

        std::size_t k = 0;
        while (k < choice.size() && ++choice[k] == domains[k].size()) choice[k++] = 0;
        if (k == choice.size()) break;
      }
      const double share = t.prior_weight / static_cast<double>(questions_.size() - first);
      for (std::size_t q = first; q < questions_.size(); ++q) questions_[q].prior = share;
    }
  }

  void insert(const std::vector<int>& tokens, int question) {
    int node = 0;
    for (int t : tokens) {
      auto& children = nodes_[static_cast<std::size_t>(node)].children;
      auto it = std::lower_bound(children.begin(), children.end(), std::make_pair(t, -1));
      if (it != children.end() && it->first == t) {
        node = it->second;
        continue;
      }
      const int fresh = static_cast<int>(nodes_.size());
      children.insert(it, {t, fresh});
      nodes_.push_back(Node{});
      node = fresh;
    }
    nodes_[static_cast<std::size_t>(node)].question = question;
  }

  GrammarSpec spec_;
  double lambda_;
  double penalty_;
  Vocabulary vocab_;
  std::vector<Question> questions_;
  std::vector<Node> nodes_;
  int max_len_ = 0;
};

inline bool LmState::complete() const { return ctx_ && ctx_->lm->is_complete(*this); }

}  // namespace decodelab
