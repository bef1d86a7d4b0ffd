#pragma once

// Grammar files.
//
//   {"templates": [{"id": "cat",
//                   "tokens_with_slots": ["is", "it", "a", "{c:category}", "?"],
//                   "predicate": ["category=$c"],
//                   "grounded_weight_rule": {"kind": "discriminative", "scale": 3.0,
//                                            "normalize": true, "floor": 0.1},
//                   "prior_weight": 1.0}],
//    "categories": [...], "colors": [...]}          // optional domain limits
//
// A slot is written {name:type}; predicate atoms are attr=$slot or
// attr=literal. The end-of-question marker is appended to every template.

#include <filesystem>
#include <string>
#include <string_view>

#include "grammar_lm.hpp"
#include "json_util.hpp"

namespace decodelab {

inline const char* grounding_rule_name(GroundingRule r) {
  switch (r) {
    case GroundingRule::constant: return "constant";
    case GroundingRule::satisfiable: return "satisfiable";
    case GroundingRule::discriminative: return "discriminative";
  }
  return "?";
}

namespace detail {

inline const char* slot_type_name(SlotType t) {
  switch (t) {
    case SlotType::category: return "category";
    case SlotType::category_plural: return "category_plural";
    case SlotType::color: return "color";
    case SlotType::size: return "size";
    case SlotType::side: return "side";
    case SlotType::ordinal: return "ordinal";
    case SlotType::count: return "count";
  }
  return "?";
}

inline Piece parse_piece(const Reader& r) {
  const std::string s = r.str();
  if (s.size() >= 2 && s.front() == '{' && s.back() == '}') {
    const auto colon = s.find(':');
    if (colon == std::string::npos) r.fail("slot must be written {name:type}");
    const std::string name = s.substr(1, colon - 1);
    const std::string type = s.substr(colon + 1, s.size() - colon - 2);
    auto t = slot_type_from_name(type);
    if (!t) r.fail("unknown slot type '" + type + "'");
    if (name.empty()) r.fail("empty slot name");
    return Piece{name, t};
  }
  if (s.empty() || s.find(' ') != std::string::npos) r.fail("literal must be a single word");
  if (s == kEoq) r.fail("end-of-question marker is implicit");
  return Piece{s, std::nullopt};
}

inline AtomSpec parse_atom(const Reader& r) {
  const std::string s = r.str();
  const auto eq = s.find('=');
  if (eq == std::string::npos) r.fail("predicate atom must be attr=value");
  auto attr = attr_from_name(s.substr(0, eq));
  if (!attr) r.fail("unknown predicate attribute '" + s.substr(0, eq) + "'");
  AtomSpec a;
  a.attr = *attr;
  const std::string value = s.substr(eq + 1);
  if (!value.empty() && value.front() == '$') {
    a.slot = value.substr(1);
  } else {
    a.literal = value;
    if (a.attr == Attr::ordinal || a.attr == Attr::row || a.attr == Attr::among_first) {
      if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos)
        r.fail("numeric attribute needs an integer literal");
    }
  }
  return a;
}

inline GroundingSpec parse_grounding(const Reader& r) {
  GroundingSpec g;
  auto kind_of = [&](const Reader& k) {
    const std::string s = k.str();
    if (s == "constant") return GroundingRule::constant;
    if (s == "satisfiable") return GroundingRule::satisfiable;
    if (s == "discriminative") return GroundingRule::discriminative;
    k.fail("unknown grounded_weight_rule '" + s + "'");
  };
  if (r.raw().is_string()) {
    g.kind = kind_of(r);
    return g;
  }
  r.expect_object({"kind"}, {"scale", "normalize", "floor"});
  g.kind = kind_of(r.at("kind"));
  if (r.has("scale")) g.scale = r.at("scale").number();
  if (r.has("normalize")) g.normalize = r.at("normalize").boolean();
  if (r.has("floor")) g.floor = r.at("floor").number();
  return g;
}

}  // namespace detail

inline GrammarSpec parse_grammar(std::string_view text) {
  const json doc = parse_json(text, "grammar");
  const Reader r(doc, "$");
  r.expect_object({"templates"}, {"categories", "colors"});
  GrammarSpec spec;
  const Reader ts = r.at("templates");
  for (std::size_t i = 0; i < ts.array_size(); ++i) {
    const Reader t = ts.at(i);
    t.expect_object({"id", "tokens_with_slots", "predicate", "grounded_weight_rule", "prior_weight"});
    TemplateSpec tpl;
    tpl.id = t.at("id").str();
    const Reader pieces = t.at("tokens_with_slots");
    for (std::size_t k = 0; k < pieces.array_size(); ++k) tpl.pieces.push_back(detail::parse_piece(pieces.at(k)));
    if (tpl.pieces.empty()) t.fail("template has no tokens");
    const Reader pred = t.at("predicate");
    for (std::size_t k = 0; k < pred.array_size(); ++k) tpl.predicate.push_back(detail::parse_atom(pred.at(k)));
    tpl.grounding = detail::parse_grounding(t.at("grounded_weight_rule"));
    tpl.prior_weight = t.at("prior_weight").number();
    spec.templates.push_back(std::move(tpl));
  }
  auto words = [&](std::string_view key, std::vector<std::string>& out) {
    if (!r.has(key)) return;
    const Reader list = r.at(key);
    for (std::size_t i = 0; i < list.array_size(); ++i) out.push_back(list.at(i).str());
  };
  words("categories", spec.categories);
  words("colors", spec.colors);
  return spec;
}

inline GrammarSpec load_grammar(const std::filesystem::path& path) { return parse_grammar(read_file(path)); }

inline json grammar_to_json(const GrammarSpec& spec) {
  json j;
  json ts = json::array();
  for (const auto& t : spec.templates) {
    json jt;
    jt["id"] = t.id;
    json pieces = json::array();
    for (const auto& p : t.pieces)
      pieces.push_back(p.slot ? "{" + p.text + ":" + detail::slot_type_name(*p.slot) + "}" : p.text);
    jt["tokens_with_slots"] = std::move(pieces);
    json pred = json::array();
    for (const auto& a : t.predicate)
      pred.push_back(std::string(attr_name(a.attr)) + "=" + (a.slot.empty() ? a.literal : "$" + a.slot));
    jt["predicate"] = std::move(pred);
    jt["grounded_weight_rule"] = {{"kind", grounding_rule_name(t.grounding.kind)},
                                  {"scale", t.grounding.scale},
                                  {"normalize", t.grounding.normalize},
                                  {"floor", t.grounding.floor}};
    jt["prior_weight"] = t.prior_weight;
    ts.push_back(std::move(jt));
  }
  j["templates"] = std::move(ts);
  if (!spec.categories.empty()) j["categories"] = spec.categories;
  if (!spec.colors.empty()) j["colors"] = spec.colors;
  return j;
}

/// The shipped question grammar: 13 templates over 91 tokens.
inline constexpr std::string_view kDefaultGrammarJson = R"json({
  "templates": [
    {"id": "cat", "tokens_with_slots": ["is", "it", "a", "{c:category}", "?"],
     "predicate": ["category=$c"],
     "grounded_weight_rule": {"kind": "discriminative", "scale": 1.0, "normalize": true, "floor": 0.1},
     "prior_weight": 2.0},
    {"id": "group", "tokens_with_slots": ["is", "it", "one", "of", "the", "{c:category_plural}", "?"],
     "predicate": ["category=$c"],
     "grounded_weight_rule": {"kind": "discriminative", "scale": 1.0, "normalize": true, "floor": 0.1},
     "prior_weight": 1.0},
    {"id": "color", "tokens_with_slots": ["is", "it", "{k:color}", "?"],
     "predicate": ["color=$k"],
     "grounded_weight_rule": {"kind": "discriminative", "scale": 1.0, "normalize": true, "floor": 0.1},
     "prior_weight": 1.0},
    {"id": "size", "tokens_with_slots": ["is", "it", "{s:size}", "?"],
     "predicate": ["size=$s"],
     "grounded_weight_rule": {"kind": "discriminative", "scale": 1.0, "normalize": true, "floor": 0.1},
     "prior_weight": 1.0},
    {"id": "side", "tokens_with_slots": ["is", "it", "on", "the", "{d:side}", "?"],
     "predicate": ["side=$d"],
     "grounded_weight_rule": {"kind": "discriminative", "scale": 1.0, "normalize": true, "floor": 0.1},
     "prior_weight": 1.0},
    {"id": "ordinal", "tokens_with_slots": ["is", "it", "the", "{o:ordinal}", "from", "the", "left", "?"],
     "predicate": ["ordinal=$o"],
     "grounded_weight_rule": {"kind": "discriminative", "scale": 1.0, "normalize": true, "floor": 0.1},
     "prior_weight": 0.5},
    {"id": "first", "tokens_with_slots": ["is", "it", "among", "the", "first", "{n:count}", "from", "the", "left", "?"],
     "predicate": ["among_first=$n"],
     "grounded_weight_rule": {"kind": "discriminative", "scale": 1.0, "normalize": true, "floor": 0.1},
     "prior_weight": 0.1},
    {"id": "row", "tokens_with_slots": ["is", "it", "in", "the", "{o:ordinal}", "row", "?"],
     "predicate": ["row=$o"],
     "grounded_weight_rule": {"kind": "discriminative", "scale": 1.0, "normalize": true, "floor": 0.1},
     "prior_weight": 0.5},
    {"id": "color_cat", "tokens_with_slots": ["is", "it", "a", "{k:color}", "{c:category}", "?"],
     "predicate": ["color=$k", "category=$c"],
     "grounded_weight_rule": {"kind": "discriminative", "scale": 1.0, "normalize": true, "floor": 0.1},
     "prior_weight": 1.0},
    {"id": "size_cat", "tokens_with_slots": ["is", "it", "a", "{s:size}", "{c:category}", "?"],
     "predicate": ["size=$s", "category=$c"],
     "grounded_weight_rule": {"kind": "discriminative", "scale": 1.0, "normalize": true, "floor": 0.1},
     "prior_weight": 1.0},
    {"id": "cat_side", "tokens_with_slots": ["is", "it", "the", "{c:category}", "on", "the", "{d:side}", "?"],
     "predicate": ["category=$c", "side=$d"],
     "grounded_weight_rule": {"kind": "discriminative", "scale": 1.0, "normalize": true, "floor": 0.1},
     "prior_weight": 1.0},
    {"id": "cat_near", "tokens_with_slots": ["is", "it", "the", "{c:category}", "near", "the", "{o:category_plural}", "?"],
     "predicate": ["category=$c", "near=$o"],
     "grounded_weight_rule": {"kind": "discriminative", "scale": 1.0, "normalize": true, "floor": 0.1},
     "prior_weight": 1.0},
    {"id": "near", "tokens_with_slots": ["is", "it", "near", "the", "{o:category_plural}", "?"],
     "predicate": ["near=$o"],
     "grounded_weight_rule": {"kind": "discriminative", "scale": 1.0, "normalize": true, "floor": 0.1},
     "prior_weight": 1.0}
  ]
})json";

inline GrammarSpec default_grammar() { return parse_grammar(kDefaultGrammarJson); }

inline constexpr double kDefaultGroundingWeight = 0.8;
inline constexpr double kDefaultHistoryPenalty = 0.5;

}  // namespace decodelab
