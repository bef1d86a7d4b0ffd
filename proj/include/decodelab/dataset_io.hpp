#pragma once

// Dataset interchange: one JSON document per dataset.
//
//   {"lexicon_version": "v1", "generation_seed": 7, "grid": [rows, cols],
//    "games": [{"game_id": "g000000",
//               "objects": [{"id": 0, "category": "bird",
//                            "attributes": {"color": "red", "size": "small",
//                                           "row": 0, "col": 1},
//                            "bbox": [x, y, w, h]}],
//               "target_id": 0, "candidate_ids": [0, 2, 3]}]}
//
// Unknown fields are rejected.

#include <filesystem>
#include <string>

#include "json_util.hpp"
#include "world.hpp"

namespace decodelab {

inline json object_to_json(const SceneObject& o) {
  json j;
  j["id"] = o.id;
  j["category"] = o.category;
  j["attributes"] = {{"color", o.color}, {"size", o.size}, {"row", o.row}, {"col", o.col}};
  j["bbox"] = {o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h};
  return j;
}

inline json game_to_json(const Game& g) {
  json j;
  j["game_id"] = g.game_id;
  json objs = json::array();
  for (const auto& o : g.scene.objects) objs.push_back(object_to_json(o));
  j["objects"] = std::move(objs);
  j["target_id"] = g.target_id;
  j["candidate_ids"] = g.candidate_ids;
  return j;
}

inline json dataset_to_json(const Dataset& d) {
  json j;
  j["lexicon_version"] = d.lexicon_version;
  j["generation_seed"] = d.generation_seed;
  j["grid"] = {d.rows, d.cols};
  json games = json::array();
  for (const auto& g : d.games) games.push_back(game_to_json(g));
  j["games"] = std::move(games);
  return j;
}

inline std::string serialize_dataset(const Dataset& d) { return dataset_to_json(d).dump(1) + "\n"; }

inline SceneObject object_from_json(const Reader& r) {
  r.expect_object({"id", "category", "attributes", "bbox"});
  SceneObject o;
  o.id = static_cast<int>(r.at("id").integer());
  o.category = r.at("category").str();
  const Reader attrs = r.at("attributes");
  attrs.expect_object({"color", "size", "row", "col"});
  o.color = attrs.at("color").str();
  o.size = attrs.at("size").str();
  o.row = static_cast<int>(attrs.at("row").integer());
  o.col = static_cast<int>(attrs.at("col").integer());
  const Reader bbox = r.at("bbox");
  if (bbox.array_size() != 4) bbox.fail("expected [x, y, w, h]");
  o.bbox = BBox{bbox.at(0).number(), bbox.at(1).number(), bbox.at(2).number(), bbox.at(3).number()};
  return o;
}

inline Game game_from_json(const Reader& r, int rows, int cols) {
  r.expect_object({"game_id", "objects", "target_id", "candidate_ids"});
  Game g;
  g.game_id = r.at("game_id").str();
  g.scene.rows = rows;
  g.scene.cols = cols;
  const Reader objs = r.at("objects");
  for (std::size_t i = 0; i < objs.array_size(); ++i) g.scene.objects.push_back(object_from_json(objs.at(i)));
  g.target_id = static_cast<int>(r.at("target_id").integer());
  const Reader cands = r.at("candidate_ids");
  for (std::size_t i = 0; i < cands.array_size(); ++i)
    g.candidate_ids.push_back(static_cast<int>(cands.at(i).integer()));
  return g;
}

/// Parses and validates. Format problems name the field path; invariant
/// violations name the game.
inline Dataset parse_dataset(std::string_view text) {
  const json doc = parse_json(text, "dataset");
  const Reader r(doc, "$");
  r.expect_object({"lexicon_version", "generation_seed", "grid", "games"});
  Dataset d;
  d.lexicon_version = r.at("lexicon_version").str();
  d.generation_seed = r.at("generation_seed").u64();
  const Reader grid = r.at("grid");
  if (grid.array_size() != 2) grid.fail("expected [rows, cols]");
  d.rows = static_cast<int>(grid.at(0).integer());
  d.cols = static_cast<int>(grid.at(1).integer());
  const Reader games = r.at("games");
  for (std::size_t i = 0; i < games.array_size(); ++i)
    d.games.push_back(game_from_json(games.at(i), d.rows, d.cols));
  validate_dataset(d);
  return d;
}

inline Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

inline void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_dataset(d));
}

}  // namespace decodelab
