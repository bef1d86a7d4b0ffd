#pragma once

// Transcript interchange: one JSON object per line.
//
//   {"game_id": "g000012", "config": "nucleus(p=0.3)",
//    "config_digest": "nucleus(p=0.3) seed=1 turns=5 ...", "seed": 1,
//    "candidate_ids": [0, 2, 4], "target_id": 2,
//    "turns": [{"question": ["is", "it", "a", "bird", "?", "<eoq>"],
//               "answer": "yes", "posterior": [0.5, 0.5, 0.0]}],
//    "final_guess": 0, "success": false}

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "game.hpp"
#include "json_util.hpp"

namespace decodelab {

inline json transcript_to_json(const Transcript& t) {
  json j;
  j["game_id"] = t.game_id;
  j["config"] = t.config;
  j["config_digest"] = t.config_digest;
  j["seed"] = t.seed;
  j["candidate_ids"] = t.candidate_ids;
  j["target_id"] = t.target_id;
  json turns = json::array();
  for (const auto& turn : t.turns) {
    turns.push_back({{"question", turn.question}, {"answer", answer_name(turn.answer)}, {"posterior", turn.posterior}});
  }
  j["turns"] = std::move(turns);
  j["final_guess"] = t.final_guess;
  j["success"] = t.success;
  return j;
}

inline Transcript transcript_from_json(const Reader& r) {
  r.expect_object({"game_id", "config", "config_digest", "seed", "candidate_ids", "target_id", "turns",
                   "final_guess", "success"});
  Transcript t;
  t.game_id = r.at("game_id").str();
  t.config = r.at("config").str();
  t.config_digest = r.at("config_digest").str();
  t.seed = r.at("seed").u64();
  const Reader cands = r.at("candidate_ids");
  for (std::size_t i = 0; i < cands.array_size(); ++i) t.candidate_ids.push_back(static_cast<int>(cands.at(i).integer()));
  if (t.candidate_ids.empty()) cands.fail("no candidates");
  t.target_id = static_cast<int>(r.at("target_id").integer());
  const Reader turns = r.at("turns");
  for (std::size_t i = 0; i < turns.array_size(); ++i) {
    const Reader tr = turns.at(i);
    tr.expect_object({"question", "answer", "posterior"});
    Turn turn;
    const Reader q = tr.at("question");
    for (std::size_t k = 0; k < q.array_size(); ++k) turn.question.push_back(q.at(k).str());
    const auto answer = answer_from_name(tr.at("answer").str());
    if (!answer) tr.at("answer").fail("expected yes, no or na");
    turn.answer = *answer;
    const Reader post = tr.at("posterior");
    if (post.array_size() != t.candidate_ids.size()) post.fail("posterior length differs from candidate_ids");
    for (std::size_t k = 0; k < post.array_size(); ++k) turn.posterior.push_back(post.at(k).number());
    t.turns.push_back(std::move(turn));
  }
  t.final_guess = static_cast<int>(r.at("final_guess").integer());
  t.success = r.at("success").boolean();
  return t;
}

inline std::string serialize_transcripts(const std::vector<Transcript>& ts) {
  std::string out;
  for (const auto& t : ts) {
    out += transcript_to_json(t).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<Transcript> parse_transcripts(std::string_view text) {
  std::vector<Transcript> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "transcripts line " + std::to_string(line_no);
    const json doc = parse_json(line, where);
    out.push_back(transcript_from_json(Reader(doc, where)));
  }
  return out;
}

inline std::vector<Transcript> load_transcripts(const std::filesystem::path& path) {
  return parse_transcripts(read_file(path));
}

inline void save_transcripts(const std::vector<Transcript>& ts, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_transcripts(ts));
}

}  // namespace decodelab
