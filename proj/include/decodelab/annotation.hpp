#pragma once

// Blind human-evaluation sessions over pre-generated transcripts.
//
// Client-visible payloads carry opaque transcript ids only; the mapping from
// transcript to decoding condition never leaves the server.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "error.hpp"
#include "game.hpp"
#include "json_util.hpp"
#include "rng.hpp"
#include "transcript_io.hpp"
#include "world.hpp"

namespace decodelab {

inline constexpr int kDefaultAnnotators = 8;
inline constexpr int kDefaultQuota = 25;

struct SessionConfig {
  int n_annotators = kDefaultAnnotators;
  int quota = kDefaultQuota;  // items per condition per annotator
  std::uint64_t seed = 1;     // presentation-order seed
};

struct AssignedItem {
  std::string game_id;
  std::string transcript_id;
  bool operator==(const AssignedItem&) const = default;
};

struct Assignment {
  std::string annotator_id;
  std::vector<AssignedItem> items;  // presentation order
  int quota = 0;
};

struct AnnotationRecord {
  std::string annotator_id;
  std::string transcript_id;
  int chosen_candidate_id = 0;
  std::string timestamp;
  bool correct = false;
  bool operator==(const AnnotationRecord&) const = default;
};

inline std::string annotator_name(int index) { return fmt::format("a{}", index + 1); }

/// Opaque id: a hash of the transcript's identity, unrelated to its order.
inline std::string transcript_token(const Transcript& t) {
  return fmt::format("t{:016x}", splitmix64(fnv1a(t.config_digest) ^ splitmix64(fnv1a(t.game_id))));
}

/// Server-side catalogue of annotatable transcripts, keyed by opaque id.
struct TranscriptPool {
  struct Entry {
    std::string condition;
    const Transcript* transcript = nullptr;
  };
  std::vector<std::string> conditions;  // sorted
  std::map<std::string, Entry> by_id;
  std::map<std::string, std::map<std::string, std::string>> id_by_condition_game;

  explicit TranscriptPool(const std::map<std::string, std::vector<Transcript>>& by_condition) {
    for (const auto& [condition, ts] : by_condition) {
      conditions.push_back(condition);
      auto& games = id_by_condition_game[condition];
      for (const auto& t : ts) {
        const auto id = transcript_token(t);
        if (games.count(t.game_id)) throw Error(Errc::validation, "duplicate game " + t.game_id + " in " + condition);
        if (by_id.count(id)) throw Error(Errc::internal, "transcript id collision " + id);
        by_id[id] = {condition, &t};
        games[t.game_id] = id;
      }
    }
    if (conditions.empty()) throw Error(Errc::empty_collection, "no transcripts to annotate");
  }
};

/// Games are split into blocks of `quota`; annotator a sees block
/// (a + s) mod nblocks under condition s, so no annotator meets a game twice
/// and, with nblocks = n_annotators, every (game, condition) pair is served
/// exactly once overall.
inline std::vector<Assignment> build_session(const TranscriptPool& pool, const SessionConfig& cfg) {
  if (cfg.n_annotators < 1) throw Error(Errc::configuration, "n_annotators must be >= 1");
  if (cfg.quota < 1) throw Error(Errc::configuration, "quota must be >= 1");
  const auto n_cond = pool.conditions.size();
  std::vector<std::string> common;
  for (const auto& [game, id] : pool.id_by_condition_game.at(pool.conditions.front())) {
    bool everywhere = true;
    for (const auto& c : pool.conditions) everywhere = everywhere && pool.id_by_condition_game.at(c).count(game);
    if (everywhere) common.push_back(game);
  }
  const std::size_t needed = n_cond * static_cast<std::size_t>(cfg.quota);
  if (common.size() < needed) {
    throw Error(Errc::capacity,
                fmt::format("need {} games shared by all {} conditions ({} per condition per annotator), have {}; "
                            "short by {}",
                            needed, n_cond, cfg.quota, common.size(), needed - common.size()));
  }
  const std::size_t nblocks = common.size() / static_cast<std::size_t>(cfg.quota);
  std::vector<Assignment> out;
  for (int a = 0; a < cfg.n_annotators; ++a) {
    Assignment as;
    as.annotator_id = annotator_name(a);
    as.quota = cfg.quota;
    for (std::size_t s = 0; s < n_cond; ++s) {
      const std::size_t block = (static_cast<std::size_t>(a) + s) % nblocks;
      const auto& ids = pool.id_by_condition_game.at(pool.conditions[s]);
      for (int i = 0; i < cfg.quota; ++i) {
        const auto& game = common[block * static_cast<std::size_t>(cfg.quota) + static_cast<std::size_t>(i)];
        as.items.push_back({game, ids.at(game)});
      }
    }
    Rng rng(derive_seed(cfg.seed, as.annotator_id, 0));
    rng.shuffle(as.items);
    out.push_back(std::move(as));
  }
  return out;
}

inline json record_to_json(const AnnotationRecord& r) {
  return {{"annotator_id", r.annotator_id},
          {"transcript_id", r.transcript_id},
          {"chosen_candidate_id", r.chosen_candidate_id},
          {"timestamp", r.timestamp},
          {"correct", r.correct}};
}

inline AnnotationRecord record_from_json(const Reader& r) {
  r.expect_object({"annotator_id", "transcript_id", "chosen_candidate_id", "timestamp", "correct"});
  return {r.at("annotator_id").str(), r.at("transcript_id").str(),
          static_cast<int>(r.at("chosen_candidate_id").integer()), r.at("timestamp").str(),
          r.at("correct").boolean()};
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct SubmitResult {
  bool duplicate = false;
  AnnotationRecord record;
};

/// Session state plus an append-only record store. All public members are
/// serialized by one mutex.
class AnnotationService {
 public:
  using Clock = std::function<std::string()>;

  AnnotationService(std::map<std::string, std::vector<Transcript>> by_condition, std::vector<Game> games,
                    const SessionConfig& cfg, std::optional<std::filesystem::path> store = std::nullopt,
                    Clock clock = utc_timestamp)
      : transcripts_(std::move(by_condition)),
        games_(std::move(games)),
        pool_(transcripts_),
        store_(std::move(store)),
        clock_(std::move(clock)) {
    for (const auto& g : games_) game_index_[g.game_id] = &g;
    for (const auto& [id, entry] : pool_.by_id) {
      if (!game_index_.count(entry.transcript->game_id))
        throw Error(Errc::validation, "transcript for unknown game " + entry.transcript->game_id);
    }
    for (auto& a : build_session(pool_, cfg)) {
      State st;
      st.assignment = std::move(a);
      states_.emplace(st.assignment.annotator_id, std::move(st));
    }
    if (store_) replay();
  }

  std::vector<std::string> annotators() const {
    std::vector<std::string> out;
    for (const auto& [id, st] : states_) out.push_back(id);
    return out;
  }

  const Assignment& assignment(const std::string& annotator) const { return state(annotator).assignment; }

  /// The first unanswered item, repeated until it is answered.
  json next_item(const std::string& annotator) {
    std::lock_guard lock(mu_);
    auto& st = state(annotator);
    json progress = {{"answered", st.answered.size()}, {"total", st.assignment.items.size()}};
    if (st.cursor >= st.assignment.items.size()) return {{"done", true}, {"progress", progress}};
    const auto& item = st.assignment.items[st.cursor];
    st.served.insert(item.transcript_id);
    const auto& t = *pool_.by_id.at(item.transcript_id).transcript;
    const Game& g = *game_index_.at(t.game_id);
    json objects = json::array();
    for (const auto& o : g.scene.objects) {
      objects.push_back({{"id", o.id},
                         {"category", o.category},
                         {"color", o.color},
                         {"size", o.size},
                         {"bbox", {o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h}}});
    }
    json dialogue = json::array();
    for (const auto& turn : t.turns) {
      std::string text;
      for (const auto& w : strip_eoq_words(turn.question)) text += (text.empty() ? "" : " ") + w;
      dialogue.push_back({{"question", text}, {"answer", answer_name(turn.answer)}});
    }
    return {{"done", false},
            {"transcript_id", item.transcript_id},
            {"scene", {{"grid", {g.scene.rows, g.scene.cols}}, {"objects", std::move(objects)}}},
            {"candidate_ids", t.candidate_ids},
            {"dialogue", std::move(dialogue)},
            {"progress", progress}};
  }

  SubmitResult submit(const std::string& annotator, const std::string& transcript_id, int chosen) {
    std::lock_guard lock(mu_);
    auto& st = state(annotator);
    if (auto it = st.answered.find(transcript_id); it != st.answered.end()) {
      const auto& prev = records_[it->second];
      if (prev.chosen_candidate_id != chosen)
        throw Error(Errc::rejected, fmt::format("item {} already answered with candidate {}", transcript_id,
                                                prev.chosen_candidate_id));
      return {true, prev};
    }
    if (!st.served.count(transcript_id))
      throw Error(Errc::unknown_item, "item " + transcript_id + " was not served to " + annotator);
    const auto& t = *pool_.by_id.at(transcript_id).transcript;
    if (!std::binary_search(t.candidate_ids.begin(), t.candidate_ids.end(), chosen))
      throw Error(Errc::rejected, fmt::format("candidate {} is not in item {}", chosen, transcript_id));
    AnnotationRecord rec{annotator, transcript_id, chosen, clock_(), chosen == t.target_id};
    if (store_) append(rec);
    apply(st, rec);
    return {false, rec};
  }

  std::vector<AnnotationRecord> records() const {
    std::lock_guard lock(mu_);
    return records_;
  }

  /// Accuracy per condition and per annotator, plus coverage counts. No
  /// transcript ids appear in the report.
  json report() const {
    std::lock_guard lock(mu_);
    if (records_.empty()) throw Error(Errc::empty_collection, "no annotation records yet");
    std::map<std::string, std::pair<int, int>> by_cond;  // answered, correct
    std::map<std::string, int> assigned_by_cond;
    for (const auto& c : pool_.conditions) by_cond[c] = {0, 0};
    for (const auto& [id, st] : states_)
      for (const auto& item : st.assignment.items) ++assigned_by_cond[pool_.by_id.at(item.transcript_id).condition];
    std::map<std::string, std::pair<int, int>> by_ann;
    for (const auto& [id, st] : states_) by_ann[id] = {0, 0};
    for (const auto& r : records_) {
      auto& c = by_cond[pool_.by_id.at(r.transcript_id).condition];
      auto& a = by_ann[r.annotator_id];
      ++c.first;
      ++a.first;
      if (r.correct) {
        ++c.second;
        ++a.second;
      }
    }
    auto row = [](json j, int answered, int correct) {
      j["answered"] = answered;
      j["correct"] = correct;
      if (answered > 0) j["accuracy"] = 100.0 * correct / answered;
      return j;
    };
    json conditions = json::array();
    for (const auto& [c, ac] : by_cond)
      conditions.push_back(row({{"condition", c}, {"assigned", assigned_by_cond[c]}}, ac.first, ac.second));
    json annotators = json::array();
    std::size_t assigned_total = 0;
    for (const auto& [id, ac] : by_ann) {
      const auto n = states_.at(id).assignment.items.size();
      assigned_total += n;
      annotators.push_back(row({{"annotator_id", id}, {"assigned", n}}, ac.first, ac.second));
    }
    return {{"total_records", records_.size()},
            {"coverage", {{"assigned", assigned_total}, {"answered", records_.size()}}},
            {"conditions", std::move(conditions)},
            {"annotators", std::move(annotators)}};
  }

 private:
  struct State {
    Assignment assignment;
    std::size_t cursor = 0;
    std::set<std::string> served;
    std::map<std::string, std::size_t> answered;  // transcript id -> record index
  };

  static std::vector<std::string> strip_eoq_words(const std::vector<std::string>& q) {
    std::vector<std::string> out;
    for (const auto& w : q)
      if (w != kEoq) out.push_back(w);
    return out;
  }

  State& state(const std::string& annotator) {
    auto it = states_.find(annotator);
    if (it == states_.end()) throw Error(Errc::unknown_item, "unknown annotator " + annotator);
    return it->second;
  }
  const State& state(const std::string& annotator) const {
    auto it = states_.find(annotator);
    if (it == states_.end()) throw Error(Errc::unknown_item, "unknown annotator " + annotator);
    return it->second;
  }

  void apply(State& st, const AnnotationRecord& rec) {
    st.served.insert(rec.transcript_id);
    st.answered[rec.transcript_id] = records_.size();
    records_.push_back(rec);
    while (st.cursor < st.assignment.items.size() &&
           st.answered.count(st.assignment.items[st.cursor].transcript_id))
      ++st.cursor;
  }

  void append(const AnnotationRecord& rec) {
    if (store_->has_parent_path()) std::filesystem::create_directories(store_->parent_path());
    std::ofstream out(*store_, std::ios::binary | std::ios::app);
    out << record_to_json(rec).dump() << '\n';
    out.flush();
    if (!out) throw Error(Errc::io, "cannot append to " + store_->string());
  }

  void replay() {
    if (!std::filesystem::exists(*store_)) return;
    const auto text = read_file(*store_);
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const auto line = std::string_view(text).substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
      const std::string where = fmt::format("{} line {}", store_->string(), line_no);
      const json doc = parse_json(line, where);
      const auto rec = record_from_json(Reader(doc, where));
      auto it = states_.find(rec.annotator_id);
      if (it == states_.end()) throw Error(Errc::validation, where + ": unknown annotator " + rec.annotator_id);
      const auto& items = it->second.assignment.items;
      const bool assigned = std::any_of(items.begin(), items.end(),
                                        [&](const AssignedItem& i) { return i.transcript_id == rec.transcript_id; });
      if (!assigned) throw Error(Errc::validation, where + ": item not in this session");
      if (it->second.answered.count(rec.transcript_id)) throw Error(Errc::validation, where + ": duplicate record");
      const auto& t = *pool_.by_id.at(rec.transcript_id).transcript;
      if (rec.correct != (rec.chosen_candidate_id == t.target_id))
        throw Error(Errc::validation, where + ": correct flag disagrees with the target");
      apply(it->second, rec);
    }
  }

  std::map<std::string, std::vector<Transcript>> transcripts_;
  std::vector<Game> games_;
  std::map<std::string, const Game*> game_index_;
  TranscriptPool pool_;
  std::map<std::string, State> states_;
  std::vector<AnnotationRecord> records_;
  std::optional<std::filesystem::path> store_;
  Clock clock_;
  mutable std::mutex mu_;
};

}  // namespace decodelab
