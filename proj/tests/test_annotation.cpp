#include <gtest/gtest.h>

#include <thread>

#include <decodelab/annotation.hpp>

#include "annotation_support.hpp"

using namespace decodelab;
using namespace testing_support;

namespace {

SessionConfig session(int annotators = 8, int quota = 5, std::uint64_t seed = 1) { return {annotators, quota, seed}; }

std::string fixed_clock() { return "2024-01-01T00:00:00Z"; }

class AnnotationTest : public ::testing::Test {
 protected:
  AnnotationWorld world = annotation_world();
  AnnotationService make(const SessionConfig& cfg = session(),
                         std::optional<std::filesystem::path> store = std::nullopt) {
    return AnnotationService(world.by_condition, world.data.games, cfg, std::move(store), fixed_clock);
  }
  std::map<std::string, const Transcript*> index;
  void SetUp() override {
    for (const auto& [c, ts] : world.by_condition)
      for (const auto& t : ts) index[transcript_token(t)] = &t;
  }
  const Transcript& transcript_of(const std::string& id) const { return *index.at(id); }
  Errc code_of(const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    ADD_FAILURE() << "no error";
    return Errc::internal;
  }
};

}  // namespace

TEST_F(AnnotationTest, EveryAnnotatorGetsQuotaPerConditionWithoutRepeatedGames) {
  TranscriptPool pool(world.by_condition);
  const auto session_plan = build_session(pool, session());
  ASSERT_EQ(session_plan.size(), 8u);
  std::map<std::pair<std::string, std::string>, int> served;  // (game, condition)
  for (const auto& a : session_plan) {
    EXPECT_EQ(a.items.size(), 20u);
    std::map<std::string, int> per_condition;
    std::set<std::string> games;
    for (const auto& item : a.items) {
      const auto& condition = pool.by_id.at(item.transcript_id).condition;
      ++per_condition[condition];
      EXPECT_TRUE(games.insert(item.game_id).second) << a.annotator_id << " sees " << item.game_id << " twice";
      ++served[{item.game_id, condition}];
    }
    for (const auto& c : pool.conditions) EXPECT_EQ(per_condition[c], 5) << a.annotator_id << " " << c;
  }
  // 40 games, 8 blocks of 5: each (game, condition) pair is served exactly once.
  EXPECT_EQ(served.size(), 160u);
  for (const auto& [key, n] : served) EXPECT_EQ(n, 1);
}

TEST_F(AnnotationTest, PresentationOrderDependsOnlyOnSeed) {
  TranscriptPool pool(world.by_condition);
  const auto a = build_session(pool, session(8, 5, 1));
  const auto b = build_session(pool, session(8, 5, 1));
  const auto c = build_session(pool, session(8, 5, 2));
  EXPECT_EQ(a[0].items, b[0].items);
  EXPECT_NE(a[0].items, c[0].items);
  // Conditions are interleaved rather than presented in blocks.
  std::vector<std::string> first_five;
  for (int i = 0; i < 5; ++i) first_five.push_back(pool.by_id.at(a[0].items[static_cast<std::size_t>(i)].transcript_id).condition);
  EXPECT_GT(std::set<std::string>(first_five.begin(), first_five.end()).size(), 1u);
}

TEST_F(AnnotationTest, CapacityShortfallIsReported) {
  TranscriptPool pool(world.by_condition);
  try {
    build_session(pool, session(8, 11));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::capacity);
    EXPECT_NE(std::string(e.what()).find("need 44"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("short by 4"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of([&] { build_session(pool, session(0, 5)); }), Errc::configuration);
  EXPECT_EQ(code_of([&] { build_session(pool, session(2, 0)); }), Errc::configuration);
}

TEST_F(AnnotationTest, OnlyGamesSharedByAllConditionsAreUsed) {
  auto partial = world.by_condition;
  partial.begin()->second.resize(20);
  TranscriptPool pool(partial);
  for (const auto& a : build_session(pool, session(2, 5)))
    for (const auto& item : a.items) EXPECT_LT(item.game_id, "g000020");
  EXPECT_EQ(code_of([&] { build_session(pool, session(2, 6)); }), Errc::capacity);
}

TEST_F(AnnotationTest, DuplicateGamesInAConditionAreRejected) {
  auto dup = world.by_condition;
  dup.begin()->second.push_back(dup.begin()->second.front());
  EXPECT_EQ(code_of([&] { TranscriptPool pool(dup); }), Errc::validation);
  EXPECT_EQ(code_of([&] { TranscriptPool pool({}); }), Errc::empty_collection);
}

TEST_F(AnnotationTest, TranscriptTokensAreOpaqueAndStable) {
  const auto& t = world.by_condition.begin()->second.front();
  const auto id = transcript_token(t);
  EXPECT_EQ(id, transcript_token(t));
  EXPECT_EQ(id.size(), 17u);
  EXPECT_EQ(id.find(t.game_id), std::string::npos);
  EXPECT_EQ(id.find(t.config), std::string::npos);
}

TEST_F(AnnotationTest, NextItemShowsOnlyWhatAHumanNeeds) {
  auto svc = make();
  const auto item = svc.next_item("a1");
  EXPECT_FALSE(item["done"].get<bool>());
  std::vector<std::string> keys;
  for (const auto& [k, v] : item.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"done", "transcript_id", "scene", "candidate_ids", "dialogue", "progress"}));
  const std::string text = item.dump();
  for (const auto& [condition, ts] : world.by_condition) EXPECT_EQ(text.find(condition), std::string::npos);
  for (const char* leak : {"target", "success", "posterior", "config", "strategy", "seed", "final_guess", "<eoq>"})
    EXPECT_EQ(text.find(leak), std::string::npos) << leak;
  const auto& t = transcript_of(item["transcript_id"].get<std::string>());
  EXPECT_EQ(item["dialogue"].size(), t.turns.size());
  EXPECT_EQ(item["candidate_ids"].get<std::vector<int>>(), t.candidate_ids);
  EXPECT_EQ(item["progress"]["total"], 20);
  EXPECT_EQ(svc.next_item("a1"), item);
}

TEST_F(AnnotationTest, SubmissionsAreScoredAgainstTheHiddenTarget) {
  auto svc = make();
  const auto item = svc.next_item("a1");
  const auto id = item["transcript_id"].get<std::string>();
  const auto& t = transcript_of(id);
  const auto out = svc.submit("a1", id, t.target_id);
  EXPECT_FALSE(out.duplicate);
  EXPECT_TRUE(out.record.correct);
  EXPECT_EQ(out.record.timestamp, "2024-01-01T00:00:00Z");
  EXPECT_NE(svc.next_item("a1")["transcript_id"], id);
  EXPECT_EQ(svc.next_item("a1")["progress"]["answered"], 1);

  const auto again = svc.submit("a1", id, t.target_id);
  EXPECT_TRUE(again.duplicate);
  EXPECT_EQ(svc.records().size(), 1u);
  const int other = t.candidate_ids.front() == t.target_id ? t.candidate_ids.back() : t.candidate_ids.front();
  EXPECT_EQ(code_of([&] { svc.submit("a1", id, other); }), Errc::rejected);
}

TEST_F(AnnotationTest, SubmissionErrors) {
  auto svc = make();
  const auto id = svc.next_item("a1")["transcript_id"].get<std::string>();
  EXPECT_EQ(code_of([&] { svc.submit("a1", id, 99); }), Errc::rejected);
  EXPECT_EQ(code_of([&] { svc.submit("a2", id, 0); }), Errc::unknown_item);
  EXPECT_EQ(code_of([&] { svc.submit("a1", "t0000000000000000", 0); }), Errc::unknown_item);
  EXPECT_EQ(code_of([&] { svc.submit("zz", id, 0); }), Errc::unknown_item);
  EXPECT_EQ(code_of([&] { svc.next_item("zz"); }), Errc::unknown_item);
  const auto later = svc.assignment("a1").items[5].transcript_id;
  EXPECT_EQ(code_of([&] { svc.submit("a1", later, 0); }), Errc::unknown_item);
}

TEST_F(AnnotationTest, SessionCompletesAndReports) {
  auto svc = make(session(2, 5));
  EXPECT_EQ(code_of([&] { svc.report(); }), Errc::empty_collection);
  int correct = 0;
  for (int i = 0; i < 20; ++i) {
    const auto item = svc.next_item("a1");
    const auto id = item["transcript_id"].get<std::string>();
    const auto& t = transcript_of(id);
    const int choice = i % 2 ? t.target_id : t.candidate_ids.front();
    correct += choice == t.target_id;
    svc.submit("a1", id, choice);
  }
  const auto done = svc.next_item("a1");
  EXPECT_TRUE(done["done"].get<bool>());
  EXPECT_EQ(done["progress"]["answered"], 20);
  EXPECT_FALSE(done.contains("transcript_id"));

  const auto report = svc.report();
  EXPECT_EQ(report["total_records"], 20);
  EXPECT_EQ(report["coverage"]["assigned"], 40);
  EXPECT_EQ(report["coverage"]["answered"], 20);
  int total_correct = 0;
  ASSERT_EQ(report["conditions"].size(), 4u);
  for (const auto& row : report["conditions"]) {
    EXPECT_EQ(row["answered"], 5);
    EXPECT_EQ(row["assigned"], 10);
    EXPECT_DOUBLE_EQ(row["accuracy"].get<double>(), 100.0 * row["correct"].get<int>() / 5);
    total_correct += row["correct"].get<int>();
  }
  EXPECT_EQ(total_correct, correct);
  EXPECT_EQ(report["annotators"][0]["answered"], 20);
  EXPECT_FALSE(report["annotators"][1].contains("accuracy"));
  const auto text = report.dump();
  for (const auto& [id, t] : index) EXPECT_EQ(text.find(id), std::string::npos);
}

TEST_F(AnnotationTest, StoreSurvivesRestart) {
  const auto store = std::filesystem::temp_directory_path() / "decodelab_annotation_store" / "records.jsonl";
  std::filesystem::remove_all(store.parent_path());
  std::string second;
  {
    auto svc = make(session(), store);
    const auto id = svc.next_item("a3")["transcript_id"].get<std::string>();
    svc.submit("a3", id, transcript_of(id).target_id);
    second = svc.next_item("a3")["transcript_id"].get<std::string>();
  }
  {
    auto svc = make(session(), store);
    EXPECT_EQ(svc.records().size(), 1u);
    EXPECT_EQ(svc.next_item("a3")["transcript_id"], second);
    EXPECT_EQ(svc.report()["total_records"], 1);
  }
  auto text = read_file(store);
  const auto pos = text.find("\"correct\":true");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 14, "\"correct\":false");
  write_file_atomic(store, text);
  EXPECT_EQ(code_of([&] { make(session(), store); }), Errc::validation);
  write_file_atomic(store, "{\"annotator_id\": \"a3\"}\n");
  EXPECT_EQ(code_of([&] { make(session(), store); }), Errc::format);
  std::filesystem::remove_all(store.parent_path());
}

TEST_F(AnnotationTest, UnknownGamesAreRejected) {
  auto games = world.data.games;
  games.pop_back();
  EXPECT_EQ(code_of([&] { AnnotationService svc(world.by_condition, games, session()); }), Errc::validation);
}

TEST_F(AnnotationTest, ConcurrentAnnotatorsDoNotInterfere) {
  auto svc = make();
  std::vector<std::thread> threads;
  for (const auto& a : svc.annotators()) {
    threads.emplace_back([&, a] {
      for (int i = 0; i < 20; ++i) {
        const auto id = svc.next_item(a)["transcript_id"].get<std::string>();
        svc.submit(a, id, transcript_of(id).candidate_ids.front());
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(svc.records().size(), 160u);
  for (const auto& a : svc.annotators()) EXPECT_TRUE(svc.next_item(a)["done"].get<bool>());
}
