#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include <decodelab/grammar_io.hpp>
#include <decodelab/harness.hpp>
#include <decodelab/transcript_io.hpp>

#include "support.hpp"

using namespace decodelab;
using namespace testing_support;

namespace {

Dataset small_dataset(int n = 30) {
  GeneratorConfig cfg;
  cfg.seed = 13;
  cfg.n_games = n;
  return generate_dataset(cfg);
}

FrequencyTable small_reference() {
  ReferenceCorpusConfig cfg;
  cfg.games = 200;
  return build_reference_frequency(default_grammar(), 0.5, cfg);
}

SweepSpec small_spec() {
  SweepSpec s;
  s.configs = {DecodingConfig::greedy(), DecodingConfig::nucleus(0.5), DecodingConfig::top_k(5)};
  s.seeds = {1, 2};
  return s;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::internal;
}

}  // namespace

TEST(Harness, ParallelForVisitsEveryIndexOnce) {
  for (int jobs : {1, 3, 16}) {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(hits.size(), jobs, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
  parallel_for(0, 4, [](std::size_t) { FAIL(); });
}

TEST(Harness, ParallelForRethrows) {
  EXPECT_THROW(parallel_for(50, 4,
                            [](std::size_t i) {
                              if (i == 17) throw Error(Errc::internal, "boom");
                            }),
               Error);
}

TEST(Harness, BenchmarkDefaults) {
  const auto cfg = benchmark_config();
  EXPECT_EQ(cfg.n_games, 2000);
  EXPECT_EQ(cfg.seed, 1u);
  EXPECT_EQ(default_seeds(), (std::vector<std::uint64_t>{1, 2, 3, 4, 5}));
}

TEST(Harness, ReferenceCorpusIsDeterministicAndCountsEveryWord) {
  ReferenceCorpusConfig cfg;
  cfg.games = 200;
  const auto a = build_reference_frequency(default_grammar(), 0.5, cfg, 1);
  const auto b = build_reference_frequency(default_grammar(), 0.5, cfg, 4);
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_EQ(a.source_descriptor, b.source_descriptor);
  EXPECT_NE(a.source_descriptor.find("1000 questions"), std::string::npos);
  EXPECT_EQ(a.count("is"), 1000);
  EXPECT_EQ(a.count("?"), 0);
  EXPECT_EQ(a.count(std::string(kEoq)), 0);
}

TEST(Harness, FrequencyTableRoundTrips) {
  const auto t = small_reference();
  const auto back = parse_frequency_table(serialize_frequency_table(t));
  EXPECT_EQ(back.counts, t.counts);
  EXPECT_EQ(back.source_descriptor, t.source_descriptor);
  EXPECT_EQ(code_of([] { parse_frequency_table(R"({"source_descriptor": "x", "counts": {"a": -1}})"); }),
            Errc::format);
  EXPECT_EQ(code_of([] { parse_frequency_table(R"({"counts": {}})"); }), Errc::format);
}

TEST(Harness, ExperimentIsIndependentOfJobCount) {
  GrammarLm lm(default_grammar(), 0.8, 0.5);
  const auto data = small_dataset();
  const auto freq = small_reference();
  const auto a = run_experiment(data, lm, DecodingConfig::typical(0.7).with_seed(3), {}, freq, 1);
  const auto b = run_experiment(data, lm, DecodingConfig::typical(0.7).with_seed(3), {}, freq, 4);
  EXPECT_EQ(serialize_transcripts(a.transcripts), serialize_transcripts(b.transcripts));
  EXPECT_EQ(a.report, b.report);
  EXPECT_EQ(a.transcripts.size(), data.games.size());
  EXPECT_EQ(code_of([&] { run_experiment(Dataset{}, lm, DecodingConfig::greedy(), {}, freq); }),
            Errc::empty_collection);
}

TEST(Harness, DefaultSweepHasTwentyNineDistinctConfigs) {
  const auto spec = default_sweep_spec();
  ASSERT_EQ(spec.configs.size(), 29u);
  std::set<std::string> labels;
  for (const auto& c : spec.configs) {
    EXPECT_NO_THROW(c.validate());
    labels.insert(c.label());
  }
  EXPECT_EQ(labels.size(), 29u);
  EXPECT_EQ(spec.seeds.size(), 5u);
  EXPECT_EQ(spec.turns, 5);
}

TEST(Harness, SweepAggregatesSeedsAndSortsByAccuracy) {
  GrammarLm lm(default_grammar(), 0.8, 0.5);
  std::vector<std::string> seen;
  const auto result = run_sweep(small_dataset(), lm, small_spec(), small_reference(), 2,
                                [&](const DecodingConfig& c, const ExperimentResult& r) {
                                  seen.push_back(c.label() + "#" + std::to_string(c.rng_seed));
                                  EXPECT_EQ(r.transcripts.front().seed, c.rng_seed);
                                });
  EXPECT_EQ(result.runs, 6u);
  EXPECT_EQ(seen.size(), 6u);
  EXPECT_TRUE(result.failures.empty());
  ASSERT_EQ(result.rows.size(), 3u);
  for (std::size_t i = 1; i < result.rows.size(); ++i)
    EXPECT_GE(result.rows[i - 1].report.accuracy.mean, result.rows[i].report.accuracy.mean);
  for (const auto& row : result.rows) {
    EXPECT_EQ(row.report.n, 2);
    EXPECT_EQ(row.report.config, row.config.label());
  }
}

TEST(Harness, SweepRecordsFailingConfigsAndContinues) {
  GrammarLm lm(default_grammar(), 0.8, 0.5);
  auto spec = small_spec();
  spec.configs.push_back(DecodingConfig::top_k(0));
  const auto result = run_sweep(small_dataset(10), lm, spec, small_reference());
  EXPECT_EQ(result.rows.size(), 3u);
  ASSERT_EQ(result.failures.size(), 1u);
  EXPECT_NE(result.failures[0].find("top_k(k=0)"), std::string::npos);
  spec.configs.clear();
  EXPECT_EQ(code_of([&] { run_sweep(small_dataset(10), lm, spec, small_reference()); }), Errc::configuration);
}

TEST(Harness, PerTurnStudyKeepsInputOrder) {
  GrammarLm lm(default_grammar(), 0.8, 0.5);
  const auto rows =
      per_turn_study(small_dataset(20), lm, default_per_turn_strategies(), small_reference(), 10, {1, 2});
  ASSERT_EQ(rows.size(), 4u);
  const auto strategies = default_per_turn_strategies();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].config.label(), strategies[i].label());
    EXPECT_EQ(rows[i].report.per_turn_accuracy.size(), 10u);
  }
}

TEST(Harness, MetricRowsRoundTripExactly) {
  GrammarLm lm(default_grammar(), 0.8, 0.5);
  const auto result = run_sweep(small_dataset(), lm, small_spec(), small_reference());
  const auto csv = metric_rows_csv(result.rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricRowsHeader);
  const auto back = parse_metric_rows_csv(csv);
  ASSERT_EQ(back.size(), result.rows.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].report, result.rows[i].report);
    EXPECT_EQ(back[i].config.label(), result.rows[i].config.label());
  }
  EXPECT_EQ(metric_rows_csv(back), csv);
  EXPECT_THROW(parse_metric_rows_csv(std::string(kMetricRowsHeader) + "\nx,warp,,1,5\n"), Error);
}

TEST(Harness, ReportStylesProduceTheirFiles) {
  GrammarLm lm(default_grammar(), 0.8, 0.5);
  auto spec = small_spec();
  spec.configs.push_back(DecodingConfig::nucleus(0.9));
  spec.configs.push_back(DecodingConfig::typical(0.7));
  const auto rows = run_sweep(small_dataset(), lm, spec, small_reference()).rows;

  const auto t2 = emit_report(rows, ReportStyle::table2);
  EXPECT_EQ(t2.size(), 2u);
  EXPECT_EQ(t2.at("table2.csv").substr(0, t2.at("table2.csv").find('\n')),
            "strategy,accuracy,chair_i,chair_s,repetition_rate,vocabulary_size,rare_words");
  EXPECT_NE(t2.at("table2.txt").find("% games with repetitions"), std::string::npos);
  EXPECT_EQ(std::count(t2.at("table2.csv").begin(), t2.at("table2.csv").end(), '\n'), 6);

  const auto sm = emit_report(rows, "sm_table4");
  EXPECT_TRUE(sm.count("sm_table4.txt") && sm.count("sm_table4.csv"));

  const auto curves = emit_report(rows, ReportStyle::curves);
  ASSERT_EQ(curves.size(), 3u);
  const auto& nucleus = curves.at("curve_nucleus.csv");
  EXPECT_EQ(nucleus.substr(0, nucleus.find('\n')),
            "param_value,accuracy_mean,accuracy_std,chair_i_mean,chair_s_mean,repetition_mean");
  EXPECT_LT(nucleus.find("\n0.5,"), nucleus.find("\n0.9,"));

  const auto pt = emit_report(rows, ReportStyle::per_turn);
  const auto& per_turn = pt.at("per_turn_accuracy.csv");
  EXPECT_EQ(per_turn.substr(0, per_turn.find('\n')), "strategy,turn_1,turn_2,turn_3,turn_4,turn_5");
  EXPECT_TRUE(pt.count("per_turn_accuracy_std.csv"));
}

TEST(Harness, ReportUsageErrors) {
  EXPECT_EQ(code_of([] { emit_report({}, ReportStyle::table2); }), Errc::usage);
  SweepRow greedy{DecodingConfig::greedy(), {}};
  greedy.report.config = "greedy";
  EXPECT_EQ(code_of([&] { emit_report({greedy}, ReportStyle::curves); }), Errc::usage);
  EXPECT_EQ(code_of([&] { emit_report({greedy}, "table9"); }), Errc::usage);
  EXPECT_FALSE(report_style_from_name("table9"));
}

TEST(Harness, WriteFilesCreatesTheDirectory) {
  const auto dir = std::filesystem::temp_directory_path() / "decodelab_harness_out" / "nested";
  std::filesystem::remove_all(dir.parent_path());
  write_files(dir, {{"a.txt", "alpha\n"}, {"b.csv", "x,y\n"}});
  EXPECT_EQ(read_file(dir / "a.txt"), "alpha\n");
  EXPECT_EQ(read_file(dir / "b.csv"), "x,y\n");
  std::filesystem::remove_all(dir.parent_path());
}
