#pragma once

// Experiment driver: single runs, hyper-parameter sweeps averaged over
// seeds, per-turn studies and report rendering.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "dataset_io.hpp"
#include "decoding.hpp"
#include "game.hpp"
#include "grammar_io.hpp"
#include "json_util.hpp"
#include "metrics.hpp"
#include "transcript_io.hpp"
#include "world.hpp"

namespace decodelab {

inline constexpr int kBenchmarkGames = 2000;
inline constexpr std::uint64_t kBenchmarkSeed = 1;

inline GeneratorConfig benchmark_config() {
  GeneratorConfig cfg;
  cfg.seed = kBenchmarkSeed;
  cfg.n_games = kBenchmarkGames;
  return cfg;
}

inline std::vector<std::uint64_t> default_seeds() { return {1, 2, 3, 4, 5}; }

/// Runs fn(i) for i in [0, n) on `jobs` threads. Each index is written by
/// exactly one worker, so output order never depends on scheduling.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> workers;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  for (std::size_t w = 0; w < count; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Reference corpus for rare words

struct ReferenceCorpusConfig {
  std::uint64_t seed = 42;
  int games = 10000;
  int questions_per_game = 5;
  double grounding_weight = kDefaultGroundingWeight;
};

/// Word frequencies of 50,000 pure-sampled questions (10,000 dialogues of
/// five questions) drawn from the grammar at the reference grounding weight.
inline FrequencyTable build_reference_frequency(const GrammarSpec& grammar, double history_penalty,
                                                const ReferenceCorpusConfig& cfg = {}, int jobs = 1) {
  GeneratorConfig gen;
  gen.seed = cfg.seed;
  gen.n_games = cfg.games;
  const Dataset data = generate_dataset(gen);
  const GrammarLm lm(grammar, cfg.grounding_weight, history_penalty);
  RunSettings run;
  run.turns = cfg.questions_per_game;
  const auto config = DecodingConfig::pure().with_seed(cfg.seed);
  std::vector<Transcript> ts(data.games.size());
  parallel_for(data.games.size(), jobs, [&](std::size_t i) { ts[i] = play_game(lm, data.games[i], config, run); });
  FrequencyTable table;
  for (const auto& t : ts)
    for (const auto& turn : t.turns) table.add_question(turn.question);
  table.source_descriptor =
      fmt::format("{} questions: {} dialogues x {} pure-sampling turns, dataset seed {}, grid {}x{}, "
                  "pool {}, lambda {}, penalty {}, rng seed {}",
                  cfg.games * cfg.questions_per_game, cfg.games, cfg.questions_per_game, cfg.seed, gen.rows,
                  gen.cols, gen.category_pool_size, cfg.grounding_weight, history_penalty, cfg.seed);
  return table;
}

inline std::string serialize_frequency_table(const FrequencyTable& t) {
  json j;
  j["source_descriptor"] = t.source_descriptor;
  j["counts"] = json::object();
  for (const auto& [w, n] : t.counts) j["counts"][w] = n;
  return j.dump(1) + "\n";
}

inline FrequencyTable parse_frequency_table(std::string_view text) {
  const json doc = parse_json(text, "frequency table");
  const Reader r(doc, "frequency table");
  r.expect_object({"source_descriptor", "counts"});
  FrequencyTable t;
  t.source_descriptor = r.at("source_descriptor").str();
  const Reader counts = r.at("counts");
  if (!counts.raw().is_object()) counts.fail("expected an object");
  for (const auto& [w, _] : counts.raw().items()) {
    const auto n = counts.at(w).integer();
    if (n < 0) counts.at(w).fail("negative count");
    t.counts[w] = n;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Runs

struct ExperimentResult {
  std::vector<Transcript> transcripts;
  MetricReport report;
};

inline ExperimentResult run_experiment(const Dataset& data, const GrammarLm& lm, const DecodingConfig& config,
                                       const RunSettings& run, const FrequencyTable& freq, int jobs = 1) {
  config.validate();
  if (data.games.empty()) throw Error(Errc::empty_collection, "dataset has no games");
  ExperimentResult out;
  out.transcripts.resize(data.games.size());
  parallel_for(data.games.size(), jobs,
               [&](std::size_t i) { out.transcripts[i] = play_game(lm, data.games[i], config, run); });
  out.report = compute_report(out.transcripts, index_games(data.games), freq, run.turns);
  return out;
}

struct SweepSpec {
  std::vector<DecodingConfig> configs;  // seeds are filled in per run
  std::vector<std::uint64_t> seeds = default_seeds();
  int turns = kDefaultTurns;
  double epsilon = 0.0;
};

inline std::vector<double> default_threshold_grid() {
  return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.91, 0.95};
}

/// 29 configurations: confirm_it, beam(3), greedy, pure, top-k {5, 10, 20},
/// nucleus and typical over the 11-point threshold grid.
inline SweepSpec default_sweep_spec() {
  SweepSpec s;
  s.configs.push_back(DecodingConfig::confirm_it(3));
  s.configs.push_back(DecodingConfig::beam(3));
  s.configs.push_back(DecodingConfig::greedy());
  s.configs.push_back(DecodingConfig::pure());
  for (int k : {5, 10, 20}) s.configs.push_back(DecodingConfig::top_k(k));
  for (double p : default_threshold_grid()) s.configs.push_back(DecodingConfig::nucleus(p));
  for (double t : default_threshold_grid()) s.configs.push_back(DecodingConfig::typical(t));
  return s;
}

struct SweepRow {
  DecodingConfig config;
  MetricReport report;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // sorted by accuracy, descending
  std::vector<std::string> failures;
  std::size_t runs = 0;
};

inline void sort_by_accuracy(std::vector<SweepRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    const auto ka = quantize(a.report.accuracy.mean);
    const auto kb = quantize(b.report.accuracy.mean);
    return ka != kb ? ka > kb : a.report.config < b.report.config;
  });
}

using RunCallback = std::function<void(const DecodingConfig&, const ExperimentResult&)>;

inline SweepResult run_sweep(const Dataset& data, const GrammarLm& lm, const SweepSpec& spec,
                             const FrequencyTable& freq, int jobs = 1, const RunCallback& on_run = {}) {
  if (spec.configs.empty()) throw Error(Errc::configuration, "sweep has no configurations");
  if (spec.seeds.empty()) throw Error(Errc::configuration, "sweep has no seeds");
  SweepResult out;
  RunSettings run;
  run.turns = spec.turns;
  run.epsilon = spec.epsilon;
  for (const auto& base : spec.configs) {
    try {
      std::vector<MetricReport> per_seed;
      for (auto seed : spec.seeds) {
        const auto cfg = base.with_seed(seed);
        auto result = run_experiment(data, lm, cfg, run, freq, jobs);
        ++out.runs;
        if (on_run) on_run(cfg, result);
        per_seed.push_back(std::move(result.report));
      }
      out.rows.push_back({base, aggregate_over_seeds(per_seed)});
    } catch (const std::exception& e) {
      out.failures.push_back(base.label() + ": " + e.what());
    }
  }
  sort_by_accuracy(out.rows);
  return out;
}

inline std::vector<DecodingConfig> default_per_turn_strategies() {
  return {DecodingConfig::nucleus(0.3), DecodingConfig::typical(0.7), DecodingConfig::confirm_it(3),
          DecodingConfig::pure()};
}

/// Seed-averaged per-turn accuracy for each strategy, in input order.
inline std::vector<SweepRow> per_turn_study(const Dataset& data, const GrammarLm& lm,
                                            const std::vector<DecodingConfig>& strategies, const FrequencyTable& freq,
                                            int turns = kPerTurnStudyTurns,
                                            const std::vector<std::uint64_t>& seeds = default_seeds(), int jobs = 1,
                                            double epsilon = 0.0) {
  SweepSpec spec;
  spec.epsilon = epsilon;
  spec.configs = strategies;
  spec.seeds = seeds;
  spec.turns = turns;
  auto result = run_sweep(data, lm, spec, freq, jobs);
  if (!result.failures.empty()) throw Error(Errc::configuration, result.failures.front());
  std::vector<SweepRow> ordered;
  for (const auto& cfg : strategies)
    for (const auto& row : result.rows)
      if (row.config.label() == cfg.label()) ordered.push_back(row);
  return ordered;
}

// ---------------------------------------------------------------------------
// Reports

enum class ReportStyle { table2, sm_table4, curves, per_turn };

inline std::optional<ReportStyle> report_style_from_name(std::string_view s) {
  if (s == "table2") return ReportStyle::table2;
  if (s == "sm_table4") return ReportStyle::sm_table4;
  if (s == "curves") return ReportStyle::curves;
  if (s == "per_turn") return ReportStyle::per_turn;
  return std::nullopt;
}

inline constexpr const char* kMetricRowsHeader =
    "config,strategy,param,n,turns,accuracy_mean,accuracy_std,chair_i_mean,chair_i_std,chair_s_mean,chair_s_std,"
    "repetition_mean,repetition_std,vocabulary_mean,vocabulary_std,rare_words_mean,rare_words_std,per_turn_mean,"
    "per_turn_std";

namespace detail {

// Per-turn vectors travel as one field of ';'-separated values.
inline std::string join_stats(const std::vector<Stat>& xs, bool std_part) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ';';
    out += fmt::format("{}", std_part ? xs[i].std : xs[i].mean);
  }
  return out;
}

}  // namespace detail

/// Machine-readable rows; values keep full precision so they parse back
/// exactly.
inline std::string metric_rows_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kMetricRowsHeader) + "\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    const auto param = row.config.parameter();
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.config,
                       strategy_name(row.config.strategy), param ? fmt::format("{}", *param) : std::string(), r.n,
                       r.turns, r.accuracy.mean, r.accuracy.std, r.chair_i.mean, r.chair_i.std, r.chair_s.mean,
                       r.chair_s.std, r.repetition_rate.mean, r.repetition_rate.std, r.vocabulary_size.mean,
                       r.vocabulary_size.std, r.rare_words.mean, r.rare_words.std,
                       detail::join_stats(r.per_turn_accuracy, false), detail::join_stats(r.per_turn_accuracy, true));
  }
  return out;
}

inline DecodingConfig config_from_parts(Strategy s, const std::string& param) {
  auto number = [&] {
    try {
      return std::stod(param);
    } catch (const std::exception&) {
      throw Error(Errc::format, "bad parameter '" + param + "'");
    }
  };
  switch (s) {
    case Strategy::greedy: return DecodingConfig::greedy();
    case Strategy::pure_sampling: return DecodingConfig::pure();
    case Strategy::beam: return DecodingConfig::beam(static_cast<int>(number()));
    case Strategy::confirm_it: return DecodingConfig::confirm_it(static_cast<int>(number()));
    case Strategy::top_k: return DecodingConfig::top_k(static_cast<int>(number()));
    case Strategy::nucleus: return DecodingConfig::nucleus(number());
    case Strategy::typical: return DecodingConfig::typical(number());
  }
  return DecodingConfig::greedy();
}

inline std::vector<SweepRow> parse_metric_rows_csv(std::string_view text) {
  std::vector<SweepRow> rows;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kMetricRowsHeader) throw Error(Errc::format, "metrics rows: unexpected header");
      continue;
    }
    std::vector<std::string> f;
    std::size_t s = 0;
    while (true) {
      auto c = line.find(',', s);
      f.push_back(line.substr(s, c == std::string::npos ? std::string::npos : c - s));
      if (c == std::string::npos) break;
      s = c + 1;
    }
    if (f.size() != 19) throw Error(Errc::format, fmt::format("metrics rows line {}: expected 19 fields", line_no));
    auto strategy = strategy_from_name(f[1]);
    if (!strategy) throw Error(Errc::format, fmt::format("metrics rows line {}: unknown strategy", line_no));
    SweepRow row;
    row.config = config_from_parts(*strategy, f[2]);
    auto num = [&](std::size_t i) {
      try {
        return std::stod(f[i]);
      } catch (const std::exception&) {
        throw Error(Errc::format, fmt::format("metrics rows line {}: bad number '{}'", line_no, f[i]));
      }
    };
    auto& r = row.report;
    r.config = f[0];
    r.n = static_cast<int>(num(3));
    r.turns = static_cast<int>(num(4));
    r.accuracy = {num(5), num(6)};
    r.chair_i = {num(7), num(8)};
    r.chair_s = {num(9), num(10)};
    r.repetition_rate = {num(11), num(12)};
    r.vocabulary_size = {num(13), num(14)};
    r.rare_words = {num(15), num(16)};
    auto split = [&](const std::string& field) {
      std::vector<double> xs;
      std::size_t b = 0;
      while (!field.empty() && b <= field.size()) {
        auto e = field.find(';', b);
        if (e == std::string::npos) e = field.size();
        try {
          xs.push_back(std::stod(field.substr(b, e - b)));
        } catch (const std::exception&) {
          throw Error(Errc::format, fmt::format("metrics rows line {}: bad per-turn value", line_no));
        }
        b = e + 1;
      }
      return xs;
    };
    const auto means = split(f[17]);
    const auto stds = split(f[18]);
    if (means.size() != stds.size())
      throw Error(Errc::format, fmt::format("metrics rows line {}: per-turn mean and std differ in length", line_no));
    for (std::size_t i = 0; i < means.size(); ++i) r.per_turn_accuracy.push_back({means[i], stds[i]});
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {

inline std::string pad(const std::string& s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

inline std::string aligned_table(const std::vector<std::string>& header,
                                 const std::vector<std::vector<std::string>>& body) {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : body)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out += "  ";
      out += pad(cells[c], width[c], c == 0);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& row : body) out += line(row);
  return out;
}

inline std::string csv_line(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out + "\n";
}

inline std::string family_of(const SweepRow& row) {
  switch (row.config.strategy) {
    case Strategy::nucleus: return "nucleus";
    case Strategy::typical: return "typical";
    case Strategy::top_k: return "top_k";
    default: return "";
  }
}

}  // namespace detail

/// Renders `rows` into named files. table2 and sm_table4 rows are sorted by
/// accuracy; curve files are sorted by parameter value.
inline std::map<std::string, std::string> emit_report(std::vector<SweepRow> rows, ReportStyle style) {
  if (rows.empty()) throw Error(Errc::usage, "no rows to report");
  std::map<std::string, std::string> files;
  switch (style) {
    case ReportStyle::table2: {
      sort_by_accuracy(rows);
      const std::vector<std::string> header{"Strategy", "Accuracy (%)", "CHAIR-i", "CHAIR-s",
                                            "% games with repetitions", "Vocabulary Size", "Rare Words"};
      std::vector<std::vector<std::string>> body;
      for (const auto& row : rows) {
        const auto& r = row.report;
        body.push_back({r.config, fmt::format("{:.2f}", r.accuracy.mean), fmt::format("{:.2f}", r.chair_i.mean),
                        fmt::format("{:.2f}", r.chair_s.mean), fmt::format("{:.2f}", r.repetition_rate.mean),
                        fmt::format("{:.0f}", r.vocabulary_size.mean), fmt::format("{:.0f}", r.rare_words.mean)});
      }
      files["table2.txt"] = detail::aligned_table(header, body);
      std::string csv = detail::csv_line({"strategy", "accuracy", "chair_i", "chair_s", "repetition_rate",
                                          "vocabulary_size", "rare_words"});
      for (const auto& b : body) csv += detail::csv_line(b);
      files["table2.csv"] = csv;
      break;
    }
    case ReportStyle::sm_table4: {
      sort_by_accuracy(rows);
      const std::vector<std::string> header{"Strategy",       "Acc mean",     "Acc std",       "CHAIR-i mean",
                                            "CHAIR-i std",    "CHAIR-s mean", "CHAIR-s std",   "Rep mean",
                                            "Rep std",        "Vocab mean",   "Vocab std",     "Rare mean",
                                            "Rare std"};
      std::vector<std::vector<std::string>> body;
      for (const auto& row : rows) {
        const auto& r = row.report;
        body.push_back({r.config, fmt::format("{:.2f}", r.accuracy.mean), fmt::format("{:.2f}", r.accuracy.std),
                        fmt::format("{:.2f}", r.chair_i.mean), fmt::format("{:.2f}", r.chair_i.std),
                        fmt::format("{:.2f}", r.chair_s.mean), fmt::format("{:.2f}", r.chair_s.std),
                        fmt::format("{:.2f}", r.repetition_rate.mean), fmt::format("{:.2f}", r.repetition_rate.std),
                        fmt::format("{:.0f}", r.vocabulary_size.mean), fmt::format("{:.1f}", r.vocabulary_size.std),
                        fmt::format("{:.0f}", r.rare_words.mean), fmt::format("{:.1f}", r.rare_words.std)});
      }
      files["sm_table4.txt"] = detail::aligned_table(header, body);
      std::string csv = detail::csv_line({"strategy", "accuracy_mean", "accuracy_std", "chair_i_mean", "chair_i_std",
                                          "chair_s_mean", "chair_s_std", "repetition_mean", "repetition_std",
                                          "vocabulary_mean", "vocabulary_std", "rare_words_mean", "rare_words_std"});
      for (const auto& b : body) csv += detail::csv_line(b);
      files["sm_table4.csv"] = csv;
      break;
    }
    case ReportStyle::curves: {
      std::map<std::string, std::vector<const SweepRow*>> families;
      for (const auto& row : rows) {
        const auto fam = detail::family_of(row);
        if (!fam.empty()) families[fam].push_back(&row);
      }
      if (families.empty()) throw Error(Errc::usage, "no top-k, nucleus or typical rows for curves");
      for (auto& [fam, members] : families) {
        std::sort(members.begin(), members.end(),
                  [](const SweepRow* a, const SweepRow* b) { return *a->config.parameter() < *b->config.parameter(); });
        std::string csv = "param_value,accuracy_mean,accuracy_std,chair_i_mean,chair_s_mean,repetition_mean\n";
        for (const auto* row : members) {
          const auto& r = row->report;
          csv += fmt::format("{},{},{},{},{},{}\n", *row->config.parameter(), r.accuracy.mean, r.accuracy.std,
                             r.chair_i.mean, r.chair_s.mean, r.repetition_rate.mean);
        }
        files["curve_" + fam + ".csv"] = csv;
      }
      break;
    }
    case ReportStyle::per_turn: {
      const std::size_t turns = rows.front().report.per_turn_accuracy.size();
      if (turns == 0) throw Error(Errc::usage, "rows carry no per-turn accuracy");
      std::string csv = "strategy";
      for (std::size_t t = 1; t <= turns; ++t) csv += fmt::format(",turn_{}", t);
      csv += "\n";
      std::string std_csv = csv;
      for (const auto& row : rows) {
        if (row.report.per_turn_accuracy.size() != turns) throw Error(Errc::usage, "ragged per-turn rows");
        csv += row.report.config;
        std_csv += row.report.config;
        for (const auto& s : row.report.per_turn_accuracy) {
          csv += fmt::format(",{}", s.mean);
          std_csv += fmt::format(",{}", s.std);
        }
        csv += "\n";
        std_csv += "\n";
      }
      files["per_turn_accuracy.csv"] = csv;
      files["per_turn_accuracy_std.csv"] = std_csv;
      break;
    }
  }
  return files;
}

inline std::map<std::string, std::string> emit_report(std::vector<SweepRow> rows, std::string_view style) {
  const auto parsed = report_style_from_name(style);
  if (!parsed)
    throw Error(Errc::usage, "unknown report style '" + std::string(style) +
                                 "' (expected table2, sm_table4, curves or per_turn)");
  return emit_report(std::move(rows), *parsed);
}

inline void write_files(const std::filesystem::path& dir, const std::map<std::string, std::string>& files) {
  for (const auto& [name, content] : files) write_file_atomic(dir / name, content);
}

}  // namespace decodelab
