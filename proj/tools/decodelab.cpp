// decodelab: dataset generation, runs, sweeps, reports and the annotation
// service.

#include <cctype>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <decodelab/annotation_http.hpp>
#include <decodelab/dataset_io.hpp>
#include <decodelab/grammar_io.hpp>
#include <decodelab/harness.hpp>
#include <decodelab/transcript_io.hpp>

namespace fs = std::filesystem;
using namespace decodelab;

namespace {

struct Common {
  std::string dataset;
  std::string grammar;
  std::string reference;
  double lambda = kDefaultGroundingWeight;
  double penalty = kDefaultHistoryPenalty;
  double epsilon = 0.0;
  std::string out_dir = "out";
  int jobs = 1;
};

struct StrategyFlags {
  std::string strategy;
  std::optional<double> p;
  std::optional<int> k;
  std::optional<double> tau;
  std::optional<int> beam;
};

void add_common(CLI::App* app, Common& c, bool with_dataset = true) {
  if (with_dataset) app->add_option("--dataset", c.dataset, "Dataset file (default: the 2,000-game benchmark)");
  app->add_option("--grammar", c.grammar, "Grammar file (default: built-in grammar)");
  app->add_option("--reference", c.reference, "Reference word-frequency file (default: built on the fly)");
  app->add_option("--lambda", c.lambda, "Grounding weight in [0, 1]")->capture_default_str();
  app->add_option("--penalty", c.penalty, "History penalty per prior ask")->capture_default_str();
  app->add_option("--epsilon", c.epsilon, "Guesser answer-noise rate in [0, 0.5)")->capture_default_str();
  app->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  app->add_option("--jobs", c.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

void add_strategy(CLI::App* app, StrategyFlags& s) {
  app->add_option("--strategy", s.strategy,
                  "greedy | beam | confirm_it | pure_sampling | top_k | nucleus | typical")
      ->required();
  app->add_option("--p", s.p, "Nucleus threshold");
  app->add_option("--k", s.k, "Top-k size");
  app->add_option("--tau", s.tau, "Typical mass");
  app->add_option("--beam", s.beam, "Beam size (default 3)");
}

DecodingConfig to_config(const StrategyFlags& f) {
  const auto s = strategy_from_name(f.strategy);
  if (!s) throw Error(Errc::usage, "unknown strategy '" + f.strategy + "'");
  DecodingConfig c = DecodingConfig::make(*s);
  if (*s == Strategy::beam || *s == Strategy::confirm_it) c.beam_size = f.beam.value_or(3);
  else if (f.beam) c.beam_size = f.beam;
  c.k = f.k;
  c.p = f.p;
  c.tau = f.tau;
  c.validate();
  return c;
}

Dataset load_or_benchmark(const std::string& path) {
  if (!path.empty()) return load_dataset(path);
  return generate_dataset(benchmark_config());
}

GrammarSpec grammar_of(const Common& c) { return c.grammar.empty() ? default_grammar() : load_grammar(c.grammar); }

FrequencyTable reference_of(const Common& c, const GrammarSpec& grammar) {
  if (!c.reference.empty()) return parse_frequency_table(read_file(c.reference));
  return build_reference_frequency(grammar, c.penalty, {}, c.jobs);
}

std::string file_stem(const std::string& label) {
  std::string out;
  for (char ch : label) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_' || ch == '-') out += ch;
    else if (ch == '=') out += '-';
    else if (ch == '(') out += '_';
  }
  return out;
}

RunCallback transcript_writer(const fs::path& dir) {
  return [dir](const DecodingConfig& cfg, const ExperimentResult& r) {
    save_transcripts(r.transcripts, dir / "transcripts" / fmt::format("{}_seed{}.jsonl", file_stem(cfg.label()), cfg.rng_seed));
  };
}

void print_files(const fs::path& dir, const std::map<std::string, std::string>& files) {
  for (const auto& [name, _] : files) std::cout << "wrote " << (dir / name).string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoding-strategy laboratory for a synthetic referential game"};
  app.set_config("--config", "", "Read flags from a config file");
  app.require_subcommand(1);

  // gen-data
  GeneratorConfig gen = benchmark_config();
  std::string gen_out = "data/dataset.json";
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a dataset");
  gen_cmd->add_option("--seed", gen.seed, "Generation seed")->capture_default_str();
  gen_cmd->add_option("--games", gen.n_games, "Number of games")->capture_default_str();
  gen_cmd->add_option("--rows", gen.rows, "Grid rows")->capture_default_str();
  gen_cmd->add_option("--cols", gen.cols, "Grid columns")->capture_default_str();
  gen_cmd->add_option("--pool", gen.category_pool_size, "Categories per scene pool")->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "Output file")->capture_default_str();

  // play
  Common play_c;
  StrategyFlags play_s;
  int play_turns = kDefaultTurns;
  std::vector<std::uint64_t> play_seeds{1};
  auto* play_cmd = app.add_subcommand("play", "Run one strategy over a dataset");
  add_common(play_cmd, play_c);
  add_strategy(play_cmd, play_s);
  play_cmd->add_option("--turns", play_turns, "Questions per dialogue")->capture_default_str();
  play_cmd->add_option("--seeds", play_seeds, "Decoding seeds")->capture_default_str();

  // sweep
  Common sweep_c;
  int sweep_turns = kDefaultTurns;
  std::vector<std::uint64_t> sweep_seeds = default_seeds();
  bool keep_transcripts = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run the full hyper-parameter grid");
  add_common(sweep_cmd, sweep_c);
  sweep_cmd->add_option("--turns", sweep_turns, "Questions per dialogue")->capture_default_str();
  sweep_cmd->add_option("--seeds", sweep_seeds, "Decoding seeds")->capture_default_str();
  sweep_cmd->add_flag("--transcripts", keep_transcripts, "Also write every run's transcripts");

  // per-turn
  Common pt_c;
  int pt_turns = kPerTurnStudyTurns;
  std::vector<std::uint64_t> pt_seeds = default_seeds();
  auto* pt_cmd = app.add_subcommand("per-turn", "Accuracy after each turn for the four study strategies");
  add_common(pt_cmd, pt_c);
  pt_cmd->add_option("--turns", pt_turns, "Questions per dialogue")->capture_default_str();
  pt_cmd->add_option("--seeds", pt_seeds, "Decoding seeds")->capture_default_str();

  // report
  std::string report_in;
  std::string report_style = "table2";
  std::string report_out = "out";
  auto* report_cmd = app.add_subcommand("report", "Render metrics rows as tables or curve files");
  report_cmd->add_option("--metrics", report_in, "Metrics rows file")->required();
  report_cmd->add_option("--style", report_style, "table2 | sm_table4 | curves | per_turn")->capture_default_str();
  report_cmd->add_option("--out-dir", report_out, "Output directory")->capture_default_str();

  // serve-annotation
  std::string ann_dataset;
  std::vector<std::string> ann_transcripts;
  SessionConfig session;
  std::string ann_store = "annotations.jsonl";
  std::string ui_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve-annotation", "Serve blind human-evaluation sessions");
  serve_cmd->add_option("--dataset", ann_dataset, "Dataset the transcripts were played on");
  serve_cmd->add_option("--transcripts", ann_transcripts, "Transcript files, one per strategy")->required();
  serve_cmd->add_option("--annotators", session.n_annotators, "Number of annotators")->capture_default_str();
  serve_cmd->add_option("--quota", session.quota, "Items per strategy per annotator")->capture_default_str();
  serve_cmd->add_option("--session-seed", session.seed, "Presentation-order seed")->capture_default_str();
  serve_cmd->add_option("--store", ann_store, "Append-only record file")->capture_default_str();
  serve_cmd->add_option("--ui-dir", ui_dir, "Static UI bundle directory");
  serve_cmd->add_option("--host", host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--port", port, "Port")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) {
      const auto data = generate_dataset(gen);
      save_dataset(data, gen_out);
      std::cout << fmt::format("wrote {} ({} games, duplicated-category fraction {:.3f})\n", gen_out, data.games.size(),
                               duplicated_category_fraction(data));
    } else if (*play_cmd) {
      const auto config = to_config(play_s);
      const auto data = load_or_benchmark(play_c.dataset);
      const auto grammar = grammar_of(play_c);
      const GrammarLm lm(grammar, play_c.lambda, play_c.penalty);
      const auto freq = reference_of(play_c, grammar);
      const fs::path dir = play_c.out_dir;
      RunSettings run;
      run.turns = play_turns;
      run.epsilon = play_c.epsilon;
      std::vector<MetricReport> reports;
      for (auto seed : play_seeds) {
        const auto cfg = config.with_seed(seed);
        auto r = run_experiment(data, lm, cfg, run, freq, play_c.jobs);
        transcript_writer(dir)(cfg, r);
        reports.push_back(std::move(r.report));
      }
      const std::vector<SweepRow> rows{{config, aggregate_over_seeds(reports)}};
      write_file_atomic(dir / "metrics_rows.csv", metric_rows_csv(rows));
      const auto files = emit_report(rows, ReportStyle::table2);
      write_files(dir, files);
      std::cout << files.at("table2.txt");
    } else if (*sweep_cmd) {
      const auto data = load_or_benchmark(sweep_c.dataset);
      const auto grammar = grammar_of(sweep_c);
      const GrammarLm lm(grammar, sweep_c.lambda, sweep_c.penalty);
      const auto freq = reference_of(sweep_c, grammar);
      auto spec = default_sweep_spec();
      spec.seeds = sweep_seeds;
      spec.turns = sweep_turns;
      spec.epsilon = sweep_c.epsilon;
      const fs::path dir = sweep_c.out_dir;
      const auto result = run_sweep(data, lm, spec, freq, sweep_c.jobs,
                                    keep_transcripts ? transcript_writer(dir) : RunCallback{});
      for (const auto& f : result.failures) std::cerr << "failed: " << f << "\n";
      if (result.rows.empty()) throw Error(Errc::usage, "every configuration failed");
      write_file_atomic(dir / "metrics_rows.csv", metric_rows_csv(result.rows));
      for (auto style : {ReportStyle::table2, ReportStyle::sm_table4, ReportStyle::curves}) {
        const auto files = emit_report(result.rows, style);
        write_files(dir, files);
        print_files(dir, files);
      }
      std::cout << fmt::format("{} runs, {} rows, {} failures\n", result.runs, result.rows.size(),
                               result.failures.size());
      if (!result.failures.empty()) return 2;
    } else if (*pt_cmd) {
      const auto data = load_or_benchmark(pt_c.dataset);
      const auto grammar = grammar_of(pt_c);
      const GrammarLm lm(grammar, pt_c.lambda, pt_c.penalty);
      const auto freq = reference_of(pt_c, grammar);
      const auto rows = per_turn_study(data, lm, default_per_turn_strategies(), freq, pt_turns, pt_seeds, pt_c.jobs,
                                      pt_c.epsilon);
      const fs::path dir = pt_c.out_dir;
      write_file_atomic(dir / "per_turn_rows.csv", metric_rows_csv(rows));
      const auto files = emit_report(rows, ReportStyle::per_turn);
      write_files(dir, files);
      print_files(dir, files);
    } else if (*report_cmd) {
      const auto rows = parse_metric_rows_csv(read_file(report_in));
      const auto files = emit_report(rows, report_style);
      write_files(report_out, files);
      print_files(report_out, files);
    } else if (*serve_cmd) {
      const auto data = load_or_benchmark(ann_dataset);
      std::map<std::string, std::vector<Transcript>> by_condition;
      for (const auto& path : ann_transcripts) {
        auto ts = load_transcripts(path);
        if (ts.empty()) throw Error(Errc::empty_collection, path + " has no transcripts");
        auto& bucket = by_condition[ts.front().config];
        for (auto& t : ts) {
          if (t.config != ts.front().config) throw Error(Errc::validation, path + " mixes strategies");
          bucket.push_back(std::move(t));
        }
      }
      AnnotationService service(std::move(by_condition), data.games, session, fs::path(ann_store));
      httplib::Server server;
      install_routes(server, service, ui_dir);
      std::cout << fmt::format("serving {} annotators on http://{}:{}\n", service.annotators().size(), host, port);
      if (!server.listen(host, port)) throw Error(Errc::io, fmt::format("cannot listen on {}:{}", host, port));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
