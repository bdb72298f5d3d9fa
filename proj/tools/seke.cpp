// seke: annotation pipeline command line.
//
// Exit codes: 0 ok, 1 other failure, 2 config, 3 budget, 4 alignment, 5 schema.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "seke/seke.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBudget = 3;
constexpr int kExitAlignment = 4;
constexpr int kExitSchema = 5;

seke::RunConfig config_or_default(const std::string& path) {
  if (!path.empty()) return seke::load_config(path);
  seke::RunConfig c;
  seke::apply_environment(c);
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-aware facial emotion annotation pipeline"};
  app.require_subcommand(1);

  std::string manifest, config_path, out, backend = "http", conversations;
  int workers = 0;
  bool resume = false;
  auto* gen = app.add_subcommand("generate", "annotate missing labels and write instruction records");
  gen->add_option("--manifest", manifest, "input manifest CSV")->required();
  gen->add_option("--config", config_path, "run configuration TOML")->required();
  gen->add_option("--out", out, "output JSONL")->required();
  gen->add_option("--backend", backend, "http or synthetic")->check(CLI::IsMember({"http", "synthetic"}));
  gen->add_option("--workers", workers, "record-level parallelism")->check(CLI::PositiveNumber);
  gen->add_flag("--resume", resume, "skip records already present in the output");
  gen->add_option("--conversations", conversations, "also write a conversation-style JSONL");

  std::string pred, gold, report_dir, method = "model";
  bool llm_normalize = false;
  auto* eval = app.add_subcommand("evaluate", "score predictions against manual labels");
  eval->add_option("--pred", pred, "predictions JSONL")->required();
  eval->add_option("--gold", gold, "gold JSONL")->required();
  eval->add_option("--report", report_dir, "report directory")->required();
  eval->add_option("--config", config_path, "run configuration TOML");
  eval->add_option("--method", method, "method name for the CSV row");
  eval->add_flag("--llm-normalize", llm_normalize, "ask the annotator to normalize outputs the rules miss");

  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "run the synthetic-annotator grid");
  sim->add_option("--config", config_path, "run configuration TOML")->required();
  sim->add_option("--out", sim_out, "output CSV")->required();

  std::string in;
  auto* insp = app.add_subcommand("inspect", "summary statistics of an instruction JSONL");
  insp->add_option("--in", in, "JSONL file")->required();
  insp->add_option("--config", config_path, "run configuration TOML");

  std::string split_out, gold_out;
  double fraction = 0.1;
  std::uint64_t split_seed = 0;
  auto* split = app.add_subcommand("split", "subject-independent train/benchmark split");
  split->add_option("--manifest", manifest, "input manifest CSV")->required();
  split->add_option("--config", config_path, "run configuration TOML");
  split->add_option("--out", split_out, "split manifest JSON")->required();
  split->add_option("--gold", gold_out, "benchmark JSONL with manual labels of test records");
  split->add_option("--fraction", fraction, "fraction of subjects held out");
  split->add_option("--seed", split_seed, "split seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) {
      auto config = seke::load_config(config_path);
      seke::GenerateOptions opts;
      opts.manifest = manifest;
      opts.out = out;
      opts.backend = *seke::parse_backend(backend);
      if (workers > 0) opts.workers = workers;
      opts.resume = resume;
      if (!conversations.empty()) opts.conversations = conversations;
      opts.progress = &std::cerr;
      try {
        auto s = seke::generate(config, opts);
        std::cout << "written " << s.written << ", skipped " << s.skipped << ", already present "
                  << s.already_present << ", calls " << s.calls << '\n';
      } catch (const seke::BudgetExceeded& e) {
        std::cerr << "budget exhausted: " << e.what() << "; partial output kept, rerun with --resume\n";
        return kExitBudget;
      }
    } else if (*eval) {
      auto config = config_or_default(config_path);
      seke::EvaluateOptions opts{pred, gold, report_dir, llm_normalize, method};
      auto report = seke::evaluate(config, opts);
      seke::EvalOptions eo;
      eo.method = method;
      eo.va_tolerance = config.va_tolerance;
      std::cout << seke::report_to_json(report, eo).dump(2) << '\n';
    } else if (*sim) {
      auto config = seke::load_config(config_path);
      auto cells = seke::run_grid(config.sim);
      std::ofstream csv(sim_out, std::ios::binary | std::ios::trunc);
      if (!csv) throw seke::IoError("cannot write '" + sim_out + "'");
      csv << seke::grid_to_csv(cells);
      std::cout << "wrote " << cells.size() << " cells to " << sim_out << '\n';
    } else if (*insp) {
      auto config = config_or_default(config_path);
      seke::print_inspect(seke::inspect_file(in), config.vocab, std::cout);
    } else if (*split) {
      auto config = config_or_default(config_path);
      seke::SplitOptions opts;
      opts.manifest = manifest;
      opts.split_out = split_out;
      if (!gold_out.empty()) opts.gold_out = gold_out;
      opts.fraction = fraction;
      opts.seed = split_seed;
      auto m = seke::split_manifest(config, opts);
      std::cout << "train " << m.train_ids.size() << ", test " << m.test_ids.size() << '\n';
    }
  } catch (const seke::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const seke::AuthError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const seke::AlignmentError& e) {
    std::cerr << "alignment error: " << e.what() << '\n';
    for (const auto& id : e.unmatched_ids()) std::cerr << "  " << id << '\n';
    return kExitAlignment;
  } catch (const seke::SchemaError& e) {
    std::cerr << "schema error at line " << e.line() << ": " << e.what() << '\n';
    return kExitSchema;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
