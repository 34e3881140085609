#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "p2t/errors.hpp"
#include "p2t/experiment.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitBackend = 2;
constexpr int kExitConfig = 3;
constexpr int kExitBudget = 4;

struct Overrides {
  std::optional<std::string> base_url;
  std::optional<std::string> model;
  std::optional<double> temperature;
  std::optional<std::uint64_t> budget;
  std::optional<std::size_t> parallel;
  std::optional<std::string> output;
  std::optional<std::string> cache;

  void apply(p2t::ExperimentSpec& spec) const {
    if (base_url || model || temperature || budget) {
      auto& backend = spec.backend;
      if (!backend) backend.emplace();
      if (base_url) backend->base_url = *base_url;
      if (model) backend->model_name = *model;
      if (temperature) backend->temperature = *temperature;
      if (budget) backend->token_budget = *budget;
    }
    if (parallel) spec.parallel = *parallel;
    if (output) spec.output = fs::path(*output);
    if (cache) spec.cache = fs::path(*cache);
    spec.validate();
  }
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--base-url", o.base_url, "Chat-completions endpoint root");
  cmd->add_option("--model", o.model, "Model name sent to the backend");
  cmd->add_option("--temperature", o.temperature, "Sampling temperature");
  cmd->add_option("--budget", o.budget, "Cap on estimated tokens for uncached calls");
  cmd->add_option("--parallel", o.parallel, "Concurrent queries per seed")->check(CLI::PositiveNumber);
  cmd->add_option("--output", o.output, "Report JSON path");
  cmd->add_option("--cache", o.cache, "Exchange cache (JSON lines)");
}

int cmd_run(const std::string& spec_path, const Overrides& overrides) {
  auto spec = p2t::ExperimentSpec::load(spec_path);
  overrides.apply(spec);
  p2t::RunStats stats;
  const auto report = p2t::run(spec, nullptr, &stats);
  if (spec.output) {
    if (spec.output->has_parent_path()) fs::create_directories(spec.output->parent_path());
    std::ofstream out(*spec.output, std::ios::binary | std::ios::trunc);
    if (!out) throw p2t::ConfigError("cannot write " + spec.output->string());
    out << report.to_json().dump(2) << '\n';
  }
  std::cout << report.to_table();
  std::cerr << "backend calls: " << stats.backend_calls << ", network requests: " << stats.network_calls
            << ", estimated tokens spent: " << stats.tokens_spent << '\n';
  return 0;
}

int cmd_dump(const std::string& spec_path, const std::string& dir) {
  const auto spec = p2t::ExperimentSpec::load(spec_path);
  const auto files = p2t::dump_prompts(spec, dir);
  std::cout << "wrote " << files.size() << " prompt files under " << dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"P2T: tabular transfer learning through LLM prompting"};
  app.require_subcommand(1);

  std::string spec_path, dump_dir, cache_path, model, io_path;
  Overrides overrides;

  auto* run = app.add_subcommand("run", "Run an experiment spec and print the report table");
  run->add_option("spec", spec_path, "Experiment spec (JSON)")->required()->check(CLI::ExistingFile);
  add_overrides(run, overrides);

  auto* dump = app.add_subcommand("dump-prompts", "Write every prompt a spec would send, offline");
  dump->add_option("spec", spec_path, "Experiment spec (JSON)")->required()->check(CLI::ExistingFile);
  dump->add_option("dir", dump_dir, "Output directory")->required();

  auto* cache = app.add_subcommand("cache", "Inspect and maintain an exchange cache");
  cache->require_subcommand(1);
  auto* stats = cache->add_subcommand("stats", "Entry count and token estimate");
  stats->add_option("cache", cache_path, "Cache file")->required();
  auto* prune = cache->add_subcommand("prune", "Drop entries by model");
  prune->add_option("cache", cache_path, "Cache file")->required();
  auto* prune_model = prune->add_option("--model", model, "Remove entries of this model");
  auto* prune_keep = prune->add_option("--keep", model, "Keep only entries of this model");
  prune_model->excludes(prune_keep);
  auto* exp = cache->add_subcommand("export", "Write the cache as a replay file");
  exp->add_option("cache", cache_path, "Cache file")->required();
  exp->add_option("out", io_path, "Replay file to write")->required();
  auto* imp = cache->add_subcommand("import", "Merge a replay file into the cache");
  imp->add_option("cache", cache_path, "Cache file")->required();
  imp->add_option("in", io_path, "Replay file to read")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(spec_path, overrides);
    if (*dump) return cmd_dump(spec_path, dump_dir);
    if (*stats) {
      std::cout << p2t::cache_stats(cache_path).to_text();
    } else if (*prune) {
      if (!*prune_model && !*prune_keep) throw p2t::ConfigError("cache prune needs --model or --keep");
      const auto removed = p2t::cache_prune(cache_path, model, static_cast<bool>(*prune_keep));
      std::cout << "removed " << removed << " entries\n";
    } else if (*exp) {
      std::cout << "exported " << p2t::cache_export(cache_path, io_path) << " entries\n";
    } else if (*imp) {
      std::cout << "imported " << p2t::cache_import(cache_path, io_path) << " new entries\n";
    }
    return 0;
  } catch (const p2t::BackendError& e) {
    std::cerr << "backend error: " << e.what() << '\n';
    return kExitBackend;
  } catch (const p2t::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const p2t::BudgetExceeded& e) {
    std::cerr << "budget exceeded: " << e.what() << '\n';
    return kExitBudget;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
