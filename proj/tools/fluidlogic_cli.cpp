// fluidlogic command-line front end.
//
//   fluidlogic run <config.json>                 train + evaluate a case study
//   fluidlogic eval <config.json> --formula <dsl> [--world <csv>] [--seed N]
//   fluidlogic check [--seed N]                  property suite (exit 3 on fail)
//   fluidlogic parse <dsl>                       canonical form + AST shape
//
// Exit codes: 0 ok, 1 config error, 2 numeric failure, 3 acceptance failure.

#include <chrono>
#include <cstdio>
#include <exception>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fluidlogic/experiments.hpp"
#include "fluidlogic/selfcheck.hpp"

namespace fl = fluidlogic;

namespace {

std::vector<double> parse_csv_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(cell, &used);
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
        ++used;
      if (used != cell.size()) throw std::invalid_argument(cell);
      out.push_back(v);
    } catch (const std::exception&) {
      throw fl::ConfigError("--world: '" + cell + "' is not a number");
    }
  }
  if (out.empty()) throw fl::ConfigError("--world: empty state vector");
  return out;
}

void print_ast(const fl::FormulaPtr& f, int depth) {
  const std::string pad(2 * static_cast<std::size_t>(depth), ' ');
  using K = fl::Formula::Kind;
  switch (f->kind) {
    case K::Atom:
      std::printf("%sAtom %s\n", pad.c_str(), f->atom.c_str());
      break;
    case K::Not:
      std::printf("%sNot\n", pad.c_str());
      print_ast(f->lhs, depth + 1);
      break;
    case K::And:
    case K::Or:
      std::printf("%s%s\n", pad.c_str(), f->kind == K::And ? "And" : "Or");
      print_ast(f->lhs, depth + 1);
      print_ast(f->rhs, depth + 1);
      break;
    case K::Box:
    case K::Diamond: {
      std::string head = f->kind == K::Box ? "Box" : "Diamond";
      head += " " + f->modality.key();
      if (f->window)
        head += " [" + std::to_string(f->window->a) + "," +
                std::to_string(f->window->b) + "]";
      std::printf("%s%s\n", pad.c_str(), head.c_str());
      print_ast(f->lhs, depth + 1);
      break;
    }
    case K::Seq: {
      std::string head = "Seq [";
      for (std::size_t i = 0; i < f->actions.size(); ++i)
        head += (i ? ";" : "") + f->actions[i];
      head += "]";
      std::printf("%s%s\n", pad.c_str(), head.c_str());
      print_ast(f->lhs, depth + 1);
      break;
    }
  }
}

int cmd_run(const std::string& config_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const fl::ExperimentConfig cfg = fl::load_experiment_config(config_path);
  const fl::ExperimentResult res = fl::run_experiment(cfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::printf("experiment %s seed %llu: %zu record(s) -> %s/metrics.json\n",
              cfg.experiment.c_str(),
              static_cast<unsigned long long>(cfg.seed), res.records.size(),
              cfg.out_dir.c_str());
  for (const auto& rec : res.records)
    for (const auto& [k, v] : rec.values) std::printf("  %s = %.6g\n", k.c_str(), v);
  std::printf("wall_seconds %.2f\n", secs);
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& dsl,
             const std::string& world_csv, std::uint64_t seed) {
  fl::ExperimentConfig cfg = fl::load_experiment_config(config_path);
  const fl::ExperimentSetup setup = fl::make_eval_setup(cfg);
  fl::WorldState w = setup.world;
  if (!world_csv.empty()) {
    w.state = parse_csv_doubles(world_csv);
    const int dim = setup.lib.specs.begin()->second.dim;
    if (static_cast<int>(w.state.size()) != dim)
      throw fl::ConfigError("--world: expected " + std::to_string(dim) +
                            " values, got " + std::to_string(w.state.size()));
  }
  const fl::FormulaPtr f = fl::parse(dsl);
  const fl::TruthInterval r = fl::eval(f, w, setup.lib, setup.atoms,
                                       cfg.op_config(true), seed);
  fl::Json out;
  out["formula"] = fl::print(f);
  out["lower"] = r.lower;
  out["upper"] = r.upper;
  out["normalized_lower"] = fl::normalize(r.lower);
  out["normalized_upper"] = fl::normalize(r.upper);
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

int cmd_check(std::uint64_t seed) {
  const auto checks = fl::run_all_checks(seed);
  bool all = true;
  for (const auto& c : checks) {
    std::printf("[%s] %-14s %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                c.detail.c_str());
    all = all && c.pass;
  }
  return all ? 0 : 3;
}

int cmd_parse(const std::string& dsl) {
  const fl::FormulaPtr f = fl::parse(dsl);
  std::printf("%s\n", fl::print(f).c_str());
  print_ast(f, 0);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous modal logic over neural SDEs"};
  app.require_subcommand(1);

  std::string config_path, dsl, world_csv;
  std::uint64_t seed = 1;

  auto* run = app.add_subcommand("run", "train + evaluate a case study");
  run->add_option("config", config_path, "experiment config JSON")->required();

  auto* ev = app.add_subcommand("eval", "evaluate one formula in one world");
  ev->add_option("config", config_path, "experiment config JSON")->required();
  ev->add_option("--formula", dsl, "formula in the modal DSL")->required();
  ev->add_option("--world", world_csv, "state vector as comma-separated numbers");
  ev->add_option("--seed", seed, "evaluation seed");

  auto* chk = app.add_subcommand("check", "run the property suite");
  chk->add_option("--seed", seed, "suite seed");

  auto* par = app.add_subcommand("parse", "parse + pretty-print a formula");
  par->add_option("dsl", dsl, "formula in the modal DSL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) return cmd_run(config_path);
    if (ev->parsed()) return cmd_eval(config_path, dsl, world_csv, seed);
    if (chk->parsed()) return cmd_check(seed);
    if (par->parsed()) return cmd_parse(dsl);
  } catch (const fl::SyntaxError& e) {
    std::fprintf(stderr, "syntax error: %s\n", e.what());
    return 1;
  } catch (const fl::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const fl::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
