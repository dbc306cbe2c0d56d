// Acceptance gate: one line per criterion, exit 3 if any fails.
// argv[1] = path to the fluidlogic CLI binary (used by the determinism check).

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fluidlogic/experiments.hpp"
#include "fluidlogic/selfcheck.hpp"

using namespace fluidlogic;

namespace {

int g_failures = 0;

void report(int idx, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] %2d %-16s %s\n", pass ? "PASS" : "FAIL", idx, name,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

double val(const MetricsRecord& r, const std::string& key) {
  return r.values.at(key);
}

constexpr std::uint64_t kSeed = 0xACCEull;
const std::string kWorkDir = "/tmp/fluidlogic_acceptance";

// ---------------------------------------------------------------------------
// criteria 1-5: operator-level properties at criterion-grade sample counts
// ---------------------------------------------------------------------------

void criterion_gap_bound() {
  Timer t;
  const auto st = selfcheck::gap_bound_check(1000, kSeed);
  const double secs = t.seconds();
  report(1, "gap-bound",
         st.violations == 0 && secs < 60.0,
         fmt("violations=%d/%d worst_excess=%.3g (%.1fs)", st.violations,
             st.instances, st.worst_excess, secs));
}

void criterion_collapse() {
  const auto st = selfcheck::collapse_check(kSeed);
  report(2, "non-collapse",
         st.stochastic_gap >= 0.2 && st.frozen_gap <= 1e-9,
         fmt("stochastic_gap=%.4f (>=0.2) frozen_gap=%.3g (<=1e-9)",
             st.stochastic_gap, st.frozen_gap));
}

void criterion_tau_limit() {
  const auto st = selfcheck::tau_limit_stats(kSeed);
  const bool pass = st.hard_gap_small_tau < 0.01 * st.bound &&
                    st.gap_small < 0.25 * st.gap_large && st.monotone;
  report(3, "tau-to-zero", pass,
         fmt("|L(0.01)-min|=%.4g gap(0.03)=%.4g gap(1)=%.4g monotone=%d",
             st.hard_gap_small_tau, st.gap_small, st.gap_large,
             st.monotone ? 1 : 0));
}

void criterion_concentration() {
  Timer t;
  const auto rep = selfcheck::concentration_stats(400, kSeed);
  const double secs = t.seconds();
  const double se3 = 3.0 * std::sqrt(0.05 * 0.95 / rep.trials);
  const bool pass = !rep.violated &&
                    rep.empirical_failure_rate <= 0.05 + se3 &&
                    rep.theoretical_bound <= 0.05 + 1e-12 && secs < 300.0;
  report(4, "concentration", pass,
         fmt("n_mc=%d empirical=%.4f bound=%.4f population_L=%.4f (%.1fs)",
             rep.n_mc, rep.empirical_failure_rate, rep.theoretical_bound,
             rep.population_lower, secs));
}

void criterion_gradients() {
  const auto st = selfcheck::gradient_check(kSeed);
  report(5, "gradients", st.max_rel_err < 1e-3,
         fmt("max_rel_err=%.3g over %zu params", st.max_rel_err, st.n_params));
}

// ---------------------------------------------------------------------------
// criteria 6-8: case studies at desk scale
// ---------------------------------------------------------------------------

const MetricsRecord* find_variant(const std::vector<MetricsRecord>& recs,
                                  double stochastic, double linn) {
  for (const auto& r : recs)
    if (val(r, "variant_stochastic") == stochastic &&
        val(r, "variant_linn") == linn)
      return &r;
  return nullptr;
}

void criterion_lorenz() {
  Timer t;
  ExperimentConfig cfg;
  cfg.experiment = "lorenz";
  cfg.seed = 1;
  cfg.out_dir = kWorkDir + "/lorenz";
  cfg.variants = "default";  // neural ODE + SDE/LINN
  cfg.steps_phase1 = 400;
  cfg.steps_phase2 = 200;
  cfg.n_mc_train = 24;
  cfg.n_mc_eval = 256;
  const auto res = run_experiment(cfg);
  const double secs = t.seconds();

  const MetricsRecord* sde_linn = find_variant(res.records, 1.0, 1.0);
  const MetricsRecord* node = find_variant(res.records, 0.0, 0.0);
  if (!sde_linn || !node) {
    report(6, "lorenz", false, "variant records missing");
    return;
  }
  const double escape = val(*sde_linn, "escape_rate");
  const double ll = val(*sde_linn, "lobe_left_frac");
  const double lr = val(*sde_linn, "lobe_right_frac");
  const double dq = val(*sde_linn, "delta_q");
  const double dq_node = val(*node, "delta_q");
  const bool pass = escape == 0.0 && ll > 0.05 && lr > 0.05 && dq > 0.0 &&
                    dq_node == 0.0 && secs < 1200.0;
  report(6, "lorenz", pass,
         fmt("escape=%.3f lobes=%.3f/%.3f dq=%.4f dq_node=%.4g (%.0fs)",
             escape, ll, lr, dq, dq_node, secs));
}

void criterion_deontic() {
  Timer t;
  ExperimentConfig cfg;
  cfg.experiment = "deontic";
  cfg.seed = 1;
  cfg.out_dir = kWorkDir + "/deontic";
  cfg.steps_phase2 = 250;
  cfg.lr = 3e-3;
  cfg.n_mc_train = 32;
  cfg.n_mc_eval = 256;
  const auto res = run_experiment(cfg);
  const double secs = t.seconds();
  const MetricsRecord& r = res.records.at(0);

  const double ld = val(r, "l_box_safe_deontic");
  const double lt = val(r, "l_box_safe_temporal");
  const double lb = val(r, "l_box_safe_baseline");
  const double exit_d = val(r, "exit_frac_deontic");
  const double exit_t = val(r, "exit_frac_temporal");
  const double inward = val(r, "inward_frac");
  const bool pass = ld >= 2.0 * lt && exit_d < 0.05 && exit_t > 0.30 &&
                    ld > lb && inward >= 0.9 && secs < 900.0;
  report(7, "deontic", pass,
         fmt("L_box d/t/b=%.3f/%.3f/%.3f exit d/t=%.3f/%.3f inward=%.2f (%.0fs)",
             ld, lt, lb, exit_d, exit_t, inward, secs));
}

void criterion_swarm() {
  Timer t;
  ExperimentConfig cfg;
  cfg.experiment = "swarm";
  cfg.seed = 1;
  cfg.out_dir = kWorkDir + "/swarm";
  cfg.steps_phase1 = 300;
  cfg.n_mc_eval = 256;
  const auto res = run_experiment(cfg);
  const MetricsRecord& r = res.records.at(0);

  const double flag = val(r, "hallucination_flag");
  const double wgap = val(r, "wasserstein_gap");
  const double spread = val(r, "wgap_tail_spread");

  // truthful-belief counterpart: trained nets, zero offset, 20 eval seeds
  ExperimentConfig cfg0 = cfg;
  cfg0.belief_offset = 0.0;
  cfg0.checkpoint = cfg.out_dir + "/swarm.ckpt";
  const ExperimentSetup s0 = make_eval_setup(cfg0);
  int false_flags = 0;
  for (int i = 0; i < 20; ++i) {
    const auto mon =
        swarm_monitors(s0, cfg0.op_config(true), mix(kSeed, 0x0FFull, i));
    if (mon.at("hallucination_flag") == 0.0) ++false_flags;
  }
  const double secs = t.seconds();
  const bool pass = flag == 1.0 && wgap > 0.1 && spread <= 0.2 &&
                    false_flags == 20 && secs < 900.0;
  report(8, "swarm", pass,
         fmt("flag=%.0f wgap=%.3f tail_spread=%.3f clean_seeds=%d/20 (%.0fs)",
             flag, wgap, spread, false_flags, secs));
}

// ---------------------------------------------------------------------------
// criterion 9: parser round-trips + malformed fixtures
// ---------------------------------------------------------------------------

FormulaPtr gen_formula(const CounterRng& rng, std::uint32_t id,
                       std::uint32_t& ctr, int depth) {
  auto u = [&] { return rng.uniform(id, ctr++, 3); };
  static const char* names[] = {"safe", "goal", "p", "q_1", "level"};
  static const char* agents[] = {"rover3", "swarm", "a1"};
  static const char* acts[] = {"up", "down", "probe"};
  const double pick = u();
  if (depth >= 4 || pick < 0.30)
    return atom(names[static_cast<int>(u() * 4.999)]);
  if (pick < 0.40) return lnot(gen_formula(rng, id, ctr, depth + 1));
  if (pick < 0.52)
    return land(gen_formula(rng, id, ctr, depth + 1),
                gen_formula(rng, id, ctr, depth + 1));
  if (pick < 0.64)
    return lor(gen_formula(rng, id, ctr, depth + 1),
               gen_formula(rng, id, ctr, depth + 1));
  if (pick < 0.72) {
    std::vector<std::string> a;
    const int n = 1 + static_cast<int>(u() * 2.999);
    for (int i = 0; i < n; ++i)
      a.push_back(acts[static_cast<int>(u() * 2.999)]);
    return seq(std::move(a), gen_formula(rng, id, ctr, depth + 1));
  }
  const double mpick = u();
  Modality m = mpick < 0.4    ? temporal_mod()
               : mpick < 0.6  ? deontic_mod()
               : mpick < 0.8  ? epistemic_mod(agents[static_cast<int>(u() * 2.999)])
                              : doxastic_mod(agents[static_cast<int>(u() * 2.999)]);
  std::optional<Window> w;
  bool use_diamond = false;
  if (m.family == ModalFamily::Temporal) {
    use_diamond = u() < 0.5;  // printable only on the temporal modality
    if (u() < 0.5) {
      const double t0 = static_cast<int>(u() * 16.0) / 16.0;
      const double dt = (1 + static_cast<int>(u() * 15.0)) / 16.0;
      w = Window{t0, t0 + dt};
    }
  }
  FormulaPtr body = gen_formula(rng, id, ctr, depth + 1);
  return use_diamond ? diamond(m, w, std::move(body))
                     : box(m, w, std::move(body));
}

void criterion_parser() {
  const CounterRng rng{mix(kSeed, 0x9E4ull), 5};
  int rt_fail = 0;
  for (std::uint32_t i = 0; i < 500; ++i) {
    std::uint32_t ctr = 0;
    const FormulaPtr f = gen_formula(rng, i, ctr, 0);
    const std::string s = print(f);
    const FormulaPtr f2 = parse(s);
    if (!equal(f, f2) || print(f2) != s) ++rt_fail;
  }

  const char* malformed[] = {
      "",        "   ",          "G(",          "G[0,1](safe", "safe &",
      "| safe",  "G[1,0](safe)", "G[0,1e999](safe)", "K(safe)", "M_a)",
      "[a;](p)", "G[0 1](p)",    "p & & q",     "((p)",        "G[0,1]p",
      "G()",     "42",           "p q",         "foo(p)",      "!",
  };
  int fx_fail = 0;
  for (const char* src : malformed) {
    try {
      parse(src);
      ++fx_fail;  // accepted malformed input
    } catch (const SyntaxError& e) {
      if (e.byte_offset > std::string(src).size()) ++fx_fail;
    } catch (...) {
      ++fx_fail;  // anything but a positioned syntax error counts as a crash
    }
  }
  report(9, "parser", rt_fail == 0 && fx_fail == 0,
         fmt("roundtrip_failures=%d/500 fixture_failures=%d/%zu", rt_fail,
             fx_fail, std::size(malformed)));
}

// ---------------------------------------------------------------------------
// criterion 10: byte-identical metrics across reruns and thread counts
// ---------------------------------------------------------------------------

void criterion_determinism(const std::string& cli) {
  if (cli.empty()) {
    report(10, "determinism", false, "no CLI path given (argv[1])");
    return;
  }
  auto write_cfg = [&](const std::string& path, const std::string& out_dir,
                       int threads) {
    std::ofstream os(path);
    os << "{\"experiment\":\"deontic\",\"seed\":9,\"threads\":" << threads
       << ",\"steps_phase2\":40,\"n_mc_train\":16,\"n_mc_eval\":64,"
       << "\"out_dir\":\"" << out_dir << "\"}\n";
  };
  const std::string base = kWorkDir + "/det";
  std::filesystem::create_directories(kWorkDir);
  write_cfg(base + "1.json", base + "1", 1);
  write_cfg(base + "2.json", base + "2", 1);
  write_cfg(base + "4.json", base + "4", 4);

  bool ran = true;
  for (const char* n : {"1", "2", "4"}) {
    const std::string cmd =
        "\"" + cli + "\" run " + base + n + ".json > /dev/null";
    if (std::system(cmd.c_str()) != 0) ran = false;
  }
  const std::string m1 = slurp(base + "1/metrics.json");
  const std::string m2 = slurp(base + "2/metrics.json");
  const std::string m4 = slurp(base + "4/metrics.json");
  const bool pass = ran && !m1.empty() && m1 == m2 && m1 == m4;
  report(10, "determinism", pass,
         fmt("runs_ok=%d bytes=%zu rerun_equal=%d threads4_equal=%d",
             ran ? 1 : 0, m1.size(), m1 == m2 ? 1 : 0, m1 == m4 ? 1 : 0));
}

template <class F>
void guarded(int idx, const char* name, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(idx, name, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  std::filesystem::create_directories(kWorkDir);

  guarded(1, "gap-bound", [] { criterion_gap_bound(); });
  guarded(2, "non-collapse", [] { criterion_collapse(); });
  guarded(3, "tau-to-zero", [] { criterion_tau_limit(); });
  guarded(4, "concentration", [] { criterion_concentration(); });
  guarded(5, "gradients", [] { criterion_gradients(); });
  guarded(6, "lorenz", [] { criterion_lorenz(); });
  guarded(7, "deontic", [] { criterion_deontic(); });
  guarded(8, "swarm", [] { criterion_swarm(); });
  guarded(9, "parser", [] { criterion_parser(); });
  guarded(10, "determinism", [&] { criterion_determinism(cli); });

  std::printf("%d/10 criteria passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 3;
}
