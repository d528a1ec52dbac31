// resil: generate synthetic outlier datasets, run the robust estimators,
// certify resilience, sweep benchmarks, and run the verification suites.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "resil/io.hpp"
#include "resil/lowrank.hpp"
#include "resil/verify.hpp"

namespace {

using namespace resil;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitPromise = 3;
constexpr int kExitInternal = 4;

int worker_count() {
  if (const char* env = std::getenv("RESIL_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  if (out.empty()) throw InvalidConfig("empty grid");
  return out;
}

struct GenArgs {
  std::string kind = "gauss";
  std::string out = "dataset";
  std::string format = "bin";
  std::uint64_t seed = 1;
  Index n = 100, d = 5;
  double eps = 0.0, sigma_k = 1.0, kmom = 4.0;
  int m = 10, ktuple = 1;
  double alpha = 0.8, a = 30.0, b = 5.0;
  std::string pi;
  std::string adversary = "default";
  double shift_dist = 0.0;
  int mirror_count = 2;
  std::string sbm_adversary = "dense";
};

LabeledDataset run_gen(const GenArgs& g) {
  AdversaryStrategy strat = std::monostate{};
  const bool custom_adv = g.adversary != "default";
  if (g.adversary == "pointmass") {
    PointMass pm;
    pm.location = (g.shift_dist > 0 ? g.shift_dist : 5.0 * std::sqrt(double(g.d))) *
                  Vector::Unit(g.d, 0);
    pm.eps = g.eps;
    strat = pm;
  } else if (g.adversary == "shift") {
    ClusterShift cs;
    cs.delta = (g.shift_dist > 0 ? g.shift_dist : 5.0 * std::sqrt(double(g.d))) *
               Vector::Unit(g.d, 0);
    cs.eps = g.eps;
    strat = cs;
  } else if (g.adversary == "mirror") {
    MirrorCopies mc;
    mc.count = g.mirror_count;
    mc.delta = (g.shift_dist > 0 ? g.shift_dist : 20.0) * Vector::Unit(g.d, 0);
    strat = mc;
  } else if (g.adversary != "default" && g.adversary != "none") {
    throw InvalidConfig("unknown adversary: " + g.adversary);
  }

  if (g.kind == "basis") return gen_basis_counterexample(g.n);
  if (g.kind == "gauss" || g.kind == "pareto") {
    const double k = g.kind == "gauss" ? std::numeric_limits<double>::infinity() : g.kmom;
    if (g.adversary == "none") return gen_bounded_moments(g.n, g.d, 0.0, g.sigma_k, k, g.seed);
    if (!custom_adv) return gen_bounded_moments(g.n, g.d, g.eps, g.sigma_k, k, g.seed);
    const LabeledDataset clean = gen_bounded_moments(g.n, g.d, 0.0, g.sigma_k, k, g.seed);
    return apply_adversary(clean, strat, derive_seed(g.seed, 1));
  }
  if (g.kind == "tuples") {
    Vector pi;
    if (g.pi.empty()) {
      pi = Vector::Constant(g.m, 1.0 / g.m);
    } else {
      const auto vals = parse_grid(g.pi);
      pi = Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size()));
    }
    if (g.adversary == "none" || !custom_adv)
      return gen_dist_tuples(pi, g.ktuple, g.n, g.adversary == "none" ? 0.0 : g.eps,
                             std::monostate{}, g.seed);
    const LabeledDataset clean = gen_dist_tuples(pi, g.ktuple, g.n, 0.0, std::monostate{}, g.seed);
    return apply_adversary(clean, strat, derive_seed(g.seed, 1));
  }
  if (g.kind == "sbm") {
    SbmBlock sb;
    if (g.sbm_adversary == "mirror") sb.kind = SbmBlockKind::MirrorBlock;
    else if (g.sbm_adversary == "hub") sb.kind = SbmBlockKind::Hub;
    else if (g.sbm_adversary == "dense") sb.kind = SbmBlockKind::RandomDense;
    else throw InvalidConfig("unknown sbm adversary: " + g.sbm_adversary);
    return gen_sbm(g.n, g.alpha, g.a, g.b, sb, g.seed);
  }
  throw InvalidConfig("unknown generator kind: " + g.kind);
}

struct BenchRow {
  std::size_t cell = 0;
  double param = 0.0;
  int trial = 0;
  double error = 0.0;
  double naive = 0.0;
  int iterations = 0;
  double runtime_ms = 0.0;
};

void run_cells(std::size_t total, const std::function<void(std::size_t)>& fn) {
  const int workers = std::min<int>(worker_count(), static_cast<int>(total));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < total; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"resilience-based robust estimation toolkit"};
  app.require_subcommand(1);

  // ---- gen ----
  GenArgs g;
  auto* gen = app.add_subcommand("gen", "generate a labeled synthetic dataset");
  gen->add_option("--kind", g.kind, "basis | gauss | pareto | tuples | sbm");
  gen->add_option("--out", g.out, "output base path");
  gen->add_option("--format", g.format, "bin | csv");
  gen->add_option("--seed", g.seed, "RNG seed");
  gen->add_option("--n", g.n);
  gen->add_option("--d", g.d);
  gen->add_option("--eps", g.eps, "outlier fraction")->check(CLI::Range(0.0, 0.999));
  gen->add_option("--sigma-k", g.sigma_k);
  gen->add_option("--k", g.kmom, "moment order (pareto)");
  gen->add_option("--m", g.m, "alphabet size (tuples)");
  gen->add_option("--k-tuple", g.ktuple, "tuple size (tuples)");
  gen->add_option("--pi", g.pi, "comma-separated distribution (tuples)");
  gen->add_option("--alpha", g.alpha);
  gen->add_option("--a", g.a);
  gen->add_option("--b", g.b);
  gen->add_option("--adversary", g.adversary, "default | none | pointmass | shift | mirror");
  gen->add_option("--shift-dist", g.shift_dist);
  gen->add_option("--mirror-count", g.mirror_count);
  gen->add_option("--sbm-adversary", g.sbm_adversary, "mirror | hub | dense");

  // ---- estimate ----
  std::string est_data, est_mode = "fast-l2", est_norm = "l2", est_out;
  double est_alpha = 1.0, est_sigma = 0.0, est_delta = 0.2;
  int est_k = 1;
  bool est_auto_sigma = false;
  std::uint64_t est_seed = 1;
  auto* est = app.add_subcommand("estimate", "robust mean or rank-k estimation on a dataset");
  est->add_option("--data", est_data, "dataset base path")->required();
  est->add_option("--mode", est_mode, "fast-l2 | saddle-l2 | general | rank-k");
  est->add_option("--alpha", est_alpha, "promised good fraction")->check(CLI::Range(1e-6, 1.0));
  est->add_option("--sigma", est_sigma, "promised variance bound");
  est->add_flag("--auto-sigma", est_auto_sigma, "calibrate sigma by doubling");
  est->add_option("--norm", est_norm, "l2 | lp:<p> | l1 | topk:<k>");
  est->add_option("--k", est_k, "target rank (rank-k mode)");
  est->add_option("--delta", est_delta, "outlier fraction bound (rank-k mode)");
  est->add_option("--seed", est_seed);
  est->add_option("--out", est_out, "report path (default: stdout; rank-k requires --out)");

  // ---- certify ----
  std::string cert_data, cert_what = "profile", cert_norm = "l2", cert_out, cert_grid = "0.1,0.2,0.3,0.4,0.5";
  double cert_keep = 0.75;
  std::int64_t cert_budget = 20000;
  std::uint64_t cert_seed = 1;
  auto* cert = app.add_subcommand("certify", "resilience profile or bounded-variance core");
  cert->add_option("--data", cert_data)->required();
  cert->add_option("--what", cert_what, "profile | core");
  cert->add_option("--eps-grid", cert_grid, "comma-separated eps values");
  cert->add_option("--keep", cert_keep, "mass fraction for the core");
  cert->add_option("--norm", cert_norm);
  cert->add_option("--budget", cert_budget, "direction budget for sampled modes");
  cert->add_option("--seed", cert_seed);
  cert->add_option("--out", cert_out, "output path (default: stdout)");

  // ---- bench ----
  std::string bench_sweep = "eps", bench_out = "bench.csv", bench_grid;
  int bench_trials = 5;
  std::uint64_t bench_seed = 1;
  Index bench_n = 500, bench_d = 20;
  int bench_m = 20;
  double bench_eps = 0.05, bench_alpha = 0.5, bench_b_ratio = 0.25;
  bool bench_timing = false;
  auto* bench = app.add_subcommand("bench", "parameter sweeps with per-cell seeds");
  bench->add_option("--sweep", bench_sweep, "eps | k-tuples | sbm-a");
  bench->add_option("--grid", bench_grid, "comma-separated sweep values");
  bench->add_option("--trials", bench_trials)->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_seed);
  bench->add_option("--n", bench_n);
  bench->add_option("--d", bench_d);
  bench->add_option("--m", bench_m);
  bench->add_option("--eps", bench_eps);
  bench->add_option("--alpha", bench_alpha);
  bench->add_option("--b-ratio", bench_b_ratio);
  bench->add_flag("--timing", bench_timing, "include wall-clock runtime column");
  bench->add_option("--out", bench_out);

  // ---- verify ----
  std::string verify_suite = "all";
  bool verify_list = false;
  auto* ver = app.add_subcommand("verify", "run a named verification suite");
  ver->add_option("--suite", verify_suite);
  ver->add_flag("--list", verify_list, "list available suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      const LabeledDataset ds = run_gen(g);
      if (g.format == "csv") {
        io::write_dataset_csv(g.out + ".csv", ds);
      } else {
        io::write_dataset(g.out, ds);
      }
      std::cout << "wrote " << g.out << (g.format == "csv" ? ".csv" : ".bin/.json") << " (n="
                << ds.n() << ", d=" << ds.dim() << ", good=" << ds.good_count() << ")\n";
      return kExitOk;
    }

    if (est->parsed()) {
      const LabeledDataset ds = io::read_dataset(est_data);
      const NormSpec spec = io::parse_norm_flag(est_norm, ds.dim());
      if (est_mode == "rank-k") {
        if (est_out.empty()) throw InvalidConfig("estimate rank-k: --out is required");
        RankKConfig rc;
        rc.k = est_k;
        rc.delta = est_delta;
        rc.sigma = est_auto_sigma ? 0.0 : est_sigma;
        const RankKReport rep = recover_rank_k(ds.points, rc);
        io::write_rank_k_result(est_out, rep, est_k, est_delta);
        std::cout << "wrote " << est_out << ".bin/.json (rank=" << rep.rank
                  << ", residual=" << rep.residual_spectral << ")\n";
        return kExitOk;
      }
      if (!est_auto_sigma && !(est_sigma > 0.0))
        throw InvalidConfig("estimate: provide --sigma > 0 or --auto-sigma");
      RecoverConfig cfg;
      if (est_mode == "fast-l2") cfg.mode = EstimatorMode::FastL2;
      else if (est_mode == "saddle-l2") cfg.mode = EstimatorMode::SaddleL2;
      else if (est_mode == "general") cfg.mode = EstimatorMode::GeneralNorm;
      else throw InvalidConfig("estimate: unknown --mode " + est_mode);
      cfg.auto_sigma = est_auto_sigma;
      cfg.kappa.seed = derive_seed(est_seed, 0xE5);
      cfg.saddle.kappa.seed = derive_seed(est_seed, 0xE6);
      const EstimateReport rep = recover_mean(ds.points, est_alpha, est_sigma, spec, cfg);
      const std::string text = io::estimate_report_to_json(rep).dump(2);
      if (est_out.empty()) {
        std::cout << text << "\n";
      } else {
        std::ofstream f(est_out);
        f << text << "\n";
        std::cout << "wrote " << est_out << "\n";
      }
      return kExitOk;
    }

    if (cert->parsed()) {
      const LabeledDataset ds = io::read_dataset(cert_data);
      const NormSpec spec = io::parse_norm_flag(cert_norm, ds.dim());
      std::ofstream file;
      std::ostream* os = &std::cout;
      if (!cert_out.empty()) {
        file.open(cert_out);
        if (!file) throw Error("cannot open " + cert_out);
        os = &file;
      }
      if (cert_what == "profile") {
        PointSet s(ds.points, ds.true_center);
        SigmaStarOptions so;
        so.budget = cert_budget;
        so.seed = cert_seed;
        const ResilienceProfile prof = resilience_profile(s, parse_grid(cert_grid), spec, so);
        io::write_profile_csv(*os, prof);
      } else if (cert_what == "core") {
        PointSet s(ds.points, ds.true_center);
        CoreSolverConfig ccfg;
        ccfg.seed = cert_seed;
        const CoreResult core = find_core(s, cert_keep, spec, ccfg);
        *os << io::core_result_to_json(core).dump(2) << "\n";
      } else {
        throw InvalidConfig("certify: unknown --what " + cert_what);
      }
      if (!cert_out.empty()) std::cout << "wrote " << cert_out << "\n";
      return kExitOk;
    }

    if (bench->parsed()) {
      std::vector<double> grid;
      if (!bench_grid.empty()) grid = parse_grid(bench_grid);
      else if (bench_sweep == "eps") grid = {0.02, 0.05, 0.1, 0.2};
      else if (bench_sweep == "k-tuples") grid = {1, 4, 16};
      else if (bench_sweep == "sbm-a") grid = {20, 40, 80, 160};
      else throw InvalidConfig("bench: unknown --sweep " + bench_sweep);

      const std::size_t cells = grid.size();
      std::vector<std::vector<BenchRow>> rows(cells);
      run_cells(cells, [&](std::size_t ci) {
        const double param = grid[ci];
        for (int trial = 0; trial < bench_trials; ++trial) {
          const std::uint64_t seed =
              derive_seed(bench_seed, ci * 1000 + static_cast<std::uint64_t>(trial));
          BenchRow row;
          row.cell = ci;
          row.param = param;
          row.trial = trial;
          const auto t0 = std::chrono::steady_clock::now();
          if (bench_sweep == "eps") {
            // saturating shift at 1.6 sigma / sqrt(eps): the regime where the
            // sqrt(eps) error law of the estimator is binding
            LabeledDataset good =
                gen_bounded_moments(bench_n, bench_d, 0.0, 1.0,
                                    std::numeric_limits<double>::infinity(), seed);
            Eigen::SelfAdjointEigenSolver<Matrix> es(
                (good.points * good.points.transpose()) / double(good.n()));
            const double sigma = std::sqrt(es.eigenvalues().maxCoeff());
            ClusterShift cs;
            cs.delta = (1.6 * sigma / std::sqrt(param)) * Vector::Unit(bench_d, 0);
            cs.eps = param;
            const LabeledDataset ds = apply_adversary(good, cs, derive_seed(seed, 2));
            const double alpha = double(ds.good_count()) / double(ds.n());
            RecoverConfig cfg;
            cfg.mode = EstimatorMode::FastL2;
            const EstimateReport rep =
                recover_mean(ds.points, alpha, sigma, NormSpec::euclidean(), cfg);
            row.error = rep.estimate ? (*rep.estimate - ds.true_center).norm() : -1.0;
            row.naive = (ds.points.rowwise().mean() - ds.true_center).norm();
            row.iterations = rep.iterations;
          } else if (bench_sweep == "k-tuples") {
            Vector pi = Vector::Constant(bench_m, 1.0 / bench_m);
            const NormSpec spec = NormSpec::l1_via_p(bench_m);
            const LabeledDataset clean = gen_dist_tuples(pi, static_cast<int>(param), bench_n,
                                                         0.0, std::monostate{}, seed);
            const Matrix centered = clean.points.colwise() - pi;
            Matrix gram = (centered * centered.transpose()) / double(clean.n());
            const double sigma2 = std::max(kappa_oracle(gram, spec).value, 1e-12);
            Vector shift_dir(bench_m);
            for (Index j = 0; j < bench_m; ++j) shift_dir[j] = j % 2 ? 1.0 : -1.0;
            ClusterShift cs;
            cs.delta = std::sqrt(sigma2) *
                       std::sqrt(4.0 * 0.4 * (M_PI / 2.0) / (0.9 * bench_eps)) /
                       std::pow(double(bench_m), 1.0 / spec.p) * shift_dir;
            cs.eps = bench_eps;
            cs.spread = 0.0;
            const LabeledDataset ds = apply_adversary(clean, cs, derive_seed(seed, 2));
            const double alpha = double(ds.good_count()) / double(ds.n());
            RecoverConfig cfg;
            cfg.mode = EstimatorMode::GeneralNorm;
            const EstimateReport rep =
                recover_mean(ds.points, alpha, std::sqrt(sigma2), spec, cfg);
            row.error =
                rep.estimate ? 0.5 * (*rep.estimate - ds.true_center).lpNorm<1>() : -1.0;
            row.naive = 0.5 * (ds.points.rowwise().mean() - ds.true_center).lpNorm<1>();
            row.iterations = rep.iterations;
          } else {  // sbm-a
            const LabeledDataset ds = gen_sbm(bench_n, bench_alpha, param,
                                              param * bench_b_ratio, SbmBlock{}, seed);
            PointSet s(ds.good_points(), ds.true_center);
            SigmaStarOptions so;
            so.budget = 300;
            so.seed = seed;
            const Index ktop = static_cast<Index>(std::lround(bench_alpha * bench_n));
            row.error =
                sigma_star(s, bench_alpha / 2.0, NormSpec::top_k_l1(int(ktop)), so).lower;
            row.naive = 0.0;
          }
          row.runtime_ms =
              std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                  .count();
          rows[ci].push_back(row);
        }
      });

      std::ofstream f(bench_out);
      if (!f) throw Error("cannot open " + bench_out);
      f << io::kCsvMagic << " bench\n";
      f << "sweep,cell,param,trial,error,naive_error,iterations";
      if (bench_timing) f << ",runtime_ms";
      f << "\n";
      f.precision(17);
      for (const auto& cell : rows)
        for (const auto& r : cell) {
          f << bench_sweep << "," << r.cell << "," << r.param << "," << r.trial << "," << r.error
            << "," << r.naive << "," << r.iterations;
          if (bench_timing) f << "," << r.runtime_ms;
          f << "\n";
        }
      std::cout << "wrote " << bench_out << "\n";
      for (std::size_t ci = 0; ci < cells; ++ci) {
        std::vector<double> errs;
        for (const auto& r : rows[ci]) errs.push_back(r.error);
        std::sort(errs.begin(), errs.end());
        std::cout << "  " << bench_sweep << "=" << grid[ci]
                  << " median_error=" << errs[errs.size() / 2] << "\n";
      }
      return kExitOk;
    }

    if (ver->parsed()) {
      if (verify_list) {
        for (const auto& name : verify::suite_names()) std::cout << name << "\n";
        return kExitOk;
      }
      const auto results = verify::run_suite(verify_suite);
      bool all_pass = true;
      for (const auto& r : results) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.details << "\n";
        all_pass = all_pass && r.pass;
      }
      return all_pass ? kExitOk : 1;
    }
  } catch (const PromiseViolated& e) {
    std::cerr << "promise violated: " << e.what() << "\n";
    return kExitPromise;
  } catch (const InvalidConfig& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidInput& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidEps& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TooManyVertices& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TooManySubsets& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}
