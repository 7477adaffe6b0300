#include "qfiga/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "qfiga/assembly.hpp"
#include "qfiga/model_io.hpp"
#include "qfiga/models.hpp"

namespace qfiga {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ScalarField field_from(const std::string& expr) {
  const Expression e = Expression::parse(expr);
  return [e](const Eigen::Vector3d& x) { return e(x[0], x[1], x[2]); };
}

struct LoadedProblem {
  HeatProblem problem;
  CacheKey key;
  ProblemSpec spec;
};

LoadedProblem load_problem(const ProblemSpec& spec,
                           std::shared_ptr<const MultiBlockVolume> domain_override = {}) {
  LoadedProblem out;
  out.spec = spec;
  std::shared_ptr<const MultiBlockVolume> domain = domain_override;
  if (!domain) {
    domain = std::make_shared<MultiBlockVolume>(read_model(spec.model_path));
  }
  if (spec.refine_h > 0) {
    domain = std::make_shared<MultiBlockVolume>(domain->refined(spec.refine_h));
  }
  out.problem.domain = domain;
  out.problem.source = field_from(spec.source);
  out.problem.dirichlet = field_from(spec.dirichlet_value);
  out.problem.dirichlet_faces =
      spec.all_exterior_faces ? domain->exterior_faces() : spec.dirichlet_faces;
  Deg3 approx = initial_approx_degrees(domain->degrees());
  for (int d = 0; d < 3; ++d) approx[d] += spec.approx_degree_bump;
  out.key = CacheKey::from(*domain, approx, out.problem.dirichlet_faces);
  return out;
}

void export_csv(const SolutionField& sol, const std::filesystem::path& path,
                int samples_per_element = 3) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "x,y,z,T\n";
  char line[160];
  const MultiBlockVolume& domain = sol.domain();
  for (int b = 0; b < domain.num_blocks(); ++b) {
    const BSplineVolume& vol = domain.block(b);
    for (const auto& sw : vol.kv(2).spans())
      for (const auto& sv : vol.kv(1).spans())
        for (const auto& su : vol.kv(0).spans())
          for (int kk = 0; kk < samples_per_element; ++kk)
            for (int jj = 0; jj < samples_per_element; ++jj)
              for (int ii = 0; ii < samples_per_element; ++ii) {
                const double u = su.lo + (su.hi - su.lo) * ii / (samples_per_element - 1.0);
                const double v = sv.lo + (sv.hi - sv.lo) * jj / (samples_per_element - 1.0);
                const double w = sw.lo + (sw.hi - sw.lo) * kk / (samples_per_element - 1.0);
                const Eigen::Vector3d x = vol.evaluate(u, v, w);
                const double t = sol.evaluate(b, u, v, w);
                std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", x[0],
                              x[1], x[2], t);
                out << line;
              }
  }
}

void export_vtk(const SolutionField& sol, const std::filesystem::path& prefix,
                int samples_per_direction = 9) {
  const MultiBlockVolume& domain = sol.domain();
  for (int b = 0; b < domain.num_blocks(); ++b) {
    const BSplineVolume& vol = domain.block(b);
    const int n = samples_per_direction;
    std::ofstream out(prefix.string() + "_block" + std::to_string(b) + ".vtk");
    if (!out) throw std::runtime_error("cannot write VTK for block " + std::to_string(b));
    out << "# vtk DataFile Version 3.0\ntemperature field\nASCII\n";
    out << "DATASET STRUCTURED_GRID\n";
    out << "DIMENSIONS " << n << " " << n << " " << n << "\n";
    out << "POINTS " << n * n * n << " double\n";
    std::vector<double> temps;
    temps.reserve(static_cast<std::size_t>(n) * n * n);
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          const double u = i / (n - 1.0), v = j / (n - 1.0), w = k / (n - 1.0);
          const Eigen::Vector3d x = vol.evaluate(u, v, w);
          out << x[0] << " " << x[1] << " " << x[2] << "\n";
          temps.push_back(sol.evaluate(b, u, v, w));
        }
    out << "POINT_DATA " << n * n * n << "\nSCALARS T double 1\nLOOKUP_TABLE default\n";
    for (double t : temps) out << t << "\n";
  }
}

int run_solve(const std::string& problem_path, const std::string& out_prefix,
              int threads, bool use_gauss, const std::string& cache_dir) {
  const ProblemSpec spec = read_problem(problem_path);
  const LoadedProblem lp = load_problem(spec);
  ReuseCache cache(cache_dir);
  const auto entry = cache.get_or_build(lp.key, *lp.problem.domain);
  AssembleOptions opts;
  opts.threads = threads;
  const auto t0 = Clock::now();
  const GlobalSystem system = use_gauss ? assemble_reference_gauss(lp.problem)
                                        : assemble(lp.problem, *entry, opts);
  const double t_assemble = seconds_since(t0);
  const ReducedSystem reduced = impose_dirichlet(system, lp.problem, *entry);
  const SolutionField sol = solve(reduced, system, lp.problem);
  std::cout << "dofs " << lp.problem.domain->num_dofs() << ", assembly "
            << t_assemble << " s, checksum " << std::hex
            << stiffness_checksum(system.stiffness) << std::dec << "\n";
  if (!spec.exact.empty()) {
    const double err = l2_relative_error(sol, field_from(spec.exact));
    std::cout << "relative L2 error " << err << "\n";
  }
  export_csv(sol, out_prefix + ".csv");
  export_vtk(sol, out_prefix);
  std::cout << "wrote " << out_prefix << ".csv and per-block VTK files\n";
  return 0;
}

int run_reuse(const std::string& problem_path, const std::vector<std::string>& models,
              int threads, const std::string& cache_dir, int repetitions) {
  const ProblemSpec spec = read_problem(problem_path);
  ReuseCache cache(cache_dir);
  AssembleOptions opts;
  opts.threads = threads;
  nlohmann::json report;
  report["threads"] = threads;
  report["repetitions"] = repetitions;
  report["models"] = nlohmann::json::array();
  double cold_time = 0.0;
  std::vector<std::string> list = models;
  if (list.empty()) list.push_back(spec.model_path.string());
  for (std::size_t m = 0; m < list.size(); ++m) {
    ProblemSpec s = spec;
    s.model_path = list[m];
    const LoadedProblem lp = load_problem(s);
    double best = 1e300;
    std::uint64_t checksum = 0;
    for (int rep = 0; rep < std::max(1, repetitions); ++rep) {
      const auto t0 = Clock::now();
      const auto entry = cache.get_or_build(lp.key, *lp.problem.domain);
      const GlobalSystem system = assemble(lp.problem, *entry, opts);
      best = std::min(best, seconds_since(t0));
      checksum = stiffness_checksum(system.stiffness);
    }
    if (m == 0) cold_time = best;
    nlohmann::json jm;
    jm["model"] = list[m];
    jm["dofs"] = lp.problem.domain->num_dofs();
    jm["assembly_seconds"] = best;
    jm["cold"] = (m == 0);
    jm["acceleration_ratio"] = cold_time / best;
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(checksum));
    jm["stiffness_checksum"] = buf;
    report["models"].push_back(jm);
    std::cout << (m == 0 ? "cold " : "warm ") << list[m] << ": " << best
              << " s, dofs " << lp.problem.domain->num_dofs() << ", ratio "
              << cold_time / best << "\n";
  }
  // cache storage accounting mirrors the stats subcommand
  {
    const ProblemSpec s0 = spec;
    const LoadedProblem lp = load_problem(s0);
    const auto entry = cache.get_or_build(lp.key, *lp.problem.domain);
    report["cache_total_nnz"] = entry->total_nnz();
    report["cache_total_bytes"] = entry->total_bytes();
  }
  std::cout << report.dump(1) << "\n";
  return 0;
}

int run_bench(const std::string& problem_path, const std::vector<int>& levels,
              int threads, const std::string& cache_dir, int repetitions) {
  const ProblemSpec base = read_problem(problem_path);
  const auto base_domain = std::make_shared<MultiBlockVolume>(read_model(base.model_path));
  AssembleOptions opts;
  opts.threads = threads;
  std::cout << "level dofs elements cold_s warm_s ratio gauss_s\n";
  for (int level : levels) {
    ReuseCache cache(cache_dir);
    ProblemSpec s = base;
    s.refine_h = level;
    const LoadedProblem lp = load_problem(s, base_domain);
    const MultiBlockVolume second_model = perturb_model(*lp.problem.domain, 0.02, 17);
    HeatProblem warm_problem = lp.problem;
    warm_problem.domain = std::make_shared<MultiBlockVolume>(second_model);

    double cold = 1e300, warm = 1e300, gauss = 1e300;
    for (int rep = 0; rep < std::max(1, repetitions); ++rep) {
      ReuseCache fresh(cache.directory() / ("bench_rep" + std::to_string(level) + "_" + std::to_string(rep)));
      auto t0 = Clock::now();
      const auto entry = fresh.get_or_build(lp.key, *lp.problem.domain);
      const GlobalSystem sys_cold = assemble(lp.problem, *entry, opts);
      cold = std::min(cold, seconds_since(t0));
      t0 = Clock::now();
      const auto entry2 = fresh.get_or_build(lp.key, *warm_problem.domain);
      const GlobalSystem sys_warm = assemble(warm_problem, *entry2, opts);
      warm = std::min(warm, seconds_since(t0));
      t0 = Clock::now();
      const GlobalSystem sys_gauss = assemble_reference_gauss(warm_problem);
      gauss = std::min(gauss, seconds_since(t0));
    }
    Eigen::Index elements = 0;
    for (int b = 0; b < lp.problem.domain->num_blocks(); ++b)
      elements += lp.problem.domain->block(b).num_elements();
    std::printf("%5d %8d %8lld %8.3f %8.3f %6.2f %8.3f\n", level,
                lp.problem.domain->num_dofs(), static_cast<long long>(elements), cold,
                warm, cold / warm, gauss);
  }
  return 0;
}

int run_verify(bool quick, int threads, const std::string& cache_dir) {
  int failures = 0;
  AssembleOptions opts;
  opts.threads = threads;
  auto check = [&](bool ok, const std::string& what) {
    std::cout << (ok ? "[ok]   " : "[FAIL] ") << what << "\n";
    if (!ok) ++failures;
  };

  {
    // Manufactured solution on the unit cube.
    const std::string source = "-3*pi^2*sin(pi*x)*sin(pi*y)*sin(pi*z)";
    const std::string exact = "sin(pi*x)*sin(pi*y)*sin(pi*z)";
    ReuseCache cache(cache_dir);
    std::vector<double> errors;
    const int max_level = quick ? 1 : 2;
    for (int level = 0; level <= max_level; ++level) {
      auto domain = std::make_shared<MultiBlockVolume>(
          make_unit_cube({3, 3, 3}, 1 << level));
      HeatProblem problem{domain, field_from(source), field_from(exact),
                          domain->exterior_faces()};
      const CacheKey key =
          CacheKey::from(*domain, initial_approx_degrees(domain->degrees()),
                         problem.dirichlet_faces);
      const auto entry = cache.get_or_build(key, *domain);
      const SolutionField sol = solve_heat(problem, *entry, opts);
      const double err = l2_relative_error(sol, field_from(exact));
      errors.push_back(err);
      std::cout << "unit cube level " << level << ": relative L2 error " << err << "\n";
    }
    for (std::size_t i = 1; i < errors.size(); ++i) {
      check(errors[i] < errors[i - 1] / 2.0,
            "unit cube convergence step " + std::to_string(i));
    }
  }
  if (!quick) {
    // Hollow-sphere shell octant with its manufactured solution.
    const std::string exact =
        "sin(x)*sin(y)*sin(z)*(x^2+y^2+z^2-121)*(x^2+y^2+z^2-81)";
    const std::string source =
        "-3*sin(x)*sin(y)*sin(z)*((x^2+y^2+z^2-121)*(x^2+y^2+z^2-81))"
        "+4*(2*(x^2+y^2+z^2)-202)*(x*cos(x)*sin(y)*sin(z)+y*sin(x)*cos(y)*sin(z)"
        "+z*sin(x)*sin(y)*cos(z))+sin(x)*sin(y)*sin(z)*(20*(x^2+y^2+z^2)-606)";
    ReuseCache cache(cache_dir);
    auto domain = std::make_shared<MultiBlockVolume>(make_hollow_sphere_octant(2));
    HeatProblem problem{domain, field_from(source), field_from(exact),
                        domain->exterior_faces()};
    const CacheKey key = CacheKey::from(
        *domain, initial_approx_degrees(domain->degrees()), problem.dirichlet_faces);
    const auto entry = cache.get_or_build(key, *domain);
    const SolutionField qf = solve_heat(problem, *entry, opts);
    const double err_qf = l2_relative_error(qf, field_from(exact));
    const GlobalSystem gsys = assemble_reference_gauss(problem);
    const ReducedSystem gred = impose_dirichlet(gsys, problem, *entry);
    const SolutionField gauss = solve(gred, gsys, problem);
    const double err_gauss = l2_relative_error(gauss, field_from(exact));
    std::cout << "hollow sphere: quadrature-free " << err_qf << ", reference "
              << err_gauss << "\n";
    check(err_qf < 2.0 * err_gauss, "hollow-sphere error within 2x of reference");
  }
  return failures == 0 ? 0 : 3;
}

int run_fit(const std::string& samples_path, const std::string& out_path,
            double lambda_override, double mu) {
  SampleFile file = read_samples(samples_path);
  if (!file.elastic_sources.empty()) {
    Eigen::AlignedBox3d bbox;
    for (const auto& p : file.elastic_targets) bbox.extend(p);
    double lambda = lambda_override > 0.0 ? lambda_override : file.lambda;
    if (lambda <= 0.0) lambda = 0.25 * bbox.diagonal().norm();
    const ElasticMap map = fit_elastic_map(file.elastic_sources, file.elastic_targets, lambda);
    for (BlockSamples& bs : file.blocks) {
      std::vector<Eigen::Vector3d> pts;
      for (const FitSample& s : bs.samples)
        if (!s.boundary) pts.push_back(s.xyz);
      const std::vector<Eigen::Vector3d> mapped = map.map_points(pts);
      std::size_t idx = 0;
      for (FitSample& s : bs.samples)
        if (!s.boundary) s.xyz = mapped[idx++];
    }
  }
  FitOptions options;
  options.smoothing = mu;
  std::vector<BSplineVolume> blocks;
  for (const BlockSamples& bs : file.blocks) {
    blocks.push_back(fit_bspline_solid(bs.samples, bs.kv, options));
  }
  const MultiBlockVolume model(std::move(blocks), file.interfaces, 1e-6);
  write_model(model, out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_extract(const std::string& model_path, const std::string& out_path) {
  const MultiBlockVolume model = read_model(model_path);
  nlohmann::json j;
  j["elements"] = nlohmann::json::array();
  for (int b = 0; b < model.num_blocks(); ++b) {
    for (const BezierVolume& bez : extract_bezier(model.block(b))) {
      nlohmann::json je;
      je["block"] = b;
      je["element"] = {bez.element[0], bez.element[1], bez.element[2]};
      je["box_lo"] = {bez.box_lo[0], bez.box_lo[1], bez.box_lo[2]};
      je["box_hi"] = {bez.box_hi[0], bez.box_hi[1], bez.box_hi[2]};
      nlohmann::json cps = nlohmann::json::array();
      for (Eigen::Index r = 0; r < bez.ctrl.rows(); ++r)
        cps.push_back({bez.ctrl(r, 0), bez.ctrl(r, 1), bez.ctrl(r, 2)});
      je["control_points"] = std::move(cps);
      j["elements"].push_back(std::move(je));
    }
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << j.dump(1) << "\n";
  std::cout << "wrote " << j["elements"].size() << " elements to " << out_path << "\n";
  return 0;
}

int run_cache(const std::string& action, const std::string& cache_dir) {
  ReuseCache cache(cache_dir);
  if (action == "clear") {
    cache.clear();
    std::cout << "cleared " << cache.directory() << "\n";
    return 0;
  }
  const auto keys = cache.stored_keys();
  std::cout << "cache directory " << cache.directory() << ": " << keys.size()
            << " entries\n";
  for (const std::string& key : keys) {
    const auto manifest_path = cache.directory() / (key + ".manifest.json");
    std::cout << key;
    std::ifstream in(manifest_path);
    if (in) {
      nlohmann::json manifest;
      in >> manifest;
      std::cout << ": nnz " << manifest.value("total_nnz", 0ull) << ", bytes "
                << manifest.value("total_bytes", 0ull);
    }
    std::cout << "\n";
  }
  return 0;
}

int run_make_model(const std::string& name, const std::string& out_path, int spans,
                   const std::vector<int>& grid, double perturb, unsigned seed) {
  MultiBlockVolume model = [&] {
    if (name == "unit_cube") return make_unit_cube({3, 3, 3}, spans);
    if (name == "hollow_sphere_octant") return make_hollow_sphere_octant(spans);
    if (name == "quarter_pipe") return make_quarter_pipe(spans);
    if (name == "block_grid") {
      std::array<int, 3> g = {2, 2, 2};
      if (grid.size() == 3) g = {grid[0], grid[1], grid[2]};
      return make_block_grid(g, spans, 0.15);
    }
    throw std::runtime_error(
        "unknown model '" + name +
        "' (available: unit_cube, hollow_sphere_octant, quarter_pipe, block_grid)");
  }();
  if (perturb > 0.0) model = perturb_model(model, perturb, seed);
  write_model(model, out_path);
  std::cout << "wrote " << out_path << " (" << model.num_blocks() << " blocks, "
            << model.num_dofs() << " dofs)\n";
  return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
  CLI::App app{"quadrature-free isogeometric heat solver with computation reuse"};
  app.require_subcommand(1);
  std::string cache_dir;
  app.add_option("--cache-dir", cache_dir, "cache directory (default QFIGA_CACHE_DIR or ./qfiga_cache)");

  std::string problem_path, out_prefix = "solution", out_path, model_path, samples_path;
  std::string cache_action = "stats", model_name;
  std::vector<std::string> models;
  std::vector<int> levels = {1, 2};
  std::vector<int> grid;
  int threads = 1, repetitions = 3, spans = 1;
  unsigned seed = 1;
  double lambda = 0.0, mu = 1e-6, perturb = 0.0;
  bool use_gauss = false, quick = false;

  CLI::App* solve_cmd = app.add_subcommand("solve", "assemble and solve one problem");
  solve_cmd->add_option("problem", problem_path, "problem JSON file")->required();
  solve_cmd->add_option("--out-prefix", out_prefix, "output path prefix");
  solve_cmd->add_option("--threads", threads, "worker threads");
  solve_cmd->add_flag("--gauss", use_gauss, "use the Gauss reference assembly");

  CLI::App* reuse_cmd = app.add_subcommand("reuse", "solve a family of models, reusing the cache");
  reuse_cmd->add_option("problem", problem_path, "problem JSON file")->required();
  reuse_cmd->add_option("--models", models, "model files (first is cold)")->required();
  reuse_cmd->add_option("--threads", threads, "worker threads");
  reuse_cmd->add_option("--repetitions", repetitions, "timing repetitions (min taken)");

  CLI::App* bench_cmd = app.add_subcommand("bench", "timing matrix across h-levels");
  bench_cmd->add_option("problem", problem_path, "problem JSON file")->required();
  bench_cmd->add_option("--levels", levels, "h-refinement levels");
  bench_cmd->add_option("--threads", threads, "worker threads");
  bench_cmd->add_option("--repetitions", repetitions, "timing repetitions (min taken)");

  CLI::App* verify_cmd = app.add_subcommand("verify", "run the built-in manufactured suites");
  verify_cmd->add_flag("--quick", quick, "smaller suite");
  verify_cmd->add_option("--threads", threads, "worker threads");

  CLI::App* fit_cmd = app.add_subcommand("fit", "fit B-spline solids to samples");
  fit_cmd->add_option("samples", samples_path, "sample JSON file")->required();
  fit_cmd->add_option("--out", out_path, "output model path")->required();
  fit_cmd->add_option("--lambda", lambda, "elastic support radius");
  fit_cmd->add_option("--mu", mu, "smoothing weight");

  CLI::App* extract_cmd = app.add_subcommand("extract", "dump the Bezier elements of a model");
  extract_cmd->add_option("model", model_path, "model JSON file")->required();
  extract_cmd->add_option("--out", out_path, "output path")->required();

  CLI::App* cache_cmd = app.add_subcommand("cache", "cache maintenance");
  cache_cmd->add_option("action", cache_action, "stats or clear")
      ->check(CLI::IsMember({"stats", "clear"}));

  CLI::App* make_cmd = app.add_subcommand("make-model", "write a built-in model");
  make_cmd->add_option("name", model_name, "model name")->required();
  make_cmd->add_option("--out", out_path, "output path")->required();
  make_cmd->add_option("--spans", spans, "spans per direction of the base knot vectors");
  make_cmd->add_option("--grid", grid, "block grid (3 ints, block_grid only)");
  make_cmd->add_option("--perturb", perturb, "perturbation amplitude");
  make_cmd->add_option("--seed", seed, "perturbation seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      app.exit(e);
      return 0;
    }
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (solve_cmd->parsed()) return run_solve(problem_path, out_prefix, threads, use_gauss, cache_dir);
    if (reuse_cmd->parsed()) return run_reuse(problem_path, models, threads, cache_dir, repetitions);
    if (bench_cmd->parsed()) return run_bench(problem_path, levels, threads, cache_dir, repetitions);
    if (verify_cmd->parsed()) return run_verify(quick, threads, cache_dir);
    if (fit_cmd->parsed()) return run_fit(samples_path, out_path, lambda, mu);
    if (extract_cmd->parsed()) return run_extract(model_path, out_path);
    if (cache_cmd->parsed()) return run_cache(cache_action, cache_dir);
    if (make_cmd->parsed()) return run_make_model(model_name, out_path, spans, grid, perturb, seed);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    // Input-shaped problems exit 2, numeric failures exit 3.
    if (what.find("cannot open") != std::string::npos ||
        what.find("malformed") != std::string::npos ||
        what.find("missing") != std::string::npos ||
        what.find("unknown model") != std::string::npos ||
        what.find("bad expression") != std::string::npos) {
      std::cerr << "error: " << what << "\n";
      return 2;
    }
    std::cerr << "numeric failure: " << what << "\n";
    return 3;
  }
  return 0;
}

}  // namespace qfiga
