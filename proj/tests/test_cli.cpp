#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "qfiga/cli.hpp"
#include "qfiga/model_io.hpp"
#include "qfiga/models.hpp"

using namespace qfiga;

namespace {

std::filesystem::path work_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "qfiga_cli_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("model file round trip") {
  const auto dir = work_dir();
  const MultiBlockVolume model = perturb_model(make_quarter_pipe(2), 0.01, 4);
  const auto path = dir / "pipe.json";
  write_model(model, path);
  const MultiBlockVolume back = read_model(path);
  CHECK(back.num_blocks() == model.num_blocks());
  CHECK(back.num_dofs() == model.num_dofs());
  for (int b = 0; b < model.num_blocks(); ++b) {
    CHECK((back.block(b).control_points() - model.block(b).control_points())
              .lpNorm<Eigen::Infinity>() < 1e-15);
    for (int d = 0; d < 3; ++d) CHECK(back.block(b).kv(d) == model.block(b).kv(d));
  }
}

TEST_CASE("problem file round trip and validation") {
  const auto dir = work_dir();
  ProblemSpec spec;
  spec.model_path = dir / "cube.json";
  spec.source = "-3*pi^2*sin(pi*x)*sin(pi*y)*sin(pi*z)";
  spec.dirichlet_value = "0";
  spec.all_exterior_faces = true;
  spec.refine_h = 1;
  spec.exact = "sin(pi*x)*sin(pi*y)*sin(pi*z)";
  const auto path = dir / "problem.json";
  write_problem(spec, path);
  const ProblemSpec back = read_problem(path);
  CHECK(back.source == spec.source);
  CHECK(back.all_exterior_faces);
  CHECK(back.refine_h == 1);
  CHECK(back.exact == spec.exact);

  std::ofstream bad(dir / "bad.json");
  bad << "{\"model\": \"x.json\"}";
  bad.close();
  CHECK_THROWS_WITH_AS(read_problem(dir / "bad.json"), doctest::Contains("missing"),
                       std::runtime_error);
}

TEST_CASE("cli solve produces deterministic exports") {
  const auto dir = work_dir();
  const auto cache = (dir / "cache").string();
  write_model(make_unit_cube({3, 3, 3}, 2), dir / "cube.json");
  {
    ProblemSpec spec;
    spec.model_path = dir / "cube.json";
    spec.source = "-3*pi^2*sin(pi*x)*sin(pi*y)*sin(pi*z)";
    spec.dirichlet_value = "0";
    spec.all_exterior_faces = true;
    spec.exact = "sin(pi*x)*sin(pi*y)*sin(pi*z)";
    write_problem(spec, dir / "problem.json");
  }
  const std::string out1 = (dir / "sol_a").string();
  const std::string out2 = (dir / "sol_b").string();
  CHECK(cli_run({"--cache-dir", cache, "solve", (dir / "problem.json").string(),
                 "--out-prefix", out1}) == 0);
  CHECK(cli_run({"--cache-dir", cache, "solve", (dir / "problem.json").string(),
                 "--out-prefix", out2}) == 0);
  const std::string csv1 = slurp(out1 + ".csv");
  const std::string csv2 = slurp(out2 + ".csv");
  CHECK(!csv1.empty());
  CHECK(csv1 == csv2);
  CHECK(csv1.substr(0, 8) == "x,y,z,T\n");
}

TEST_CASE("cli error paths") {
  const auto dir = work_dir();
  // missing model path
  {
    ProblemSpec spec;
    spec.model_path = dir / "missing_model.json";
    spec.source = "0";
    spec.dirichlet_value = "0";
    spec.all_exterior_faces = true;
    write_problem(spec, dir / "missing.json");
  }
  CHECK(cli_run({"solve", (dir / "missing.json").string()}) == 2);
  CHECK(cli_run({"solve", (dir / "no_such_problem.json").string()}) == 2);
  CHECK(cli_run({"make-model", "not_a_model", "--out", (dir / "x.json").string()}) == 2);
  CHECK(cli_run({"nonsense"}) == 2);
}

TEST_CASE("cli extract reports the element count") {
  const auto dir = work_dir();
  // one direction refined three times: 4 elements
  std::array<KnotVector, 3> kv = {KnotVector(3, {0, 0, 0, 0, 0.25, 0.5, 0.75, 1, 1, 1, 1}),
                                  KnotVector::bezier(3), KnotVector::bezier(3)};
  const BSplineVolume vol = interpolate_on_greville(
      kv, [](double u, double v, double w) { return Eigen::Vector3d(u, v, w); });
  write_model(MultiBlockVolume({vol}, {}), dir / "fig3.json");
  const auto out = dir / "fig3_elements.json";
  CHECK(cli_run({"extract", (dir / "fig3.json").string(), "--out", out.string()}) == 0);
  const std::string text = slurp(out);
  CHECK(text.find("\"elements\"") != std::string::npos);
  // count element records
  std::size_t count = 0, pos = 0;
  while ((pos = text.find("\"box_lo\"", pos)) != std::string::npos) {
    ++count;
    pos += 8;
  }
  CHECK(count == 4);
}

TEST_CASE("cli cache stats and clear") {
  const auto dir = work_dir();
  const auto cache = (dir / "cache2").string();
  write_model(make_unit_cube({3, 3, 3}, 1), dir / "c1.json");
  {
    ProblemSpec spec;
    spec.model_path = dir / "c1.json";
    spec.source = "1";
    spec.dirichlet_value = "0";
    spec.all_exterior_faces = true;
    write_problem(spec, dir / "p1.json");
  }
  CHECK(cli_run({"--cache-dir", cache, "solve", (dir / "p1.json").string(),
                 "--out-prefix", (dir / "s1").string()}) == 0);
  CHECK(cli_run({"--cache-dir", cache, "cache", "stats"}) == 0);
  CHECK(cli_run({"--cache-dir", cache, "cache", "clear"}) == 0);
  CHECK(std::filesystem::is_empty(cache));
}

TEST_CASE("cli fit recovers a model from samples") {
  const auto dir = work_dir();
  const MultiBlockVolume gen = make_quarter_pipe(1);
  SampleFile file;
  file.degrees = gen.degrees();
  for (int b = 0; b < gen.num_blocks(); ++b) {
    BlockSamples bs{b,
                    {gen.block(b).kv(0), gen.block(b).kv(1), gen.block(b).kv(2)},
                    {}};
    const int n = 8;
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          FitSample s;
          s.uvw = {i / (n - 1.0), j / (n - 1.0), k / (n - 1.0)};
          s.xyz = gen.block(b).evaluate(s.uvw[0], s.uvw[1], s.uvw[2]);
          s.boundary = i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1;
          bs.samples.push_back(s);
        }
    file.blocks.push_back(std::move(bs));
  }
  file.interfaces = gen.interfaces();
  write_samples(file, dir / "samples.json");
  const auto out = dir / "fitted.json";
  CHECK(cli_run({"fit", (dir / "samples.json").string(), "--out", out.string(),
                 "--mu", "0"}) == 0);
  const MultiBlockVolume fit = read_model(out);
  CHECK(fit.num_blocks() == gen.num_blocks());
  for (int b = 0; b < gen.num_blocks(); ++b) {
    double max_dev = 0.0;
    for (double u : {0.1, 0.5, 0.9})
      for (double v : {0.2, 0.6})
        for (double w : {0.25, 0.75})
          max_dev = std::max(max_dev, (fit.block(b).evaluate(u, v, w) -
                                       gen.block(b).evaluate(u, v, w))
                                          .norm());
    CHECK(max_dev < 1e-6);
  }
}
