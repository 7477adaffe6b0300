#pragma once

#include <filesystem>
#include <string>

#include "qfiga/csrbf.hpp"
#include "qfiga/expression.hpp"
#include "qfiga/spline_volume.hpp"

namespace qfiga {

/// Multiblock model file, exact schema:
/// {"degrees":[l,m,n],
///  "blocks":[{"knots_u":[...],"knots_v":[...],"knots_w":[...],
///             "control_points":[[x,y,z],...]}],   // lexicographic, i fastest
///  "interfaces":[{"a":[block,face],"b":[block,face],"orientation":code}]}
MultiBlockVolume read_model(const std::filesystem::path& path);
void write_model(const MultiBlockVolume& model, const std::filesystem::path& path);

struct ProblemSpec {
  std::filesystem::path model_path;
  std::string source;              // g with  laplacian(T) = g
  std::string dirichlet_value;     // T0 on the selected faces
  std::vector<FaceRef> dirichlet_faces;
  bool all_exterior_faces = false;
  int refine_h = 0;
  int approx_degree_bump = 0;
  std::string exact;  // optional exact solution for error reports
};

/// Problem file: {"model": path, "source": expr,
///                "dirichlet": {"faces": [[block,face],...] | "all", "value": expr},
///                "refine_h": int, "approx_degree_bump": int, "exact": expr?}
ProblemSpec read_problem(const std::filesystem::path& path);
void write_problem(const ProblemSpec& spec, const std::filesystem::path& path);

struct BlockSamples {
  int block = 0;
  std::array<KnotVector, 3> kv;
  std::vector<FitSample> samples;
};

struct SampleFile {
  Deg3 degrees{3, 3, 3};
  std::vector<BlockSamples> blocks;
  std::vector<InterfaceDecl> interfaces;
  // Optional elastic-map constraints applied to interior samples before fitting.
  std::vector<Eigen::Vector3d> elastic_sources, elastic_targets;
  double lambda = 0.0;  // 0 = default (quarter of the bounding-box diagonal)
};

/// Sample file: {"degrees":[...], "blocks":[{"block":id,"knots_u":...,
///   "samples":[{"uvw":[u,v,w],"xyz":[x,y,z],"kind":"boundary"|"interior"}]}],
///   "interfaces":[...], "elastic_constraints":[{"from":[...],"to":[...]}]?,
///   "lambda": r?}
SampleFile read_samples(const std::filesystem::path& path);
void write_samples(const SampleFile& file, const std::filesystem::path& path);

}  // namespace qfiga
