#include "qfiga/model_io.hpp"

#include <json.hpp>

#include <fstream>

namespace qfiga {

using nlohmann::json;

namespace {

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

void dump_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

const json& need(const json& j, const char* key, const std::filesystem::path& path,
                 const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) {
    throw std::runtime_error(path.string() + ": missing \"" + key + "\" at " + where);
  }
  return *it;
}

KnotVector read_knots(int degree, const json& arr, const std::filesystem::path& path,
                      const std::string& where) {
  if (!arr.is_array()) throw std::runtime_error(path.string() + ": " + where + " must be an array");
  std::vector<double> k;
  for (const auto& v : arr) k.push_back(v.get<double>());
  try {
    return KnotVector(degree, std::move(k));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + where + ": " + e.what());
  }
}

}  // namespace

MultiBlockVolume read_model(const std::filesystem::path& path) {
  const json j = load_json(path);
  const json& jd = need(j, "degrees", path, "/");
  const Deg3 degrees = {jd.at(0).get<int>(), jd.at(1).get<int>(), jd.at(2).get<int>()};
  std::vector<BSplineVolume> blocks;
  const json& jb = need(j, "blocks", path, "/");
  for (std::size_t b = 0; b < jb.size(); ++b) {
    const std::string where = "/blocks/" + std::to_string(b);
    const json& block = jb.at(b);
    std::array<KnotVector, 3> kv = {
        read_knots(degrees[0], need(block, "knots_u", path, where), path, where + "/knots_u"),
        read_knots(degrees[1], need(block, "knots_v", path, where), path, where + "/knots_v"),
        read_knots(degrees[2], need(block, "knots_w", path, where), path, where + "/knots_w")};
    const json& cps = need(block, "control_points", path, where);
    ControlGrid ctrl(static_cast<Eigen::Index>(cps.size()), 3);
    for (std::size_t r = 0; r < cps.size(); ++r) {
      const json& p = cps.at(r);
      ctrl.row(static_cast<Eigen::Index>(r)) =
          Eigen::RowVector3d(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
    }
    try {
      blocks.emplace_back(kv, std::move(ctrl));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ": " + where + ": " + e.what());
    }
  }
  std::vector<InterfaceDecl> interfaces;
  if (j.contains("interfaces")) {
    for (const auto& itf : j.at("interfaces")) {
      InterfaceDecl d;
      d.a = {itf.at("a").at(0).get<int>(), itf.at("a").at(1).get<int>()};
      d.b = {itf.at("b").at(0).get<int>(), itf.at("b").at(1).get<int>()};
      d.orientation = itf.value("orientation", 0);
      interfaces.push_back(d);
    }
  }
  try {
    return MultiBlockVolume(std::move(blocks), std::move(interfaces));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": /interfaces: " + e.what());
  }
}

void write_model(const MultiBlockVolume& model, const std::filesystem::path& path) {
  json j;
  const Deg3 d = model.degrees();
  j["degrees"] = {d[0], d[1], d[2]};
  j["blocks"] = json::array();
  for (int b = 0; b < model.num_blocks(); ++b) {
    const BSplineVolume& vol = model.block(b);
    json jb;
    jb["knots_u"] = vol.kv(0).knots();
    jb["knots_v"] = vol.kv(1).knots();
    jb["knots_w"] = vol.kv(2).knots();
    json cps = json::array();
    for (Eigen::Index r = 0; r < vol.num_ctrl_total(); ++r) {
      cps.push_back({vol.control_points()(r, 0), vol.control_points()(r, 1),
                     vol.control_points()(r, 2)});
    }
    jb["control_points"] = std::move(cps);
    j["blocks"].push_back(std::move(jb));
  }
  j["interfaces"] = json::array();
  for (const InterfaceDecl& itf : model.interfaces()) {
    j["interfaces"].push_back({{"a", {itf.a.block, itf.a.face}},
                               {"b", {itf.b.block, itf.b.face}},
                               {"orientation", itf.orientation}});
  }
  dump_json(j, path);
}

ProblemSpec read_problem(const std::filesystem::path& path) {
  const json j = load_json(path);
  ProblemSpec spec;
  spec.model_path = need(j, "model", path, "/").get<std::string>();
  if (spec.model_path.is_relative()) {
    spec.model_path = path.parent_path() / spec.model_path;
  }
  spec.source = need(j, "source", path, "/").get<std::string>();
  const json& jd = need(j, "dirichlet", path, "/");
  spec.dirichlet_value = need(jd, "value", path, "/dirichlet").get<std::string>();
  const json& faces = need(jd, "faces", path, "/dirichlet");
  if (faces.is_string()) {
    if (faces.get<std::string>() != "all") {
      throw std::runtime_error(path.string() + ": /dirichlet/faces must be \"all\" or a list");
    }
    spec.all_exterior_faces = true;
  } else {
    for (const auto& f : faces) {
      spec.dirichlet_faces.push_back({f.at(0).get<int>(), f.at(1).get<int>()});
    }
  }
  spec.refine_h = j.value("refine_h", 0);
  spec.approx_degree_bump = j.value("approx_degree_bump", 0);
  spec.exact = j.value("exact", std::string{});
  // Validate the expressions now so errors carry the file path.
  try {
    Expression::parse(spec.source);
    Expression::parse(spec.dirichlet_value);
    if (!spec.exact.empty()) Expression::parse(spec.exact);
  } catch (const ParseError& e) {
    throw std::runtime_error(path.string() + ": bad expression: " + e.what());
  }
  return spec;
}

void write_problem(const ProblemSpec& spec, const std::filesystem::path& path) {
  json j;
  j["model"] = spec.model_path.string();
  j["source"] = spec.source;
  j["dirichlet"]["value"] = spec.dirichlet_value;
  if (spec.all_exterior_faces) {
    j["dirichlet"]["faces"] = "all";
  } else {
    json faces = json::array();
    for (const FaceRef& f : spec.dirichlet_faces) faces.push_back({f.block, f.face});
    j["dirichlet"]["faces"] = std::move(faces);
  }
  j["refine_h"] = spec.refine_h;
  j["approx_degree_bump"] = spec.approx_degree_bump;
  if (!spec.exact.empty()) j["exact"] = spec.exact;
  dump_json(j, path);
}

SampleFile read_samples(const std::filesystem::path& path) {
  const json j = load_json(path);
  SampleFile file;
  const json& jd = need(j, "degrees", path, "/");
  file.degrees = {jd.at(0).get<int>(), jd.at(1).get<int>(), jd.at(2).get<int>()};
  for (const auto& jb : need(j, "blocks", path, "/")) {
    BlockSamples bs{0,
                    {KnotVector::bezier(file.degrees[0]), KnotVector::bezier(file.degrees[1]),
                     KnotVector::bezier(file.degrees[2])},
                    {}};
    bs.block = jb.value("block", 0);
    bs.kv = {read_knots(file.degrees[0], need(jb, "knots_u", path, "/blocks"), path, "knots_u"),
             read_knots(file.degrees[1], need(jb, "knots_v", path, "/blocks"), path, "knots_v"),
             read_knots(file.degrees[2], need(jb, "knots_w", path, "/blocks"), path, "knots_w")};
    for (const auto& js : need(jb, "samples", path, "/blocks")) {
      FitSample s;
      const json& uvw = js.at("uvw");
      const json& xyz = js.at("xyz");
      s.uvw = {uvw.at(0).get<double>(), uvw.at(1).get<double>(), uvw.at(2).get<double>()};
      s.xyz = {xyz.at(0).get<double>(), xyz.at(1).get<double>(), xyz.at(2).get<double>()};
      s.boundary = js.value("kind", std::string("interior")) == "boundary";
      bs.samples.push_back(s);
    }
    file.blocks.push_back(std::move(bs));
  }
  if (j.contains("interfaces")) {
    for (const auto& itf : j.at("interfaces")) {
      InterfaceDecl d;
      d.a = {itf.at("a").at(0).get<int>(), itf.at("a").at(1).get<int>()};
      d.b = {itf.at("b").at(0).get<int>(), itf.at("b").at(1).get<int>()};
      d.orientation = itf.value("orientation", 0);
      file.interfaces.push_back(d);
    }
  }
  if (j.contains("elastic_constraints")) {
    for (const auto& c : j.at("elastic_constraints")) {
      const json& from = c.at("from");
      const json& to = c.at("to");
      file.elastic_sources.emplace_back(from.at(0).get<double>(), from.at(1).get<double>(),
                                        from.at(2).get<double>());
      file.elastic_targets.emplace_back(to.at(0).get<double>(), to.at(1).get<double>(),
                                        to.at(2).get<double>());
    }
  }
  file.lambda = j.value("lambda", 0.0);
  return file;
}

void write_samples(const SampleFile& file, const std::filesystem::path& path) {
  json j;
  j["degrees"] = {file.degrees[0], file.degrees[1], file.degrees[2]};
  j["blocks"] = json::array();
  for (const BlockSamples& bs : file.blocks) {
    json jb;
    jb["block"] = bs.block;
    jb["knots_u"] = bs.kv[0].knots();
    jb["knots_v"] = bs.kv[1].knots();
    jb["knots_w"] = bs.kv[2].knots();
    json samples = json::array();
    for (const FitSample& s : bs.samples) {
      samples.push_back({{"uvw", {s.uvw[0], s.uvw[1], s.uvw[2]}},
                         {"xyz", {s.xyz[0], s.xyz[1], s.xyz[2]}},
                         {"kind", s.boundary ? "boundary" : "interior"}});
    }
    jb["samples"] = std::move(samples);
    j["blocks"].push_back(std::move(jb));
  }
  j["interfaces"] = json::array();
  for (const InterfaceDecl& itf : file.interfaces) {
    j["interfaces"].push_back({{"a", {itf.a.block, itf.a.face}},
                               {"b", {itf.b.block, itf.b.face}},
                               {"orientation", itf.orientation}});
  }
  if (!file.elastic_sources.empty()) {
    json cs = json::array();
    for (std::size_t i = 0; i < file.elastic_sources.size(); ++i) {
      const auto& f = file.elastic_sources[i];
      const auto& t = file.elastic_targets[i];
      cs.push_back({{"from", {f[0], f[1], f[2]}}, {"to", {t[0], t[1], t[2]}}});
    }
    j["elastic_constraints"] = std::move(cs);
  }
  if (file.lambda > 0.0) j["lambda"] = file.lambda;
  dump_json(j, path);
}

}  // namespace qfiga
