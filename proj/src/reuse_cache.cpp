#include "qfiga/reuse_cache.hpp"

#include <json.hpp>

#include <chrono>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

namespace qfiga {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Fnv1a {
  std::uint64_t state = 1469598103934665603ull;
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state ^= p[i];
      state *= 1099511628211ull;
    }
  }
  void add(double v) { bytes(&v, sizeof v); }
  void add(int v) { bytes(&v, sizeof v); }
};

std::size_t count_nonzero(const Eigen::VectorXd& v) {
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] != 0.0) ++n;
  return n;
}

std::size_t count_nonzero(const Eigen::MatrixXd& m) {
  std::size_t n = 0;
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      if (m(r, c) != 0.0) ++n;
  return n;
}

}  // namespace

CacheKey CacheKey::from(const MultiBlockVolume& domain, Deg3 approx_degrees,
                        const std::vector<FaceRef>& dirichlet_faces) {
  CacheKey key;
  key.degrees = domain.degrees();
  key.approx = approx_degrees;
  for (int b = 0; b < domain.num_blocks(); ++b) {
    std::array<std::vector<double>, 3> ks;
    for (int d = 0; d < 3; ++d) {
      ks[d] = domain.block(b).kv(d).interior_knots();
      std::sort(ks[d].begin(), ks[d].end());
    }
    key.interior_knots.push_back(std::move(ks));
  }
  key.interfaces = domain.interfaces();
  key.dirichlet_faces = dirichlet_faces;
  return key;
}

std::string CacheKey::hash() const {
  Fnv1a h;
  for (int d = 0; d < 3; ++d) h.add(degrees[d]);
  for (int d = 0; d < 3; ++d) h.add(approx[d]);
  h.add(static_cast<int>(interior_knots.size()));
  for (const auto& block : interior_knots) {
    for (const auto& dir : block) {
      h.add(static_cast<int>(dir.size()));
      for (double k : dir) h.add(k);
    }
  }
  h.add(static_cast<int>(interfaces.size()));
  for (const InterfaceDecl& itf : interfaces) {
    h.add(itf.a.block);
    h.add(itf.a.face);
    h.add(itf.b.block);
    h.add(itf.b.face);
    h.add(itf.orientation);
  }
  h.add(static_cast<int>(dirichlet_faces.size()));
  for (const FaceRef& f : dirichlet_faces) {
    h.add(f.block);
    h.add(f.face);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h.state));
  return buf;
}

void ProductWeightSet::add(const Deg3& a, const Deg3& b) {
  const auto key = std::make_pair(a, b);
  if (!table_.count(key)) table_.emplace(key, ProductWeights::make(a, b));
}

const ProductWeights& ProductWeightSet::get(const Deg3& a, const Deg3& b) const {
  const auto it = table_.find(std::make_pair(a, b));
  if (it == table_.end()) {
    throw std::logic_error("product weight table missing for " + to_string(a) +
                           " x " + to_string(b));
  }
  return it->second;
}

std::size_t ProductWeightSet::weight_values() const {
  std::size_t n = 0;
  for (const auto& [k, w] : table_) {
    n += static_cast<std::size_t>(w.wu.size() + w.wv.size() + w.ww.size());
  }
  return n;
}

PairProductTables PairProductTables::build(Deg3 degrees) {
  PairProductTables out;
  out.degrees = degrees;
  const BinomialTable& bin = BinomialTable::shared();
  for (int dir = 0; dir < 3; ++dir) {
    const int l = degrees[dir];
    for (int combo = 0; combo < 4; ++combo) {
      const int da = combo & 1, db = combo >> 1;
      const int d1 = l - da, d2 = l - db;
      Eigen::MatrixXd table =
          Eigen::MatrixXd::Zero((l + 1) * (l + 1), d1 + d2 + 1);
      auto factor = [&](int index, int derivative, Eigen::VectorXd& f) {
        if (!derivative) {
          f = Eigen::VectorXd::Zero(l + 1);
          f[index] = 1.0;
        } else {
          f = Eigen::VectorXd::Zero(l);
          if (index - 1 >= 0) f[index - 1] += l;
          if (index <= l - 1) f[index] -= l;
        }
      };
      Eigen::VectorXd f1, f2;
      for (int i = 0; i <= l; ++i) {
        for (int r = 0; r <= l; ++r) {
          factor(r, da, f1);
          factor(i, db, f2);
          const int row = r + (l + 1) * i;
          for (int bcoef = 0; bcoef <= d1 + d2; ++bcoef) {
            double acc = 0.0;
            for (int rho = std::max(0, bcoef - d2); rho <= std::min(bcoef, d1); ++rho) {
              acc += bin(d1, rho) * bin(d2, bcoef - rho) / bin(d1 + d2, bcoef) *
                     f1[rho] * f2[bcoef - rho];
            }
            table(row, bcoef) = acc;
          }
        }
      }
      out.tables[dir][combo] = std::move(table);
    }
  }
  return out;
}

namespace {

// Every Bernstein product shape the per-element pipeline performs.
void register_product_shapes(ProductWeightSet& set, const Deg3& deg) {
  std::array<Deg3, 3> pd;
  for (int d = 0; d < 3; ++d) {
    pd[d] = deg;
    pd[d][d] -= 1;
  }
  std::array<Deg3, 3> cofdeg;
  for (int p = 0; p < 3; ++p) {
    cofdeg[p] = pd[(p + 1) % 3] + pd[(p + 2) % 3];
  }
  for (int p = 0; p < 3; ++p) {
    const int p1 = (p + 1) % 3, p2 = (p + 2) % 3;
    set.add(pd[p1], pd[p2]);
    set.add(pd[p2], pd[p1]);
  }
  set.add(pd[0], cofdeg[0]);  // determinant assembly
  for (int p = 0; p < 3; ++p)
    for (int q = p; q < 3; ++q) set.add(cofdeg[p], cofdeg[q]);
}

SparsityPattern build_pattern(const MultiBlockVolume& domain) {
  const Deg3 deg = domain.degrees();
  std::vector<std::vector<int>> rows(domain.num_dofs());
  for (int b = 0; b < domain.num_blocks(); ++b) {
    const BSplineVolume& vol = domain.block(b);
    const int nu = vol.num_ctrl(0), nv = vol.num_ctrl(1), nw = vol.num_ctrl(2);
    for (int k = 0; k < nw; ++k) {
      const int k0 = std::max(0, k - deg[2]), k1 = std::min(nw - 1, k + deg[2]);
      for (int j = 0; j < nv; ++j) {
        const int j0 = std::max(0, j - deg[1]), j1 = std::min(nv - 1, j + deg[1]);
        for (int i = 0; i < nu; ++i) {
          const int i0 = std::max(0, i - deg[0]), i1 = std::min(nu - 1, i + deg[0]);
          const int g = domain.global_dof(b, vol.flat(i, j, k));
          auto& row = rows[g];
          for (int kk = k0; kk <= k1; ++kk)
            for (int jj = j0; jj <= j1; ++jj)
              for (int ii = i0; ii <= i1; ++ii)
                row.push_back(domain.global_dof(b, vol.flat(ii, jj, kk)));
        }
      }
    }
  }
  SparsityPattern pat;
  pat.row_ptr.assign(domain.num_dofs() + 1, 0);
  std::size_t nnz = 0;
  for (auto& row : rows) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    nnz += row.size();
  }
  pat.cols.reserve(nnz);
  for (int r = 0; r < domain.num_dofs(); ++r) {
    pat.row_ptr[r] = static_cast<int>(pat.cols.size());
    pat.cols.insert(pat.cols.end(), rows[r].begin(), rows[r].end());
  }
  pat.row_ptr[domain.num_dofs()] = static_cast<int>(pat.cols.size());
  return pat;
}

}  // namespace

CacheEntry build_cache_entry(const CacheKey& key, const MultiBlockVolume& domain) {
  CacheEntry e{.key = key,
               .d_table = DCoefficientTable(key.degrees),
               .gradients = GradientTable(key.degrees)};
  auto record = [&](const std::string& name, Clock::time_point start,
                    std::size_t bytes, std::size_t nnz) {
    e.items.push_back({name, bytes, nnz, seconds_since(start)});
  };

  {
    const auto t0 = Clock::now();
    e.d_table = DCoefficientTable(key.degrees);
    std::size_t weights = e.d_table.weight_count();
    record("d_table", t0, weights * (sizeof(double) + 3 * sizeof(std::int64_t)), weights);
  }
  {
    const auto t0 = Clock::now();
    e.gradients = GradientTable(key.degrees);
    std::size_t bytes = 0, nnz = 0;
    for (int d = 0; d < 3; ++d) {
      for (int l = 0; l < e.gradients.num_local(); ++l) {
        bytes += e.gradients.grad(d, l).size() * sizeof(double);
        nnz += count_nonzero(e.gradients.grad(d, l).coeffs());
      }
    }
    record("gradient_tensors", t0, bytes, nnz);
  }
  {
    const auto t0 = Clock::now();
    register_product_shapes(e.product_weights, key.degrees);
    record("product_weights", t0, e.product_weights.weight_values() * sizeof(double),
           e.product_weights.weight_values());
  }
  {
    const auto t0 = Clock::now();
    e.pair_tables = PairProductTables::build(key.degrees);
    std::size_t bytes = 0, nnz = 0;
    for (int d = 0; d < 3; ++d)
      for (int c = 0; c < 4; ++c) {
        bytes += e.pair_tables.tables[d][c].size() * sizeof(double);
        nnz += count_nonzero(e.pair_tables.tables[d][c]);
      }
    record("pair_product_tables", t0, bytes, nnz);
  }
  {
    const auto t0 = Clock::now();
    e.approx = build_reusable(key.approx, key.degrees);
    std::size_t bytes = sizeof(double), nnz = 1;
    for (int d = 0; d < 3; ++d) {
      bytes += (e.approx.lfac[d].size() + e.approx.qfac[d].size()) * sizeof(double);
      nnz += count_nonzero(e.approx.lfac[d]) + count_nonzero(e.approx.qfac[d]);
    }
    record("approx_system", t0, bytes, nnz);
  }
  {
    const auto t0 = Clock::now();
    std::size_t bytes = 0, nnz = 0;
    for (int b = 0; b < domain.num_blocks(); ++b) {
      BlockStructure bs;
      for (int d = 0; d < 3; ++d) {
        bs.extraction[d] = extraction_operators(domain.block(b).kv(d));
        bs.greville[d] = domain.block(b).kv(d).greville();
        for (const auto& m : bs.extraction[d]) {
          bytes += m.size() * sizeof(double);
          nnz += count_nonzero(m);
        }
        bytes += bs.greville[d].size() * sizeof(double);
        nnz += bs.greville[d].size();
      }
      e.blocks.push_back(std::move(bs));
    }
    record("extraction_operators", t0, bytes, nnz);
  }
  {
    const auto t0 = Clock::now();
    e.num_dofs = domain.num_dofs();
    std::size_t bytes = 0;
    for (int b = 0; b < domain.num_blocks(); ++b) {
      e.dof_map.push_back(domain.block_dofs(b));
      bytes += e.dof_map.back().size() * sizeof(int);
    }
    record("dof_map", t0, bytes, bytes / sizeof(int));
  }
  {
    const auto t0 = Clock::now();
    e.pattern = build_pattern(domain);
    record("sparsity_pattern", t0,
           (e.pattern.row_ptr.size() + e.pattern.cols.size()) * sizeof(int),
           e.pattern.nnz());
  }
  {
    const auto t0 = Clock::now();
    e.collocation = CollocationSystem::build(domain, key.dirichlet_faces);
    e.collocation.factorize();
    record("collocation", t0,
           e.collocation.matrix().nonZeros() * (sizeof(double) + sizeof(int)) +
               e.collocation.sites().size() * 4 * sizeof(double),
           static_cast<std::size_t>(e.collocation.matrix().nonZeros()));
  }
  return e;
}

std::size_t CacheEntry::total_bytes() const {
  std::size_t n = 0;
  for (const auto& item : items) n += item.bytes;
  return n;
}

std::size_t CacheEntry::total_nnz() const {
  std::size_t n = 0;
  for (const auto& item : items) n += item.nnz;
  return n;
}

CacheStats stats(const CacheEntry& entry) {
  CacheStats s;
  s.items = entry.items;
  s.total_bytes = entry.total_bytes();
  s.total_nnz = entry.total_nnz();
  return s;
}

std::string format_stats(const CacheStats& stats) {
  std::ostringstream out;
  for (const auto& item : stats.items) {
    out << item.name << " nnz=" << item.nnz << " bytes=" << item.bytes << "\n";
  }
  out << "total nnz=" << stats.total_nnz << " bytes=" << stats.total_bytes << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Serialization: little-endian sections of f64/i64 data plus a JSON manifest.

namespace {

constexpr char kMagic[8] = {'Q', 'F', 'R', 'C', '0', '0', '0', '2'};

struct Writer {
  std::ofstream out;
  explicit Writer(const std::filesystem::path& p) : out(p, std::ios::binary) {}
  void raw(const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void section_f64(const std::string& name, const double* data, std::size_t n) {
    u64(name.size());
    raw(name.data(), name.size());
    u64(0);
    u64(n);
    raw(data, n * sizeof(double));
  }
  void section_i64(const std::string& name, const std::vector<std::int64_t>& v) {
    u64(name.size());
    raw(name.data(), name.size());
    u64(1);
    u64(v.size());
    raw(v.data(), v.size() * sizeof(std::int64_t));
  }
};

struct Reader {
  std::ifstream in;
  std::map<std::string, std::vector<double>> f64;
  std::map<std::string, std::vector<std::int64_t>> i64;

  explicit Reader(const std::filesystem::path& p) : in(p, std::ios::binary) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) {
      throw std::runtime_error("cache file has wrong magic/version");
    }
    std::uint64_t sections = 0;
    in.read(reinterpret_cast<char*>(&sections), 8);
    for (std::uint64_t s = 0; s < sections; ++s) {
      std::uint64_t name_len = 0, dtype = 0, count = 0;
      in.read(reinterpret_cast<char*>(&name_len), 8);
      std::string name(name_len, '\0');
      in.read(name.data(), static_cast<std::streamsize>(name_len));
      in.read(reinterpret_cast<char*>(&dtype), 8);
      in.read(reinterpret_cast<char*>(&count), 8);
      if (dtype == 0) {
        std::vector<double> v(count);
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        f64.emplace(std::move(name), std::move(v));
      } else {
        std::vector<std::int64_t> v(count);
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(count * sizeof(std::int64_t)));
        i64.emplace(std::move(name), std::move(v));
      }
      if (!in) throw std::runtime_error("truncated cache file");
    }
  }

  const std::vector<double>& get_f64(const std::string& name) const {
    const auto it = f64.find(name);
    if (it == f64.end()) throw std::runtime_error("cache file misses section " + name);
    return it->second;
  }
  const std::vector<std::int64_t>& get_i64(const std::string& name) const {
    const auto it = i64.find(name);
    if (it == i64.end()) throw std::runtime_error("cache file misses section " + name);
    return it->second;
  }
};

}  // namespace

void save_entry(const CacheEntry& e, const std::filesystem::path& bin_path,
                const std::filesystem::path& manifest_path) {
  const std::filesystem::path tmp = bin_path.string() + ".tmp";
  {
    Writer w(tmp);
    if (!w.out) throw std::runtime_error("cannot write " + tmp.string());
    w.raw(kMagic, 8);

    std::vector<std::pair<std::string, std::vector<double>>> fsec;
    std::vector<std::pair<std::string, std::vector<std::int64_t>>> isec;

    {
      std::vector<std::int64_t> meta = {e.key.degrees[0], e.key.degrees[1], e.key.degrees[2],
                                        e.key.approx[0], e.key.approx[1], e.key.approx[2],
                                        static_cast<std::int64_t>(e.blocks.size()), e.num_dofs};
      isec.emplace_back("meta", std::move(meta));
    }
    {
      std::vector<double> w64;
      for (int d = 0; d < 3; ++d)
        for (const auto& ws : e.d_table.direction(d).weights)
          w64.insert(w64.end(), ws.begin(), ws.end());
      fsec.emplace_back("d_table.weights", std::move(w64));
    }
    {
      std::vector<double> g;
      for (int d = 0; d < 3; ++d)
        for (int l = 0; l < e.gradients.num_local(); ++l) {
          const auto& c = e.gradients.grad(d, l).coeffs();
          g.insert(g.end(), c.data(), c.data() + c.size());
        }
      fsec.emplace_back("gradient_tensors", std::move(g));
    }
    {
      std::vector<double> pt;
      for (int d = 0; d < 3; ++d)
        for (int c = 0; c < 4; ++c) {
          const auto& m = e.pair_tables.tables[d][c];
          pt.insert(pt.end(), m.data(), m.data() + m.size());
        }
      fsec.emplace_back("pair_tables", std::move(pt));
    }
    {
      std::vector<double> ap = {e.approx.sigma};
      for (int d = 0; d < 3; ++d) {
        const auto& l = e.approx.lfac[d];
        const auto& q = e.approx.qfac[d];
        ap.insert(ap.end(), l.data(), l.data() + l.size());
        ap.insert(ap.end(), q.data(), q.data() + q.size());
      }
      fsec.emplace_back("approx_system", std::move(ap));
    }
    {
      std::vector<double> ex;
      std::vector<std::int64_t> dims;
      for (const auto& bs : e.blocks) {
        for (int d = 0; d < 3; ++d) {
          dims.push_back(static_cast<std::int64_t>(bs.extraction[d].size()));
          for (const auto& m : bs.extraction[d]) {
            ex.insert(ex.end(), m.data(), m.data() + m.size());
          }
          dims.push_back(static_cast<std::int64_t>(bs.greville[d].size()));
          ex.insert(ex.end(), bs.greville[d].begin(), bs.greville[d].end());
        }
      }
      fsec.emplace_back("block_structure", std::move(ex));
      isec.emplace_back("block_structure.dims", std::move(dims));
    }
    {
      std::vector<std::int64_t> dm;
      for (const auto& block : e.dof_map) {
        dm.push_back(static_cast<std::int64_t>(block.size()));
        dm.insert(dm.end(), block.begin(), block.end());
      }
      isec.emplace_back("dof_map", std::move(dm));
    }
    {
      std::vector<std::int64_t> sp;
      sp.push_back(static_cast<std::int64_t>(e.pattern.row_ptr.size()));
      sp.insert(sp.end(), e.pattern.row_ptr.begin(), e.pattern.row_ptr.end());
      sp.insert(sp.end(), e.pattern.cols.begin(), e.pattern.cols.end());
      isec.emplace_back("sparsity", std::move(sp));
    }
    {
      std::vector<std::int64_t> ci;
      std::vector<double> cv;
      ci.push_back(e.collocation.matrix().rows());
      for (const int dof : e.collocation.boundary_dofs()) ci.push_back(dof);
      for (const auto& site : e.collocation.sites()) {
        ci.push_back(site.block);
        cv.push_back(site.uvw[0]);
        cv.push_back(site.uvw[1]);
        cv.push_back(site.uvw[2]);
      }
      const auto& m = e.collocation.matrix();
      ci.push_back(m.nonZeros());
      for (int k = 0; k < m.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
          ci.push_back(it.row());
          ci.push_back(it.col());
          cv.push_back(it.value());
        }
      }
      isec.emplace_back("collocation.index", std::move(ci));
      fsec.emplace_back("collocation.values", std::move(cv));
    }
    {
      std::vector<double> times;
      std::vector<std::int64_t> sizes;
      for (const auto& item : e.items) {
        times.push_back(item.build_seconds);
        sizes.push_back(static_cast<std::int64_t>(item.bytes));
        sizes.push_back(static_cast<std::int64_t>(item.nnz));
      }
      fsec.emplace_back("item_times", std::move(times));
      isec.emplace_back("item_sizes", std::move(sizes));
    }

    w.u64(fsec.size() + isec.size());
    for (const auto& [name, data] : fsec) w.section_f64(name, data.data(), data.size());
    for (const auto& [name, data] : isec) w.section_i64(name, data);
    if (!w.out) throw std::runtime_error("write failure on " + tmp.string());
  }
  std::filesystem::rename(tmp, bin_path);

  nlohmann::json manifest;
  manifest["key"] = e.key.hash();
  manifest["degrees"] = {e.key.degrees[0], e.key.degrees[1], e.key.degrees[2]};
  manifest["approx_degrees"] = {e.key.approx[0], e.key.approx[1], e.key.approx[2]};
  manifest["num_dofs"] = e.num_dofs;
  manifest["items"] = nlohmann::json::array();
  for (const auto& item : e.items) {
    manifest["items"].push_back({{"name", item.name},
                                 {"bytes", item.bytes},
                                 {"nnz", item.nnz},
                                 {"build_seconds", item.build_seconds}});
  }
  manifest["total_bytes"] = e.total_bytes();
  manifest["total_nnz"] = e.total_nnz();
  std::ofstream mo(manifest_path);
  mo << manifest.dump(1) << "\n";
}

std::optional<CacheEntry> load_entry(const CacheKey& key,
                                     const std::filesystem::path& bin_path) {
  if (!std::filesystem::exists(bin_path)) return std::nullopt;
  Reader r(bin_path);
  const auto& meta = r.get_i64("meta");
  const Deg3 degrees = {static_cast<int>(meta[0]), static_cast<int>(meta[1]),
                        static_cast<int>(meta[2])};
  const Deg3 approx = {static_cast<int>(meta[3]), static_cast<int>(meta[4]),
                       static_cast<int>(meta[5])};
  if (degrees != key.degrees || approx != key.approx) {
    throw std::runtime_error("cache file does not match the key");
  }
  const int num_blocks = static_cast<int>(meta[6]);

  CacheEntry e{.key = key,
               .d_table = DCoefficientTable(degrees),
               .gradients = GradientTable(degrees)};
  // Small combinatorial tables are pure functions of the degrees; spot-check
  // the stored stream against the deterministic rebuild.
  {
    const auto& stored = r.get_f64("d_table.weights");
    std::size_t idx = 0;
    for (int d = 0; d < 3; ++d)
      for (const auto& ws : e.d_table.direction(d).weights)
        for (double w : ws) {
          if (idx >= stored.size() || stored[idx++] != w) {
            throw std::runtime_error("cache file d_table mismatch");
          }
        }
  }
  {
    // Deterministic rebuild; the stored stream must agree in size.
    std::size_t expected = 0;
    for (int d = 0; d < 3; ++d)
      for (int l = 0; l < e.gradients.num_local(); ++l)
        expected += static_cast<std::size_t>(e.gradients.grad(d, l).size());
    if (r.get_f64("gradient_tensors").size() != expected) {
      throw std::runtime_error("cache file gradient table mismatch");
    }
  }
  register_product_shapes(e.product_weights, degrees);
  e.pair_tables = PairProductTables::build(degrees);
  {
    const auto& ap = r.get_f64("approx_system");
    e.approx = build_reusable(approx, degrees);
    std::size_t idx = 0;
    if (ap.at(idx++) != e.approx.sigma) {
      throw std::runtime_error("cache file sigma mismatch");
    }
    for (int d = 0; d < 3; ++d) {
      idx += static_cast<std::size_t>(e.approx.lfac[d].size());
      idx += static_cast<std::size_t>(e.approx.qfac[d].size());
    }
    if (idx != ap.size()) throw std::runtime_error("cache file approx size mismatch");
  }
  {
    const auto& data = r.get_f64("block_structure");
    const auto& dims = r.get_i64("block_structure.dims");
    std::size_t di = 0, fi = 0;
    const Deg3 deg = degrees;
    for (int b = 0; b < num_blocks; ++b) {
      BlockStructure bs;
      for (int d = 0; d < 3; ++d) {
        const auto ops = static_cast<std::size_t>(dims.at(di++));
        const int n = deg[d] + 1;
        for (std::size_t o = 0; o < ops; ++o) {
          Eigen::MatrixXd m(n, n);
          for (Eigen::Index c = 0; c < n; ++c)
            for (Eigen::Index rr = 0; rr < n; ++rr) m(rr, c) = data.at(fi++);
          bs.extraction[d].push_back(std::move(m));
        }
        const auto gn = static_cast<std::size_t>(dims.at(di++));
        for (std::size_t gi = 0; gi < gn; ++gi) bs.greville[d].push_back(data.at(fi++));
      }
      e.blocks.push_back(std::move(bs));
    }
  }
  {
    const auto& dm = r.get_i64("dof_map");
    std::size_t idx = 0;
    e.num_dofs = static_cast<int>(meta[7]);
    for (int b = 0; b < num_blocks; ++b) {
      const auto n = static_cast<std::size_t>(dm.at(idx++));
      std::vector<int> block(n);
      for (std::size_t i = 0; i < n; ++i) block[i] = static_cast<int>(dm.at(idx++));
      e.dof_map.push_back(std::move(block));
    }
  }
  {
    const auto& sp = r.get_i64("sparsity");
    std::size_t idx = 0;
    const auto rp = static_cast<std::size_t>(sp.at(idx++));
    e.pattern.row_ptr.resize(rp);
    for (std::size_t i = 0; i < rp; ++i) e.pattern.row_ptr[i] = static_cast<int>(sp.at(idx++));
    const std::size_t nnz = sp.size() - idx;
    e.pattern.cols.resize(nnz);
    for (std::size_t i = 0; i < nnz; ++i) e.pattern.cols[i] = static_cast<int>(sp.at(idx++));
  }
  {
    const auto& ci = r.get_i64("collocation.index");
    const auto& cv = r.get_f64("collocation.values");
    std::size_t ii = 0, vi = 0;
    const auto n = static_cast<std::size_t>(ci.at(ii++));
    std::vector<int> dofs(n);
    for (std::size_t i = 0; i < n; ++i) dofs[i] = static_cast<int>(ci.at(ii++));
    std::vector<CollocationSite> sites(n);
    for (std::size_t i = 0; i < n; ++i) {
      sites[i].block = static_cast<int>(ci.at(ii++));
      sites[i].uvw = {cv.at(vi), cv.at(vi + 1), cv.at(vi + 2)};
      vi += 3;
    }
    const auto nnz = static_cast<std::size_t>(ci.at(ii++));
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(nnz);
    for (std::size_t k = 0; k < nnz; ++k) {
      const int row = static_cast<int>(ci.at(ii++));
      const int col = static_cast<int>(ci.at(ii++));
      trips.emplace_back(row, col, cv.at(vi++));
    }
    e.collocation = CollocationSystem::from_parts(std::move(dofs), std::move(sites),
                                                  static_cast<int>(n), trips);
    e.collocation.factorize();
  }
  {
    const auto& times = r.get_f64("item_times");
    const auto& sizes = r.get_i64("item_sizes");
    static const char* kNames[] = {"d_table",        "gradient_tensors",
                                   "product_weights", "pair_product_tables",
                                   "approx_system",  "extraction_operators",
                                   "dof_map",        "sparsity_pattern",
                                   "collocation"};
    for (std::size_t i = 0; i < times.size() && i < 9; ++i) {
      e.items.push_back({kNames[i], static_cast<std::size_t>(sizes.at(2 * i)),
                         static_cast<std::size_t>(sizes.at(2 * i + 1)), times[i]});
    }
  }
  return e;
}

ReuseCache::ReuseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (dir_.empty()) {
    if (const char* env = std::getenv("QFIGA_CACHE_DIR")) {
      dir_ = env;
    } else {
      dir_ = "qfiga_cache";
    }
  }
}

std::shared_ptr<const CacheEntry> ReuseCache::get_or_build(
    const CacheKey& key, const MultiBlockVolume& domain) {
  const std::string hash = key.hash();
  std::lock_guard<std::mutex> lock(mutex_);
  const auto it = memory_.find(hash);
  if (it != memory_.end()) return it->second;

  const std::filesystem::path bin = dir_ / (hash + ".bin");
  const std::filesystem::path manifest = dir_ / (hash + ".manifest.json");
  try {
    if (auto loaded = load_entry(key, bin)) {
      auto entry = std::make_shared<CacheEntry>(std::move(*loaded));
      ++loads_;
      memory_.emplace(hash, entry);
      return entry;
    }
  } catch (const std::exception& e) {
    std::cerr << "[qfiga] warning: stale or unreadable cache file " << bin
              << " (" << e.what() << "); rebuilding\n";
  }
  auto entry = std::make_shared<CacheEntry>(build_cache_entry(key, domain));
  ++builds_;
  try {
    std::filesystem::create_directories(dir_);
    save_entry(*entry, bin, manifest);
  } catch (const std::exception& e) {
    std::cerr << "[qfiga] warning: cache persistence failed (" << e.what()
              << "); continuing in memory\n";
  }
  memory_.emplace(hash, entry);
  return entry;
}

void ReuseCache::clear() {
  std::lock_guard<std::mutex> lock(mutex_);
  memory_.clear();
  if (std::filesystem::exists(dir_)) {
    for (const auto& f : std::filesystem::directory_iterator(dir_)) {
      const std::string name = f.path().filename().string();
      if (name.size() > 4 &&
          (name.ends_with(".bin") || name.ends_with(".manifest.json"))) {
        std::filesystem::remove(f.path());
      }
    }
  }
}

std::vector<std::string> ReuseCache::stored_keys() const {
  std::vector<std::string> out;
  if (!std::filesystem::exists(dir_)) return out;
  for (const auto& f : std::filesystem::directory_iterator(dir_)) {
    const std::string name = f.path().filename().string();
    if (name.ends_with(".bin")) out.push_back(name.substr(0, name.size() - 4));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace qfiga
