#pragma once

// JSON and blob serialization plus a schema-checking reader for scenarios.

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qrflab/manifold.hpp"
#include "qrflab/pathint.hpp"
#include "qrflab/qrf.hpp"
#include "qrflab/qstate.hpp"

namespace qrflab {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct SchemaError : std::runtime_error {
  SchemaError(const std::string& what, int line) : std::runtime_error(what), line(line) {}
  int line;
};

struct Document {
  std::string path;
  std::string text;
  json root;
};

inline int line_at(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

inline Document parse_document(std::string text, std::string path = "<string>") {
  Document d{std::move(path), std::move(text), {}};
  try {
    d.root = json::parse(d.text);
  } catch (const json::parse_error& e) {
    throw SchemaError("malformed JSON: " + std::string(e.what()), line_at(d.text, e.byte ? e.byte - 1 : 0));
  }
  if (!d.root.is_object()) throw SchemaError("scenario root must be an object", 1);
  return d;
}

inline Document load_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path, 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_document(ss.str(), path);
}

/// View of a JSON object that records which keys were read and reports
/// errors with the line of the offending key.
class Reader {
 public:
  Reader(const Document& doc, const json& node, std::string where, std::size_t offset = 0)
      : doc_(&doc), node_(&node), where_(std::move(where)), offset_(offset) {
    if (!node.is_object()) fail(where_ + ": expected an object", offset_);
  }

  const json& raw() const { return *node_; }
  const std::string& where() const { return where_; }
  bool has(const std::string& key) const { return node_->contains(key); }

  [[noreturn]] void fail(const std::string& msg, std::size_t offset) const {
    throw SchemaError(doc_->path + ":" + std::to_string(line_at(doc_->text, offset)) + ": " + msg,
                      line_at(doc_->text, offset));
  }

  std::size_t key_offset(const std::string& key) const {
    const auto pos = doc_->text.find("\"" + key + "\"", offset_);
    return pos == std::string::npos ? offset_ : pos;
  }

  template <class T>
  T get(const std::string& key) const {
    seen_.insert(key);
    if (!node_->contains(key)) fail(where_ + ": missing required key \"" + key + "\"", offset_);
    return convert<T>(key);
  }

  template <class T>
  T get(const std::string& key, const T& fallback) const {
    seen_.insert(key);
    if (!node_->contains(key)) return fallback;
    return convert<T>(key);
  }

  Reader object(const std::string& key) const {
    seen_.insert(key);
    if (!node_->contains(key)) fail(where_ + ": missing required key \"" + key + "\"", offset_);
    return Reader(*doc_, node_->at(key), where_ + "." + key, key_offset(key));
  }

  std::vector<Reader> objects(const std::string& key) const {
    seen_.insert(key);
    if (!node_->contains(key)) fail(where_ + ": missing required key \"" + key + "\"", offset_);
    const json& arr = node_->at(key);
    if (!arr.is_array()) fail(where_ + "." + key + ": expected an array", key_offset(key));
    std::vector<Reader> out;
    std::size_t off = key_offset(key);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      off = doc_->text.find('{', off + 1);
      out.emplace_back(*doc_, arr[i], where_ + "." + key + "[" + std::to_string(i) + "]",
                       off == std::string::npos ? key_offset(key) : off);
    }
    return out;
  }

  Point point(const std::string& key) const {
    const auto v = get<std::vector<double>>(key);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  Point point(const std::string& key, int dim) const {
    const Point p = point(key);
    if (p.size() != dim) fail(where_ + "." + key + ": expected " + std::to_string(dim) + " components", key_offset(key));
    return p;
  }

  /// Rejects keys that were never read.
  void finish(const std::set<std::string>& also_allowed = {}) const {
    for (auto it = node_->begin(); it != node_->end(); ++it) {
      if (!seen_.count(it.key()) && !also_allowed.count(it.key())) {
        fail(where_ + ": unknown key \"" + it.key() + "\"", key_offset(it.key()));
      }
    }
  }

 private:
  template <class T>
  T convert(const std::string& key) const {
    try {
      return node_->at(key).get<T>();
    } catch (const json::exception&) {
      fail(where_ + "." + key + ": wrong type", key_offset(key));
    }
  }

  const Document* doc_;
  const json* node_;
  std::string where_;
  std::size_t offset_;
  mutable std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Charts and metrics

inline json to_json(const Point& p) { return json(std::vector<double>(p.data(), p.data() + p.size())); }

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[j] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

inline json to_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline json chart_to_json(const Chart& ch) {
  return json{{"lo", to_json(ch.lo())}, {"hi", to_json(ch.hi())}, {"shape", ch.shape()}};
}

inline Chart chart_from(const Reader& r, bool spacetime = true) {
  const Point lo = r.point("lo"), hi = r.point("hi");
  const auto shape = r.get<std::vector<int>>("shape");
  r.finish();
  if (lo.size() != hi.size() || static_cast<std::size_t>(lo.size()) != shape.size())
    r.fail(r.where() + ": lo, hi and shape must have equal length", r.key_offset("shape"));
  try {
    return spacetime ? Chart::spacetime(lo, hi, shape) : Chart(lo, hi, shape);
  } catch (const std::exception& e) {
    r.fail(r.where() + ": " + e.what(), r.key_offset("shape"));
  }
}

inline MetricKind metric_kind_from(const Reader& r, int dim) {
  const auto kind = r.get<std::string>("kind");
  MetricKind out;
  if (kind == "minkowski") {
    out = Minkowski{};
  } else if (kind == "newtonian_point_mass") {
    out = NewtonianPointMass{r.get<double>("M_src"), r.point("R_src", dim - 1), r.get<double>("c", 1.0),
                             r.get<double>("G", 1.0)};
  } else if (kind == "uniform_weak_field") {
    out = UniformWeakField{r.get<double>("g_acc"), r.get<double>("c", 1.0), r.get<int>("axis", 1)};
  } else if (kind == "grid_sampled") {
    const auto comps = r.get<std::vector<std::vector<double>>>("components");
    GridSampled gs;
    for (const auto& c : comps) {
      if (c.size() != static_cast<std::size_t>(dim * dim))
        r.fail(r.where() + ".components: each entry needs dim*dim values", r.key_offset("components"));
      gs.samples.push_back(Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(c.data(), dim, dim));
    }
    out = gs;
  } else {
    r.fail(r.where() + ": unknown metric kind \"" + kind + "\"", r.key_offset("kind"));
  }
  r.finish();
  return out;
}

inline MetricPtr metric_from(const Reader& r, const Chart& ch) {
  const MetricKind k = metric_kind_from(r, ch.dim());
  try {
    return MetricField::make(ch, k);
  } catch (const std::exception& e) {
    r.fail(r.where() + ": " + e.what(), r.key_offset("kind"));
  }
}

inline json metric_to_json(const MetricField& g) {
  json j;
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Minkowski>) {
          j = {{"kind", "minkowski"}};
        } else if constexpr (std::is_same_v<K, NewtonianPointMass>) {
          j = {{"kind", "newtonian_point_mass"}, {"M_src", k.mass}, {"R_src", to_json(k.source)}, {"c", k.c}, {"G", k.G}};
        } else if constexpr (std::is_same_v<K, UniformWeakField>) {
          j = {{"kind", "uniform_weak_field"}, {"g_acc", k.g_acc}, {"c", k.c}, {"axis", k.axis}};
        } else if constexpr (std::is_same_v<K, GridSampled>) {
          json comps = json::array();
          for (const auto& m : k.samples) {
            std::vector<double> flat;
            for (Eigen::Index a = 0; a < m.rows(); ++a)
              for (Eigen::Index b = 0; b < m.cols(); ++b) flat.push_back(m(a, b));
            comps.push_back(flat);
          }
          j = {{"kind", "grid_sampled"}, {"components", comps}};
        } else {
          throw Unsupported("metric_to_json: function metrics are not serializable");
        }
      },
      g.kind());
  return j;
}

// ---------------------------------------------------------------------------
// Amplitude blobs: little-endian float64, interleaved re/im

inline void write_blob(const fs::path& p, const cplx* data, std::size_t n) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  static_assert(sizeof(double) == 8 && std::endian::native == std::endian::little);
  for (std::size_t k = 0; k < n; ++k) {
    const double v[2] = {data[k].real(), data[k].imag()};
    out.write(reinterpret_cast<const char*>(v), sizeof v);
  }
}

inline void write_blob(const fs::path& p, const CVector& v) { write_blob(p, v.data(), static_cast<std::size_t>(v.size())); }

inline CVector read_blob(const fs::path& p, std::size_t n) {
  std::ifstream in(p, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  if (static_cast<std::size_t>(in.tellg()) != 16 * n)
    throw IncompatibleState("blob " + p.string() + " does not hold " + std::to_string(n) + " amplitudes");
  in.seekg(0);
  CVector v(n);
  for (std::size_t k = 0; k < n; ++k) {
    double d[2];
    in.read(reinterpret_cast<char*>(d), sizeof d);
    v[k] = cplx(d[0], d[1]);
  }
  return v;
}

/// Writes the state document and its blobs into dir; blob paths are relative.
inline json state_to_json(const SuperposedState& s, const fs::path& dir, const std::string& prefix = "state") {
  json branches = json::array();
  for (const auto& b : s.branches()) {
    json jb{{"label", b.label}, {"c", to_json(b.c)}, {"chart", chart_to_json(b.g->chart())}, {"metric", metric_to_json(*b.g)}};
    if (b.psi_P) {
      const std::string name = prefix + "_" + std::to_string(b.label) + "_P.bin";
      write_blob(dir / name, b.psi_P->amps());
      jb["psi_P"] = name;
    }
    if (b.phi_M) {
      const std::string name = prefix + "_" + std::to_string(b.label) + "_M.bin";
      write_blob(dir / name, b.phi_M->amps());
      jb["phi_M"] = name;
    }
    branches.push_back(jb);
  }
  return json{{"branches", branches}, {"frame_tag", s.frame_tag() == FrameTag::R ? "R" : "P"}};
}

inline SuperposedState state_from(const Reader& r, const fs::path& dir) {
  std::vector<Branch> bs;
  for (const auto& rb : r.objects("branches")) {
    Branch b;
    b.label = rb.get<int>("label");
    const auto c = rb.get<std::vector<double>>("c");
    if (c.size() != 2) rb.fail(rb.where() + ".c: expected [re, im]", rb.key_offset("c"));
    b.c = cplx(c[0], c[1]);
    const Chart ch = chart_from(rb.object("chart"));
    b.g = metric_from(rb.object("metric"), ch);
    if (rb.has("psi_P")) b.psi_P = GridWavefunction(b.g, read_blob(dir / rb.get<std::string>("psi_P"), ch.num_sites()));
    if (rb.has("phi_M")) b.phi_M = GridWavefunction(b.g, read_blob(dir / rb.get<std::string>("phi_M"), ch.num_sites()));
    rb.finish();
    bs.push_back(std::move(b));
  }
  const auto tag = r.get<std::string>("frame_tag", "R");
  r.finish();
  return SuperposedState(std::move(bs), tag == "P" ? FrameTag::P : FrameTag::R);
}

// ---------------------------------------------------------------------------
// Reports

inline void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

inline void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline json eep_to_json(const EepReport& rep) {
  json branches = json::array();
  for (const auto& b : rep.branches) {
    json entries = json::array();
    for (const auto& e : b.entries) {
      entries.push_back({{"center", to_json(e.center)},
                         {"tau", e.tau},
                         {"metric_residual", e.metric_residual},
                         {"dmetric_residual", e.dmetric_residual},
                         {"dmetric_residual_half", e.dmetric_residual_half},
                         {"curvature_scalar", e.curvature_scalar},
                         {"interp_defect", e.interp_defect},
                         {"pass", e.pass}});
    }
    branches.push_back({{"label", b.label}, {"entries", entries}});
  }
  return json{{"mode", rep.mode == TransformMode::static_site ? "static" : "geodesic"},
              {"h", rep.h},
              {"max_metric_residual", rep.max_metric_residual()},
              {"max_dmetric_residual", rep.max_dmetric_residual()},
              {"branches", branches},
              {"pass", rep.pass}};
}

inline json lattice_to_json(const Lattice& lat) {
  return json{{"chart", chart_to_json(lat.chart)}, {"n_slices", lat.n_slices}, {"delta", lat.delta},
              {"mass", lat.mass},                  {"hbar", lat.hbar},         {"c", lat.c}};
}

/// Row-major complex matrix blob plus a JSON header next to it.
inline void write_kernel(const Kernel& k, const fs::path& dir, const std::string& name = "kernel") {
  const Eigen::Matrix<cplx, -1, -1, Eigen::RowMajor> rm = k.matrix;
  write_blob(dir / (name + ".bin"), rm.data(), static_cast<std::size_t>(rm.size()));
  write_json(dir / (name + ".json"), json{{"rows", rm.rows()},
                                          {"cols", rm.cols()},
                                          {"layout", "row-major complex128 little-endian"},
                                          {"tau", k.tau},
                                          {"lattice", lattice_to_json(k.lattice)},
                                          {"truncation_defect", k.truncation_defect},
                                          {"truncation_warning", k.truncation_warning}});
}

}  // namespace qrflab
