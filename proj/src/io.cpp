#include "mp/io.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>

namespace mp::io {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kGeomFormat = "mpp-geometry/1";
constexpr const char* kSolFormat = "mpp-solution/1";

[[noreturn]] void schema_error(const std::string& what) {
  fail(ErrorKind::Schema, "geometry/solution schema: " + what);
}

json parse_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) schema_error("malformed JSON document");
  return j;
}

const json& field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) schema_error(std::string("missing field '") + key + "'");
  return *it;
}

json vec2_to_json(const Vector2d& v) { return json::array({v[0], v[1]}); }

Vector2d vec2_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    schema_error(std::string(what) + " must be a pair of numbers");
  return {j[0].get<double>(), j[1].get<double>()};
}

json curve_to_json(const Curve& c) {
  json j;
  j["degree"] = c.kv.degree;
  j["knots"] = c.kv.knots;
  json pts = json::array();
  for (const auto& p : c.points) pts.push_back(vec2_to_json(p));
  j["points"] = pts;
  return j;
}

Curve curve_from_json(const json& j) {
  Curve c;
  const json& jd = field(j, "degree");
  if (!jd.is_number_integer()) schema_error("curve degree must be an integer");
  c.kv.degree = jd.get<int>();
  const json& jk = field(j, "knots");
  if (!jk.is_array()) schema_error("curve knots must be an array");
  for (const auto& k : jk) {
    if (!k.is_number()) schema_error("curve knots must be numbers");
    c.kv.knots.push_back(k.get<double>());
  }
  c.kv.validate();
  const json& jp = field(j, "points");
  if (!jp.is_array()) schema_error("curve points must be an array");
  for (const auto& p : jp) c.points.push_back(vec2_from_json(p, "curve point"));
  if (static_cast<int>(c.points.size()) != c.kv.num_basis())
    schema_error("curve point count does not match the knot vector");
  return c;
}

json quality_to_json(const QualityReport& q) {
  json j;
  j["winslow"] = q.winslow;
  j["winslow_degenerate"] = q.winslow_degenerate;
  j["area_multipatch"] = q.area_multipatch;
  j["interface_jump"] = q.interface_jump;
  j["boundary_orth"] = q.boundary_orth;
  j["detj_min_xi"] = q.detj_min_xi;
  j["detj_max_xi"] = q.detj_max_xi;
  j["detj_min_mu"] = q.detj_min_mu;
  j["detj_max_mu"] = q.detj_max_mu;
  j["detj_vertex_min"] = q.detj_vertex_min;
  j["detj_vertex_max"] = q.detj_vertex_max;
  j["negative_point_count"] = q.negative_point_count;
  return j;
}

QualityReport quality_from_json(const json& j) {
  QualityReport q;
  q.winslow = field(j, "winslow").get<double>();
  q.winslow_degenerate = field(j, "winslow_degenerate").get<bool>();
  q.area_multipatch = field(j, "area_multipatch").get<double>();
  q.interface_jump = field(j, "interface_jump").get<double>();
  q.boundary_orth = field(j, "boundary_orth").get<double>();
  q.detj_min_xi = field(j, "detj_min_xi").get<double>();
  q.detj_max_xi = field(j, "detj_max_xi").get<double>();
  q.detj_min_mu = field(j, "detj_min_mu").get<double>();
  q.detj_max_mu = field(j, "detj_max_mu").get<double>();
  q.detj_vertex_min = field(j, "detj_vertex_min").get<double>();
  q.detj_vertex_max = field(j, "detj_vertex_max").get<double>();
  q.negative_point_count = field(j, "negative_point_count").get<int>();
  return q;
}

json coeffs_to_json(const Eigen::MatrixX2d& c) {
  json rows = json::array();
  for (int i = 0; i < c.rows(); ++i)
    rows.push_back(json::array({c(i, 0), c(i, 1)}));
  return rows;
}

Eigen::MatrixX2d coeffs_from_json(const json& j, const char* what) {
  if (!j.is_array()) schema_error(std::string(what) + " must be an array");
  Eigen::MatrixX2d c(static_cast<int>(j.size()), 2);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vector2d p = vec2_from_json(j[i], what);
    c.row(static_cast<int>(i)) = p.transpose();
  }
  return c;
}

}  // namespace

GeometryFile parse_geometry(const std::string& text) {
  const json j = parse_json(text);
  if (!j.is_object()) schema_error("top level must be an object");
  if (field(j, "format").get<std::string>() != kGeomFormat)
    schema_error("unknown geometry format version '" +
                 field(j, "format").get<std::string>() + "'");
  GeometryFile g;
  const json& jv = field(j, "vertices");
  if (!jv.is_array() || jv.size() < 4) schema_error("vertices must list >= 4 points");
  for (const auto& v : jv) g.raw.vertices.push_back(vec2_from_json(v, "vertex"));
  const int nv = static_cast<int>(g.raw.vertices.size());

  const json& jp = field(j, "patches");
  if (!jp.is_array() || jp.empty()) schema_error("patches must be a nonempty array");
  for (const auto& p : jp) {
    if (!p.is_array() || p.size() != 4) schema_error("patch must list 4 vertex ids");
    std::array<int, 4> ids{};
    for (int k = 0; k < 4; ++k) {
      if (!p[k].is_number_integer()) schema_error("patch vertex id must be an integer");
      ids[k] = p[k].get<int>();
      if (ids[k] < 0 || ids[k] >= nv)
        schema_error("patch vertex id " + std::to_string(ids[k]) + " out of range");
    }
    g.raw.patches.push_back(ids);
  }

  const json& js = field(j, "sides");
  if (!js.is_array() || js.empty()) schema_error("sides must be a nonempty array");
  for (const auto& s : js) {
    if (!s.is_array() || s.size() < 2) schema_error("side must chain >= 2 vertex ids");
    std::vector<int> chain;
    for (const auto& v : s) {
      if (!v.is_number_integer()) schema_error("side vertex id must be an integer");
      const int id = v.get<int>();
      if (id < 0 || id >= nv)
        schema_error("side vertex id " + std::to_string(id) + " out of range");
      chain.push_back(id);
    }
    g.raw.sides.push_back(std::move(chain));
  }

  if (j.contains("outer_edges")) {
    const json& jo = j["outer_edges"];
    if (!jo.is_array()) schema_error("outer_edges must be an array of [patch, edge]");
    for (const auto& e : jo) {
      if (!e.is_array() || e.size() != 2) schema_error("outer_edges entry must be a pair");
      g.raw.outer_edges[e[0].get<int>()] = e[1].get<int>();
    }
  }
  if (j.contains("target")) {
    const std::string t = j["target"].get<std::string>();
    if (t == "polygon")
      g.target = ControlMap::Target::polygon;
    else if (t == "unit_disc")
      g.target = ControlMap::Target::unit_disc;
    else
      schema_error("unknown target '" + t + "'");
  }

  const json& jc = field(j, "correspondences");
  if (!jc.is_array() || jc.empty())
    schema_error("correspondences must be a nonempty array");
  for (const auto& entry : jc) {
    const std::string name = field(entry, "name").get<std::string>();
    const json& sides = field(entry, "sides");
    if (!sides.is_array() || sides.size() != g.raw.sides.size())
      schema_error("correspondence '" + name + "' must give one curve per side");
    BoundaryCorrespondence F;
    for (const auto& c : sides) F.sides.push_back(curve_from_json(c));
    g.correspondences.emplace_back(name, std::move(F));
  }
  return g;
}

std::string write_geometry(const GeometryFile& g) {
  json j;
  j["format"] = kGeomFormat;
  json jv = json::array();
  for (const auto& v : g.raw.vertices) jv.push_back(vec2_to_json(v));
  j["vertices"] = jv;
  json jp = json::array();
  for (const auto& p : g.raw.patches) jp.push_back(json::array({p[0], p[1], p[2], p[3]}));
  j["patches"] = jp;
  json js = json::array();
  for (const auto& s : g.raw.sides) js.push_back(json(s));
  j["sides"] = js;
  if (!g.raw.outer_edges.empty()) {
    json jo = json::array();
    for (const auto& [p, e] : g.raw.outer_edges) jo.push_back(json::array({p, e}));
    j["outer_edges"] = jo;
  }
  if (g.target)
    j["target"] = *g.target == ControlMap::Target::polygon ? "polygon" : "unit_disc";
  json jc = json::array();
  for (const auto& [name, F] : g.correspondences) {
    json entry;
    entry["name"] = name;
    json sides = json::array();
    for (const auto& c : F.sides) sides.push_back(curve_to_json(c));
    entry["sides"] = sides;
    jc.push_back(entry);
  }
  j["correspondences"] = jc;
  return j.dump(2) + "\n";
}

const BoundaryCorrespondence& find_correspondence(const GeometryFile& g,
                                                  const std::string& name) {
  require(!g.correspondences.empty(), ErrorKind::Input,
          "geometry file has no boundary correspondences");
  if (name.empty()) return g.correspondences.front().second;
  for (const auto& [n, F] : g.correspondences)
    if (n == name) return F;
  fail(ErrorKind::Input, "no boundary correspondence named '" + name + "'");
}

std::string content_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<PatchSpaceDesc> describe_space(const MultipatchSpace& space) {
  std::vector<PatchSpaceDesc> out;
  for (const auto& b : space.bases) {
    PatchSpaceDesc d;
    d.degree_u = b.kv_u.degree;
    d.degree_v = b.kv_v.degree;
    d.knots_u = b.kv_u.knots;
    d.knots_v = b.kv_v.knots;
    out.push_back(std::move(d));
  }
  return out;
}

MultipatchSpace space_from_desc(std::shared_ptr<const Quadrangulation> topo,
                                const std::vector<PatchSpaceDesc>& desc) {
  require(static_cast<int>(desc.size()) == topo->num_patches(), ErrorKind::Schema,
          "solution space description does not match the covering's patch count");
  std::vector<TensorBasis> bases;
  for (const auto& d : desc) {
    TensorBasis tb;
    tb.kv_u = {d.degree_u, d.knots_u};
    tb.kv_v = {d.degree_v, d.knots_v};
    tb.kv_u.validate();
    tb.kv_v.validate();
    bases.push_back(std::move(tb));
  }
  return build_space(std::move(topo), std::move(bases));
}

SolutionFile parse_solution(const std::string& text) {
  const json j = parse_json(text);
  if (!j.is_object()) schema_error("top level must be an object");
  if (field(j, "format").get<std::string>() != kSolFormat)
    schema_error("unknown solution format version '" +
                 field(j, "format").get<std::string>() + "'");
  SolutionFile s;
  s.geometry_hash = field(j, "geometry_hash").get<std::string>();
  for (const auto& d : field(j, "space")) {
    PatchSpaceDesc pd;
    pd.degree_u = field(d, "degree_u").get<int>();
    pd.degree_v = field(d, "degree_v").get<int>();
    pd.knots_u = field(d, "knots_u").get<std::vector<double>>();
    pd.knots_v = field(d, "knots_v").get<std::vector<double>>();
    s.space.push_back(std::move(pd));
  }
  s.x = coeffs_from_json(field(j, "x"), "x control point");
  if (j.contains("s")) {
    s.s = coeffs_from_json(j["s"], "s control point");
    s.s_identity_boundary = field(j, "s_identity_boundary").get<bool>();
  }
  if (j.contains("r")) s.r = coeffs_from_json(j["r"], "r control point");
  if (j.contains("provenance")) {
    for (const auto& [k, v] : j["provenance"].items())
      s.provenance.emplace_back(k, v.get<std::string>());
  }
  if (j.contains("quality")) s.quality = quality_from_json(j["quality"]);
  return s;
}

std::string write_solution(const SolutionFile& s) {
  json j;
  j["format"] = kSolFormat;
  j["geometry_hash"] = s.geometry_hash;
  json sp = json::array();
  for (const auto& d : s.space) {
    json pd;
    pd["degree_u"] = d.degree_u;
    pd["degree_v"] = d.degree_v;
    pd["knots_u"] = d.knots_u;
    pd["knots_v"] = d.knots_v;
    sp.push_back(pd);
  }
  j["space"] = sp;
  j["x"] = coeffs_to_json(s.x);
  if (s.s) {
    j["s"] = coeffs_to_json(*s.s);
    j["s_identity_boundary"] = s.s_identity_boundary;
  }
  if (s.r) j["r"] = coeffs_to_json(*s.r);
  if (!s.provenance.empty()) {
    json pv = json::object();
    for (const auto& [k, v] : s.provenance) pv[k] = v;
    j["provenance"] = pv;
  }
  if (s.quality) j["quality"] = quality_to_json(*s.quality);
  return j.dump(2) + "\n";
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.8g", v);
  return buf;
}

void append_polyline(std::string& out, const std::vector<Vector2d>& pts) {
  out += "<polyline points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) out += ' ';
    out += fmt(pts[i][0]) + "," + fmt(-pts[i][1]);  // SVG y axis points down
  }
  out += "\"/>\n";
}

}  // namespace

std::string export_svg(const GeometryMap& map, int isolines_per_patch,
                       int samples_per_isoline) {
  require(isolines_per_patch >= 0 && samples_per_isoline >= 2, ErrorKind::Input,
          "export_svg: need >= 2 samples per isoline");
  const int np = map.space->topo->num_patches();
  const int ns = samples_per_isoline;
  std::vector<std::vector<Vector2d>> iso, bnd;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  auto sample = [&](int p, bool udir, double c) {
    std::vector<Vector2d> pts;
    for (int i = 0; i < ns; ++i) {
      const double t = double(i) / (ns - 1);
      const Vector2d mu = udir ? Vector2d(t, c) : Vector2d(c, t);
      const Vector2d x = map.eval(p, mu, 0).x;
      xmin = std::min(xmin, x[0]);
      xmax = std::max(xmax, x[0]);
      ymin = std::min(ymin, -x[1]);
      ymax = std::max(ymax, -x[1]);
      pts.push_back(x);
    }
    return pts;
  };
  for (int p = 0; p < np; ++p) {
    for (int i = 1; i <= isolines_per_patch; ++i) {
      const double c = double(i) / (isolines_per_patch + 1);
      iso.push_back(sample(p, true, c));
      iso.push_back(sample(p, false, c));
    }
    bnd.push_back(sample(p, true, 0.0));
    bnd.push_back(sample(p, true, 1.0));
    bnd.push_back(sample(p, false, 0.0));
    bnd.push_back(sample(p, false, 1.0));
  }
  const double w = xmax - xmin, h = ymax - ymin;
  const double mx = 0.02 * std::max(w, h), diag = std::sqrt(w * w + h * h);
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" + fmt(xmin - mx) + " " +
         fmt(ymin - mx) + " " + fmt(w + 2 * mx) + " " + fmt(h + 2 * mx) + "\">\n";
  out += "<g fill=\"none\" stroke=\"#5577aa\" stroke-width=\"" + fmt(0.002 * diag) +
         "\">\n";
  for (const auto& pl : iso) append_polyline(out, pl);
  out += "</g>\n<g fill=\"none\" stroke=\"#000000\" stroke-width=\"" + fmt(0.006 * diag) +
         "\">\n";
  for (const auto& pl : bnd) append_polyline(out, pl);
  out += "</g>\n</svg>\n";
  return out;
}

std::string export_grid(const GeometryMap& map, int n) {
  require(n >= 2, ErrorKind::Input, "export_grid: need n >= 2 samples per direction");
  std::string out = "patch mu1 mu2 x1 x2 det_dmu\n";
  char buf[160];
  const int np = map.space->topo->num_patches();
  for (int p = 0; p < np; ++p)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Vector2d mu(double(i) / (n - 1), double(j) / (n - 1));
        const MapJet jet = map.eval(p, mu, 1);
        std::snprintf(buf, sizeof buf, "%d %.17g %.17g %.17g %.17g %.17g\n", p, mu[0],
                      mu[1], jet.x[0], jet.x[1], jet.Jmu.determinant());
        out += buf;
      }
  return out;
}

}  // namespace mp::io
