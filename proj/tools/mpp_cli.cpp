// Command-line front end: solve / reparam / metrics / study / plot.
#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mp/control.hpp"
#include "mp/io.hpp"
#include "mp/metrics.hpp"
#include "mp/samples.hpp"

namespace {

using namespace mp;

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::Input, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::Input, "cannot write '" + path + "'");
  f << text;
}

using Prov = std::vector<std::pair<std::string, std::string>>;

std::string fmtd(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

void write_provenance(const std::string& out_path, const Prov& prov) {
  if (out_path.empty()) return;
  std::string text;
  for (const auto& [k, v] : prov) text += k + " = " + v + "\n";
  spit(out_path + ".prov", text);
}

void write_trace(const std::string& path, const SolveReport& rep) {
  std::string text = "iter residual update step\n";
  for (const auto& r : rep.trace)
    text += std::to_string(r.iter) + " " + fmtd(r.residual_norm) + " " +
            fmtd(r.update_norm) + " " + fmtd(r.step) + "\n";
  spit(path, text);
}

// Shared solver / discretisation options.
struct Options {
  std::string scheme = "weakform";
  std::string linearisation = "newton";
  int degree = 2;
  int refine = 0;
  int levels = 4;
  double mu = -1.0;
  double eps = 1e-4;
  bool eps_continuation = true;
  double eta = 10.0;
  double kappa = 0.0;  // vertex-blend decay; 0 disables
  double k = 1.0;      // mechanism exponent
  double nu1 = 1.0, nu2 = 0.01;
  int quad_order = 0;
  int dense_order = 0;
  std::string out, svg, correspondence, geom_path;
  int threads = 1;
  unsigned seed = 0;
  std::string variant = "q";
  double layer_frac = 72.0;
  double layer_target = 0.0;  // 0 -> mean boundary speed / layer_frac
  bool normalised = true;
  std::vector<double> monitor_centre{0.5, 0.5};

  SolverConfig config() const {
    SolverConfig cfg;
    if (mu > 0) {
      cfg.mu_fp = mu;
      cfg.mu_newton = mu;
    }
    cfg.eps_weak = eps;
    cfg.eps_continuation = eps_continuation;
    cfg.eta_dg = eta;
    cfg.quad_order = quad_order;
    return cfg;
  }

  Scheme scheme_enum() const {
    if (scheme == "c0dg") return Scheme::c0dg;
    if (scheme == "hessian") return Scheme::hessian;
    if (scheme == "rotfree") return Scheme::rotfree;
    if (scheme == "weakform") return Scheme::weakform;
    if (scheme == "winslow") return Scheme::winslow;
    fail(ErrorKind::Input, "unknown scheme '" + scheme + "'");
  }
  Linearisation lin_enum() const {
    if (linearisation == "newton") return Linearisation::newton;
    if (linearisation == "fixed-point") return Linearisation::fixed_point;
    fail(ErrorKind::Input, "unknown linearisation '" + linearisation + "'");
  }

  void common_prov(Prov& p) const {
    p.emplace_back("scheme", scheme);
    p.emplace_back("linearisation", linearisation);
    p.emplace_back("degree", std::to_string(degree));
    p.emplace_back("refine", std::to_string(refine));
    p.emplace_back("eps", fmtd(eps));
    p.emplace_back("eps_continuation", eps_continuation ? "true" : "false");
    p.emplace_back("eta", fmtd(eta));
    p.emplace_back("quad_order", std::to_string(quad_order));
    p.emplace_back("threads", std::to_string(threads));
    p.emplace_back("seed", std::to_string(seed));
  }
};

void add_common_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--scheme", o.scheme)
      ->check(CLI::IsMember({"c0dg", "hessian", "rotfree", "weakform", "winslow"}));
  cmd->add_option("--linearisation", o.linearisation)
      ->check(CLI::IsMember({"newton", "fixed-point"}));
  cmd->add_option("--degree", o.degree)->check(CLI::Range(1, 8));
  cmd->add_option("--refine", o.refine)->check(CLI::Range(0, 10));
  cmd->add_option("--mu", o.mu);
  cmd->add_option("--eps", o.eps);
  cmd->add_flag("--eps-continuation,!--no-eps-continuation", o.eps_continuation);
  cmd->add_option("--eta", o.eta);
  cmd->add_option("--kappa", o.kappa);
  cmd->add_option("--k", o.k);
  cmd->add_option("--nu1", o.nu1);
  cmd->add_option("--nu2", o.nu2);
  cmd->add_option("--quad-order", o.quad_order);
  cmd->add_option("--dense-order", o.dense_order);
  cmd->add_option("--out", o.out);
  cmd->add_option("--svg", o.svg);
  cmd->add_option("--correspondence", o.correspondence);
  cmd->add_option("--threads", o.threads)->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed);
}

struct LoadedGeometry {
  io::GeometryFile file;
  std::string hash;
  std::shared_ptr<const Quadrangulation> topo;
};

LoadedGeometry load_geometry(const std::string& path) {
  LoadedGeometry g;
  const std::string text = slurp(path);
  g.file = io::parse_geometry(text);
  g.hash = io::content_hash(text);
  g.topo = std::make_shared<Quadrangulation>(build_topology(g.file.raw));
  return g;
}

SpacePtr make_space(const LoadedGeometry& g, int degree, int refine) {
  MultipatchSpace s = build_uniform_space(g.topo, degree, 1);
  for (int i = 0; i < refine; ++i) s = refine_space(s);
  return std::make_shared<MultipatchSpace>(std::move(s));
}

std::string quality_text(const QualityReport& q) {
  std::string t;
  t += "winslow " + fmtd(q.winslow) + "\n";
  t += "winslow_degenerate " + std::string(q.winslow_degenerate ? "1" : "0") + "\n";
  t += "area_multipatch " + fmtd(q.area_multipatch) + "\n";
  t += "interface_jump " + fmtd(q.interface_jump) + "\n";
  t += "boundary_orth " + fmtd(q.boundary_orth) + "\n";
  t += "detj_min_xi " + fmtd(q.detj_min_xi) + "\n";
  t += "detj_max_xi " + fmtd(q.detj_max_xi) + "\n";
  t += "detj_min_mu " + fmtd(q.detj_min_mu) + "\n";
  t += "detj_max_mu " + fmtd(q.detj_max_mu) + "\n";
  t += "detj_vertex_min " + fmtd(q.detj_vertex_min) + "\n";
  t += "detj_vertex_max " + fmtd(q.detj_vertex_max) + "\n";
  t += "negative_point_count " + std::to_string(q.negative_point_count) + "\n";
  return t;
}

void emit_solution(const Options& o, const std::string& geom_hash, const GeometryMap& x,
                   const ControlMap* s, const Prov& prov) {
  io::SolutionFile sol;
  sol.geometry_hash = geom_hash;
  sol.space = io::describe_space(*x.space);
  sol.x = x.coeffs;
  if (s) {
    sol.s = s->map.coeffs;
    sol.s_identity_boundary = s->identity_boundary;
  }
  sol.provenance = prov;
  sol.quality = quality_report(x, s ? &s->map : nullptr, o.quad_order);
  if (!o.out.empty()) {
    spit(o.out, io::write_solution(sol));
    write_provenance(o.out, prov);
  } else {
    std::cout << io::write_solution(sol);
  }
  if (!o.svg.empty()) spit(o.svg, io::export_svg(x, 7, 65));
}

int run_solve(const Options& o) {
  const LoadedGeometry g = load_geometry(o.geom_path);
  const BoundaryCorrespondence& F = io::find_correspondence(g.file, o.correspondence);
  SpacePtr space = make_space(g, o.degree, o.refine);
  SolverConfig cfg = o.config();
  cfg.throw_on_fail = false;
  SolveReport rep;
  const GeometryMap x = solve_scheme(o.scheme_enum(), o.lin_enum(), space, F, cfg, &rep);
  Prov prov;
  prov.emplace_back("command", "solve");
  prov.emplace_back("geometry", o.geom_path);
  prov.emplace_back("geometry_hash", g.hash);
  if (!o.correspondence.empty()) prov.emplace_back("correspondence", o.correspondence);
  o.common_prov(prov);
  prov.emplace_back("iterations", std::to_string(rep.iterations));
  prov.emplace_back("final_residual", fmtd(rep.final_residual));
  prov.emplace_back("converged", rep.converged ? "true" : "false");
  if (!rep.converged) {
    const std::string trace_path = (o.out.empty() ? std::string("mpp") : o.out) + ".trace";
    write_trace(trace_path, rep);
    emit_solution(o, g.hash, x, nullptr, prov);
    fail(ErrorKind::Convergence,
         "solve did not converge; partial trace written to " + trace_path);
  }
  emit_solution(o, g.hash, x, nullptr, prov);
  return 0;
}

// Rebuild (x, s) from a solution file over its own geometry.
struct LoadedSolution {
  io::SolutionFile file;
  SpacePtr space;
  GeometryMap x;
  ControlMap s;
};

LoadedSolution load_solution(const std::string& sol_path, const LoadedGeometry& g) {
  LoadedSolution L;
  L.file = io::parse_solution(slurp(sol_path));
  require(L.file.geometry_hash == g.hash, ErrorKind::Input,
          "solution was computed for a different geometry file (hash mismatch)");
  L.space = std::make_shared<MultipatchSpace>(io::space_from_desc(g.topo, L.file.space));
  require(L.file.x.rows() == L.space->dim, ErrorKind::Schema,
          "solution control net does not match its space description");
  L.x = GeometryMap(L.space, L.file.x);
  if (L.file.s) {
    require(L.file.s->rows() == L.space->dim, ErrorKind::Schema,
            "controlmap control net does not match the space description");
    L.s = ControlMap{GeometryMap(L.space, *L.file.s), L.file.s_identity_boundary, {}, {}};
  } else {
    L.s = identity_controlmap(L.space);
  }
  return L;
}

int run_reparam(const Options& o, const std::string& sol_path,
                const std::vector<std::string>& modes) {
  require(!o.geom_path.empty(), ErrorKind::Input, "reparam requires --geom");
  require(!modes.empty(), ErrorKind::Input, "reparam requires at least one --mode");
  const LoadedGeometry g = load_geometry(o.geom_path);
  LoadedSolution L = load_solution(sol_path, g);
  const GeometryMap x_ref = L.x;
  const QualityReport before = quality_report(x_ref, nullptr, o.quad_order);

  SolverConfig cfg = o.config();
  GeometryMap x = L.x;
  ControlMap s = L.s;
  for (const std::string& mode : modes) {
    auto ref = std::make_shared<const ControlMap>(s);
    if (mode == "interface-removal") {
      Diffusivity D = diffusivity_interface_removal(g.topo, ref, o.normalised);
      if (o.kappa > 0) D = regularise_vertex(std::move(D), o.kappa, g.topo, ref);
      s = solve_control_diffusion(L.space, D, ref.get(), cfg);
      x = reparameterise_map(x_ref, s, {}, cfg);
    } else if (mode == "homogenise-sigma") {
      auto [xn, sn] = solve_coupled(x, s, diffusivity_identity(),
                                    diffusivity_homogenisation(o.k, false), cfg);
      x = std::move(xn);
      s = std::move(sn);
    } else if (mode == "homogenise-omega") {
      x = solve_weak_form_controlled(x, s, diffusivity_homogenisation(o.k, true), cfg);
    } else if (mode == "adapt") {
      const Vector2d c(o.monitor_centre[0], o.monitor_centre[1]);
      MonitorField f;
      f.value = [c](const Vector2d& p) { return (p - c).squaredNorm(); };
      f.gradient = [c](const Vector2d& p) { return Vector2d(2.0 * (p - c)); };
      f.hessian = [](const Vector2d&) { return Matrix2d(2.0 * Matrix2d::Identity()); };
      auto [xn, sn] = solve_coupled(x, s, diffusivity_identity(),
                                    diffusivity_adaptation(f, o.nu1, o.nu2, o.k), cfg);
      x = std::move(xn);
      s = std::move(sn);
    } else if (mode == "boundary-orth") {
      s = boundary_orth_controlmap(x_ref, o.variant == "t" ? OrthVariant::t : OrthVariant::q,
                                   cfg);
      x = reparameterise_map(x_ref, s, {}, cfg);
    } else if (mode == "boundary-layer") {
      Diffusivity D = diffusivity_boundary_layer(g.topo);
      s = solve_control_diffusion(L.space, D, ref.get(), cfg);
      x = reparameterise_map(x_ref, s, {}, cfg);
    } else if (mode == "boundary-layer-orth") {
      const double target =
          o.layer_target > 0 ? o.layer_target : mean_boundary_speed(x) / o.layer_frac;
      s = boundary_layer_orthogonal(x, s, target, cfg);
      x = reparameterise_map(x_ref, s, {}, cfg);
    } else {
      fail(ErrorKind::Input, "unknown reparam mode '" + mode + "'");
    }
  }

  const QualityReport after = quality_report(x, &s.map, o.quad_order);
  std::string report;
  report += "L_Gamma_before " + fmtd(before.interface_jump) + "\n";
  report += "L_Gamma_after " + fmtd(after.interface_jump) + "\n";
  report += "L_Gamma_ratio " +
            fmtd(before.interface_jump > 0 ? after.interface_jump / before.interface_jump
                                           : 0.0) +
            "\n";
  report += "L_perp_before " + fmtd(before.boundary_orth) + "\n";
  report += "L_perp_after " + fmtd(after.boundary_orth) + "\n";
  report += "L_perp_ratio " +
            fmtd(before.boundary_orth > 0 ? after.boundary_orth / before.boundary_orth : 0.0) +
            "\n";
  report += "winslow_before " + fmtd(before.winslow) + "\n";
  report += "winslow_after " + fmtd(after.winslow) + "\n";
  std::cout << report;

  Prov prov;
  prov.emplace_back("command", "reparam");
  prov.emplace_back("solution", sol_path);
  prov.emplace_back("geometry", o.geom_path);
  prov.emplace_back("geometry_hash", g.hash);
  for (const auto& m : modes) prov.emplace_back("mode", m);
  prov.emplace_back("normalised", o.normalised ? "true" : "false");
  prov.emplace_back("kappa", fmtd(o.kappa));
  prov.emplace_back("k", fmtd(o.k));
  prov.emplace_back("nu1", fmtd(o.nu1));
  prov.emplace_back("nu2", fmtd(o.nu2));
  prov.emplace_back("variant", o.variant);
  o.common_prov(prov);
  if (!o.out.empty()) {
    Options eo = o;
    emit_solution(eo, g.hash, x, &s, prov);
    spit(o.out + ".report", report);
  } else if (!o.svg.empty()) {
    spit(o.svg, io::export_svg(x, 7, 65));
  }
  return 0;
}

int run_metrics(const Options& o, const std::string& sol_path) {
  require(!o.geom_path.empty(), ErrorKind::Input, "metrics requires --geom");
  const LoadedGeometry g = load_geometry(o.geom_path);
  const LoadedSolution L = load_solution(sol_path, g);
  const bool with_s = L.file.s.has_value();
  const QualityReport q =
      quality_report(L.x, with_s ? &L.s.map : nullptr, o.quad_order);
  std::string text = quality_text(q);
  const int dense = o.dense_order > 0 ? o.dense_order : 2 * max_degree(*L.space) + 3;
  const BijectivityReport b = bijectivity_report(L.x, dense);
  text += "dense_order " + std::to_string(dense) + "\n";
  text += "dense_det_min " + fmtd(b.det_min) + "\n";
  text += "dense_det_max " + fmtd(b.det_max) + "\n";
  text += "dense_negative_count " + std::to_string(b.negative_count) + "\n";
  if (!o.out.empty()) {
    spit(o.out, text);
    Prov prov;
    prov.emplace_back("command", "metrics");
    prov.emplace_back("solution", sol_path);
    prov.emplace_back("geometry", o.geom_path);
    prov.emplace_back("geometry_hash", g.hash);
    o.common_prov(prov);
    write_provenance(o.out, prov);
  } else {
    std::cout << text;
  }
  return 0;
}

int run_study(const Options& o) {
  const LoadedGeometry g = load_geometry(o.geom_path);
  const BoundaryCorrespondence& F = io::find_correspondence(g.file, o.correspondence);
  require(o.levels >= 2, ErrorKind::Input, "study requires --levels >= 2");
  SolverConfig cfg = o.config();
  const Scheme scheme = o.scheme_enum();
  const Linearisation lin = o.lin_enum();

  std::vector<GeometryMap> maps;
  SpacePtr space = make_space(g, o.degree, o.refine);
  for (int level = 0; level < o.levels; ++level) {
    if (level > 0) {
      SpacePtr fine = std::make_shared<MultipatchSpace>(refine_space(*space));
      GeometryMap warm(fine, prolong_coeffs(*space, *fine, maps.back().coeffs));
      space = fine;
      // Prolonged warm starts where the scheme supports an initial state.
      SolveReport rep;
      switch (scheme) {
        case Scheme::weakform:
          maps.push_back(solve_weak_form(warm, F, cfg, &rep));
          break;
        case Scheme::winslow:
          maps.push_back(minimise_winslow(warm, cfg, &rep));
          break;
        case Scheme::c0dg:
          maps.push_back(solve_c0dg(space, F, lin, cfg, &rep, &warm));
          break;
        default:
          maps.push_back(solve_scheme(scheme, lin, space, F, cfg, &rep));
      }
    } else {
      maps.push_back(solve_scheme(scheme, lin, space, F, cfg));
    }
    if (!o.out.empty()) {
      Prov prov;
      prov.emplace_back("command", "study");
      prov.emplace_back("geometry", o.geom_path);
      prov.emplace_back("geometry_hash", g.hash);
      prov.emplace_back("level", std::to_string(level));
      o.common_prov(prov);
      io::SolutionFile sol;
      sol.geometry_hash = g.hash;
      sol.space = io::describe_space(*maps.back().space);
      sol.x = maps.back().coeffs;
      sol.provenance = prov;
      sol.quality = quality_report(maps.back(), nullptr, o.quad_order);
      spit(o.out + ".level" + std::to_string(level) + ".json", io::write_solution(sol));
    }
  }

  // Self-increments between consecutive nested levels; the rate estimate uses
  // the last three levels.
  std::vector<double> inc;
  for (int l = 0; l + 1 < o.levels; ++l)
    inc.push_back(h1_distance(maps[l], maps[l + 1]));
  std::string table = "level dofs h1_increment kappa\n";
  for (int l = 0; l < o.levels; ++l) {
    table += std::to_string(l) + " " + std::to_string(maps[l].space->dim);
    table += l + 1 < o.levels ? " " + fmtd(inc[l]) : " -";
    table += l >= 1 && l + 1 < o.levels ? " " + fmtd(convergence_rate(inc[l - 1], inc[l]))
                                        : " -";
    table += "\n";
  }
  const double kappa_last = convergence_rate(inc[inc.size() - 2], inc.back());
  table += "kappa_last " + fmtd(kappa_last) + "\n";
  std::cout << table;
  if (!o.out.empty()) {
    spit(o.out + ".study", table);
    Prov prov;
    prov.emplace_back("command", "study");
    prov.emplace_back("geometry", o.geom_path);
    prov.emplace_back("geometry_hash", g.hash);
    prov.emplace_back("levels", std::to_string(o.levels));
    o.common_prov(prov);
    write_provenance(o.out, prov);
  }
  return 0;
}

int run_plot(const Options& o, const std::string& sol_path, int isolines, int samples) {
  require(!o.geom_path.empty(), ErrorKind::Input, "plot requires --geom");
  require(!o.out.empty() || !o.svg.empty(), ErrorKind::Input,
          "plot requires --out or --svg");
  const LoadedGeometry g = load_geometry(o.geom_path);
  const LoadedSolution L = load_solution(sol_path, g);
  const std::string path = o.svg.empty() ? o.out : o.svg;
  spit(path, io::export_svg(L.x, isolines, samples));
  Prov prov;
  prov.emplace_back("command", "plot");
  prov.emplace_back("solution", sol_path);
  prov.emplace_back("geometry", o.geom_path);
  prov.emplace_back("geometry_hash", g.hash);
  prov.emplace_back("isolines", std::to_string(isolines));
  prov.emplace_back("samples", std::to_string(samples));
  write_provenance(path, prov);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nondegenerate multipatch spline parameterisation toolkit"};
  app.require_subcommand(1);
  Options o;
  std::string sol_path;
  std::vector<std::string> modes;
  int isolines = 7, samples = 65;

  CLI::App* solve = app.add_subcommand("solve", "Compute a parameterisation");
  solve->add_option("geometry", o.geom_path)->required();
  add_common_flags(solve, o);

  CLI::App* reparam = app.add_subcommand("reparam", "Reparameterise a solution");
  reparam->add_option("solution", sol_path)->required();
  reparam->add_option("--geom", o.geom_path);
  reparam->add_option("--mode", modes)
      ->check(CLI::IsMember({"interface-removal", "homogenise-sigma", "homogenise-omega",
                             "adapt", "boundary-orth", "boundary-layer",
                             "boundary-layer-orth"}));
  reparam->add_flag("--normalised,!--no-normalised", o.normalised);
  reparam->add_option("--variant", o.variant)->check(CLI::IsMember({"q", "t"}));
  reparam->add_option("--layer-frac", o.layer_frac);
  reparam->add_option("--layer-target", o.layer_target);
  reparam->add_option("--monitor-centre", o.monitor_centre)->expected(2);
  add_common_flags(reparam, o);

  CLI::App* metrics = app.add_subcommand("metrics", "Quality report for a solution");
  metrics->add_option("solution", sol_path)->required();
  metrics->add_option("--geom", o.geom_path);
  add_common_flags(metrics, o);

  CLI::App* study = app.add_subcommand("study", "Dyadic refinement study");
  study->add_option("geometry", o.geom_path)->required();
  study->add_option("--levels", o.levels)->check(CLI::Range(2, 10));
  add_common_flags(study, o);

  CLI::App* plot = app.add_subcommand("plot", "Isoline SVG plot of a solution");
  plot->add_option("solution", sol_path)->required();
  plot->add_option("--geom", o.geom_path);
  plot->add_option("--isolines", isolines);
  plot->add_option("--samples", samples)->check(CLI::Range(2, 100000));
  add_common_flags(plot, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (solve->parsed()) return run_solve(o);
    if (reparam->parsed()) return run_reparam(o, sol_path, modes);
    if (metrics->parsed()) return run_metrics(o, sol_path);
    if (study->parsed()) return run_study(o);
    if (plot->parsed()) return run_plot(o, sol_path, isolines, samples);
  } catch (const mp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
