// Regenerates the bundled sample geometry files (samples/*.geom).
#include <fstream>
#include <iostream>

#include "mp/io.hpp"
#include "mp/samples.hpp"

using namespace mp;

namespace {

RawTopology raw_of(const Quadrangulation& q) {
  RawTopology raw;
  raw.vertices = q.vertices;
  raw.patches = q.patches;
  for (const auto& side : q.sides) {
    std::vector<int> chain;
    for (const auto& be : side) {
      const auto [c0, c1] = edge_corner_slots(be.edge);
      const bool rev = be.t1 < be.t0;
      const int a = q.patches[be.patch][rev ? c1 : c0];
      const int b = q.patches[be.patch][rev ? c0 : c1];
      if (chain.empty()) chain.push_back(a);
      chain.push_back(b);
    }
    raw.sides.push_back(std::move(chain));
  }
  for (int p = 0; p < q.num_patches(); ++p)
    if (q.outer_edge[p] >= 0) raw.outer_edges[p] = q.outer_edge[p];
  return raw;
}

void emit(const std::string& dir, const std::string& name, const io::GeometryFile& g) {
  const std::string path = dir + "/" + name;
  std::ofstream f(path, std::ios::binary);
  f << io::write_geometry(g);
  std::cout << path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "samples";

  {
    const Quadrangulation q = samples::square_1patch();
    io::GeometryFile g;
    g.raw = raw_of(q);
    g.correspondences.emplace_back("identity", identity_correspondence(q));
    g.correspondences.emplace_back("sheared", samples::sheared_boundary(q, 0.8));
    emit(dir, "square.geom", g);
  }
  {
    // Two patches with a slanted interior facet; the top side is bent down to
    // a concave corner above the facet.
    RawTopology raw;
    raw.vertices = {{0, 0}, {0.55, 0}, {1, 0}, {1, 1}, {0.7, 1}, {0, 1}};
    raw.patches = {{0, 1, 4, 5}, {1, 2, 3, 4}};
    raw.sides = {{0, 1, 2}, {2, 3}, {3, 4, 5}, {5, 0}};
    const Quadrangulation q = build_topology(raw);
    BoundaryCorrespondence chev = identity_correspondence(q);
    // Side parameter of the top-chain interior vertex (break of the trace
    // space), so the bent curve stays representable.
    const double tv =
        std::max(q.sides[2].front().t0, q.sides[2].front().t1);
    Curve bent;
    bent.kv = make_open_knot_vector(1, {tv});
    bent.points = {{1, 1}, {0.7, 0.45}, {0, 1}};
    chev.sides[2] = std::move(bent);
    io::GeometryFile g;
    g.raw = raw_of(q);
    g.correspondences.emplace_back("chevron", std::move(chev));
    g.correspondences.emplace_back("identity", identity_correspondence(q));
    emit(dir, "lbend.geom", g);
  }
  {
    const Quadrangulation q = samples::square_4patch({0.6, 0.6});
    io::GeometryFile g;
    g.raw = raw_of(q);
    g.correspondences.emplace_back("sheared", samples::sheared_boundary(q, 0.8));
    g.correspondences.emplace_back("identity", identity_correspondence(q));
    emit(dir, "fourpatch.geom", g);
  }
  {
    auto topo = std::make_shared<Quadrangulation>(samples::square_1patch());
    io::GeometryFile g;
    g.raw = raw_of(*topo);
    for (int p : {2, 3}) {
      const MultipatchSpace space = build_uniform_space(topo, p, 1);
      g.correspondences.emplace_back("p" + std::to_string(p),
                                     samples::conformal_boundary(space, 0.8));
    }
    emit(dir, "conformal.geom", g);
  }
  {
    const Quadrangulation q = samples::square_5patch_frame(0.3);
    io::GeometryFile g;
    g.raw = raw_of(q);
    g.correspondences.emplace_back("sheared", samples::sheared_boundary(q, 0.8));
    g.correspondences.emplace_back("identity", identity_correspondence(q));
    emit(dir, "frame.geom", g);
  }
  return 0;
}
