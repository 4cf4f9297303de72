#include "finsler/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace finsler {

namespace {

double signed_area(const Vector2& a, const Vector2& b, const Vector2& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) -
                (b.y() - a.y()) * (c.x() - a.x()));
}

void make_ccw(Mesh& mesh) {
  for (auto& t : mesh.triangles) {
    if (signed_area(mesh.vertices[t[0]], mesh.vertices[t[1]],
                    mesh.vertices[t[2]]) < 0.0)
      std::swap(t[1], t[2]);
  }
}

double max_edge_length(const Mesh& mesh) {
  double m = 0.0;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e)
      m = std::max(m, (mesh.vertices[t[e]] - mesh.vertices[t[(e + 1) % 3]]).norm());
  return m;
}

Mesh structured_rectangle(double w, double h, double target_h) {
  const int nx = std::max(4, static_cast<int>(std::ceil(w / target_h)));
  const int ny = std::max(4, static_cast<int>(std::ceil(h / target_h)));
  Mesh mesh;
  auto idx = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      mesh.vertices.emplace_back(w * i / nx, h * j / ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      mesh.triangles.push_back({idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)});
      mesh.triangles.push_back({idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)});
    }
  return mesh;
}

Mesh structured_l_shape(double target_h) {
  // [0,1]^2 minus [1/2,1]^2; the grid line y = x = 1/2 must exist.
  const int n =
      std::max(4, 2 * static_cast<int>(std::ceil(1.0 / (2.0 * target_h))));
  const int half = n / 2;
  Mesh grid;
  auto idx = [&](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      grid.vertices.emplace_back(static_cast<double>(i) / n,
                                 static_cast<double>(j) / n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      if (i >= half && j >= half) continue;
      grid.triangles.push_back({idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)});
      grid.triangles.push_back({idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)});
    }
  // drop unused vertices
  std::vector<int> remap(grid.vertices.size(), -1);
  Mesh mesh;
  for (auto& t : grid.triangles) {
    for (int& v : t) {
      if (remap[v] < 0) {
        remap[v] = mesh.num_vertices();
        mesh.vertices.push_back(grid.vertices[v]);
      }
      v = remap[v];
    }
    mesh.triangles.push_back(t);
  }
  return mesh;
}

// Spider-web disk mesh: ring k of radius r*k/n carries 8k vertices, so the
// tangential spacing stays proportional to the radial spacing on every ring.
Mesh structured_disk(double r, double target_h) {
  int n = std::max(2, static_cast<int>(std::ceil(r / target_h)));
  for (;; ++n) {
    Mesh mesh;
    std::vector<std::vector<int>> rings(n + 1);
    mesh.vertices.emplace_back(0.0, 0.0);
    rings[0] = {0};
    for (int k = 1; k <= n; ++k) {
      const int m = 8 * k;
      const double rho = r * k / n;
      for (int j = 0; j < m; ++j) {
        const double th = 2.0 * M_PI * j / m;
        rings[k].push_back(mesh.num_vertices());
        mesh.vertices.emplace_back(rho * std::cos(th), rho * std::sin(th));
      }
    }
    // center fan
    for (int j = 0; j < 8; ++j)
      mesh.triangles.push_back({0, rings[1][j], rings[1][(j + 1) % 8]});
    // merge-walk strips between consecutive rings
    for (int k = 1; k < n; ++k) {
      const auto& in = rings[k];
      const auto& out = rings[k + 1];
      const int p = static_cast<int>(in.size());
      const int q = static_cast<int>(out.size());
      int i = 0, o = 0;
      while (i < p || o < q) {
        const double a_next = 2.0 * M_PI * (i + 1) / p;
        const double b_next = 2.0 * M_PI * (o + 1) / q;
        if (o == q || (i < p && a_next <= b_next)) {
          mesh.triangles.push_back({in[i], out[o % q], in[(i + 1) % p]});
          ++i;
        } else {
          mesh.triangles.push_back({out[o], out[(o + 1) % q], in[i % p]});
          ++o;
        }
      }
    }
    make_ccw(mesh);
    if (max_edge_length(mesh) <= 1.5 * target_h) return mesh;
  }
}

}  // namespace

std::vector<int> Mesh::boundary_vertex_list() const {
  std::vector<int> out;
  for (int v = 0; v < num_vertices(); ++v)
    if (vertex_is_boundary[v]) out.push_back(v);
  return out;
}

std::vector<int> Mesh::interior_vertex_list() const {
  std::vector<int> out;
  for (int v = 0; v < num_vertices(); ++v)
    if (!vertex_is_boundary[v]) out.push_back(v);
  return out;
}

void Mesh::finalize() {
  const int nv = num_vertices();
  if (nv < 3 || triangles.empty()) throw std::runtime_error("Mesh: empty");
  for (const auto& t : triangles) {
    for (int v : t)
      if (v < 0 || v >= nv) throw std::runtime_error("Mesh: vertex index out of range");
    if (signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]) <= 0.0)
      throw std::runtime_error("Mesh: non-positive triangle area");
  }

  // Edge incidence: key is the sorted vertex pair.
  std::map<std::pair<int, int>, int> edge_count;
  std::map<std::pair<int, int>, std::pair<int, int>> directed;  // sorted -> (from, to)
  for (int t = 0; t < num_triangles(); ++t) {
    for (int e = 0; e < 3; ++e) {
      const int a = triangles[t][e], b = triangles[t][(e + 1) % 3];
      const auto key = std::minmax(a, b);
      int& c = edge_count[key];
      if (++c > 2) throw std::runtime_error("Mesh: edge shared by more than 2 triangles");
      directed[key] = {a, b};
    }
  }

  boundary_edges.clear();
  vertex_is_boundary.assign(nv, false);
  std::map<int, int> out_degree, in_degree;
  for (const auto& [key, c] : edge_count) {
    if (c != 1) continue;
    const auto [a, b] = directed.at(key);  // CCW traversal of the boundary
    BoundaryEdge be;
    be.v0 = a;
    be.v1 = b;
    const Vector2 d = vertices[b] - vertices[a];
    be.length = d.norm();
    if (be.length <= 0.0) throw std::runtime_error("Mesh: degenerate boundary edge");
    be.normal = Vector2(d.y(), -d.x()) / be.length;
    boundary_edges.push_back(be);
    vertex_is_boundary[a] = vertex_is_boundary[b] = true;
    ++out_degree[a];
    ++in_degree[b];
  }
  if (boundary_edges.empty()) throw std::runtime_error("Mesh: no boundary");

  // Closed loops: every boundary vertex has exactly one incoming and one
  // outgoing boundary edge.
  for (int v = 0; v < nv; ++v) {
    if (!vertex_is_boundary[v]) continue;
    if (out_degree[v] != 1 || in_degree[v] != 1)
      throw std::runtime_error("Mesh: boundary is not a union of closed loops");
  }

  // Outward check against the adjacent triangle centroid.
  std::map<std::pair<int, int>, int> edge_tri;
  for (int t = 0; t < num_triangles(); ++t)
    for (int e = 0; e < 3; ++e)
      edge_tri[std::minmax(triangles[t][e], triangles[t][(e + 1) % 3])] = t;
  for (const auto& be : boundary_edges) {
    const int t = edge_tri.at(std::minmax(be.v0, be.v1));
    const Vector2 centroid = (vertices[triangles[t][0]] + vertices[triangles[t][1]] +
                              vertices[triangles[t][2]]) / 3.0;
    const Vector2 mid = 0.5 * (vertices[be.v0] + vertices[be.v1]);
    if (be.normal.dot(mid - centroid) <= 0.0)
      throw std::runtime_error("Mesh: boundary normal points inward");
  }

  // Edge-connectivity of the triangulation (connected domain).
  std::map<std::pair<int, int>, std::vector<int>> edge_tris;
  for (int t = 0; t < num_triangles(); ++t)
    for (int e = 0; e < 3; ++e)
      edge_tris[std::minmax(triangles[t][e], triangles[t][(e + 1) % 3])].push_back(t);
  std::vector<bool> seen(num_triangles(), false);
  std::vector<int> stack = {0};
  seen[0] = true;
  int visited = 0;
  while (!stack.empty()) {
    const int t = stack.back();
    stack.pop_back();
    ++visited;
    for (int e = 0; e < 3; ++e)
      for (int s : edge_tris[std::minmax(triangles[t][e], triangles[t][(e + 1) % 3])])
        if (!seen[s]) { seen[s] = true; stack.push_back(s); }
  }
  if (visited != num_triangles())
    throw std::runtime_error("Mesh: triangulation is not connected");
}

Mesh generate_mesh(const DomainSpec& domain, double target_h) {
  if (!(target_h > 0.0)) throw std::invalid_argument("generate_mesh: target_h must be > 0");
  Mesh mesh;
  switch (domain.kind) {
    case DomainSpec::Kind::UnitSquare:
      mesh = structured_rectangle(1.0, 1.0, target_h);
      break;
    case DomainSpec::Kind::Rectangle:
      mesh = structured_rectangle(domain.param_a, domain.param_b, target_h);
      break;
    case DomainSpec::Kind::Disk:
      mesh = structured_disk(domain.param_a, target_h);
      break;
    case DomainSpec::Kind::LShape:
      mesh = structured_l_shape(target_h);
      break;
    case DomainSpec::Kind::Ellipse: {
      const double s = std::max(domain.param_a, domain.param_b);
      mesh = structured_disk(1.0, target_h / s);
      for (auto& v : mesh.vertices) {
        v.x() *= domain.param_a;
        v.y() *= domain.param_b;
      }
      break;
    }
  }
  make_ccw(mesh);
  if (mesh.num_triangles() < 4)
    throw std::runtime_error("generate_mesh: target_h too coarse (fewer than 4 triangles)");
  mesh.finalize();
  return mesh;
}

double triangle_area(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  return signed_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]],
                     mesh.vertices[tri[2]]);
}

double area(const Mesh& mesh) {
  double a = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) a += triangle_area(mesh, t);
  return a;
}

double anisotropic_perimeter(const Mesh& mesh, const NormSpec& spec) {
  double p = 0.0;
  for (const auto& be : mesh.boundary_edges)
    p += norm_eval(spec, be.normal) * be.length;
  return p;
}

BoundaryWeight::BoundaryWeight(const Mesh& mesh, double constant)
    : values_(mesh.num_vertices()) {
  values_.setZero();
  for (int v : mesh.boundary_vertex_list()) values_[v] = constant;
  validate(mesh);
}

BoundaryWeight::BoundaryWeight(const Mesh& mesh,
                               const Eigen::VectorXd& vertex_values)
    : values_(Eigen::VectorXd::Zero(mesh.num_vertices())) {
  if (vertex_values.size() != mesh.num_vertices())
    throw std::invalid_argument("BoundaryWeight: size mismatch");
  for (int v : mesh.boundary_vertex_list()) values_[v] = vertex_values[v];
  validate(mesh);
}

void BoundaryWeight::validate(const Mesh& mesh) const {
  for (int v : mesh.boundary_vertex_list())
    if (!(values_[v] > 0.0))
      throw std::invalid_argument("BoundaryWeight: beta must be > 0 on the boundary");
}

double boundary_mass(const Mesh& mesh, const BoundaryWeight& beta,
                     const NormSpec& spec) {
  double m = 0.0;
  for (const auto& be : mesh.boundary_edges)
    m += 0.5 * (beta[be.v0] + beta[be.v1]) * norm_eval(spec, be.normal) * be.length;
  return m;
}

void save_mesh(const Mesh& mesh, std::ostream& out) {
  out.precision(17);
  out << mesh.num_vertices() << ' ' << mesh.num_triangles() << ' '
      << mesh.boundary_edges.size() << '\n';
  for (const auto& v : mesh.vertices) out << v.x() << ' ' << v.y() << '\n';
  for (const auto& t : mesh.triangles)
    out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (const auto& be : mesh.boundary_edges) out << be.v0 << ' ' << be.v1 << '\n';
}

Mesh load_mesh(std::istream& in) {
  int nv = 0, nt = 0, nb = 0;
  if (!(in >> nv >> nt >> nb)) throw std::invalid_argument("load_mesh: bad header");
  Mesh mesh;
  mesh.vertices.resize(nv);
  for (auto& v : mesh.vertices)
    if (!(in >> v.x() >> v.y())) throw std::invalid_argument("load_mesh: bad vertex line");
  mesh.triangles.resize(nt);
  for (auto& t : mesh.triangles)
    if (!(in >> t[0] >> t[1] >> t[2])) throw std::invalid_argument("load_mesh: bad triangle line");
  std::vector<std::pair<int, int>> file_edges(nb);
  for (auto& e : file_edges)
    if (!(in >> e.first >> e.second)) throw std::invalid_argument("load_mesh: bad boundary line");
  mesh.finalize();  // recomputes boundary edges and normals
  if (static_cast<int>(mesh.boundary_edges.size()) != nb)
    throw std::invalid_argument("load_mesh: boundary edge count mismatch");
  std::vector<std::pair<int, int>> derived;
  for (const auto& be : mesh.boundary_edges) derived.push_back(std::minmax(be.v0, be.v1));
  // note: std::minmax returns references; build the pair by value to avoid
  // writing through aliases of e itself
  for (auto& e : file_edges)
    e = std::pair<int, int>(std::min(e.first, e.second),
                            std::max(e.first, e.second));
  std::sort(derived.begin(), derived.end());
  std::sort(file_edges.begin(), file_edges.end());
  if (derived != file_edges)
    throw std::invalid_argument("load_mesh: listed boundary edges disagree with triangulation");
  return mesh;
}

void save_mesh_file(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("save_mesh_file: cannot open " + path);
  save_mesh(mesh, out);
}

Mesh load_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_mesh_file: cannot open " + path);
  return load_mesh(in);
}

}  // namespace finsler
