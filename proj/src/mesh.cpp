#include "octfusion/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "mc_tables.hpp"

namespace octfusion {

bool TriMesh::valid() const {
  const auto n = static_cast<int>(vertices.size());
  if (!quality.empty() && quality.size() != vertices.size()) return false;
  for (const auto& t : triangles) {
    for (int i : t) {
      if (i < 0 || i >= n) return false;
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) return false;
  }
  return true;
}

namespace {

constexpr std::array<Cell, 8> kCorner{{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                       {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};
// Lower corner and axis of each cube edge.
constexpr std::array<std::array<int, 2>, 12> kEdge{{{0, 0}, {1, 1}, {3, 0}, {0, 1},
                                                    {4, 0}, {5, 1}, {7, 0}, {4, 1},
                                                    {0, 2}, {1, 2}, {2, 2}, {3, 2}}};

}  // namespace

TriMesh marching_cubes(const Grid3<float>& field, const VolumeDomain& dom,
                       const Grid3<float>* mask) {
  const int n = field.resolution();
  if (n != dom.resolution()) throw std::invalid_argument("field does not match the domain");
  if (mask && mask->resolution() != n) throw std::invalid_argument("mask does not match the field");

  TriMesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;
  auto vertex_on = [&](const Cell& lo, int axis) {
    const std::uint64_t key =
        ((static_cast<std::uint64_t>(field.index(lo.x, lo.y, lo.z))) << 2) | static_cast<unsigned>(axis);
    const auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<int>(mesh.vertices.size()));
    if (inserted) {
      Cell hi = lo;
      hi[axis] += 1;
      const double a = field(lo);
      const double b = field(hi);
      const double t = a / (a - b);
      const Vec3 pa = dom.voxel_center(lo);
      const Vec3 pb = dom.voxel_center(hi);
      mesh.vertices.push_back(pa + t * (pb - pa));
    }
    return it->second;
  };

  for (int z = 0; z + 1 < n; ++z) {
    for (int y = 0; y + 1 < n; ++y) {
      for (int x = 0; x + 1 < n; ++x) {
        int index = 0;
        bool masked = false;
        for (int i = 0; i < 8; ++i) {
          const Cell c{x + kCorner[i].x, y + kCorner[i].y, z + kCorner[i].z};
          if (field(c) < 0.0f) index |= 1 << i;
          if (mask && (*mask)(c) == 0.0f) masked = true;
        }
        if (masked || detail::kMcEdgeTable[index] == 0) continue;
        std::array<int, 12> ids{};
        for (int e = 0; e < 12; ++e) {
          if (detail::kMcEdgeTable[index] & (1 << e)) {
            const Cell& k = kCorner[kEdge[e][0]];
            ids[e] = vertex_on(Cell{x + k.x, y + k.y, z + k.z}, kEdge[e][1]);
          }
        }
        const int* tri = detail::kMcTriTable[index];
        for (int i = 0; tri[i] != -1; i += 3) {
          // Reversed so normals point toward positive values.
          mesh.triangles.push_back({ids[tri[i]], ids[tri[i + 2]], ids[tri[i + 1]]});
        }
      }
    }
  }
  return mesh;
}

// ---------------------------------------------------------------------------

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  std::vector<int> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, static_cast<int>(idx.size()), 0);
}

int KdTree::build(std::vector<int>& idx, int lo, int hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const int mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi, [&](int a, int b) {
    return points_[a][axis] < points_[b][axis] || (points_[a][axis] == points_[b][axis] && a < b);
  });
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{idx[mid], axis, -1, -1});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node, const Vec3& q, int& best, double& best_sq) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& p = points_[n.point];
  const double d_sq = (p - q).squaredNorm();
  if (d_sq < best_sq || (d_sq == best_sq && n.point < best)) {
    best_sq = d_sq;
    best = n.point;
  }
  const double diff = q[n.axis] - p[n.axis];
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  search(near, q, best, best_sq);
  if (diff * diff <= best_sq) search(far, q, best, best_sq);
}

std::size_t KdTree::nearest(const Vec3& q, double* dist) const {
  if (points_.empty()) throw std::logic_error("nearest-neighbour query on an empty tree");
  int best = -1;
  double best_sq = std::numeric_limits<double>::infinity();
  search(root_, q, best, best_sq);
  if (dist) *dist = std::sqrt(best_sq);
  return static_cast<std::size_t>(best);
}

// ---------------------------------------------------------------------------

DiffStats summarize(const std::vector<double>& d) {
  DiffStats s;
  if (d.empty()) return s;
  double sum = 0.0;
  for (double v : d) {
    sum += v;
    s.max = std::max(s.max, v);
  }
  s.mean = sum / static_cast<double>(d.size());
  double var = 0.0;
  for (double v : d) var += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(d.size()));
  return s;
}

namespace {

MeshDiff finish_diff(const TriMesh& a, std::vector<double> distances) {
  MeshDiff out;
  out.stats = summarize(distances);
  out.colored = a;
  out.colored.quality = distances;
  out.distances = std::move(distances);
  return out;
}

}  // namespace

MeshDiff vertex_diff(const TriMesh& a, const TriMesh& b) {
  if (b.vertices.empty()) throw std::invalid_argument("reference mesh has no vertices");
  const KdTree tree(b.vertices);
  std::vector<double> d(a.vertices.size());
  for (std::size_t i = 0; i < d.size(); ++i) tree.nearest(a.vertices[i], &d[i]);
  return finish_diff(a, std::move(d));
}

double symmetric_mean(const TriMesh& a, const TriMesh& b) {
  return 0.5 * (vertex_diff(a, b).stats.mean + vertex_diff(b, a).stats.mean);
}

MeshDiff sphere_diff(const TriMesh& a, const Vec3& center, double radius) {
  std::vector<double> d(a.vertices.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = std::abs((a.vertices[i] - center).norm() - radius);
  }
  return finish_diff(a, std::move(d));
}

// ---------------------------------------------------------------------------

void write_ply(const std::filesystem::path& path, const TriMesh& mesh) {
  if (!mesh.valid()) throw std::invalid_argument("refusing to write an invalid mesh");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const bool q = !mesh.quality.empty();
  out << "ply\nformat ascii 1.0\nelement vertex " << mesh.vertices.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n";
  if (q) out << "property float quality\n";
  out << "element face " << mesh.triangles.size() << "\nproperty list uchar int vertex_indices\n"
      << "end_header\n"
      << std::setprecision(9);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    out << v.x() << ' ' << v.y() << ' ' << v.z();
    if (q) out << ' ' << mesh.quality[i];
    out << '\n';
  }
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

TriMesh read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  auto fail = [&](const std::string& why) {
    throw std::runtime_error(path.string() + ": " + why);
  };
  std::string line;
  if (!std::getline(in, line) || line != "ply") fail("not a PLY file");
  std::size_t nv = 0, nf = 0;
  std::vector<std::string> vertex_props;
  std::string element;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") fail("only ASCII PLY is supported");
    } else if (word == "element") {
      ls >> element;
      if (element == "vertex") ls >> nv;
      else if (element == "face") ls >> nf;
    } else if (word == "property" && element == "vertex") {
      std::string type, name;
      ls >> type >> name;
      vertex_props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  const auto col = [&](const std::string& name) {
    const auto it = std::find(vertex_props.begin(), vertex_props.end(), name);
    return it == vertex_props.end() ? -1 : static_cast<int>(it - vertex_props.begin());
  };
  const int ix = col("x"), iy = col("y"), iz = col("z"), iq = col("quality");
  if (ix < 0 || iy < 0 || iz < 0) fail("vertex element lacks x, y or z");

  TriMesh mesh;
  mesh.vertices.reserve(nv);
  std::vector<double> row(vertex_props.size());
  for (std::size_t i = 0; i < nv; ++i) {
    for (double& v : row) {
      if (!(in >> v)) fail("truncated vertex list");
    }
    mesh.vertices.emplace_back(row[ix], row[iy], row[iz]);
    if (iq >= 0) mesh.quality.push_back(row[iq]);
  }
  for (std::size_t i = 0; i < nf; ++i) {
    int count = 0;
    if (!(in >> count)) fail("truncated face list");
    std::vector<int> idx(static_cast<std::size_t>(count));
    for (int& v : idx) {
      if (!(in >> v)) fail("truncated face list");
    }
    for (int k = 1; k + 1 < count; ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
  }
  if (!mesh.valid()) fail("face indices out of range");
  return mesh;
}

void write_distances_csv(const std::filesystem::path& path, const std::vector<double>& distances) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "vertex,distance\n" << std::setprecision(9);
  for (std::size_t i = 0; i < distances.size(); ++i) out << i << ',' << distances[i] << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace octfusion
