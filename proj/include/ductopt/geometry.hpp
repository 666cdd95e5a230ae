#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ductopt {

// Axisymmetric domain: a cylindrical design region with a truncated
// waveguide attached on each side. All lengths in meters.
struct DomainSpec {
  double r_design = 0.050;
  double l_design = 0.050;
  double r_left = 0.030;
  double r_right = 0.040;
  double l_wg = 0.020;
  double h = 0.25e-3;      // element size
  double c = 343.0;        // speed of sound

  void validate() const;
};

inline bool divides_evenly(double length, double h) {
  double q = length / h;
  return std::abs(q - std::round(q)) < 1e-9 * std::max(1.0, q);
}

inline void DomainSpec::validate() const {
  if (r_design <= 0 || l_design <= 0 || r_left <= 0 || r_right <= 0 ||
      l_wg <= 0 || h <= 0 || c <= 0)
    throw std::invalid_argument("DomainSpec: all dimensions must be positive");
  if (r_left > r_design + 1e-12)
    throw std::invalid_argument("DomainSpec: r_left must not exceed r_design");
  if (r_right > r_design + 1e-12)
    throw std::invalid_argument("DomainSpec: r_right must not exceed r_design");
  const std::pair<const char*, double> dims[] = {
      {"r_design", r_design}, {"l_design", l_design}, {"r_left", r_left},
      {"r_right", r_right},   {"l_wg", l_wg}};
  for (auto& [name, value] : dims)
    if (!divides_evenly(value, h))
      throw std::invalid_argument(std::string("DomainSpec: ") + name +
                                  " is not an integer multiple of h");
}

// Structured grid of 9-node biquadratic square elements. Node spacing is
// h/2; elements are axis-aligned squares of side h in (z, r).
//
// Local node ordering inside an element: index = 3*jr + jz with
// jz, jr in {0,1,2}, i.e. z-fastest over the 3x3 node patch.
struct Mesh {
  DomainSpec spec;
  std::vector<std::array<double, 2>> node_coords;  // (z, r)
  std::vector<std::array<int, 9>> elements;
  std::vector<double> element_r_bot;  // r at the bottom edge of each element
  std::vector<int> design_elements;   // row-major, z-fastest within design grid
  int design_nz = 0, design_nr = 0;   // design grid in elements
  std::vector<int> gamma_left_nodes;   // ordered by increasing r
  std::vector<int> gamma_right_nodes;  // ordered by increasing r
  int n_dof = 0;

  int n_elements() const { return static_cast<int>(elements.size()); }
};

struct MeshStats {
  int n_dof = 0;
  int n_elements = 0;
  int n_design_elements = 0;
  int n_left_boundary_nodes = 0;
  int n_right_boundary_nodes = 0;
};

namespace detail {

// Integer fine-grid coordinates in units of h/2, z measured from the left
// end of the left waveguide.
struct GridKey {
  int64_t gz, gr;
  bool operator<(const GridKey& o) const {
    return gz < o.gz || (gz == o.gz && gr < o.gr);
  }
};

}  // namespace detail

// Builds the three rectangles (left waveguide, design region, right
// waveguide) on a shared fine grid. Node ids are assigned lexicographically
// (z major, then r) per rectangle, in that order; nodes on shared interface
// columns keep the id given by the earlier rectangle.
inline Mesh build_mesh(const DomainSpec& spec) {
  spec.validate();
  Mesh mesh;
  mesh.spec = spec;

  const double h = spec.h;
  const int nz_wg = static_cast<int>(std::round(spec.l_wg / h));
  const int nz_d = static_cast<int>(std::round(spec.l_design / h));
  const int nr_l = static_cast<int>(std::round(spec.r_left / h));
  const int nr_r = static_cast<int>(std::round(spec.r_right / h));
  const int nr_d = static_cast<int>(std::round(spec.r_design / h));

  std::map<detail::GridKey, int> node_id;
  auto add_rect_nodes = [&](int gz0, int nz, int nr) {
    for (int iz = 0; iz <= 2 * nz; ++iz)
      for (int ir = 0; ir <= 2 * nr; ++ir) {
        detail::GridKey key{gz0 + iz, ir};
        if (node_id.count(key)) continue;
        int id = static_cast<int>(mesh.node_coords.size());
        node_id[key] = id;
        mesh.node_coords.push_back({key.gz * h / 2.0, key.gr * h / 2.0});
      }
  };
  const int gz_design = 2 * nz_wg;             // fine-grid z of design left face
  const int gz_right = 2 * (nz_wg + nz_d);     // fine-grid z of design right face
  add_rect_nodes(0, nz_wg, nr_l);
  add_rect_nodes(gz_design, nz_d, nr_d);
  add_rect_nodes(gz_right, nz_wg, nr_r);
  mesh.n_dof = static_cast<int>(mesh.node_coords.size());

  auto add_rect_elements = [&](int gz0, int nz, int nr, bool is_design) {
    for (int er = 0; er < nr; ++er)
      for (int ez = 0; ez < nz; ++ez) {
        std::array<int, 9> elem;
        for (int jr = 0; jr < 3; ++jr)
          for (int jz = 0; jz < 3; ++jz)
            elem[3 * jr + jz] =
                node_id.at({gz0 + 2 * ez + jz, int64_t(2 * er + jr)});
        if (is_design)
          mesh.design_elements.push_back(static_cast<int>(mesh.elements.size()));
        mesh.elements.push_back(elem);
        mesh.element_r_bot.push_back(er * h);
      }
  };
  add_rect_elements(0, nz_wg, nr_l, false);
  add_rect_elements(gz_design, nz_d, nr_d, true);
  add_rect_elements(gz_right, nz_wg, nr_r, false);
  mesh.design_nz = nz_d;
  mesh.design_nr = nr_d;

  for (int ir = 0; ir <= 2 * nr_l; ++ir)
    mesh.gamma_left_nodes.push_back(node_id.at({0, ir}));
  const int gz_end = 2 * (nz_wg + nz_d + nz_wg);
  for (int ir = 0; ir <= 2 * nr_r; ++ir)
    mesh.gamma_right_nodes.push_back(node_id.at({gz_end, ir}));

  return mesh;
}

inline MeshStats mesh_statistics(const Mesh& mesh) {
  MeshStats s;
  s.n_dof = mesh.n_dof;
  s.n_elements = mesh.n_elements();
  s.n_design_elements = static_cast<int>(mesh.design_elements.size());
  s.n_left_boundary_nodes = static_cast<int>(mesh.gamma_left_nodes.size());
  s.n_right_boundary_nodes = static_cast<int>(mesh.gamma_right_nodes.size());
  return s;
}

}  // namespace ductopt
