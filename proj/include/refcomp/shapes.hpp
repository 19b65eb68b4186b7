#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "refcomp/cloud_io.hpp"
#include "refcomp/geometry.hpp"
#include "refcomp/rng.hpp"

namespace refcomp {

/// Procedural stand-in classes for a multi-class shape corpus. The slab and
/// the torus contribute thin and holed topologies.
///
/// Size parameter conventions (model units, before posing/normalization):
///   plane-slab: {half_x, half_y}            rectangle in the z=0 plane
///   box:        {half_x, half_y, half_z}    hollow box surface
///   cylinder:   {radius, half_height}       lateral surface plus both caps
///   torus:      {major_radius, minor_radius}
struct ShapeSpec {
  std::string class_name;
  std::vector<double> size_params;
  std::array<double, 3> rotation{0, 0, 0};     // XYZ Euler angles, radians
  std::array<double, 3> translation{0, 0, 0};
  int n_points = 2048;
  std::uint64_t seed = 0;
};

inline const std::vector<std::string>& shape_classes() {
  static const std::vector<std::string> classes = {"plane-slab", "box",
                                                   "cylinder", "torus"};
  return classes;
}

namespace detail {

constexpr double kPi = 3.14159265358979323846;

inline Point3 rotate_euler_xyz(const Point3& p, const std::array<double, 3>& r) {
  double cx = std::cos(r[0]), sx = std::sin(r[0]);
  double cy = std::cos(r[1]), sy = std::sin(r[1]);
  double cz = std::cos(r[2]), sz = std::sin(r[2]);
  Point3 a{p.x, cx * p.y - sx * p.z, sx * p.y + cx * p.z};
  Point3 b{cy * a.x + sy * a.z, a.y, -sy * a.x + cy * a.z};
  return {cz * b.x - sz * b.y, sz * b.x + cz * b.y, b.z};
}

inline Point3 sample_plane_slab(double hx, double hy, Rng& rng) {
  return {rng.uniform(-hx, hx), rng.uniform(-hy, hy), 0.0};
}

inline Point3 sample_box(double hx, double hy, double hz, Rng& rng) {
  // Face picked proportionally to its area, then uniform in the rectangle.
  double ax = hy * hz, ay = hx * hz, az = hx * hy;  // quarter areas, same ratios
  double total = 2.0 * (ax + ay + az);
  double u = rng.uniform() * total;
  double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  if (u < 2.0 * ax)
    return {sign * hx, rng.uniform(-hy, hy), rng.uniform(-hz, hz)};
  if (u < 2.0 * (ax + ay))
    return {rng.uniform(-hx, hx), sign * hy, rng.uniform(-hz, hz)};
  return {rng.uniform(-hx, hx), rng.uniform(-hy, hy), sign * hz};
}

inline Point3 sample_cylinder(double radius, double half_h, Rng& rng) {
  double lateral = 2.0 * kPi * radius * (2.0 * half_h);
  double caps = 2.0 * kPi * radius * radius;
  double u = rng.uniform() * (lateral + caps);
  if (u < lateral) {
    double a = rng.uniform(0.0, 2.0 * kPi);
    return {radius * std::cos(a), radius * std::sin(a), rng.uniform(-half_h, half_h)};
  }
  double a = rng.uniform(0.0, 2.0 * kPi);
  double r = radius * std::sqrt(rng.uniform());
  double z = rng.uniform() < 0.5 ? -half_h : half_h;
  return {r * std::cos(a), r * std::sin(a), z};
}

inline Point3 sample_torus(double major, double minor, Rng& rng) {
  double theta = rng.uniform(0.0, 2.0 * kPi);
  // Area element is proportional to (major + minor*cos(phi)); rejection keeps
  // the sampling exactly area-uniform.
  double phi;
  for (;;) {
    phi = rng.uniform(0.0, 2.0 * kPi);
    double accept = (major + minor * std::cos(phi)) / (major + minor);
    if (rng.uniform() < accept) break;
  }
  double ring = major + minor * std::cos(phi);
  return {ring * std::cos(theta), ring * std::sin(theta), minor * std::sin(phi)};
}

}  // namespace detail

/// Area-uniform samples on the raw (un-posed, un-normalized) surface.
inline PointCloud sample_surface_points(const ShapeSpec& spec) {
  Rng rng(mix_seed(spec.seed, hash_name(spec.class_name)));
  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(spec.n_points));
  const auto& p = spec.size_params;
  auto need = [&](std::size_t n) {
    if (p.size() != n)
      throw std::invalid_argument("generate_shape: " + spec.class_name +
                                  " expects " + std::to_string(n) +
                                  " size parameters, got " + std::to_string(p.size()));
  };
  if (spec.class_name == "plane-slab") {
    need(2);
    for (int i = 0; i < spec.n_points; ++i)
      cloud.points.push_back(detail::sample_plane_slab(p[0], p[1], rng));
  } else if (spec.class_name == "box") {
    need(3);
    for (int i = 0; i < spec.n_points; ++i)
      cloud.points.push_back(detail::sample_box(p[0], p[1], p[2], rng));
  } else if (spec.class_name == "cylinder") {
    need(2);
    for (int i = 0; i < spec.n_points; ++i)
      cloud.points.push_back(detail::sample_cylinder(p[0], p[1], rng));
  } else if (spec.class_name == "torus") {
    need(2);
    for (int i = 0; i < spec.n_points; ++i)
      cloud.points.push_back(detail::sample_torus(p[0], p[1], rng));
  } else {
    throw std::invalid_argument("generate_shape: unknown class '" +
                                spec.class_name + "'");
  }
  return cloud;
}

/// Sample, pose, and normalize to the unit sphere.
inline PointCloud generate_shape(const ShapeSpec& spec) {
  if (spec.n_points < 1)
    throw std::invalid_argument("generate_shape: n_points must be positive");
  PointCloud raw = sample_surface_points(spec);
  for (Point3& pt : raw.points) {
    pt = detail::rotate_euler_xyz(pt, spec.rotation);
    pt.x += spec.translation[0];
    pt.y += spec.translation[1];
    pt.z += spec.translation[2];
  }
  PointCloud out = normalize_unit_sphere(raw).cloud;
  out.class_label = spec.class_name;
  return out;
}

/// Random spec with documented per-class parameter ranges.
inline ShapeSpec random_shape_spec(const std::string& class_name, int n_points,
                                   std::uint64_t seed) {
  Rng rng(mix_seed(seed, hash_name(class_name), 0x5147u));
  ShapeSpec spec;
  spec.class_name = class_name;
  spec.n_points = n_points;
  spec.seed = mix_seed(seed, 0x90a7u);
  if (class_name == "plane-slab") {
    spec.size_params = {rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)};
  } else if (class_name == "box") {
    spec.size_params = {rng.uniform(0.3, 1.2), rng.uniform(0.3, 1.2),
                        rng.uniform(0.3, 1.2)};
  } else if (class_name == "cylinder") {
    spec.size_params = {rng.uniform(0.3, 1.0), rng.uniform(0.5, 2.0)};
  } else if (class_name == "torus") {
    double major = rng.uniform(0.6, 1.2);
    spec.size_params = {major, rng.uniform(0.15, 0.5) * major};
  } else {
    throw std::invalid_argument("random_shape_spec: unknown class '" +
                                class_name + "'");
  }
  for (auto& a : spec.rotation) a = rng.uniform(0.0, 2.0 * detail::kPi);
  for (auto& t : spec.translation) t = rng.uniform(-0.5, 0.5);
  return spec;
}

struct CorpusIndexRow {
  std::string path;  // relative to the index file's directory
  std::string class_name;
  std::uint64_t seed = 0;
};

inline std::string corpus_index_path(const std::string& dir) {
  return (std::filesystem::path(dir) / "index.tsv").string();
}

inline void save_corpus_index(const std::vector<CorpusIndexRow>& rows,
                              const std::string& dir) {
  std::string buf = "#refcomp-corpus v1\n";
  for (const auto& r : rows)
    buf += r.path + "\t" + r.class_name + "\t" + std::to_string(r.seed) + "\n";
  write_file_atomic(corpus_index_path(dir), buf);
}

inline std::vector<CorpusIndexRow> load_corpus_index(const std::string& dir) {
  std::string path = corpus_index_path(dir);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "#refcomp-corpus v1")
    throw std::runtime_error(path + ":1: bad header");
  std::vector<CorpusIndexRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    CorpusIndexRow row;
    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 3 tab-separated fields");
    row.path = line.substr(0, t1);
    row.class_name = line.substr(t1 + 1, t2 - t1 - 1);
    row.seed = std::stoull(line.substr(t2 + 1));
    rows.push_back(row);
  }
  return rows;
}

/// Generate per_class shapes for every class into out_dir (.pcb files plus an
/// index TSV). A pure function of its arguments: same inputs, same bytes.
inline std::vector<CorpusIndexRow> generate_corpus(
    const std::vector<std::string>& classes, int per_class, int n_points,
    std::uint64_t seed, const std::string& out_dir) {
  if (per_class < 1) throw std::invalid_argument("generate_corpus: per_class < 1");
  std::filesystem::create_directories(out_dir);
  std::vector<CorpusIndexRow> rows;
  for (const std::string& cls : classes) {
    for (int i = 0; i < per_class; ++i) {
      std::uint64_t shape_seed = mix_seed(seed, hash_name(cls), static_cast<std::uint64_t>(i));
      ShapeSpec spec = random_shape_spec(cls, n_points, shape_seed);
      PointCloud cloud = generate_shape(spec);
      char name[128];
      std::snprintf(name, sizeof(name), "%s_%04d.pcb", cls.c_str(), i);
      cloud.source_id = std::filesystem::path(name).stem().string();
      write_cloud(cloud, (std::filesystem::path(out_dir) / name).string());
      rows.push_back({name, cls, shape_seed});
    }
  }
  save_corpus_index(rows, out_dir);
  return rows;
}

}  // namespace refcomp
