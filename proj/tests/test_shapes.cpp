#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "refcomp/shapes.hpp"

using namespace refcomp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("refcomp_shapes_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("box points lie on the box surface") {
  ShapeSpec spec;
  spec.class_name = "box";
  spec.size_params = {1.0, 1.0, 1.0};
  spec.n_points = 500;
  spec.seed = 2;
  PointCloud raw = sample_surface_points(spec);
  for (const Point3& p : raw.points) {
    double m = std::max({std::abs(p.x), std::abs(p.y), std::abs(p.z)});
    REQUIRE(m == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(std::abs(p.x) <= 1.0 + 1e-12);
    REQUIRE(std::abs(p.y) <= 1.0 + 1e-12);
    REQUIRE(std::abs(p.z) <= 1.0 + 1e-12);
  }
}

TEST_CASE("cylinder off-cap points satisfy the radius equation") {
  ShapeSpec spec;
  spec.class_name = "cylinder";
  spec.size_params = {0.7, 1.1};
  spec.n_points = 800;
  spec.seed = 5;
  PointCloud raw = sample_surface_points(spec);
  for (const Point3& p : raw.points) {
    bool on_cap = std::abs(std::abs(p.z) - 1.1) < 1e-12;
    if (!on_cap)
      REQUIRE(p.x * p.x + p.y * p.y == Catch::Approx(0.49).margin(1e-9));
  }
}

TEST_CASE("plane slab is flat; torus respects its radii") {
  ShapeSpec slab;
  slab.class_name = "plane-slab";
  slab.size_params = {1.2, 0.8};
  slab.n_points = 200;
  for (const Point3& p : sample_surface_points(slab).points) {
    REQUIRE(p.z == 0.0);
    REQUIRE(std::abs(p.x) <= 1.2);
    REQUIRE(std::abs(p.y) <= 0.8);
  }
  ShapeSpec torus;
  torus.class_name = "torus";
  torus.size_params = {1.0, 0.3};
  torus.n_points = 400;
  for (const Point3& p : sample_surface_points(torus).points) {
    double ring = std::sqrt(p.x * p.x + p.y * p.y);
    double d = std::sqrt((ring - 1.0) * (ring - 1.0) + p.z * p.z);
    REQUIRE(d == Catch::Approx(0.3).margin(1e-9));
  }
}

TEST_CASE("box sampling is area uniform across faces") {
  // half-extents (1, 1, 0.5): z faces carry half the total area
  ShapeSpec spec;
  spec.class_name = "box";
  spec.size_params = {1.0, 1.0, 0.5};
  spec.n_points = 3000;
  double p_z = 0.5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    spec.seed = seed;
    PointCloud raw = sample_surface_points(spec);
    int on_z = 0;
    for (const Point3& p : raw.points)
      if (std::abs(std::abs(p.z) - 0.5) < 1e-12) ++on_z;
    double expected = spec.n_points * p_z;
    double sigma = std::sqrt(spec.n_points * p_z * (1 - p_z));
    REQUIRE(std::abs(on_z - expected) <= 3.0 * sigma);
  }
}

TEST_CASE("generated shapes are normalized and labeled") {
  for (const std::string& cls : shape_classes()) {
    ShapeSpec spec = random_shape_spec(cls, 256, 99);
    PointCloud c = generate_shape(spec);
    REQUIRE(c.size() == 256);
    REQUIRE(c.class_label == cls);
    Point3 mean{0, 0, 0};
    double max_norm = 0;
    for (const Point3& p : c.points) {
      REQUIRE(p.finite());
      mean = mean + p;
      max_norm = std::max(max_norm, p.norm());
    }
    mean = mean * (1.0 / 256.0);
    REQUIRE(std::abs(mean.x) < 1e-9);
    REQUIRE(max_norm == Catch::Approx(1.0).margin(1e-9));
  }
  REQUIRE_THROWS_AS(random_shape_spec("pyramid", 10, 0), std::invalid_argument);
}

TEST_CASE("corpus generation is deterministic and indexed") {
  TempDir a, b;
  auto rows1 = generate_corpus({"box", "torus"}, 3, 64, 7, a.path.string());
  auto rows2 = generate_corpus({"box", "torus"}, 3, 64, 7, b.path.string());
  REQUIRE(rows1.size() == 6);
  REQUIRE(rows1.size() == rows2.size());
  for (std::size_t i = 0; i < rows1.size(); ++i) {
    REQUIRE(rows1[i].path == rows2[i].path);
    std::ifstream f1(a.path / rows1[i].path, std::ios::binary);
    std::ifstream f2(b.path / rows2[i].path, std::ios::binary);
    std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(c1 == c2);
    REQUIRE(!c1.empty());
  }
  auto index = load_corpus_index(a.path.string());
  REQUIRE(index.size() == 6);
  int boxes = 0;
  for (const auto& row : index)
    if (row.class_name == "box") ++boxes;
  REQUIRE(boxes == 3);
  for (const auto& row : index) {
    PointCloud c = read_cloud((a.path / row.path).string());
    REQUIRE(c.size() == 64);
  }
}
