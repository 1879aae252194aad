#include "objslam/io.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace objslam;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("objslam_io_" + tag);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

// Horn's closed form via the unit quaternion maximising q^T N q (largest
// eigenvector of the 4x4 symmetric N), independent of the SVD route.
double horn_quaternion_rmse(const std::vector<Vec3>& est, const std::vector<Vec3>& gt) {
  const auto n = est.size();
  Vec3 ce = Vec3::Zero(), cg = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    ce += est[i];
    cg += gt[i];
  }
  ce /= static_cast<double>(n);
  cg /= static_cast<double>(n);
  Mat3 s = Mat3::Zero();
  for (std::size_t i = 0; i < n; ++i) s += (est[i] - ce) * (gt[i] - cg).transpose();
  const double sxx = s(0, 0), sxy = s(0, 1), sxz = s(0, 2), syx = s(1, 0), syy = s(1, 1),
               syz = s(1, 2), szx = s(2, 0), szy = s(2, 1), szz = s(2, 2);
  Eigen::Matrix4d nm;
  nm << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
      syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
      szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
      sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(nm);
  const Eigen::Vector4d v = es.eigenvectors().col(3);
  const Mat3 r = Eigen::Quaterniond(v[0], v[1], v[2], v[3]).normalized().toRotationMatrix();
  const Vec3 t = cg - r * ce;
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) sq += (r * est[i] + t - gt[i]).squaredNorm();
  return std::sqrt(sq / static_cast<double>(n));
}

TrajectoryRecord wavy_trajectory(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TrajectoryRecord rec;
  for (int i = 0; i < n; ++i) {
    const double a = 0.1 * i;
    Pose p = Pose::from_quaternion(
        Eigen::Quaterniond(Eigen::AngleAxisd(a, Vec3(0.3, 1.0, 0.2).normalized())),
        Vec3(std::cos(a), std::sin(1.3 * a), 0.2 * std::sin(0.7 * a)));
    p = se3_exp(testing::random_twist(rng, 0.01, 0.01)) * p;
    rec.poses.push_back({1000.0 + i / 30.0, p});
  }
  return rec;
}

}  // namespace

TEST_CASE("16-bit and RGB PNG round trips; depth scale 1/5000") {
  TempDir dir("png");
  Image<std::uint16_t> raw(7, 5);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<std::uint16_t>(i * 1871 + 3);
  raw[0] = 5000;
  write_png_u16(dir.path / "d.png", raw);
  const auto back = read_png_u16(dir.path / "d.png");
  CHECK(back == raw);
  CHECK(decode_depth(back)(0, 0) == 1.0f);

  Image<std::uint16_t> small(2, 1);
  small[0] = 0x1388;
  small[1] = 0xffff;
  write_png_u16(dir.path / "s.png", small);
  CHECK(read_png_u16(dir.path / "s.png") == small);

  RgbImage rgb(4, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x)
      rgb(x, y) = {static_cast<std::uint8_t>(10 * x), static_cast<std::uint8_t>(50 * y), 7};
  write_png_rgb(dir.path / "c.png", rgb);
  CHECK(read_png_rgb(dir.path / "c.png") == rgb);

  DepthImage depth(3, 1, 0.0f);
  depth[0] = 1.0f;
  depth[1] = 2.5f;
  const auto enc = encode_depth(depth);
  CHECK(enc[0] == 5000);
  CHECK(enc[1] == 12500);
  CHECK(enc[2] == 0);

  std::ofstream(dir.path / "bad.png") << "not a png";
  CHECK_THROWS_AS(read_png_u16(dir.path / "bad.png"), std::runtime_error);
}

TEST_CASE("TUM reader associates within 0.02 s and skips the rest") {
  TempDir dir("tum");
  std::filesystem::create_directories(dir.path / "rgb");
  std::filesystem::create_directories(dir.path / "depth");
  RgbImage rgb(4, 4, Rgb{1, 2, 3});
  Image<std::uint16_t> d(4, 4, 5000);
  for (const char* name : {"rgb/1.000.png", "rgb/2.000.png", "rgb/3.000.png"})
    write_png_rgb(dir.path / name, rgb);
  for (const char* name : {"depth/1.015.png", "depth/2.050.png", "depth/2.990.png"})
    write_png_u16(dir.path / name, d);
  std::ofstream(dir.path / "rgb.txt") << "# color images\n1.000 rgb/1.000.png\n2.000 rgb/2.000.png\n3.000 rgb/3.000.png\n";
  std::ofstream(dir.path / "depth.txt") << "# depth\n1.015 depth/1.015.png\n2.050 depth/2.050.png\n2.990 depth/2.990.png\n";

  TumReader reader(dir.path);
  REQUIRE(reader.entries().size() == 2);
  CHECK(reader.skipped() == 1);
  CHECK(reader.entries()[0].rgb_time == 1.0);
  CHECK(reader.entries()[0].depth_time == 1.015);
  CHECK(reader.entries()[1].rgb_time == 3.0);
  CHECK_FALSE(reader.groundtruth().has_value());

  const auto f = reader.next();
  REQUIRE(f.has_value());
  CHECK(f->depth(2, 2) == 1.0f);
  CHECK(f->rgb(0, 0) == Rgb{1, 2, 3});
  CHECK(reader.next().has_value());
  CHECK_FALSE(reader.next().has_value());

  std::filesystem::remove(dir.path / "depth.txt");
  CHECK_THROWS_AS(TumReader(dir.path), std::runtime_error);
}

TEST_CASE("timestamp association is greedy by smallest gap, one use each") {
  const auto pairs = associate_timestamps({1.0, 1.01, 2.0}, {1.012, 1.5, 2.015}, 0.02);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0] == std::pair<std::size_t, std::size_t>{1, 0});  // 1.01 <-> 1.012 wins
  CHECK(pairs[1] == std::pair<std::size_t, std::size_t>{2, 2});
}

TEST_CASE("trajectory file format and round trip") {
  std::ostringstream empty;
  write_trajectory(empty, TrajectoryRecord{});
  CHECK(empty.str().empty());

  TrajectoryRecord one{{{12.5, Pose::identity()}}};
  std::ostringstream os;
  write_trajectory(os, one);
  CHECK(os.str() == "12.500000 0.000000 0.000000 0.000000 0.000000 0.000000 0.000000 1.000000\n");

  const auto rec = wavy_trajectory(50, 3);
  std::ostringstream out;
  write_trajectory(out, rec);
  std::istringstream in(out.str());
  const auto back = read_trajectory(in);
  REQUIRE(back.poses.size() == rec.poses.size());
  for (std::size_t i = 0; i < rec.poses.size(); ++i) {
    CHECK(std::abs(back.poses[i].timestamp - rec.poses[i].timestamp) <= 5e-7);
    CHECK((back.poses[i].pose.translation() - rec.poses[i].pose.translation()).cwiseAbs().maxCoeff() <= 5e-7);
    CHECK(back.poses[i].pose.quaternion().angularDistance(rec.poses[i].pose.quaternion()) < 4e-6);
  }

  std::istringstream bad_q("0 0 0 0 0 0 0 2\n");
  CHECK_THROWS_AS(read_trajectory(bad_q), std::runtime_error);
  std::istringstream bad_t("2 0 0 0 0 0 0 1\n1 0 0 0 0 0 0 1\n");
  CHECK_THROWS_AS(read_trajectory(bad_t), std::runtime_error);
  std::istringstream short_line("1 0 0\n");
  CHECK_THROWS_AS(read_trajectory(short_line), std::runtime_error);
}

TEST_CASE("ATE: zero cases, rigid invariance, too few matches") {
  const auto truth = wavy_trajectory(100, 5);
  CHECK(ate_rmse(truth, truth) < 1e-12);

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const Pose g = testing::random_pose(rng, 2.0);
    TrajectoryRecord moved = truth;
    for (auto& p : moved.poses) p.pose = g * p.pose;
    CHECK(ate_rmse(moved, truth) < 1e-9);

    // Invariance with a genuinely noisy estimate, transforming either side.
    TrajectoryRecord noisy = truth;
    for (auto& p : noisy.poses) p.pose = se3_exp(testing::random_twist(rng, 0.02, 0.0)) * p.pose;
    const double base = ate_rmse(noisy, truth);
    TrajectoryRecord noisy_moved = noisy, truth_moved = truth;
    for (auto& p : noisy_moved.poses) p.pose = g * p.pose;
    for (auto& p : truth_moved.poses) p.pose = g * p.pose;
    CHECK(std::abs(ate_rmse(noisy_moved, truth) - base) < 1e-9);
    CHECK(std::abs(ate_rmse(noisy, truth_moved) - base) < 1e-9);
  }

  TrajectoryRecord two{{truth.poses[0], truth.poses[1]}};
  CHECK_THROWS_AS(ate_rmse(two, truth), std::invalid_argument);
  TrajectoryRecord shifted = truth;
  for (auto& p : shifted.poses) p.timestamp += 10.0;
  CHECK_THROWS_AS(ate_rmse(shifted, truth), std::invalid_argument);
}

TEST_CASE("ATE: one pose offset by 0.1 m among 100 matches the Horn oracle") {
  const auto truth = wavy_trajectory(100, 6);
  TrajectoryRecord est = truth;
  est.poses[37].pose = Pose::from_translation(Vec3(0.1, 0.0, 0.0)) * est.poses[37].pose;

  std::vector<Vec3> e, g;
  for (std::size_t i = 0; i < truth.poses.size(); ++i) {
    e.push_back(est.poses[i].pose.translation());
    g.push_back(truth.poses[i].pose.translation());
  }
  const double ate = ate_rmse(est, truth);
  CHECK(ate == doctest::Approx(horn_quaternion_rmse(e, g)).epsilon(1e-9));

  // Translation-only alignment gives exactly 0.1 sqrt(N-1) / N; a rotation
  // can only lower it, and only slightly for a 1% outlier.
  const double translation_only = 0.1 * std::sqrt(99.0) / 100.0;
  CHECK(ate <= translation_only + 1e-12);
  CHECK(ate > 0.95 * translation_only);
  CHECK(ate == doctest::Approx(0.1 / std::sqrt(100.0)).epsilon(0.05));
}

TEST_CASE("volume dump round trip with sidecar") {
  TempDir dir("vox");
  ObjectVolume o;
  o.id = 7;
  o.volume.pose = Pose::from_quaternion(Eigen::Quaterniond(0.9, 0.1, -0.2, 0.3), Vec3(1, 2, 3));
  o.volume.grid = VoxelGrid(8, 0.05);
  o.existence = {4, 1};
  o.class_distribution = {0.25, 0.75};
  o.detection_count = 3;
  for (std::size_t i = 0; i < o.volume.grid.voxels().size(); ++i)
    o.volume.grid.voxels()[i] = {static_cast<float>(i) * 0.001f - 0.2f, static_cast<std::uint16_t>(i),
                                 static_cast<std::uint16_t>(i % 7 + 1), static_cast<std::uint16_t>(65535 - i)};
  write_volume_dump(dir.path / "obj7", o);
  CHECK(std::filesystem::file_size(dir.path / "obj7.vox") == 512 * 10);

  // Byte layout: voxel 1 = f32 sdf, u16 weight, u16 fg, u16 bg, little-endian.
  std::ifstream raw(dir.path / "obj7.vox", std::ios::binary);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(raw)), {});
  CHECK(b[10 + 4] == 1);
  CHECK(b[10 + 5] == 0);
  CHECK(b[10 + 8] == 0xfe);
  CHECK(b[10 + 9] == 0xff);

  const auto back = read_volume_dump(dir.path / "obj7");
  CHECK(back.id == 7);
  CHECK(back.volume.grid.voxels() == o.volume.grid.voxels());
  CHECK(back.resolution() == 8);
  CHECK(back.voxel_size() == 0.05);
  CHECK(back.existence.exists == 4);
  CHECK(back.class_distribution == o.class_distribution);
  CHECK((back.pose().matrix() - o.pose().matrix()).cwiseAbs().maxCoeff() < 1e-12);

  std::filesystem::resize_file(dir.path / "obj7.vox", 100);
  CHECK_THROWS_AS(read_volume_dump(dir.path / "obj7"), std::runtime_error);
}
