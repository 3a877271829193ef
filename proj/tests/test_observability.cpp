#include <doctest.h>

#include <random>

#include "inekf/observability.hpp"

using namespace inekf;

namespace {

std::mt19937_64 rng(31415);

Eigen::Vector3d randomVec3(double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Eigen::Vector3d(u(rng), u(rng), u(rng));
}

const Eigen::Vector3d kGravity(0.0, 0.0, -9.81);

// generic excited state evaluated at phi = 0, where [g; 0] is exactly the
// yaw direction of the chart
RobocentricState dynamicState() {
  RobocentricState s;
  s.v_bar = Eigen::Vector3d(0.4, 0.1, -0.05);
  s.p_bar = Eigen::Vector3d(1.0, 2.0, 0.5);
  s.bias_gyro = Eigen::Vector3d(0.01, -0.005, 0.008);
  s.bias_accel = Eigen::Vector3d(0.05, -0.02, 0.03);
  s.phi_c = Eigen::Vector3d(0.05, -0.1, 0.2);
  s.p_c = Eigen::Vector3d(0.12, 0.03, 0.2);
  return s;
}

ObsInput dynamicInput(const RobocentricState& s) {
  ObsInput in;
  in.omega = s.bias_gyro + Eigen::Vector3d(0.3, -0.2, 0.5);
  in.accel = s.bias_accel + Eigen::Vector3d(0.5, 0.1, 9.0);
  return in;
}

// singular-value gap safety check: one order of magnitude on both sides
void checkRankGap(const Eigen::MatrixXd& m, int rank, double tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  const double cut = tol * sv(0);
  REQUIRE(rank >= 1);
  REQUIRE(rank < sv.size());
  CHECK(sv(rank - 1) > 10.0 * cut);
  CHECK(sv(rank) < 0.1 * cut);
}

}  // namespace

TEST_CASE("order zero gradient has the identity velocity block") {
  RobocentricState s = dynamicState();
  s.phi_c.setZero();  // R_c = I
  s.p_c.setZero();
  const ObsInput in = dynamicInput(s);
  const Eigen::MatrixXd obs = continuousObsMatrix(s, in, 0);
  REQUIRE(obs.rows() == 9);  // camera + kinematic blocks, then rate rows
  CHECK((obs.block<3, 3>(0, 3) - Eigen::Matrix3d::Identity()).norm() < 1e-8);
  // the rate rows see the gyro bias directly
  CHECK((obs.block<3, 3>(6, 12) + Eigen::Matrix3d::Identity()).norm() < 1e-8);
}

TEST_CASE("position columns vanish for any state and input") {
  for (int i = 0; i < 5; ++i) {
    RobocentricState s = dynamicState();
    s.v_bar = randomVec3(0.6);
    s.p_bar = randomVec3(2.0);
    s.phi = randomVec3(0.8);
    ObsInput in;
    in.omega = randomVec3(0.7);
    in.accel = randomVec3(3.0) + Eigen::Vector3d(0, 0, 9.81);
    const Eigen::MatrixXd obs = continuousObsMatrix(s, in, 6);
    CHECK(obs.middleCols<3>(6).norm() < 1e-9);
  }
}

TEST_CASE("dynamic case: nullity 5 with the closed-form nullspace directions") {
  const RobocentricState s = dynamicState();
  const ObsInput in = dynamicInput(s);
  const Eigen::MatrixXd obs = continuousObsMatrix(s, in, 6);

  const ObservabilityReport report = classifyCase(s, in);
  CHECK(report.classified_case == ObservabilityCase::kDynamic);
  CHECK(report.numeric_rank == 16);
  CHECK(report.nullity() == 5);
  CHECK(report.camera_block_rank == 5);  // extrinsic rotation 3 + position 2
  checkRankGap(obs, 16, report.tolerance);

  // yaw about gravity, absolute position, and camera position along
  // the body rate
  Vector21d u_yaw = Vector21d::Zero();
  u_yaw.head<3>() = kGravity.normalized();
  CHECK((obs * u_yaw).norm() < 1e-6);

  for (int i = 0; i < 3; ++i) {
    Vector21d u_pos = Vector21d::Zero();
    u_pos(6 + i) = 1.0;
    CHECK((obs * u_pos).norm() < 1e-6);
  }

  Vector21d u_pc = Vector21d::Zero();
  u_pc.tail<3>() = (in.omega - s.bias_gyro).normalized();
  CHECK((obs * u_pc).norm() < 1e-6);

  // nullspace basis is orthonormal and annihilated
  CHECK((report.nullspace.transpose() * report.nullspace -
         Eigen::MatrixXd::Identity(5, 5))
            .norm() < 1e-10);
  CHECK((obs * report.nullspace).norm() < 1e-5);
}

// At rest the camera pose (6) drops out entirely on top of the nominal
// directions (yaw, position, and, with omega = 0, the p_c direction is
// already inside the camera block). The perpendicular-tilt /
// accelerometer-bias pair is also unobservable without rotation, which
// the quoted rank-loss figures do not count; the camera-block rank is
// what carries those figures.
TEST_CASE("hovering case: camera pose fully unobservable") {
  RobocentricState s = dynamicState();
  s.v_bar.setZero();
  ObsInput in;
  in.omega = s.bias_gyro;              // omega_bar = 0
  in.accel = s.bias_accel - kGravity;  // hover
  const ObservabilityReport report = classifyCase(s, in);
  CHECK(report.classified_case == ObservabilityCase::kOmegaZeroVelZero);
  CHECK(report.nullity() == 12);
  CHECK(report.camera_block_rank == 0);  // rank loss 5 against dynamic
  checkRankGap(continuousObsMatrix(s, in, 6), 9, report.tolerance);

  const Eigen::MatrixXd obs = continuousObsMatrix(s, in, 6);
  // both camera blocks lie in the nullspace
  for (int i = 0; i < 3; ++i) {
    Vector21d u_rc = Vector21d::Zero();
    u_rc(15 + i) = 1.0;
    CHECK((obs * u_rc).norm() < 1e-6);
    Vector21d u_pc = Vector21d::Zero();
    u_pc(18 + i) = 1.0;
    CHECK((obs * u_pc).norm() < 1e-6);
  }
  // tilt perpendicular to gravity trades exactly against accelerometer
  // bias while at rest
  for (int axis = 0; axis < 2; ++axis) {
    Vector21d u = Vector21d::Zero();
    u.segment<3>(0) = Eigen::Vector3d::Unit(axis);
    u.segment<3>(9) = kGravity.cross(Eigen::Vector3d::Unit(axis));
    u.normalize();
    CHECK((obs * u).norm() < 1e-6);
  }
}

TEST_CASE("steady translation: camera rank loss 3") {
  RobocentricState s = dynamicState();
  s.v_bar = Eigen::Vector3d(1.0, 0.0, 0.0);
  ObsInput in;
  in.omega = s.bias_gyro;
  in.accel = s.bias_accel - kGravity;  // constant velocity
  const ObservabilityReport report = classifyCase(s, in);
  CHECK(report.classified_case == ObservabilityCase::kOmegaZeroVelNonzero);
  CHECK(report.nullity() == 10);
  CHECK(report.camera_block_rank == 2);  // rank loss 3 against dynamic
  checkRankGap(continuousObsMatrix(s, in, 6), 11, report.tolerance);

  // camera rotation about the velocity direction is unobservable; the
  // chart direction carries the left-Jacobian factor of the phi_c chart
  const Eigen::MatrixXd obs = continuousObsMatrix(s, in, 6);
  Vector21d u_rot_v = Vector21d::Zero();
  u_rot_v.segment<3>(15) =
      so3LeftJacobianInverse(s.phi_c) * s.v_bar.normalized();
  u_rot_v.normalize();
  CHECK((obs * u_rot_v).norm() < 1e-6);
}

TEST_CASE("numericRank and nullspaceBasis basics") {
  CHECK(numericRank(Eigen::MatrixXd::Identity(5, 5)) == 5);
  CHECK(nullspaceBasis(Eigen::MatrixXd::Identity(5, 5)).cols() == 0);

  Eigen::VectorXd a = Eigen::VectorXd::Random(7);
  Eigen::VectorXd b = Eigen::VectorXd::Random(4);
  CHECK(numericRank(a * b.transpose()) == 1);

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(20, 21);
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 21; ++c) m(r, c) = normal(rng);
  CHECK(numericRank(m) == 20);
  const Eigen::MatrixXd null_basis = nullspaceBasis(m);
  REQUIRE(null_basis.cols() == 1);
  CHECK((m * null_basis).norm() < 1e-10);
  CHECK(std::abs(null_basis.col(0).norm() - 1.0) < 1e-10);
}

TEST_CASE("discreteObsMatrix stacking") {
  std::vector<std::pair<Matrix3x21d, Matrix21d>> rows;
  Matrix3x21d h0 = Matrix3x21d::Random();
  rows.emplace_back(h0, Matrix21d::Identity());
  CHECK((discreteObsMatrix(rows) - h0).norm() == 0.0);

  // Phi = I: plain vertical stack
  Matrix3x21d h1 = Matrix3x21d::Random();
  rows.emplace_back(h1, Matrix21d::Identity());
  const Eigen::MatrixXd stacked = discreteObsMatrix(rows);
  CHECK((stacked.topRows<3>() - h0).norm() == 0.0);
  CHECK((stacked.bottomRows<3>() - h1).norm() == 0.0);

  // nontrivial Phi multiplies later rows from the right
  Matrix21d phi = Matrix21d::Identity();
  phi(0, 5) = 0.3;
  std::vector<std::pair<Matrix3x21d, Matrix21d>> rows2;
  rows2.emplace_back(h0, phi);
  rows2.emplace_back(h1, Matrix21d::Identity());
  const Eigen::MatrixXd stacked2 = discreteObsMatrix(rows2);
  CHECK((stacked2.bottomRows<3>() - h1 * phi).norm() == 0.0);

  CHECK_THROWS_AS((void)discreteObsMatrix({}), std::invalid_argument);
}

TEST_CASE("continuousObsMatrix rejects bad orders") {
  const RobocentricState s = dynamicState();
  CHECK_THROWS_AS((void)continuousObsMatrix(s, ObsInput{}, 7),
                  std::invalid_argument);
}
