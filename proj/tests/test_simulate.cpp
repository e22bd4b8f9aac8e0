#include <doctest.h>

#include "glhad/simulate.hpp"
#include "glhad/structure.hpp"
#include "helpers.hpp"

using namespace glhad;

TEST_CASE("identical seeds reproduce identical records bit-for-bit") {
  const SystemModel sys = testutil::study_system();
  const Simulator sim(sys);
  AttackSpec attack{1, Vector::Ones(5)};
  const RunRecord a = sim.run(attack, 123456789ULL);
  const RunRecord b = sim.run(attack, 123456789ULL);
  CHECK(a.y == b.y);
  const RunRecord c = sim.run(attack, 123456790ULL);
  CHECK(a.y != c.y);
}

TEST_CASE("noiseless propagation matches H x_tilde exactly") {
  const SystemModel sys = testutil::study_system();
  const Simulator sim(sys);
  const RunRecord rec = sim.propagate(sys.x0, sys.refs, {}, {}, {});
  const Matrix H = closed_form_H(sys);
  const Vector expected = H * augmented_state(sys);
  CHECK((rec.y - expected).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("attack superposition: y(attack) - y(clean) = H1 delta") {
  const SystemModel sys = testutil::study_system();
  const Simulator sim(sys);
  const Matrix H1 = closed_form_H1(sys);
  std::mt19937_64 rng(5);
  for (int stage = 0; stage <= 3; ++stage) {
    const Vector delta = testutil::random_matrix(rng, 5, 1).col(0);
    AttackSpec attack{stage, delta};
    const RunRecord clean = sim.run(std::nullopt, 777);
    const RunRecord hit = sim.run(attack, 777);
    Vector stacked = Vector::Zero(20);
    stacked.segment(sys.sensor_offset(stage), 5) = delta;
    CHECK((hit.y - clean.y - H1 * stacked).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("noiseless residual is zero; sample mean matches the analytic mean") {
  const SystemModel sys = testutil::study_system();
  const StructureMatrices sm = build_structure(sys, StructureRoute::ClosedForm);
  const Simulator sim(sys);
  const Matrix deflate = Matrix::Identity(20, 20) - sm.proj;
  const RunRecord noiseless = sim.propagate(sys.x0, sys.refs, {}, {}, {});
  CHECK((deflate * noiseless.y).cwiseAbs().maxCoeff() <= 1e-9);

  const int reps = 10000;
  Vector mean = Vector::Zero(20);
  for (int r = 0; r < reps; ++r) mean += sim.run(std::nullopt, derive_seed(42, 0, r)).y;
  mean /= reps;
  const Vector analytic = sm.H * augmented_state(sys);
  for (int i = 0; i < 20; ++i) {
    const double se = std::sqrt(sm.Sigma_eps(i, i) / reps);
    CHECK(std::abs(mean(i) - analytic(i)) <= 3.5 * se);
  }
}

TEST_CASE("make_attack: identity covariance and zero-SNR corner cases") {
  const SystemModel sys = testutil::study_system();
  const Matrix eye = Matrix::Identity(20, 20);
  const AttackSpec a = make_attack(sys, eye, 0, Vector::Unit(5, 0), 2.0);
  CHECK((a.delta - 2.0 * Vector::Unit(5, 0)).cwiseAbs().maxCoeff() <= 1e-12);
  const AttackSpec z = make_attack(sys, eye, 0, Vector::Unit(5, 0), 0.0);
  CHECK(z.delta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("make_attack hits the requested SNR to 1e-10") {
  const SystemModel sys = testutil::study_system();
  const StructureMatrices sm = build_structure(sys, StructureRoute::ClosedForm);
  for (int stage = 0; stage <= 3; ++stage) {
    for (double snr : {0.6, 1.4, 4.0}) {
      const Vector dir = random_unit_direction(5, 1000 + stage);
      const AttackSpec a = make_attack(sys, sm.Sigma_eps, stage, dir, snr);
      const int off = sys.sensor_offset(stage);
      const Matrix block = sm.Sigma_eps.block(off, off, 5, 5);
      const double re = std::sqrt(a.delta.dot(block.llt().solve(a.delta)));
      CHECK(std::abs(re - snr) <= 1e-10);
    }
  }
}

TEST_CASE("make_attack rejects bad inputs") {
  const SystemModel sys = testutil::study_system();
  const Matrix eye = Matrix::Identity(20, 20);
  CHECK_THROWS_AS(make_attack(sys, eye, 7, Vector::Ones(5), 1.0), ModelError);
  CHECK_THROWS_AS(make_attack(sys, eye, 0, Vector::Zero(5), 1.0), ModelError);
  CHECK_THROWS_AS(make_attack(sys, eye, 0, Vector::Ones(4), 1.0), ModelError);
  // Direction entirely in the covariance null space cannot carry signal.
  CHECK_THROWS_AS(make_attack(sys, Matrix::Zero(20, 20), 0, Vector::Ones(5), 1.0),
                  GeometryError);
}

TEST_CASE("attack stage out of range is rejected at run time") {
  const SystemModel sys = testutil::study_system();
  const Simulator sim(sys);
  CHECK_THROWS_AS(sim.run(AttackSpec{4, Vector::Ones(5)}, 1), ModelError);
  CHECK_THROWS_AS(sim.run(AttackSpec{0, Vector::Ones(3)}, 1), ModelError);
}

TEST_CASE("derived seeds differ across streams and counters") {
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 0, 1));
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 1, 0));
  CHECK(derive_seed(1, 0, 0) != derive_seed(2, 0, 0));
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
}

TEST_CASE("simulator requires synthesized gains") {
  const SystemModel sys = testutil::study_system(false);
  CHECK_THROWS_AS(Simulator{sys}, SynthesisError);
}
