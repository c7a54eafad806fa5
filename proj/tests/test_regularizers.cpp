#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "molgrad/denoiser.hpp"
#include "molgrad/regularizers.hpp"
#include "support.hpp"

using namespace molgrad;
using molgrad::test::random_vector;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) out[i++] = e;
  return out;
}

// Huber by brute force: min_y |y| + (x − y)²/(2γ) on a 1e−4 grid over [−5, 5].
double envelope_grid(double x, double gamma) {
  double best = kInfinity;
  for (int i = -50000; i <= 50000; ++i) {
    const double y = i * 1e-4;
    best = std::min(best, std::abs(y) + (x - y) * (x - y) / (2.0 * gamma));
  }
  return best;
}

}  // namespace

TEST(Soft, Examples) {
  EXPECT_DOUBLE_EQ(soft(2.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(soft(0.5, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(soft(-3.0, 1.0), -2.0);
}

TEST(Firm, Examples) {
  const ShrinkageParams p{1.0, 2.0};
  EXPECT_DOUBLE_EQ(firm(0.9, p), 0.0);
  EXPECT_DOUBLE_EQ(firm(1.5, p), 1.0);
  EXPECT_DOUBLE_EQ(firm(3.0, p), 3.0);
  EXPECT_DOUBLE_EQ(firm(-1.5, p), -1.0);
}

TEST(Firm, RejectsBadThresholds) {
  EXPECT_THROW((ShrinkageParams{2.0, 1.0}.validate()), ParameterError);
  EXPECT_THROW((ShrinkageParams{1.0, 1.0}.validate()), ParameterError);
  EXPECT_THROW((ShrinkageParams{0.0, 1.0}.validate()), ParameterError);
  EXPECT_THROW(firm_denoiser({2.0, 1.0}), ParameterError);
}

TEST(Firm, OddContinuousMonotone) {
  for (const ShrinkageParams p : {ShrinkageParams{1, 2}, ShrinkageParams{2.5, 5}, ShrinkageParams{1, 10}}) {
    double prev = firm(-20.0, p);
    for (int i = -200000; i <= 200000; ++i) {
      const double x = i * 1e-4;
      const double v = firm(x, p);
      ASSERT_DOUBLE_EQ(v, -firm(-x, p));
      ASSERT_GE(v, prev);
      ASSERT_LE(v - prev, p.max_slope() * 1e-4 * (1.0 + 1e-9) + 1e-12);
      prev = v;
    }
  }
}

TEST(Garrote, Examples) {
  EXPECT_DOUBLE_EQ(garrote(0.8, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(garrote(2.0, 1.0), 1.5);
  EXPECT_DOUBLE_EQ(garrote(-2.0, 1.0), -1.5);
}

TEST(McPenalty, Examples) {
  EXPECT_DOUBLE_EQ(mc_penalty(0.0, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(mc_penalty(1.0, 2.0), 0.75);
  EXPECT_DOUBLE_EQ(mc_penalty(3.0, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(firm_penalty({1.0, 2.0}).weak_convexity(), 0.5);
}

TEST(GarrotePenalty, Values) {
  EXPECT_EQ(garrote_penalty(0.0, 1.0), 0.0);
  const double s5 = std::sqrt(5.0);
  EXPECT_NEAR(garrote_penalty(1.0, 1.0), 0.25 * (s5 - 1.0) + std::log((1.0 + s5) / 2.0), 1e-15);
  EXPECT_NEAR(garrote_penalty(1.0, 1.0), 0.790229, 1e-6);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> U(-10, 10);
  for (int i = 0; i < 100; ++i) {
    const double x = U(gen);
    EXPECT_EQ(garrote_penalty(x, 1.3), garrote_penalty(-x, 1.3));
  }
}

TEST(GarrotePenalty, StableNearZero) {
  // Naive form: ¼(|x|√(x²+4λ²) − x²) + λ²·log((|x|+√(x²+4λ²))/2λ); leading term |x|λ.
  for (double x : {1e-6, 1e-9, 1e-12}) EXPECT_NEAR(garrote_penalty(x, 1.0) / x, 1.0, 1e-6);
}

TEST(Penalty, CatalogFiniteAtZeroAndMidpointConvex) {
  const std::vector<Penalty> catalog = {abs_penalty(1.5), firm_penalty({1.0, 2.0}), firm_penalty({2.5, 5.0}),
                                        garrote_penalty_fn(1.0), vector_firm_penalty({1.0, 2.0}),
                                        nonnegative_indicator()};
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> U(-10, 10);
  for (const auto& phi : catalog) {
    EXPECT_TRUE(std::isfinite(phi(0.0))) << phi.name();
    const Penalty cvx = phi.convexified(phi.weak_convexity());
    for (int i = 0; i < 2000; ++i) {
      const double a = U(gen), b = U(gen);
      const double fa = cvx(a), fb = cvx(b);
      if (std::isinf(fa) || std::isinf(fb)) continue;
      ASSERT_LE(cvx(0.5 * (a + b)), 0.5 * (fa + fb) + 1e-9) << phi.name() << " a=" << a << " b=" << b;
    }
  }
}

TEST(Penalty, WeakConvexityIsNotOverstated) {
  // Slightly less curvature than the declared modulus must break convexity of
  // the MC penalty somewhere on |x| < λ₂.
  const Penalty phi = firm_penalty({1.0, 2.0});
  const Penalty under = phi.convexified(0.9 * phi.weak_convexity());
  EXPECT_GT(under(0.5 * (0.5 + 1.5)), 0.5 * (under(0.5) + under(1.5)));
}

TEST(Envelope, ScalarExamples) {
  auto e = moreau_envelope_abs(0.5, 1.0);
  EXPECT_DOUBLE_EQ(e.value, 0.125);
  EXPECT_DOUBLE_EQ(e.gradient, 0.5);
  e = moreau_envelope_abs(3.0, 1.0);
  EXPECT_DOUBLE_EQ(e.value, 2.5);
  EXPECT_DOUBLE_EQ(e.gradient, 1.0);
  e = moreau_envelope_abs(0.0, 0.7);
  EXPECT_EQ(e.value, 0.0);
  EXPECT_EQ(e.gradient, 0.0);
}

TEST(Envelope, MatchesGridMinimization) {
  for (double x : {0.5, 3.0, -1.2, 0.05}) {
    EXPECT_NEAR(moreau_envelope_abs(x, 1.0).value, envelope_grid(x, 1.0), 1e-8) << x;
  }
}

TEST(Envelope, VectorExamples) {
  const auto z0 = moreau_envelope_l1(Vector::Zero(4), 1.0);
  EXPECT_EQ(z0.value, 0.0);
  EXPECT_EQ(z0.gradient, Vector::Zero(4));
  EXPECT_DOUBLE_EQ(moreau_envelope_l1(vec({0.5, 3.0}), 1.0).value, 2.625);
}

TEST(Envelope, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(12);
  for (int i = 0; i < 20; ++i) {
    const Vector z = random_vector(6, gen, 2.0);
    const double gamma = 0.5 + i * 0.1;
    const Vector g = moreau_envelope_l1(z, gamma).gradient;
    const Vector fd = molgrad::test::central_gradient(
        [gamma](const Vector& v) { return moreau_envelope_l1(v, gamma).value; }, z, 1e-6);
    EXPECT_LE((g - fd).norm(), 1e-6 * std::max(1.0, g.norm()));
  }
}

TEST(VectorFirm, Examples) {
  const ShrinkageParams p{1.0, 2.0};
  EXPECT_EQ(vector_firm(vec({3, 4}), p), vec({3, 4}));
  EXPECT_EQ(vector_firm(vec({0.3, -0.4}), p), Vector::Zero(2));
  EXPECT_EQ(vector_firm(Vector::Zero(3), p), Vector::Zero(3));
  EXPECT_TRUE(vector_firm(vec({0.9, 1.2}), p).isApprox(vec({0.6, 0.8}), 1e-15));
}

TEST(VectorFirm, RotationEquivariance) {
  const ShrinkageParams p{1.0, 2.0};
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> angle(0, 2 * std::numbers::pi);
  for (int i = 0; i < 500; ++i) {
    const double t = angle(gen);
    Matrix Q(2, 2);
    Q << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
    const Vector x = random_vector(2, gen, 1.5);
    EXPECT_LE((vector_firm(Vector(Q * x), p) - Q * vector_firm(x, p)).norm(), 1e-10);
  }
}

TEST(GroupFirm, DegeneratePartitions) {
  const ShrinkageParams p{1.0, 2.0};
  std::mt19937_64 gen(14);
  for (int i = 0; i < 50; ++i) {
    const Vector x = random_vector(6, gen, 2.0);
    EXPECT_EQ(group_firm(x, GroupStructure::from_sizes({6}), p), vector_firm(x, p));
    EXPECT_LE((group_firm(x, GroupStructure::from_sizes({1, 1, 1, 1, 1, 1}), p) - firm(x, p)).norm(), 1e-14);
  }
}

TEST(GroupFirm, TwoBlocks) {
  const ShrinkageParams p{1.0, 2.0};
  const Vector x = vec({0.3, 0.4, 3.0, 4.0});
  EXPECT_EQ(group_firm(x, GroupStructure::from_sizes({2, 2}), p), vec({0, 0, 3, 4}));
}

TEST(GroupFirm, BlockwiseEqualsVectorFirm) {
  const ShrinkageParams p{0.7, 3.0};
  const auto g = GroupStructure::from_sizes({2, 3, 1});
  std::mt19937_64 gen(15);
  for (int i = 0; i < 50; ++i) {
    const Vector x = random_vector(6, gen, 2.0);
    const Vector out = group_firm(x, g, p);
    for (const auto& b : g.blocks())
      EXPECT_EQ(Vector(out.segment(b.start, b.size)), vector_firm(x.segment(b.start, b.size), p));
  }
}

TEST(GroupStructure, RejectsInvalidPartitions) {
  using B = GroupStructure::Block;
  EXPECT_THROW(GroupStructure(std::vector<B>{}), InputError);
  EXPECT_THROW(GroupStructure(std::vector<B>{{0, 2}, {1, 2}}), InputError);
  EXPECT_THROW(GroupStructure(std::vector<B>{{0, 2}, {3, 1}}), InputError);
  EXPECT_THROW(GroupStructure(std::vector<B>{{0, 0}}), InputError);
  EXPECT_THROW(group_firm(Vector::Zero(5), GroupStructure::from_sizes({2, 2}), {1.0, 2.0}), InputError);
}

TEST(Catalog, NoDiscontinuousOperator) {
  // Jumps larger than (Lipschitz bound)·step between adjacent grid points
  // would betray a discontinuity such as hard thresholding.
  const std::vector<std::string> names = {"soft", "firm", "garrote", "vector-firm", "group-firm"};
  const ParamMap params = {{"lambda", 1.0}, {"lambda1", 1.0}, {"lambda2", 2.0}, {"group_size", 1.0}};
  const double h = 1e-4;
  for (const auto& name : names) {
    const Denoiser T = make_denoiser(name, params, 1);
    for (int i = -100000; i < 100000; ++i) {
      const double a = i * h;
      const double jump = std::abs(T(vec({a + h}))[0] - T(vec({a}))[0]);
      ASSERT_LE(jump, T.lipschitz_bound() * h * (1.0 + 1e-6) + 1e-12) << name << " at " << a;
    }
  }
}

TEST(Catalog, UnknownName) {
  EXPECT_THROW(make_denoiser("hard", {{"lambda", 1.0}}), InputError);
  EXPECT_THROW(make_denoiser("firm", {{"lambda1", 1.0}}), ParameterError);
}
