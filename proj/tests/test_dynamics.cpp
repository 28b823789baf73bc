/*
 Copyright 2026 The sfrl Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sfrl/dynamics.hpp"
#include "sfrl/errors.hpp"

namespace sfrl
{
namespace
{

Vec hover_state() { return Vec::Zero(6); }

Vec hover_input(const ModelSpec &m)
{
    return Vec::Constant(2, m.quad.hover_thrust());
}

TEST(StepNominal, IdentityLinearModelIsFixed)
{
    const ModelSpec model = ModelSpec::linear(Mat::Identity(3, 3), Mat::Zero(3, 1), 0.1);
    const Vec x = (Vec(3) << 1.5, -2.0, 0.25).finished();
    EXPECT_EQ(step_nominal(model, x, Vec::Constant(1, 7.0)), x);
}

TEST(StepNominal, HoverIsEquilibrium)
{
    const ModelSpec model = ModelSpec::planar_quad({}, 0.02);
    Vec x = hover_state();
    x[0] = 0.3;
    x[2] = -0.4;
    EXPECT_EQ(step_nominal(model, x, hover_input(model)), x);
}

TEST(StepNominal, VerticalClimbMatchesFineGridRk4)
{
    const ModelSpec model = ModelSpec::planar_quad({}, 0.02);
    const Vec u = Vec::Constant(2, 1.1 * model.quad.hover_thrust());
    const Vec coarse = step_nominal(model, hover_state(), u);
    const Vec fine = oracle::fine_rk4(model, hover_state(), u, 1000);
    EXPECT_NEAR(coarse[3], fine[3], 1e-8);
    EXPECT_GT(coarse[3], 0.0);
}

TEST(StepNominal, DimensionMismatchThrows)
{
    const ModelSpec model = double_integrator(0.1);
    EXPECT_THROW(step_nominal(model, Vec::Zero(3), Vec::Zero(1)), ContractViolation);
    EXPECT_THROW(step_nominal(model, Vec::Zero(2), Vec::Zero(2)), ContractViolation);
}

TEST(StepNominal, NonFiniteResultThrows)
{
    const ModelSpec model = double_integrator(0.1);
    const Vec x = (Vec(2) << std::numeric_limits<double>::infinity(), 0.0).finished();
    EXPECT_THROW(step_nominal(model, x, Vec::Zero(1)), NumericalError);
}

TEST(StepTrue, ZeroSamplerEqualsNominal)
{
    const ModelSpec model = ModelSpec::planar_quad({}, 0.02);
    Rng rng(1);
    const DisturbanceModel dist{0.3, DisturbanceSampler::Zero};
    Vec x = hover_state();
    x[1] = 0.5;
    const Vec u = (Vec(2) << 0.1, 0.15).finished();
    const TrueStep out = step_true(model, dist, x, u, rng);
    EXPECT_EQ(out.x, step_nominal(model, x, u));
    EXPECT_EQ(out.w.norm(), 0.0);
}

TEST(StepTrue, UniformBallRespectsBound)
{
    const ModelSpec model = double_integrator(0.1);
    const DisturbanceModel dist{0.05, DisturbanceSampler::UniformBall};
    Rng rng(2);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i)
        worst = std::max(worst, step_true(model, dist, Vec::Zero(2), Vec::Zero(1), rng).w.norm());
    EXPECT_LE(worst, 0.05);
    EXPECT_GT(worst, 0.04);
}

TEST(StepTrue, BoundarySphereNeverExceedsBound)
{
    const DisturbanceModel dist{0.0205, DisturbanceSampler::BoundarySphere};
    Rng rng(3);
    for (int i = 0; i < 10000; ++i)
    {
        const double norm = dist.sample(6, rng).norm();
        ASSERT_LE(norm, 0.0205);
        ASSERT_NEAR(norm, 0.0205, 1e-12);
    }
}

TEST(StepTrue, EmpiricalMismatchEqualsSampledMax)
{
    // Mirrors w_max estimation: compare true successors with nominal predictions.
    const ModelSpec model = ModelSpec::planar_quad({}, 0.02);
    const DisturbanceModel dist{0.0205, DisturbanceSampler::UniformBall};
    Rng rng(4);
    Rng dist_rng(5);
    double max_sampled = 0.0;
    auto true_step = [&](const Vec &x, const Vec &u) {
        const TrueStep s = step_true(model, dist, x, u, dist_rng);
        max_sampled = std::max(max_sampled, s.w.norm());
        return s.x;
    };
    const Vec x_lo = (Vec(6) << -1.9, -2, -0.95, -2, -0.5, -2).finished();
    const Vec u_lo = Vec::Zero(2);
    const Vec u_hi = Vec::Constant(2, 2.0 * model.quad.hover_thrust());
    const double estimate = estimate_w_max(model, true_step, x_lo, -x_lo, u_lo, u_hi, 10000, rng);
    EXPECT_NEAR(estimate, max_sampled, 1e-12);
    EXPECT_LE(estimate, dist.w_max);
}

TEST(RolloutNominal, SingleInputGivesTwoStates)
{
    const ModelSpec model = double_integrator(0.1);
    const auto traj = rollout_nominal(model, Vec::Zero(2), {Vec::Constant(1, 1.0)});
    ASSERT_EQ(traj.size(), 2u);
    EXPECT_EQ(traj[0], Vec::Zero(2));
}

TEST(RolloutNominal, EmptyInputsRejected)
{
    EXPECT_THROW(rollout_nominal(double_integrator(0.1), Vec::Zero(2), {}), ContractViolation);
}

TEST(RolloutNominal, LinearMatchesClosedForm)
{
    const ModelSpec model = linear_drone(0.04);
    Rng rng(6);
    std::normal_distribution<double> normal(0.0, 0.2);
    std::vector<Vec> inputs(12, Vec(2));
    for (auto &u : inputs)
        u << normal(rng), normal(rng);
    const Vec x0 = (Vec(6) << 0.1, -0.2, 0.3, 0.0, 0.05, -0.05).finished();
    const auto traj = rollout_nominal(model, x0, inputs);
    for (std::size_t k = 0; k <= inputs.size(); ++k)
    {
        Mat Ak = Mat::Identity(6, 6);
        for (std::size_t i = 0; i < k; ++i)
            Ak = model.A * Ak;
        Vec expected = Ak * x0;
        for (std::size_t j = 0; j < k; ++j)
        {
            Mat Apow = Mat::Identity(6, 6);
            for (std::size_t i = 0; i + 1 + j < k; ++i)
                Apow = model.A * Apow;
            expected += Apow * model.B * inputs[j];
        }
        EXPECT_LT((traj[k] - expected).norm(), 1e-12);
    }
}

TEST(RolloutNominal, HoverSequenceIsConstant)
{
    const ModelSpec model = ModelSpec::planar_quad({}, 0.02);
    const auto traj = rollout_nominal(model, hover_state(), std::vector<Vec>(50, hover_input(model)));
    for (const auto &z : traj)
        EXPECT_EQ(z, hover_state());
}

TEST(RolloutNominal, ComposesStepwise)
{
    const ModelSpec model = ModelSpec::planar_quad({}, 0.02);
    std::vector<Vec> inputs;
    for (int i = 0; i < 20; ++i)
        inputs.push_back((Vec(2) << 0.12 + 0.001 * i, 0.14 - 0.001 * i).finished());
    const auto traj = rollout_nominal(model, hover_state(), inputs);
    Vec x = hover_state();
    for (std::size_t i = 0; i < inputs.size(); ++i)
    {
        x = step_nominal(model, x, inputs[i]);
        EXPECT_EQ(traj[i + 1], x);
    }
}

TEST(Linearize, LinearModelVerbatim)
{
    const ModelSpec model = linear_drone(0.04);
    const Linearization lin = linearize(model, Vec::Ones(6), Vec::Ones(2));
    EXPECT_EQ(lin.A, model.A);
    EXPECT_EQ(lin.B, model.B);
}

TEST(Linearize, PlanarQuadHoverMatchesFiniteDifferences)
{
    const ModelSpec model = ModelSpec::planar_quad({}, 0.02);
    const Linearization lin = linearize(model, hover_state(), hover_input(model));
    const Linearization fd = oracle::fd_jacobians(model, hover_state(), hover_input(model), 1e-5);
    EXPECT_LT(oracle::rel_err(lin.A, fd.A), 1e-5);
    EXPECT_LT(oracle::rel_err(lin.B, fd.B), 1e-5);
}

TEST(Linearize, PlanarQuadRandomPointsMatchFiniteDifferences)
{
    const ModelSpec model = ModelSpec::planar_quad({}, 0.02);
    Rng rng(8);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int trial = 0; trial < 100; ++trial)
    {
        Vec x(6);
        x << 1.9 * unit(rng), 2 * unit(rng), 0.95 * unit(rng), 2 * unit(rng), 0.5 * unit(rng), 2 * unit(rng);
        const Vec u = hover_input(model) * (1.0 + 0.5 * unit(rng)) +
                      Vec::Constant(2, 0.01 * unit(rng));
        const Linearization lin = linearize(model, x, u);
        const Linearization fd = oracle::fd_jacobians(model, x, u, 1e-5);
        ASSERT_LT(oracle::rel_err(lin.A, fd.A), 1e-5) << "trial " << trial;
        ASSERT_LT(oracle::rel_err(lin.B, fd.B), 1e-5) << "trial " << trial;
    }
}

TEST(PlanarQuad, FreeFallAltitudeStrictlyDecreases)
{
    const ModelSpec model = ModelSpec::planar_quad({}, 0.02);
    const auto traj = rollout_nominal(model, hover_state(), std::vector<Vec>(100, Vec::Zero(2)));
    for (std::size_t k = 1; k < traj.size(); ++k)
        EXPECT_LT(traj[k][2], traj[k - 1][2]);
}

TEST(ModelSpec, RejectsBadParameters)
{
    EXPECT_THROW(ModelSpec::linear(Mat::Identity(2, 2), Mat::Zero(3, 1), 0.1), ContractViolation);
    EXPECT_THROW(ModelSpec::linear(Mat::Identity(2, 2), Mat::Zero(2, 1), 0.0), ContractViolation);
    PlanarQuadParams bad;
    bad.mass = -1.0;
    EXPECT_THROW(ModelSpec::planar_quad(bad, 0.02), ContractViolation);
}

TEST(DoubleIntegrator, Rk4DiscretizationIsExact)
{
    const ModelSpec model = double_integrator(0.1);
    EXPECT_NEAR(model.A(0, 1), 0.1, 1e-15);
    EXPECT_NEAR(model.B(0, 0), 0.005, 1e-15);
    EXPECT_NEAR(model.B(1, 0), 0.1, 1e-15);
}

} // namespace
} // namespace sfrl
