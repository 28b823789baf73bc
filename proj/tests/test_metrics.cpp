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

#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "sfrl/errors.hpp"
#include "sfrl/metrics.hpp"

namespace sfrl
{
namespace
{

Vec v(std::initializer_list<double> xs)
{
    Vec out(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs)
        out[i++] = x;
    return out;
}

TEST(BaseReward, ClosedForm)
{
    EXPECT_EQ(base_reward(v({0.3, -1.0}), v({0.3, -1.0})), 1.0);
    EXPECT_NEAR(base_reward(v({1.0, 0.0}), v({0.0, 0.0})), 0.1353352832366127, 1e-15);
    EXPECT_NEAR(base_reward(v({0.6, 0.8}), v({0.0, 0.0})), std::exp(-2.0), 1e-15);
    const double far = base_reward(v({1e3}), v({0.0}));
    EXPECT_GE(far, 0.0);
    EXPECT_LT(far, 1e-300);
    EXPECT_THROW(base_reward(v({1.0}), v({1.0, 2.0})), ContractViolation);
}

TEST(BaseReward, DecreasesWithDistance)
{
    double prev = 2.0;
    for (double d = 0.0; d < 3.0; d += 0.1)
    {
        const double r = base_reward(v({d}), v({0.0}));
        EXPECT_LT(r, prev);
        EXPECT_GT(r, 0.0);
        EXPECT_LE(r, 1.0);
        prev = r;
    }
}

TEST(EpisodeReturn, Sums)
{
    EXPECT_EQ(episode_return(std::vector<double>(250, 1.0)), 250.0);
    EXPECT_EQ(episode_return({}), 0.0);
    EXPECT_DOUBLE_EQ(episode_return({1.0, -0.5, 0.25}), 0.75);
}

TEST(InputRoc, HandCases)
{
    EXPECT_EQ(input_roc({v({1.0}), v({1.0}), v({1.0})}, 0.1), 0.0);
    EXPECT_NEAR(input_roc({v({0.0}), v({1.0}), v({1.0})}, 0.5), 2.0, 1e-12);
    // Differences (3, 4) / 1 stacked with (0, 0): norm 5.
    EXPECT_NEAR(input_roc({v({0.0, 0.0}), v({3.0, 4.0}), v({3.0, 4.0})}, 1.0), 5.0, 1e-12);
    EXPECT_EQ(input_roc({v({2.0})}, 0.1), 0.0);
    EXPECT_EQ(input_roc({}, 0.1), 0.0);
    EXPECT_THROW(input_roc({v({0.0})}, 0.0), ContractViolation);
}

TEST(InputRoc, HomogeneousAndReversible)
{
    std::vector<InputVec> us{v({0.1, 2.0}), v({-0.4, 1.0}), v({0.7, 0.3}), v({0.2, -1.1})};
    const double base = input_roc(us, 0.02);
    std::vector<InputVec> scaled, reversed(us.rbegin(), us.rend());
    for (const auto &u : us)
        scaled.push_back(-3.0 * u);
    EXPECT_NEAR(input_roc(scaled, 0.02), 3.0 * base, 1e-9);
    EXPECT_NEAR(input_roc(reversed, 0.02), base, 1e-12);
}

TEST(ViolationFraction, Counts)
{
    const BoxSet box(v({-1.0}), v({1.0}));
    EXPECT_EQ(violation_fraction({v({0.0}), v({1.0}), v({-1.0})}, box), 0.0);
    EXPECT_EQ(violation_fraction({v({1.5}), v({-2.0})}, box), 1.0);
    EXPECT_EQ(violation_fraction({v({0.0}), v({1.1}), v({0.5}), v({-1.1})}, box), 0.5);
    EXPECT_EQ(violation_fraction({v({1.0 + 5e-10})}, box), 0.0);
    EXPECT_EQ(violation_fraction({}, box), 0.0);
}

TEST(ViolationFraction, TightenedTrajectoryNeverViolates)
{
    const BoxSet box(v({-2.0, -1.0}), v({2.0, 1.0}));
    const BoxSet tight = box_tighten(box, 0.1);
    std::vector<StateVec> states;
    for (int k = 0; k < 100; ++k)
        states.push_back(tight.clamp(v({3.0 * std::sin(0.1 * k), 2.0 * std::cos(0.3 * k)})));
    EXPECT_EQ(violation_fraction(states, box), 0.0);
}

TEST(FigureEight, SampleCountAndAmplitude)
{
    const ReferenceTrajectory ref = figure_eight(v({2.0, 0.5}), 5.0, 0.02, 1);
    EXPECT_EQ(ref.size(), 250);
    EXPECT_EQ(ref.at(0), v({0.0, 0.0}));
    EXPECT_NEAR(ref.position(5.0 / 4.0)[0], 2.0, 1e-15);
    double max_x = 0.0, max_y = 0.0;
    for (const auto &p : ref.positions)
    {
        max_x = std::max(max_x, std::abs(p[0]));
        max_y = std::max(max_y, std::abs(p[1]));
    }
    EXPECT_LE(max_x, 2.0);
    EXPECT_GE(max_x, 2.0 * std::cos(std::numbers::pi / 250.0));
    EXPECT_LE(max_y, 0.5);
    EXPECT_GE(max_y, 0.5 * std::cos(2.0 * std::numbers::pi / 250.0));
}

TEST(FigureEight, ClosesAfterFullLaps)
{
    for (int laps : {1, 2, 3})
    {
        const ReferenceTrajectory ref = figure_eight(v({2.0, 0.5}), 5.0, 0.02, laps);
        EXPECT_LT((ref.position(5.0) - ref.position(0.0)).norm(), 1e-9);
        EXPECT_EQ(ref.at(ref.size()), ref.at(0));
        EXPECT_EQ(ref.at(-1), ref.at(ref.size() - 1));
    }
}

TEST(FigureEight, CsvExport)
{
    const ReferenceTrajectory ref = figure_eight(v({1.0}), 1.0, 0.25, 1);
    std::ostringstream os;
    ref.write_csv(os);
    EXPECT_EQ(os.str(), "t,p0\n0,0\n0.25,1\n0.5,1.2246467991473532e-16\n0.75,-1\n");
}

TEST(FigureEight, RejectsBadArguments)
{
    EXPECT_THROW(figure_eight(v({1.0}), 0.0, 0.02), ContractViolation);
    EXPECT_THROW(figure_eight(v({1.0}), 1.0, -0.02), ContractViolation);
    EXPECT_THROW(figure_eight(v({1.0, 1.0, 1.0}), 1.0, 0.02), ContractViolation);
}

} // namespace
} // namespace sfrl
