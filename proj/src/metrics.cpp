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

#include "sfrl/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "sfrl/errors.hpp"

namespace sfrl
{

double base_reward(const Vec &p, const Vec &p_ref)
{
    require(p.size() == p_ref.size(), "position and reference dimensions differ");
    return std::exp(-2.0 * (p - p_ref).squaredNorm());
}

double episode_return(const std::vector<double> &rewards)
{
    double total = 0.0;
    for (double r : rewards)
        total += r;
    return total;
}

double input_roc(const std::vector<InputVec> &inputs, double dt)
{
    require(dt > 0.0, "dt must be positive");
    double sq = 0.0;
    for (size_t k = 1; k < inputs.size(); ++k)
    {
        require(inputs[k].size() == inputs[k - 1].size(), "input dimensions differ");
        sq += ((inputs[k] - inputs[k - 1]) / dt).squaredNorm();
    }
    return std::sqrt(sq);
}

bool violates(const BoxSet &box, const Vec &x)
{
    require(x.size() == box.dim(), "state and box dimensions differ");
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x[i] > box.upper[i] + kViolationTol || x[i] < box.lower[i] - kViolationTol)
            return true;
    return false;
}

double violation_fraction(const std::vector<StateVec> &states, const BoxSet &box)
{
    if (states.empty())
        return 0.0;
    size_t count = 0;
    for (const auto &x : states)
        count += violates(box, x) ? 1 : 0;
    return static_cast<double>(count) / static_cast<double>(states.size());
}

const Vec &ReferenceTrajectory::at(int k) const
{
    require(!positions.empty(), "empty reference trajectory");
    const int n = size();
    return positions[static_cast<size_t>(((k % n) + n) % n)];
}

Vec ReferenceTrajectory::position(double t) const
{
    const double w = 2.0 * std::numbers::pi * laps / duration;
    Vec p(amplitudes.size());
    for (Eigen::Index i = 0; i < p.size(); ++i)
        p[i] = amplitudes[i] * std::sin(static_cast<double>(i + 1) * w * t);
    return p;
}

void ReferenceTrajectory::write_csv(std::ostream &os) const
{
    os << "t";
    for (Eigen::Index i = 0; i < amplitudes.size(); ++i)
        os << ",p" << i;
    os << "\n";
    char buf[64];
    for (int k = 0; k < size(); ++k)
    {
        std::snprintf(buf, sizeof buf, "%.17g", k * dt);
        os << buf;
        for (Eigen::Index i = 0; i < positions[k].size(); ++i)
        {
            std::snprintf(buf, sizeof buf, ",%.17g", positions[k][i]);
            os << buf;
        }
        os << "\n";
    }
}

ReferenceTrajectory figure_eight(const Vec &amplitudes, double duration, double dt, int laps)
{
    require(duration > 0.0 && dt > 0.0, "duration and dt must be positive");
    require(laps >= 1, "laps must be positive");
    require(amplitudes.size() >= 1 && amplitudes.size() <= 2, "figure eight needs one or two axes");
    require((amplitudes.array() >= 0.0).all() && amplitudes.allFinite(), "amplitudes must be nonnegative");
    ReferenceTrajectory ref;
    ref.dt = dt;
    ref.amplitudes = amplitudes;
    ref.duration = duration;
    ref.laps = laps;
    const int n = static_cast<int>(std::lround(duration / dt));
    require(n >= 1, "duration shorter than one sample");
    ref.positions.reserve(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k)
        ref.positions.push_back(ref.position(k * dt));
    return ref;
}

} // namespace sfrl
