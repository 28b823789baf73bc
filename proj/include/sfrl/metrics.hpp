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

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sfrl/sets.hpp"

namespace sfrl
{

/// Tolerance above which a state is counted as outside a box.
inline constexpr double kViolationTol = 1e-9;

/// exp(-2 |p - p_ref|^2), in (0, 1].
double base_reward(const Vec &p, const Vec &p_ref);

/// Undiscounted sum.
double episode_return(const std::vector<double> &rewards);

/// Frobenius norm of the stacked finite differences (u_k - u_{k-1}) / dt.
double input_roc(const std::vector<InputVec> &inputs, double dt);

bool violates(const BoxSet &box, const Vec &x);

/// Fraction of states outside the box by more than kViolationTol on some face.
double violation_fraction(const std::vector<StateVec> &states, const BoxSet &box);

/**
 * 1:2 Lissajous figure eight, x = A_x sin(w t), y = A_y sin(2 w t), with
 * w = 2 pi laps / duration. Holds duration / dt samples at t = k dt; the
 * sample after the last one is the start again.
 */
struct ReferenceTrajectory
{
    std::vector<Vec> positions;
    double dt = 0.0;
    Vec amplitudes;
    double duration = 0.0;
    int laps = 1;

    int size() const { return static_cast<int>(positions.size()); }
    /// Sample k, wrapping periodically.
    const Vec &at(int k) const;
    /// Continuous-time evaluation of the curve.
    Vec position(double t) const;
    /// "t,p0,p1,..." rows with a header line.
    void write_csv(std::ostream &os) const;
};

ReferenceTrajectory figure_eight(const Vec &amplitudes, double duration, double dt, int laps = 1);

} // namespace sfrl
