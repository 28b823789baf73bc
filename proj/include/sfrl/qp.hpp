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

#include <limits>

#include <Eigen/Dense>

namespace sfrl
{

/**
 * Dense convex QP:
 *
 *   minimize    1/2 x' H x + g' x
 *   subject to  lb <= C x <= ub
 *
 * Bounds may be +-infinity; a row with lb == ub is an equality.
 */
struct QpProblem
{
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
    Eigen::MatrixXd C;
    Eigen::VectorXd lb;
    Eigen::VectorXd ub;

    void validate() const;
    double objective(const Eigen::VectorXd &x) const;
};

enum class QpStatus
{
    Optimal,
    MaxIters,
    PrimalInfeasible
};

const char *to_string(QpStatus status);

struct QpSolution
{
    Eigen::VectorXd x;
    /// Constraint multipliers; positive when the upper bound is active.
    Eigen::VectorXd y;
    QpStatus status = QpStatus::MaxIters;
    double objective = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    bool polished = false;
};

enum class QpMethod
{
    /// Operator splitting with scaling, adaptive penalty and active-set polishing.
    Admm,
    /// Goldfarb-Idnani dual active set; exact, intended for small well-posed problems.
    DualActiveSet
};

struct QpSettings
{
    QpMethod method = QpMethod::Admm;
    double eps_abs = 1e-6;
    double eps_rel = 1e-9;
    double eps_infeasible = 1e-6;
    int max_iters = 20000;
    double rho = 0.1;
    double sigma = 1e-6;
    double alpha = 1.6;
    double regularization = 1e-9;
    int scaling_iters = 10;
    int check_every = 5;
    bool polish = true;
};

QpSolution solve_qp(const QpProblem &problem, const QpSettings &settings = {});

} // namespace sfrl
