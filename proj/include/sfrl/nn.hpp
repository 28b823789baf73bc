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

#include "sfrl/dynamics.hpp"

namespace sfrl
{

/**
 * Fully connected network with tanh hidden layers and a linear output.
 *
 * Parameters live in one flat vector. Each layer contributes its weight
 * matrix (out x in, column-major) followed by its bias.
 */
class Mlp
{
public:
    Mlp() = default;
    explicit Mlp(std::vector<int> dims);

    const std::vector<int> &dims() const { return dims_; }
    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }
    int layers() const { return static_cast<int>(dims_.size()) - 1; }
    static int param_count(const std::vector<int> &dims);

    /// Uniform init with variance gain^2 / fan_in; zero biases.
    void init(Rng &rng, double hidden_gain = 1.0, double output_gain = 1.0);

    Vec forward(const Vec &x) const;
    /// Gradient of upstream' * forward(x) with respect to params.
    Vec grad(const Vec &x, const Vec &upstream) const;

    /// Columns are samples.
    Mat forward_batch(const Mat &X) const;
    /// Sum over columns of the per-sample parameter gradients.
    Vec grad_batch(const Mat &X, const Mat &upstream) const;

    Vec params;

private:
    std::vector<int> dims_;
    std::vector<Eigen::Index> offsets_;
};

/// Diagonal Gaussian with state-dependent mean and state-independent log_std.
struct GaussianPolicy
{
    static constexpr double kLogStdMin = -5.0;
    static constexpr double kLogStdMax = 2.0;

    Mlp mean_net;
    Vec log_std;

    GaussianPolicy() = default;
    GaussianPolicy(Mlp net, double initial_log_std);

    int input_dim() const { return mean_net.input_dim(); }
    int action_dim() const { return mean_net.output_dim(); }
    Vec mean(const StateVec &x) const { return mean_net.forward(x); }
    Vec std() const;
    void clamp_log_std();

    /// Flat [mean_net.params, log_std].
    Vec flat_params() const;
    void set_flat_params(const Vec &theta);
    int param_count() const;
};

struct PolicySample
{
    InputVec u;
    double logp = 0.0;
};

PolicySample policy_sample(const GaussianPolicy &pol, const StateVec &x, Rng &rng);
double policy_log_prob(const GaussianPolicy &pol, const StateVec &x, const InputVec &u);

/// Log densities of the columns of U under the policy at the columns of X.
Vec policy_log_prob_batch(const GaussianPolicy &pol, const Mat &X, const Mat &U);

/**
 * Gradient of sum_k c_k * log pi(U_k | X_k) with respect to flat_params().
 * With c = advantages times ratios this is the surrogate gradient.
 */
Vec policy_log_prob_grad(const GaussianPolicy &pol, const Mat &X, const Mat &U, const Vec &coeff);

/// Adam on a flat parameter vector; step() descends.
class Adam
{
public:
    explicit Adam(Eigen::Index size, double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    void step(Vec &params, const Vec &grad);
    double lr;

private:
    double beta1_, beta2_, eps_;
    Vec m_, v_;
    long t_ = 0;
};

/// Text checkpoints; every real is written as a hex float so reading is bit-exact.
void write_mlp(std::ostream &os, const Mlp &net);
Mlp read_mlp(std::istream &is);
void write_policy(std::ostream &os, const GaussianPolicy &pol);
GaussianPolicy read_policy(std::istream &is);

} // namespace sfrl
