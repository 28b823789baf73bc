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


#include "sfrl/nn.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <numbers>
#include <ostream>

#include "sfrl/errors.hpp"

namespace sfrl
{
namespace
{

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void require_finite(const Mat &m, const char *what)
{
    if (!m.allFinite())
        throw NumericalError(std::string(what) + ": non-finite value");
}

std::string next_token(std::istream &is, const char *what)
{
    std::string tok;
    if (!(is >> tok))
        throw std::runtime_error(std::string("checkpoint: missing ") + what);
    return tok;
}

double read_real(std::istream &is)
{
    const std::string tok = next_token(is, "value");
    char *end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size())
        throw std::runtime_error("checkpoint: bad real '" + tok + "'");
    return v;
}

int read_int(std::istream &is)
{
    const std::string tok = next_token(is, "integer");
    std::size_t pos = 0;
    int v = 0;
    try
    {
        v = std::stoi(tok, &pos);
    }
    catch (const std::exception &)
    {
        pos = 0;
    }
    if (pos != tok.size() || tok.empty())
        throw std::runtime_error("checkpoint: bad integer '" + tok + "'");
    return v;
}

void expect_tag(std::istream &is, const std::string &tag)
{
    const std::string tok = next_token(is, tag.c_str());
    if (tok != tag)
        throw std::runtime_error("checkpoint: expected '" + tag + "', got '" + tok + "'");
}

void write_reals(std::ostream &os, const Vec &v)
{
    char buf[40];
    for (Eigen::Index i = 0; i < v.size(); ++i)
    {
        std::snprintf(buf, sizeof buf, "%a", v[i]);
        os << buf << '\n';
    }
}

} // namespace

Mlp::Mlp(std::vector<int> dims) : dims_(std::move(dims))
{
    require(dims_.size() >= 2, "Mlp: need at least input and output dims");
    for (int d : dims_)
        require(d > 0, "Mlp: layer dims must be positive");
    Eigen::Index off = 0;
    for (int l = 0; l < layers(); ++l)
    {
        offsets_.push_back(off);
        off += static_cast<Eigen::Index>(dims_[l]) * dims_[l + 1] + dims_[l + 1];
    }
    params = Vec::Zero(off);
}

int Mlp::param_count(const std::vector<int> &dims)
{
    int total = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
        total += dims[l] * dims[l + 1] + dims[l + 1];
    return total;
}

void Mlp::init(Rng &rng, double hidden_gain, double output_gain)
{
    require(!dims_.empty(), "Mlp::init: empty network");
    params.setZero();
    for (int l = 0; l < layers(); ++l)
    {
        const double gain = l + 1 == layers() ? output_gain : hidden_gain;
        const double bound = gain * std::sqrt(3.0 / dims_[l]);
        std::uniform_real_distribution<double> unif(-bound, bound);
        const Eigen::Index nw = static_cast<Eigen::Index>(dims_[l]) * dims_[l + 1];
        for (Eigen::Index i = 0; i < nw; ++i)
            params[offsets_[l] + i] = unif(rng);
    }
}

Mat Mlp::forward_batch(const Mat &X) const
{
    require(!dims_.empty(), "Mlp: empty network");
    require(X.rows() == input_dim(), "Mlp::forward: input dimension mismatch");
    require(params.size() == param_count(dims_), "Mlp: parameter vector has wrong length");
    Mat a = X;
    for (int l = 0; l < layers(); ++l)
    {
        const int in = dims_[l], out = dims_[l + 1];
        Eigen::Map<const Mat> W(params.data() + offsets_[l], out, in);
        Eigen::Map<const Vec> b(params.data() + offsets_[l] + in * out, out);
        Mat z = W * a;
        z.colwise() += b;
        if (l + 1 < layers())
            a = z.array().tanh().matrix();
        else
            a = std::move(z);
    }
    return a;
}

Vec Mlp::grad_batch(const Mat &X, const Mat &upstream) const
{
    require(!dims_.empty(), "Mlp: empty network");
    require(X.rows() == input_dim(), "Mlp::grad: input dimension mismatch");
    require(upstream.rows() == output_dim() && upstream.cols() == X.cols(),
            "Mlp::grad: upstream dimension mismatch");
    require(params.size() == param_count(dims_), "Mlp: parameter vector has wrong length");

    std::vector<Mat> acts{X};
    for (int l = 0; l + 1 < layers(); ++l)
    {
        const int in = dims_[l], out = dims_[l + 1];
        Eigen::Map<const Mat> W(params.data() + offsets_[l], out, in);
        Eigen::Map<const Vec> b(params.data() + offsets_[l] + in * out, out);
        Mat z = W * acts.back();
        z.colwise() += b;
        acts.push_back(z.array().tanh().matrix());
    }

    Vec g = Vec::Zero(params.size());
    Mat delta = upstream;
    for (int l = layers() - 1; l >= 0; --l)
    {
        const int in = dims_[l], out = dims_[l + 1];
        Eigen::Map<Mat> gW(g.data() + offsets_[l], out, in);
        Eigen::Map<Vec> gb(g.data() + offsets_[l] + in * out, out);
        gW.noalias() = delta * acts[l].transpose();
        gb = delta.rowwise().sum();
        if (l > 0)
        {
            Eigen::Map<const Mat> W(params.data() + offsets_[l], out, in);
            Mat back = W.transpose() * delta;
            delta = back.array() * (1.0 - acts[l].array().square());
        }
    }
    return g;
}

Vec Mlp::forward(const Vec &x) const
{
    return forward_batch(x);
}

Vec Mlp::grad(const Vec &x, const Vec &upstream) const
{
    return grad_batch(x, upstream);
}

GaussianPolicy::GaussianPolicy(Mlp net, double initial_log_std)
    : mean_net(std::move(net)), log_std(Vec::Constant(mean_net.output_dim(), initial_log_std))
{
    clamp_log_std();
}

Vec GaussianPolicy::std() const
{
    return log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax).array().exp().matrix();
}

void GaussianPolicy::clamp_log_std()
{
    log_std = log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

int GaussianPolicy::param_count() const
{
    return static_cast<int>(mean_net.params.size() + log_std.size());
}

Vec GaussianPolicy::flat_params() const
{
    Vec theta(param_count());
    theta << mean_net.params, log_std;
    return theta;
}

void GaussianPolicy::set_flat_params(const Vec &theta)
{
    require(theta.size() == param_count(), "GaussianPolicy: parameter vector has wrong length");
    mean_net.params = theta.head(mean_net.params.size());
    log_std = theta.tail(log_std.size());
    clamp_log_std();
}

PolicySample policy_sample(const GaussianPolicy &pol, const StateVec &x, Rng &rng)
{
    const Vec mu = pol.mean(x);
    const Vec sigma = pol.std();
    std::normal_distribution<double> normal;
    Vec xi(mu.size());
    for (Eigen::Index i = 0; i < xi.size(); ++i)
        xi[i] = normal(rng);
    PolicySample s;
    s.u = mu + sigma.cwiseProduct(xi);
    s.logp = policy_log_prob(pol, x, s.u);
    return s;
}

double policy_log_prob(const GaussianPolicy &pol, const StateVec &x, const InputVec &u)
{
    require(u.size() == pol.action_dim(), "policy_log_prob: action dimension mismatch");
    return policy_log_prob_batch(pol, x, u)[0];
}

Vec policy_log_prob_batch(const GaussianPolicy &pol, const Mat &X, const Mat &U)
{
    require(U.rows() == pol.action_dim() && U.cols() == X.cols(),
            "policy_log_prob: action dimension mismatch");
    const Mat mu = pol.mean_net.forward_batch(X);
    const Vec ls = pol.log_std.cwiseMax(GaussianPolicy::kLogStdMin).cwiseMin(GaussianPolicy::kLogStdMax);
    const Vec inv = (-ls).array().exp();
    const double norm = -ls.sum() - pol.action_dim() * kHalfLog2Pi;
    const Mat zed = inv.asDiagonal() * (U - mu);
    Vec out = (-0.5 * zed.colwise().squaredNorm()).transpose().array() + norm;
    require_finite(out, "policy_log_prob");
    return out;
}

Vec policy_log_prob_grad(const GaussianPolicy &pol, const Mat &X, const Mat &U, const Vec &coeff)
{
    require(U.rows() == pol.action_dim() && U.cols() == X.cols() && coeff.size() == X.cols(),
            "policy_log_prob_grad: dimension mismatch");
    const Mat mu = pol.mean_net.forward_batch(X);
    const Vec ls = pol.log_std.cwiseMax(GaussianPolicy::kLogStdMin).cwiseMin(GaussianPolicy::kLogStdMax);
    const Vec inv = (-ls).array().exp();
    const Mat zed = inv.asDiagonal() * (U - mu);
    // d/dmu = (u - mu) / sigma^2, d/dlog_std = z^2 - 1.
    const Mat upstream = (inv.asDiagonal() * zed) * coeff.asDiagonal();
    Vec g(pol.param_count());
    g.head(pol.mean_net.params.size()) = pol.mean_net.grad_batch(X, upstream);
    g.tail(ls.size()) = (zed.array().square() - 1.0).matrix() * coeff;
    return g;
}

Adam::Adam(Eigen::Index size, double lr_, double beta1, double beta2, double eps)
    : lr(lr_), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Vec::Zero(size)), v_(Vec::Zero(size))
{
    require(lr_ > 0.0 && beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0,
            "Adam: invalid hyperparameters");
}

void Adam::step(Vec &params, const Vec &grad)
{
    require(params.size() == m_.size() && grad.size() == m_.size(), "Adam: size mismatch");
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

void write_mlp(std::ostream &os, const Mlp &net)
{
    os << "mlp " << net.dims().size();
    for (int d : net.dims())
        os << ' ' << d;
    os << '\n';
    write_reals(os, net.params);
    if (!os)
        throw std::runtime_error("checkpoint: write failed");
}

Mlp read_mlp(std::istream &is)
{
    expect_tag(is, "mlp");
    const int count = read_int(is);
    if (count < 2 || count > 64)
        throw std::runtime_error("checkpoint: bad layer count");
    std::vector<int> dims;
    for (int i = 0; i < count; ++i)
    {
        dims.push_back(read_int(is));
        if (dims.back() <= 0)
            throw std::runtime_error("checkpoint: bad layer dim");
    }
    Mlp net(dims);
    for (Eigen::Index i = 0; i < net.params.size(); ++i)
        net.params[i] = read_real(is);
    return net;
}

void write_policy(std::ostream &os, const GaussianPolicy &pol)
{
    os << "gaussian_policy " << pol.log_std.size() << '\n';
    write_reals(os, pol.log_std);
    write_mlp(os, pol.mean_net);
}

GaussianPolicy read_policy(std::istream &is)
{
    expect_tag(is, "gaussian_policy");
    const int m = read_int(is);
    if (m <= 0)
        throw std::runtime_error("checkpoint: bad action dim");
    Vec ls(m);
    for (int i = 0; i < m; ++i)
        ls[i] = read_real(is);
    GaussianPolicy pol;
    pol.mean_net = read_mlp(is);
    if (pol.mean_net.output_dim() != m)
        throw std::runtime_error("checkpoint: action dim does not match network output");
    pol.log_std = ls;
    return pol;
}

} // namespace sfrl
