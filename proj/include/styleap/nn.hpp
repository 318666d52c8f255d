#pragma once

// Dense building blocks for the encoder-decoder: each layer exposes a const
// forward that records what backward needs into a caller-owned cache, and a
// backward that accumulates parameter gradients and returns the input
// gradient. Activations are row-major [tokens x features]; sequences of a
// batch are packed back to back and described by Segments.

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace styleap::nn {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <typename S>
using ColVector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
struct Param {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;

  void init(std::string n, Eigen::Index rows, Eigen::Index cols) {
    name = std::move(n);
    value = Matrix<S>::Zero(rows, cols);
    grad = Matrix<S>::Zero(rows, cols);
  }
};

/// Row ranges of the packed activation matrix, one per sequence.
struct Segments {
  std::vector<Eigen::Index> offset;
  std::vector<Eigen::Index> length;
  Eigen::Index total = 0;

  void push(Eigen::Index len) {
    offset.push_back(total);
    length.push_back(len);
    total += len;
  }
  std::size_t count() const noexcept { return offset.size(); }
};

/// Inverted dropout. A null rng or zero rate disables it.
template <typename S>
class Dropout {
 public:
  Dropout(double rate, std::mt19937_64* rng) : rate_(rate), rng_(rng) {}

  bool active() const noexcept { return rng_ != nullptr && rate_ > 0.0; }

  /// Returns the mask (empty when inactive) and applies it to x in place.
  Matrix<S> apply(Matrix<S>& x) const {
    if (!active()) return {};
    Matrix<S> mask(x.rows(), x.cols());
    std::bernoulli_distribution keep(1.0 - rate_);
    const S scale = S(1.0 / (1.0 - rate_));
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng_) ? scale : S(0);
    x.array() *= mask.array();
    return mask;
  }

  static void backward(Matrix<S>& dx, const Matrix<S>& mask) {
    if (mask.size() != 0) dx.array() *= mask.array();
  }

 private:
  double rate_;
  std::mt19937_64* rng_;
};

template <typename S>
struct Linear {
  Param<S> weight;  // in x out
  Param<S> bias;    // 1 x out

  void init(const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
    weight.init(name + ".weight", in, out);
    bias.init(name + ".bias", 1, out);
    // Xavier uniform
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = S(u(rng));
  }

  Matrix<S> forward(const Matrix<S>& x) const {
    Matrix<S> y = x * weight.value;
    y.rowwise() += bias.value.row(0);
    return y;
  }

  template <typename Derived>
  RowVector<S> forward_row(const Eigen::MatrixBase<Derived>& x) const {
    return x * weight.value + bias.value.row(0);
  }

  Matrix<S> backward(const Matrix<S>& x, const Matrix<S>& dy) {
    weight.grad.noalias() += x.transpose() * dy;
    bias.grad.row(0) += dy.colwise().sum();
    return dy * weight.value.transpose();
  }

  void collect(std::vector<Param<S>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <typename S>
struct LayerNormCache {
  Matrix<S> xhat;
  ColVector<S> inv_std;
};

template <typename S>
struct LayerNorm {
  Param<S> gamma;
  Param<S> beta;
  static constexpr double kEps = 1e-5;

  void init(const std::string& name, Eigen::Index dim) {
    gamma.init(name + ".gamma", 1, dim);
    beta.init(name + ".beta", 1, dim);
    gamma.value.setOnes();
  }

  Matrix<S> forward(const Matrix<S>& x, LayerNormCache<S>* cache) const {
    const Eigen::Index d = x.cols();
    ColVector<S> mean = x.rowwise().mean();
    Matrix<S> centered = x.colwise() - mean;
    ColVector<S> var = centered.array().square().rowwise().sum() / S(d);
    ColVector<S> inv = (var.array() + S(kEps)).rsqrt();
    Matrix<S> xhat = centered.array().colwise() * inv.array();
    Matrix<S> y = xhat.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv);
    }
    return y;
  }

  Matrix<S> backward(const Matrix<S>& dy, const LayerNormCache<S>& c) {
    const S d = S(dy.cols());
    gamma.grad.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    beta.grad.row(0) += dy.colwise().sum();
    Matrix<S> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    ColVector<S> mean_dxhat = dxhat.rowwise().sum() / d;
    ColVector<S> mean_dxhat_xhat = (dxhat.array() * c.xhat.array()).rowwise().sum().matrix() / d;
    Matrix<S> dx = dxhat;
    dx.colwise() -= mean_dxhat;
    dx.array() -= c.xhat.array().colwise() * mean_dxhat_xhat.array();
    dx.array().colwise() *= c.inv_std.array();
    return dx;
  }

  void collect(std::vector<Param<S>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

/// Numerically stable softmax over each row, in place.
template <typename S>
void softmax_rows(Matrix<S>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const S mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

template <typename S>
struct AttentionCache {
  Matrix<S> xq, xkv;
  Matrix<S> q, k, v;
  std::vector<Matrix<S>> probs;  // [sequence * heads + head]: Tq x Tk
  std::vector<Matrix<S>> masks;  // dropout masks, parallel to probs (may be empty)
  Matrix<S> context;
};

template <typename S>
struct MultiHeadAttention {
  Linear<S> wq, wk, wv, wo;
  int heads = 1;

  void init(const std::string& name, Eigen::Index dim, int num_heads, std::mt19937_64& rng) {
    heads = num_heads;
    wq.init(name + ".q", dim, dim, rng);
    wk.init(name + ".k", dim, dim, rng);
    wv.init(name + ".v", dim, dim, rng);
    wo.init(name + ".o", dim, dim, rng);
  }

  Matrix<S> forward(const Matrix<S>& xq, const Segments& sq, const Matrix<S>& xkv, const Segments& skv,
                    bool causal, const Dropout<S>& drop, AttentionCache<S>& c) const {
    const Eigen::Index dim = xq.cols();
    const Eigen::Index dh = dim / heads;
    const S scale = S(1.0 / std::sqrt(static_cast<double>(dh)));
    c.xq = xq;
    c.xkv = xkv;
    c.q = wq.forward(xq);
    c.k = wk.forward(xkv);
    c.v = wv.forward(xkv);
    c.context = Matrix<S>::Zero(xq.rows(), dim);
    c.probs.assign(sq.count() * static_cast<std::size_t>(heads), {});
    c.masks.assign(sq.count() * static_cast<std::size_t>(heads), {});
    for (std::size_t b = 0; b < sq.count(); ++b) {
      const Eigen::Index tq = sq.length[b], tk = skv.length[b];
      for (int h = 0; h < heads; ++h) {
        const auto qb = c.q.block(sq.offset[b], h * dh, tq, dh);
        const auto kb = c.k.block(skv.offset[b], h * dh, tk, dh);
        const auto vb = c.v.block(skv.offset[b], h * dh, tk, dh);
        Matrix<S> p = (qb * kb.transpose()) * scale;
        if (causal) {
          for (Eigen::Index i = 0; i < tq; ++i)
            for (Eigen::Index j = i + 1; j < tk; ++j) p(i, j) = -std::numeric_limits<S>::infinity();
        }
        softmax_rows(p);
        const std::size_t slot = b * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h);
        Matrix<S> pd = p;
        c.masks[slot] = drop.apply(pd);
        c.context.block(sq.offset[b], h * dh, tq, dh).noalias() = pd * vb;
        c.probs[slot] = std::move(p);
      }
    }
    return wo.forward(c.context);
  }

  /// Returns d(xq); adds d(xkv) into dxkv (which must be sized like xkv).
  Matrix<S> backward(const Matrix<S>& dy, const Segments& sq, const Segments& skv, const AttentionCache<S>& c,
                     Matrix<S>& dxkv) {
    const Eigen::Index dim = c.xq.cols();
    const Eigen::Index dh = dim / heads;
    const S scale = S(1.0 / std::sqrt(static_cast<double>(dh)));
    Matrix<S> dctx = wo.backward(c.context, dy);
    Matrix<S> dq = Matrix<S>::Zero(c.q.rows(), dim);
    Matrix<S> dk = Matrix<S>::Zero(c.k.rows(), dim);
    Matrix<S> dv = Matrix<S>::Zero(c.v.rows(), dim);
    for (std::size_t b = 0; b < sq.count(); ++b) {
      const Eigen::Index tq = sq.length[b], tk = skv.length[b];
      for (int h = 0; h < heads; ++h) {
        const std::size_t slot = b * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h);
        const Matrix<S>& p = c.probs[slot];
        const Matrix<S>& mask = c.masks[slot];
        const auto qb = c.q.block(sq.offset[b], h * dh, tq, dh);
        const auto kb = c.k.block(skv.offset[b], h * dh, tk, dh);
        const auto vb = c.v.block(skv.offset[b], h * dh, tk, dh);
        const auto dcb = dctx.block(sq.offset[b], h * dh, tq, dh);
        Matrix<S> dp = dcb * vb.transpose();
        if (mask.size() != 0) {
          Matrix<S> pd = p.array() * mask.array();
          dv.block(skv.offset[b], h * dh, tk, dh).noalias() += pd.transpose() * dcb;
          dp.array() *= mask.array();
        } else {
          dv.block(skv.offset[b], h * dh, tk, dh).noalias() += p.transpose() * dcb;
        }
        ColVector<S> rowdot = (dp.array() * p.array()).rowwise().sum();
        Matrix<S> ds = p.array() * (dp.colwise() - rowdot).array();
        ds *= scale;
        dq.block(sq.offset[b], h * dh, tq, dh).noalias() += ds * kb;
        dk.block(skv.offset[b], h * dh, tk, dh).noalias() += ds.transpose() * qb;
      }
    }
    dxkv += wk.backward(c.xkv, dk);
    dxkv += wv.backward(c.xkv, dv);
    return wq.backward(c.xq, dq);
  }

  void collect(std::vector<Param<S>*>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
  }
};

template <typename S>
struct FeedForwardCache {
  Matrix<S> x, hidden, relu;
};

template <typename S>
struct FeedForward {
  Linear<S> fc1, fc2;

  void init(const std::string& name, Eigen::Index dim, Eigen::Index hidden, std::mt19937_64& rng) {
    fc1.init(name + ".fc1", dim, hidden, rng);
    fc2.init(name + ".fc2", hidden, dim, rng);
  }

  Matrix<S> forward(const Matrix<S>& x, FeedForwardCache<S>& c) const {
    c.x = x;
    c.hidden = fc1.forward(x);
    c.relu = c.hidden.cwiseMax(S(0));
    return fc2.forward(c.relu);
  }

  Matrix<S> backward(const Matrix<S>& dy, const FeedForwardCache<S>& c) {
    Matrix<S> dr = fc2.backward(c.relu, dy);
    dr.array() *= (c.hidden.array() > S(0)).template cast<S>();
    return fc1.backward(c.x, dr);
  }

  void collect(std::vector<Param<S>*>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }
};

}  // namespace styleap::nn
