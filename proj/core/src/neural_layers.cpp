#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "syllabion/error.hpp"
#include "syllabion/neural.hpp"

namespace syllabion {

// ------------------------------------------------------------------ ParamStore

std::size_t ParamStore::add(Param p) {
  check(!index_.contains(p.name), "duplicate parameter name '" + p.name + "'");
  const std::size_t i = params_.size();
  index_.emplace(p.name, i);
  params_.push_back(std::move(p));
  return i;
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParamStore::index(const std::string& name) const {
  const auto i = find(name);
  if (!i) fail("unknown parameter '" + name + "'");
  return *i;
}

ParamStore ParamStore::filtered(const std::function<bool(const std::string&)>& keep,
                                std::optional<bool> trainable) const {
  ParamStore out;
  for (const auto& p : params_) {
    if (!keep(p.name)) continue;
    Param copy = p;
    if (trainable) copy.trainable = *trainable && !p.buffer;
    out.add(std::move(copy));
  }
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (!p.buffer) n += p.value.size();
  return n;
}

Grads::Grads(const ParamStore& store) : grads_(store.size()) {
  shapes_.reserve(store.size());
  for (const auto& p : store) shapes_.emplace_back(p.value.rows(), p.value.cols());
}

Matrix& Grads::at(std::size_t i) {
  if (grads_[i].empty()) grads_[i] = Matrix(shapes_[i].first, shapes_[i].second);
  return grads_[i];
}

double Grads::squared_norm() const {
  double s = 0.0;
  for (const auto& g : grads_) s += sum_squares(g);
  return s;
}

// ------------------------------------------------------------------ activations

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Matrix gelu(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.data()) v = gelu(v);
  return y;
}

namespace {

Matrix init_matrix(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

double xavier_std(std::size_t in, std::size_t out) {
  return std::sqrt(2.0 / static_cast<double>(in + out));
}

std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> s(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) s[c] += m(r, c);
  return s;
}

void accumulate_row(Matrix& dst, const std::vector<double>& v) {
  for (std::size_t c = 0; c < v.size(); ++c) dst(0, c) += v[c];
}

Matrix columns(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = m(r, begin + c);
  return out;
}

void set_columns(Matrix& m, std::size_t begin, const Matrix& block) {
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < block.cols(); ++c) m(r, begin + c) = block(r, c);
}

}  // namespace

// ------------------------------------------------------------------ Linear

Linear Linear::create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                      std::mt19937_64& rng, const InitSpec& init) {
  Linear l;
  const double stddev = init.stddev > 0.0 ? init.stddev : xavier_std(in, out);
  l.w_ = store.add({prefix + ".weight", init_matrix(in, out, stddev, rng), init.trainable, init.reinitialized});
  l.b_ = store.add({prefix + ".bias", Matrix(1, out), init.trainable, init.reinitialized});
  l.in_ = in;
  l.out_ = out;
  return l;
}

Linear Linear::bind(const ParamStore& store, const std::string& prefix) {
  Linear l;
  l.w_ = store.index(prefix + ".weight");
  l.b_ = store.index(prefix + ".bias");
  l.in_ = store.value(l.w_).rows();
  l.out_ = store.value(l.w_).cols();
  check(store.value(l.b_).cols() == l.out_, "bias shape mismatch for " + prefix);
  return l;
}

Matrix Linear::forward(const ParamStore& p, const Matrix& x) const {
  check(x.cols() == in_, "linear: input dim " + std::to_string(x.cols()) + " != " + std::to_string(in_));
  Matrix y = matmul(x, p.value(w_));
  const Matrix& b = p.value(b_);
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < out_; ++c) y(r, c) += b(0, c);
  return y;
}

Matrix Linear::backward(const ParamStore& p, const Matrix& x, const Matrix& dy, Grads* g) const {
  if (g) {
    g->at(w_) += matmul_tn(x, dy);
    accumulate_row(g->at(b_), column_sums(dy));
  }
  return matmul_nt(dy, p.value(w_));
}

// ------------------------------------------------------------------ LayerNorm

LayerNorm LayerNorm::create(ParamStore& store, const std::string& prefix, std::size_t dim,
                            const InitSpec& init) {
  LayerNorm ln;
  ln.gamma_ = store.add({prefix + ".gamma", Matrix(1, dim, 1.0), init.trainable, init.reinitialized});
  ln.beta_ = store.add({prefix + ".beta", Matrix(1, dim), init.trainable, init.reinitialized});
  return ln;
}

LayerNorm LayerNorm::bind(const ParamStore& store, const std::string& prefix) {
  LayerNorm ln;
  ln.gamma_ = store.index(prefix + ".gamma");
  ln.beta_ = store.index(prefix + ".beta");
  return ln;
}

Matrix LayerNorm::forward(const ParamStore& p, const Matrix& x, Cache* cache) const {
  const Matrix& gamma = p.value(gamma_);
  const Matrix& beta = p.value(beta_);
  const std::size_t d = x.cols();
  Matrix xhat(x.rows(), d), y(x.rows(), d);
  std::vector<double> inv_std(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mean = 0.0;
    for (double v : x.row(r)) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : x.row(r)) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + kEps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat(r, c) = (x(r, c) - mean) * inv_std[r];
      y(r, c) = xhat(r, c) * gamma(0, c) + beta(0, c);
    }
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix LayerNorm::backward(const ParamStore& p, const Cache& cache, const Matrix& dy, Grads* g) const {
  const Matrix& gamma = p.value(gamma_);
  const Matrix& xhat = cache.normalized;
  const std::size_t d = dy.cols();
  Matrix dx(dy.rows(), d);
  if (g) {
    Matrix& dg = g->at(gamma_);
    Matrix& db = g->at(beta_);
    for (std::size_t r = 0; r < dy.rows(); ++r)
      for (std::size_t c = 0; c < d; ++c) {
        dg(0, c) += dy(r, c) * xhat(r, c);
        db(0, c) += dy(r, c);
      }
  }
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double dxh = dy(r, c) * gamma(0, c);
      mean_dxhat += dxh;
      mean_dxhat_xhat += dxh * xhat(r, c);
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c)
      dx(r, c) = cache.inv_std[r] * (dy(r, c) * gamma(0, c) - mean_dxhat - xhat(r, c) * mean_dxhat_xhat);
  }
  return dx;
}

// ------------------------------------------------------------------ BatchNorm

BatchNorm BatchNorm::create(ParamStore& store, const std::string& prefix, std::size_t dim,
                            const InitSpec& init) {
  BatchNorm bn;
  bn.gamma_ = store.add({prefix + ".gamma", Matrix(1, dim, 1.0), init.trainable, init.reinitialized});
  bn.beta_ = store.add({prefix + ".beta", Matrix(1, dim), init.trainable, init.reinitialized});
  bn.mean_ = store.add({prefix + ".running_mean", Matrix(1, dim), false, init.reinitialized, true});
  bn.var_ = store.add({prefix + ".running_var", Matrix(1, dim, 1.0), false, init.reinitialized, true});
  return bn;
}

BatchNorm BatchNorm::bind(const ParamStore& store, const std::string& prefix) {
  BatchNorm bn;
  bn.gamma_ = store.index(prefix + ".gamma");
  bn.beta_ = store.index(prefix + ".beta");
  bn.mean_ = store.index(prefix + ".running_mean");
  bn.var_ = store.index(prefix + ".running_var");
  return bn;
}

Matrix BatchNorm::forward(const ParamStore& p, const Matrix& x, NormMode mode, Cache* cache,
                          ParamStore* running) const {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  if (mode == NormMode::kTrain) {
    check(n >= 2, "batchnorm: training mode needs at least 2 frames (batch variance undefined)");
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) mean[c] += x(r, c);
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) var[c] += (x(r, c) - mean[c]) * (x(r, c) - mean[c]);
    for (double& v : var) v /= static_cast<double>(n);
    if (running) {
      Matrix& rm = running->value(mean_);
      Matrix& rv = running->value(var_);
      const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
      for (std::size_t c = 0; c < d; ++c) {
        rm(0, c) = (1.0 - kMomentum) * rm(0, c) + kMomentum * mean[c];
        rv(0, c) = (1.0 - kMomentum) * rv(0, c) + kMomentum * var[c] * unbias;
      }
    }
  } else {
    for (std::size_t c = 0; c < d; ++c) {
      mean[c] = p.value(mean_)(0, c);
      var[c] = p.value(var_)(0, c);
    }
  }
  const Matrix& gamma = p.value(gamma_);
  const Matrix& beta = p.value(beta_);
  std::vector<double> inv_std(d);
  for (std::size_t c = 0; c < d; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + kEps);
  Matrix xhat(n, d), y(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      xhat(r, c) = (x(r, c) - mean[c]) * inv_std[c];
      y(r, c) = xhat(r, c) * gamma(0, c) + beta(0, c);
    }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return y;
}

Matrix BatchNorm::backward(const ParamStore& p, const Cache& cache, const Matrix& dy, Grads* g) const {
  const Matrix& gamma = p.value(gamma_);
  const Matrix& xhat = cache.normalized;
  const std::size_t n = dy.rows(), d = dy.cols();
  std::vector<double> sum_dy(d, 0.0), sum_dy_xhat(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      sum_dy[c] += dy(r, c);
      sum_dy_xhat[c] += dy(r, c) * xhat(r, c);
    }
  if (g) {
    accumulate_row(g->at(gamma_), sum_dy_xhat);
    accumulate_row(g->at(beta_), sum_dy);
  }
  Matrix dx(n, d);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double scale = gamma(0, c) * cache.inv_std[c];
      if (cache.mode == NormMode::kEval)
        dx(r, c) = dy(r, c) * scale;
      else
        dx(r, c) = scale * (dy(r, c) - inv_n * sum_dy[c] - xhat(r, c) * inv_n * sum_dy_xhat[c]);
    }
  return dx;
}

// ------------------------------------------------------------------ SelfAttention

SelfAttention SelfAttention::create(ParamStore& store, const std::string& prefix, std::size_t d_model,
                                    std::size_t heads, std::mt19937_64& rng, const InitSpec& init) {
  check(heads >= 1 && d_model % heads == 0, "attention: d_model must be divisible by n_heads");
  SelfAttention a;
  a.q_ = Linear::create(store, prefix + ".q", d_model, d_model, rng, init);
  a.k_ = Linear::create(store, prefix + ".k", d_model, d_model, rng, init);
  a.v_ = Linear::create(store, prefix + ".v", d_model, d_model, rng, init);
  a.o_ = Linear::create(store, prefix + ".o", d_model, d_model, rng, init);
  a.heads_ = heads;
  return a;
}

SelfAttention SelfAttention::bind(const ParamStore& store, const std::string& prefix, std::size_t heads) {
  SelfAttention a;
  a.q_ = Linear::bind(store, prefix + ".q");
  a.k_ = Linear::bind(store, prefix + ".k");
  a.v_ = Linear::bind(store, prefix + ".v");
  a.o_ = Linear::bind(store, prefix + ".o");
  a.heads_ = heads;
  check(a.q_.out_dim() % heads == 0, "attention: d_model must be divisible by n_heads");
  return a;
}

Matrix SelfAttention::forward(const ParamStore& p, const Matrix& x, Cache* cache) const {
  Matrix q = q_.forward(p, x), k = k_.forward(p, x), v = v_.forward(p, x);
  const std::size_t t = x.rows(), d = q.cols(), dh = d / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix context(t, d);
  std::vector<Matrix> probs;
  probs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const Matrix qh = columns(q, h * dh, dh), kh = columns(k, h * dh, dh), vh = columns(v, h * dh, dh);
    Matrix s = matmul_nt(qh, kh);
    for (std::size_t i = 0; i < t; ++i) {
      auto row = s.row(i);
      double mx = -std::numeric_limits<double>::infinity();
      for (double& e : row) {
        e *= scale;
        mx = std::max(mx, e);
      }
      double z = 0.0;
      for (double& e : row) {
        e = std::exp(e - mx);
        z += e;
      }
      for (double& e : row) e /= z;
    }
    set_columns(context, h * dh, matmul(s, vh));
    probs.push_back(std::move(s));
  }
  Matrix y = o_.forward(p, context);
  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->context = std::move(context);
    cache->probs = std::move(probs);
  }
  return y;
}

Matrix SelfAttention::backward(const ParamStore& p, const Cache& cache, const Matrix& dy, Grads* g) const {
  const Matrix dcontext = o_.backward(p, cache.context, dy, g);
  const std::size_t t = dy.rows(), d = cache.q.cols(), dh = d / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix dq(t, d), dk(t, d), dv(t, d);
  for (std::size_t h = 0; h < heads_; ++h) {
    const Matrix& prob = cache.probs[h];
    const Matrix qh = columns(cache.q, h * dh, dh), kh = columns(cache.k, h * dh, dh),
                 vh = columns(cache.v, h * dh, dh), dch = columns(dcontext, h * dh, dh);
    Matrix dprob = matmul_nt(dch, vh);
    set_columns(dv, h * dh, matmul_tn(prob, dch));
    // Softmax Jacobian, row by row.
    for (std::size_t i = 0; i < t; ++i) {
      double inner = 0.0;
      for (std::size_t j = 0; j < t; ++j) inner += dprob(i, j) * prob(i, j);
      for (std::size_t j = 0; j < t; ++j) dprob(i, j) = prob(i, j) * (dprob(i, j) - inner) * scale;
    }
    set_columns(dq, h * dh, matmul(dprob, kh));
    set_columns(dk, h * dh, matmul_tn(dprob, qh));
  }
  Matrix dx = q_.backward(p, cache.input, dq, g);
  dx += k_.backward(p, cache.input, dk, g);
  dx += v_.backward(p, cache.input, dv, g);
  return dx;
}

// ------------------------------------------------------------------ FeedForward

FeedForward FeedForward::create(ParamStore& store, const std::string& prefix, std::size_t d_model,
                                std::size_t d_ff, std::mt19937_64& rng, const InitSpec& init) {
  FeedForward f;
  f.in_ = Linear::create(store, prefix + ".in", d_model, d_ff, rng, init);
  f.out_ = Linear::create(store, prefix + ".out", d_ff, d_model, rng, init);
  return f;
}

FeedForward FeedForward::bind(const ParamStore& store, const std::string& prefix) {
  FeedForward f;
  f.in_ = Linear::bind(store, prefix + ".in");
  f.out_ = Linear::bind(store, prefix + ".out");
  return f;
}

Matrix FeedForward::forward(const ParamStore& p, const Matrix& x, Cache* cache) const {
  Matrix pre = in_.forward(p, x);
  Matrix act = gelu(pre);
  Matrix y = out_.forward(p, act);
  if (cache) {
    cache->input = x;
    cache->pre_activation = std::move(pre);
    cache->activation = std::move(act);
  }
  return y;
}

Matrix FeedForward::backward(const ParamStore& p, const Cache& cache, const Matrix& dy, Grads* g) const {
  Matrix dact = out_.backward(p, cache.activation, dy, g);
  for (std::size_t i = 0; i < dact.size(); ++i) dact.data()[i] *= gelu_derivative(cache.pre_activation.data()[i]);
  return in_.backward(p, cache.input, dact, g);
}

// ------------------------------------------------------------------ EncoderBlock

EncoderBlock EncoderBlock::create(ParamStore& store, const std::string& prefix, std::size_t d_model,
                                  std::size_t heads, std::size_t d_ff, std::mt19937_64& rng,
                                  const InitSpec& init) {
  EncoderBlock b;
  b.ln1_ = LayerNorm::create(store, prefix + ".ln1", d_model, init);
  b.attn_ = SelfAttention::create(store, prefix + ".attn", d_model, heads, rng, init);
  b.ln2_ = LayerNorm::create(store, prefix + ".ln2", d_model, init);
  b.ff_ = FeedForward::create(store, prefix + ".ff", d_model, d_ff, rng, init);
  return b;
}

EncoderBlock EncoderBlock::bind(const ParamStore& store, const std::string& prefix, std::size_t heads) {
  EncoderBlock b;
  b.ln1_ = LayerNorm::bind(store, prefix + ".ln1");
  b.attn_ = SelfAttention::bind(store, prefix + ".attn", heads);
  b.ln2_ = LayerNorm::bind(store, prefix + ".ln2");
  b.ff_ = FeedForward::bind(store, prefix + ".ff");
  return b;
}

Matrix EncoderBlock::forward(const ParamStore& p, const Matrix& x, Cache* cache) const {
  Matrix h = x + attn_.forward(p, ln1_.forward(p, x, cache ? &cache->ln1 : nullptr),
                               cache ? &cache->attn : nullptr);
  return h + ff_.forward(p, ln2_.forward(p, h, cache ? &cache->ln2 : nullptr), cache ? &cache->ff : nullptr);
}

Matrix EncoderBlock::backward(const ParamStore& p, const Cache& cache, const Matrix& dy, Grads* g) const {
  Matrix dh = dy + ln2_.backward(p, cache.ln2, ff_.backward(p, cache.ff, dy, g), g);
  return dh + ln1_.backward(p, cache.ln1, attn_.backward(p, cache.attn, dh, g), g);
}

// ------------------------------------------------------------------ MlpHead

MlpHead MlpHead::create(ParamStore& store, const std::string& prefix, std::size_t in,
                        const MlpHeadConfig& cfg, std::mt19937_64& rng, const InitSpec& init) {
  check(cfg.hidden >= 1 && cfg.out >= 1, "mlp head dims must be >= 1");
  MlpHead m;
  m.first_ = Linear::create(store, prefix + ".fc1", in, cfg.hidden, rng, init);
  m.bn_ = BatchNorm::create(store, prefix + ".bn", cfg.hidden, init);
  m.second_ = Linear::create(store, prefix + ".fc2", cfg.hidden, cfg.out, rng, init);
  return m;
}

MlpHead MlpHead::bind(const ParamStore& store, const std::string& prefix) {
  MlpHead m;
  m.first_ = Linear::bind(store, prefix + ".fc1");
  m.bn_ = BatchNorm::bind(store, prefix + ".bn");
  m.second_ = Linear::bind(store, prefix + ".fc2");
  return m;
}

Matrix MlpHead::forward(const ParamStore& p, const Matrix& x, NormMode mode, Cache* cache,
                        ParamStore* running) const {
  Matrix hidden = first_.forward(p, x);
  BatchNorm::Cache bn_cache;
  Matrix normalized = bn_.forward(p, hidden, mode, &bn_cache, running);
  Matrix activated = gelu(normalized);
  Matrix y = second_.forward(p, activated);
  if (cache) {
    cache->input = x;
    cache->hidden = std::move(hidden);
    cache->bn = std::move(bn_cache);
    cache->normalized = std::move(normalized);
    cache->activated = std::move(activated);
  }
  return y;
}

Matrix MlpHead::backward(const ParamStore& p, const Cache& cache, const Matrix& dy, Grads* g) const {
  Matrix dact = second_.backward(p, cache.activated, dy, g);
  for (std::size_t i = 0; i < dact.size(); ++i) dact.data()[i] *= gelu_derivative(cache.normalized.data()[i]);
  const Matrix dhidden = bn_.backward(p, cache.bn, dact, g);
  return first_.backward(p, cache.input, dhidden, g);
}

std::size_t mlp_head_param_count(std::size_t in, const MlpHeadConfig& cfg) {
  return in * cfg.hidden + cfg.hidden + 2 * cfg.hidden + cfg.hidden * cfg.out + cfg.out;
}

}  // namespace syllabion
