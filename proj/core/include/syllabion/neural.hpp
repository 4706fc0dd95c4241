#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "syllabion/io.hpp"
#include "syllabion/matrix.hpp"

namespace syllabion {

// ------------------------------------------------------------------ parameters

struct Param {
  std::string name;
  Matrix value;
  bool trainable = true;
  // Randomly (re)initialized rather than carried over from a pretrained
  // encoder. Only these are updated during warm-up.
  bool reinitialized = false;
  // Running statistics: not optimized, but tracked by the teacher EMA.
  bool buffer = false;
};

class ParamStore {
 public:
  std::size_t add(Param p);
  std::size_t index(const std::string& name) const;
  std::optional<std::size_t> find(const std::string& name) const;
  bool contains(const std::string& name) const { return find(name).has_value(); }

  std::size_t size() const { return params_.size(); }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  Matrix& value(std::size_t i) { return params_[i].value; }
  const Matrix& value(std::size_t i) const { return params_[i].value; }
  Matrix& value(const std::string& name) { return params_[index(name)].value; }
  const Matrix& value(const std::string& name) const { return params_[index(name)].value; }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Copy keeping only names accepted by keep; every flag is preserved
  // except trainable, which is forced to the given value when set.
  ParamStore filtered(const std::function<bool(const std::string&)>& keep,
                      std::optional<bool> trainable = std::nullopt) const;

  std::size_t scalar_count() const;

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

// Gradients aligned with a ParamStore by index. Entries start empty and are
// allocated on first accumulation.
class Grads {
 public:
  explicit Grads(const ParamStore& store);
  Matrix& at(std::size_t i);
  const Matrix& get(std::size_t i) const { return grads_[i]; }
  bool has(std::size_t i) const { return !grads_[i].empty(); }
  std::size_t size() const { return grads_.size(); }
  double squared_norm() const;

 private:
  std::vector<Matrix> grads_;
  std::vector<std::pair<std::size_t, std::size_t>> shapes_;
};

struct InitSpec {
  double stddev = 0.0;  // 0 selects Xavier-normal
  bool trainable = true;
  bool reinitialized = false;
};

// ------------------------------------------------------------------ activations

double gelu(double x);
double gelu_derivative(double x);
Matrix gelu(const Matrix& x);

// ------------------------------------------------------------------ layers
//
// Layers are lightweight views holding parameter indices. forward() fills a
// cache consumed by backward(), which accumulates parameter gradients and
// returns the gradient with respect to the layer input.

class Linear {
 public:
  Linear() = default;
  static Linear create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                       std::mt19937_64& rng, const InitSpec& init);
  static Linear bind(const ParamStore& store, const std::string& prefix);

  Matrix forward(const ParamStore& p, const Matrix& x) const;
  Matrix backward(const ParamStore& p, const Matrix& x, const Matrix& dy, Grads* g) const;

  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }
  std::size_t weight() const { return w_; }
  std::size_t bias() const { return b_; }

 private:
  std::size_t w_ = 0, b_ = 0, in_ = 0, out_ = 0;
};

class LayerNorm {
 public:
  struct Cache {
    Matrix normalized;
    std::vector<double> inv_std;
  };
  static LayerNorm create(ParamStore& store, const std::string& prefix, std::size_t dim,
                          const InitSpec& init);
  static LayerNorm bind(const ParamStore& store, const std::string& prefix);

  Matrix forward(const ParamStore& p, const Matrix& x, Cache* cache) const;
  Matrix backward(const ParamStore& p, const Cache& cache, const Matrix& dy, Grads* g) const;

  static constexpr double kEps = 1e-5;

 private:
  std::size_t gamma_ = 0, beta_ = 0;
};

enum class NormMode { kTrain, kEval };

// Normalizes each column over the rows of the input (batch x time frames).
class BatchNorm {
 public:
  struct Cache {
    Matrix normalized;
    std::vector<double> inv_std;
    NormMode mode = NormMode::kTrain;
  };
  static BatchNorm create(ParamStore& store, const std::string& prefix, std::size_t dim,
                          const InitSpec& init);
  static BatchNorm bind(const ParamStore& store, const std::string& prefix);

  // In training mode, batch statistics are used; when running is non-null
  // the running mean/var buffers inside it are updated.
  Matrix forward(const ParamStore& p, const Matrix& x, NormMode mode, Cache* cache,
                 ParamStore* running = nullptr) const;
  Matrix backward(const ParamStore& p, const Cache& cache, const Matrix& dy, Grads* g) const;

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  std::size_t gamma_ = 0, beta_ = 0, mean_ = 0, var_ = 0;
};

class SelfAttention {
 public:
  struct Cache {
    Matrix input, q, k, v, context;
    std::vector<Matrix> probs;  // one T x T row-stochastic matrix per head
  };
  static SelfAttention create(ParamStore& store, const std::string& prefix, std::size_t d_model,
                              std::size_t heads, std::mt19937_64& rng, const InitSpec& init);
  static SelfAttention bind(const ParamStore& store, const std::string& prefix, std::size_t heads);

  Matrix forward(const ParamStore& p, const Matrix& x, Cache* cache) const;
  Matrix backward(const ParamStore& p, const Cache& cache, const Matrix& dy, Grads* g) const;

  const Linear& output() const { return o_; }

 private:
  Linear q_, k_, v_, o_;
  std::size_t heads_ = 1;
};

class FeedForward {
 public:
  struct Cache {
    Matrix input, pre_activation, activation;
  };
  static FeedForward create(ParamStore& store, const std::string& prefix, std::size_t d_model,
                            std::size_t d_ff, std::mt19937_64& rng, const InitSpec& init);
  static FeedForward bind(const ParamStore& store, const std::string& prefix);

  Matrix forward(const ParamStore& p, const Matrix& x, Cache* cache) const;
  Matrix backward(const ParamStore& p, const Cache& cache, const Matrix& dy, Grads* g) const;

  const Linear& output() const { return out_; }

 private:
  Linear in_, out_;
};

// Pre-norm transformer block: h = x + attn(ln1(x)); y = h + ff(ln2(h)).
class EncoderBlock {
 public:
  struct Cache {
    LayerNorm::Cache ln1, ln2;
    SelfAttention::Cache attn;
    FeedForward::Cache ff;
  };
  static EncoderBlock create(ParamStore& store, const std::string& prefix, std::size_t d_model,
                             std::size_t heads, std::size_t d_ff, std::mt19937_64& rng,
                             const InitSpec& init);
  static EncoderBlock bind(const ParamStore& store, const std::string& prefix, std::size_t heads);

  Matrix forward(const ParamStore& p, const Matrix& x, Cache* cache) const;
  Matrix backward(const ParamStore& p, const Cache& cache, const Matrix& dy, Grads* g) const;

  const SelfAttention& attention() const { return attn_; }
  const FeedForward& feed_forward() const { return ff_; }

 private:
  LayerNorm ln1_, ln2_;
  SelfAttention attn_;
  FeedForward ff_;
};

// ------------------------------------------------------------------ encoder

struct EncoderConfig {
  std::size_t input_dim = 40;
  std::size_t n_layers = 12;
  std::size_t d_model = 768;
  std::size_t n_heads = 12;
  std::size_t d_ff = 3072;
  std::size_t reinit_last_n = 3;
  bool freeze_input_projection = false;

  void validate() const;
};

Matrix sinusoidal_positions(std::size_t frames, std::size_t d_model);

// Input projection + sinusoidal positions, followed by n_layers blocks.
// Layer 0 is the embedding; layer l in [1, n_layers] is the output of block l.
class Encoder {
 public:
  struct Cache {
    Matrix input;
    std::vector<Matrix> layer_outputs;  // n_layers + 1 entries
    std::vector<EncoderBlock::Cache> blocks;
  };

  static Encoder create(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg,
                        std::mt19937_64& rng);
  static Encoder bind(const ParamStore& store, const std::string& prefix, const EncoderConfig& cfg);

  // Runs up to and including block `up_to` (defaults to all layers).
  Cache forward(const ParamStore& p, const Matrix& x, std::optional<std::size_t> up_to = {}) const;
  // layer_grads[l] is dL/d(layer l output) (empty matrix = none). Returns
  // dL/d(input features).
  Matrix backward(const ParamStore& p, const Cache& cache, const std::vector<Matrix>& layer_grads,
                  Grads* g) const;

  const EncoderConfig& config() const { return cfg_; }
  const Linear& input_projection() const { return proj_; }
  const std::vector<EncoderBlock>& blocks() const { return blocks_; }

 private:
  EncoderConfig cfg_;
  Linear proj_;
  std::vector<EncoderBlock> blocks_;
};

// Hidden states of one layer (0..n_layers) for a feature matrix.
FrameFeatures encoder_forward(const ParamStore& p, const std::string& prefix, const EncoderConfig& cfg,
                              const FrameFeatures& features, std::size_t layer);
// Hidden states of every layer 0..n_layers.
std::vector<FrameFeatures> encoder_forward_all(const ParamStore& p, const std::string& prefix,
                                               const EncoderConfig& cfg, const FrameFeatures& features);

std::size_t encoder_param_count(const EncoderConfig& cfg);

// ------------------------------------------------------------------ MLP head

struct MlpHeadConfig {
  std::size_t hidden = 2048;
  std::size_t out = 256;
};

// linear(hidden) -> batchnorm -> GELU -> linear(out)
class MlpHead {
 public:
  struct Cache {
    Matrix input, hidden;
    BatchNorm::Cache bn;
    Matrix normalized;
    Matrix activated;
  };
  static MlpHead create(ParamStore& store, const std::string& prefix, std::size_t in,
                        const MlpHeadConfig& cfg, std::mt19937_64& rng, const InitSpec& init);
  static MlpHead bind(const ParamStore& store, const std::string& prefix);

  Matrix forward(const ParamStore& p, const Matrix& x, NormMode mode, Cache* cache,
                 ParamStore* running = nullptr) const;
  Matrix backward(const ParamStore& p, const Cache& cache, const Matrix& dy, Grads* g) const;

  std::size_t out_dim() const { return second_.out_dim(); }

 private:
  Linear first_, second_;
  BatchNorm bn_;
};

std::size_t mlp_head_param_count(std::size_t in, const MlpHeadConfig& cfg);

// ------------------------------------------------------------------ optimization

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  std::vector<Matrix> m, v;
  std::vector<long long> steps;  // per-tensor update count for bias correction
};

AdamWState make_adamw_state(const ParamStore& store);

// One decoupled-weight-decay Adam update on every trainable tensor accepted
// by `update` (all trainable tensors when empty). Throws naming the tensor on
// a non-finite gradient.
void adamw_step(ParamStore& store, const Grads& grads, AdamWState& state, double lr,
                const AdamWConfig& cfg = {},
                const std::function<bool(const Param&)>& update = {});

struct LrSchedule {
  double lr_min = 1e-5;
  double lr_max = 1e-4;
  double warmup_frac = 0.03;
  double hold_frac = 0.47;
  long long total_steps = 1;

  void validate() const;
  double warmup_steps() const { return warmup_frac * static_cast<double>(total_steps); }
};

// Linear warm-up lr_min -> lr_max, hold, then linear decay back to lr_min.
double lr_at(const LrSchedule& s, long long step);

}  // namespace syllabion
