#pragma once

// Toy tensor-parallel transformer with random weights. Every sub-layer
// (attention, MLP) is split across devices by the model assignment m and
// recombined by an all-reduce through a pluggable Reducer.

#include <cstdint>
#include <span>
#include <vector>

#include "airtp/matrix.hpp"

namespace airtp {

struct TransformerConfig {
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t num_heads = 4;
  std::size_t num_layers = 2;
  std::size_t vocab_size = 256;
  std::size_t seq_len = 32;

  /// Throws ConfigError on an invalid field.
  void validate() const;
  /// All-reduce calls in one forward pass (two per block).
  std::size_t reduces_per_pass() const { return 2 * num_layers; }
};

struct LayerWeights {
  RealMatrix wq, wk, wv, wo;  // d_model x d_model; head h owns columns (rows of wo) h*d_head ..
  RealMatrix w;               // d_model x d_ff
  RealMatrix u;               // d_ff x d_model
};

struct TransformerModel {
  TransformerConfig config;
  RealMatrix embedding;   // vocab x d_model
  RealMatrix positional;  // seq_len x d_model
  std::vector<LayerWeights> layers;
  RealMatrix head;        // d_model x vocab
};

/// Gaussian weights scaled by 1/sqrt(fan-in); deterministic in seed.
TransformerModel make_model(const TransformerConfig& config, std::uint64_t seed);

/// Embedding rows of `tokens` plus positional rows.
RealMatrix embed(const TransformerModel& model, std::span<const std::size_t> tokens);

/// Largest-remainder rounding of m * total: floor everything, then hand the
/// leftover units to the largest fractional parts (lowest index on ties).
std::vector<std::size_t> largest_remainder(std::span<const double> m, std::size_t total);

struct MlpShard {
  RealMatrix w;  // d_model x k_n
  RealMatrix u;  // k_n x d_model
};

struct ShardedLayer {
  std::vector<MlpShard> mlp;
  std::vector<std::size_t> shard_sizes;             // k_n, sums to d_ff
  std::vector<std::vector<std::size_t>> heads;      // disjoint, cover all heads
};

/// Contiguous column blocks of W and matching row blocks of U.
ShardedLayer partition_mlp(const RealMatrix& w, const RealMatrix& u, std::span<const double> m);

/// MLP split plus head split of one layer.
ShardedLayer partition_layer(const LayerWeights& layer, std::size_t num_heads, std::span<const double> m);

/// max(0, X W_n) U_n.
RealMatrix device_forward_mlp(const RealMatrix& x, const MlpShard& shard);

/// Causal multi-head attention restricted to `heads`, projected by the
/// matching rows of W_o.
RealMatrix device_forward_attention(const RealMatrix& x, const LayerWeights& layer, std::size_t num_heads,
                                    std::span<const std::size_t> heads);

/// Combines per-device partial outputs. Must be safe to call concurrently;
/// `call_index` numbers the all-reduce calls of one forward pass so channel
/// backed reducers can key their randomness and channel block on it.
class Reducer {
 public:
  virtual ~Reducer() = default;
  virtual RealMatrix reduce(std::span<const RealMatrix> partials, std::size_t call_index) const = 0;
};

class ExactReducer final : public Reducer {
 public:
  RealMatrix reduce(std::span<const RealMatrix> partials, std::size_t call_index) const override;
};

/// Plain sum; throws DimensionError on empty input or unequal shapes.
RealMatrix sum_partials(std::span<const RealMatrix> partials);

RealMatrix all_reduce(std::span<const RealMatrix> partials, const Reducer& reducer, std::size_t call_index = 0);

/// Row-wise normalisation to zero mean and unit variance (no affine terms).
RealMatrix layer_norm(const RealMatrix& x);

/// Pre-norm blocks: x += allreduce(attention(ln x)); x += allreduce(mlp(ln x)),
/// then the output head on ln x. Returns seq_len x vocab logits.
RealMatrix forward_pass(const TransformerModel& model, const RealMatrix& x, std::span<const double> m,
                        const Reducer& reducer);

/// The same network evaluated on whole weight matrices.
RealMatrix centralized_forward(const TransformerModel& model, const RealMatrix& x);

/// Root-mean-square entry of each device's partial at each all-reduce call
/// of an exact forward pass: calls x devices.
RealMatrix partial_rms_profile(const TransformerModel& model, const RealMatrix& x, std::span<const double> m);

/// Row-wise log-softmax.
RealMatrix log_softmax(const RealMatrix& logits);

/// Column index of the largest entry of each row (lowest index on ties).
std::vector<std::size_t> argmax_rows(const RealMatrix& logits);

}  // namespace airtp
