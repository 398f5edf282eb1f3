#include "airtp/tensorpar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "airtp/linalg.hpp"
#include "airtp/rng.hpp"

namespace airtp {

namespace {

void check_assignment(std::span<const double> m) {
  if (m.empty()) throw DimensionError("assignment is empty");
  double total = 0.0;
  for (double v : m) {
    if (!(v >= -1e-12) || !std::isfinite(v)) throw DomainError("assignment entries must be finite and >= 0");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("assignment must sum to 1");
}

RealMatrix relu(RealMatrix x) {
  for (double& v : x.values()) v = std::max(v, 0.0);
  return x;
}

// Causal softmax attention over the given heads of one layer. Columns of the
// result are the concatenated head outputs, in the order of `heads`.
RealMatrix attention_heads(const RealMatrix& x, const LayerWeights& layer, std::size_t num_heads,
                           std::span<const std::size_t> heads) {
  const std::size_t d_head = layer.wq.cols() / num_heads;
  const std::size_t seq = x.rows();
  RealMatrix out(seq, d_head * heads.size());
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));
  std::vector<double> w(seq);
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const std::size_t first = heads[i] * d_head;
    const RealMatrix q = x * layer.wq.columns(first, d_head);
    const RealMatrix k = x * layer.wk.columns(first, d_head);
    const RealMatrix v = x * layer.wv.columns(first, d_head);
    for (std::size_t r = 0; r < seq; ++r) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c <= r; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < d_head; ++j) s += q(r, j) * k(c, j);
        w[c] = s * scale;
        top = std::max(top, w[c]);
      }
      double z = 0.0;
      for (std::size_t c = 0; c <= r; ++c) z += (w[c] = std::exp(w[c] - top));
      for (std::size_t c = 0; c <= r; ++c)
        for (std::size_t j = 0; j < d_head; ++j) out(r, i * d_head + j) += w[c] / z * v(c, j);
    }
  }
  return out;
}

RealMatrix wo_rows(const LayerWeights& layer, std::size_t num_heads, std::span<const std::size_t> heads) {
  const std::size_t d_head = layer.wo.rows() / num_heads;
  RealMatrix out(d_head * heads.size(), layer.wo.cols());
  for (std::size_t i = 0; i < heads.size(); ++i)
    for (std::size_t j = 0; j < d_head; ++j)
      std::copy_n(layer.wo.row(heads[i] * d_head + j).begin(), layer.wo.cols(), out.row(i * d_head + j).begin());
  return out;
}

double rms(const RealMatrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return a.empty() ? 0.0 : std::sqrt(s / static_cast<double>(a.size()));
}

// Shared body of forward_pass and partial_rms_profile; `observe` sees every
// call's partials before they are reduced.
template <typename Observe>
RealMatrix run_layers(const TransformerModel& model, RealMatrix x, std::span<const double> m, const Reducer& reducer,
                      Observe&& observe) {
  const TransformerConfig& cfg = model.config;
  if (x.rows() != cfg.seq_len || x.cols() != cfg.d_model)
    throw DimensionError("forward input must be seq_len x d_model, got " + detail::shape_str(x.rows(), x.cols()));
  check_assignment(m);
  std::size_t call = 0;
  std::vector<RealMatrix> partials(m.size());
  for (const LayerWeights& layer : model.layers) {
    const ShardedLayer shards = partition_layer(layer, cfg.num_heads, m);

    RealMatrix h = layer_norm(x);
    for (std::size_t n = 0; n < m.size(); ++n)
      partials[n] = device_forward_attention(h, layer, cfg.num_heads, shards.heads[n]);
    observe(std::span<const RealMatrix>(partials), call);
    x += all_reduce(partials, reducer, call++);

    h = layer_norm(x);
    for (std::size_t n = 0; n < m.size(); ++n) partials[n] = device_forward_mlp(h, shards.mlp[n]);
    observe(std::span<const RealMatrix>(partials), call);
    x += all_reduce(partials, reducer, call++);
  }
  return layer_norm(x) * model.head;
}

}  // namespace

void TransformerConfig::validate() const {
  if (d_model < 1 || d_ff < 1 || num_heads < 1 || vocab_size < 1 || seq_len < 1)
    throw ConfigError("model dimensions must be >= 1 (num_layers may be 0)");
  if (d_model % num_heads != 0) throw ConfigError("model.d_model must be divisible by model.num_heads");
}

TransformerModel make_model(const TransformerConfig& config, std::uint64_t seed) {
  config.validate();
  TransformerModel model;
  model.config = config;
  const double s_model = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  const double s_ff = 1.0 / std::sqrt(static_cast<double>(config.d_ff));
  Rng root(seed);
  Rng emb = root.split(0);
  model.embedding = gaussian_matrix(config.vocab_size, config.d_model, emb);
  model.positional = gaussian_matrix(config.seq_len, config.d_model, emb, 0.1);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    Rng r = root.split(1 + l);
    LayerWeights w;
    w.wq = gaussian_matrix(config.d_model, config.d_model, r, s_model);
    w.wk = gaussian_matrix(config.d_model, config.d_model, r, s_model);
    w.wv = gaussian_matrix(config.d_model, config.d_model, r, s_model);
    w.wo = gaussian_matrix(config.d_model, config.d_model, r, s_model);
    w.w = gaussian_matrix(config.d_model, config.d_ff, r, s_model);
    w.u = gaussian_matrix(config.d_ff, config.d_model, r, s_ff);
    model.layers.push_back(std::move(w));
  }
  Rng h = root.split(1 + config.num_layers);
  model.head = gaussian_matrix(config.d_model, config.vocab_size, h, s_model);
  return model;
}

RealMatrix embed(const TransformerModel& model, std::span<const std::size_t> tokens) {
  if (tokens.size() != model.config.seq_len) throw DimensionError("token sequence length != seq_len");
  RealMatrix x(tokens.size(), model.config.d_model);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= model.config.vocab_size) throw DomainError("token id out of vocabulary");
    for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) = model.embedding(tokens[i], j) + model.positional(i, j);
  }
  return x;
}

std::vector<std::size_t> largest_remainder(std::span<const double> m, std::size_t total) {
  check_assignment(m);
  const double sum = std::accumulate(m.begin(), m.end(), 0.0);
  std::vector<std::size_t> k(m.size());
  std::vector<double> frac(m.size());
  std::size_t used = 0;
  for (std::size_t n = 0; n < m.size(); ++n) {
    const double exact = std::max(m[n], 0.0) / sum * static_cast<double>(total);
    k[n] = static_cast<std::size_t>(std::floor(exact));
    frac[n] = exact - static_cast<double>(k[n]);
    used += k[n];
  }
  // Rounding in the normalisation can push the floors one past the total.
  while (used > total) {
    const auto it = std::max_element(k.begin(), k.end());
    --*it;
    --used;
  }
  std::vector<std::size_t> order(m.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; used < total; i = (i + 1) % order.size(), ++used) ++k[order[i]];
  return k;
}

ShardedLayer partition_mlp(const RealMatrix& w, const RealMatrix& u, std::span<const double> m) {
  if (w.cols() != u.rows() || w.rows() != u.cols()) throw DimensionError("W and U shapes do not match");
  ShardedLayer out;
  out.shard_sizes = largest_remainder(m, w.cols());
  std::size_t first = 0;
  for (std::size_t k : out.shard_sizes) {
    out.mlp.push_back({w.columns(first, k), u.rows_range(first, k)});
    first += k;
  }
  return out;
}

ShardedLayer partition_layer(const LayerWeights& layer, std::size_t num_heads, std::span<const double> m) {
  ShardedLayer out = partition_mlp(layer.w, layer.u, m);
  const std::vector<std::size_t> counts = largest_remainder(m, num_heads);
  std::size_t next = 0;
  for (std::size_t c : counts) {
    std::vector<std::size_t> heads(c);
    std::iota(heads.begin(), heads.end(), next);
    next += c;
    out.heads.push_back(std::move(heads));
  }
  return out;
}

RealMatrix device_forward_mlp(const RealMatrix& x, const MlpShard& shard) {
  if (x.cols() != shard.w.rows()) throw DimensionError("MLP input width != d_model");
  if (shard.w.cols() == 0) return RealMatrix(x.rows(), shard.u.cols());
  return relu(x * shard.w) * shard.u;
}

RealMatrix device_forward_attention(const RealMatrix& x, const LayerWeights& layer, std::size_t num_heads,
                                    std::span<const std::size_t> heads) {
  if (x.cols() != layer.wq.rows()) throw DimensionError("attention input width != d_model");
  if (heads.empty()) return RealMatrix(x.rows(), layer.wo.cols());
  for (std::size_t h : heads)
    if (h >= num_heads) throw DimensionError("head index out of range");
  return attention_heads(x, layer, num_heads, heads) * wo_rows(layer, num_heads, heads);
}

RealMatrix sum_partials(std::span<const RealMatrix> partials) {
  if (partials.empty()) throw DimensionError("all-reduce needs at least one partial");
  RealMatrix out = partials.front();
  for (std::size_t n = 1; n < partials.size(); ++n) out += partials[n];
  return out;
}

RealMatrix ExactReducer::reduce(std::span<const RealMatrix> partials, std::size_t) const {
  return sum_partials(partials);
}

RealMatrix all_reduce(std::span<const RealMatrix> partials, const Reducer& reducer, std::size_t call_index) {
  if (partials.empty()) throw DimensionError("all-reduce needs at least one partial");
  for (const auto& p : partials)
    if (p.rows() != partials.front().rows() || p.cols() != partials.front().cols())
      throw DimensionError("all-reduce partials differ in shape");
  RealMatrix out = reducer.reduce(partials, call_index);
  if (out.rows() != partials.front().rows() || out.cols() != partials.front().cols())
    throw DimensionError("reducer returned the wrong shape");
  return out;
}

RealMatrix layer_norm(const RealMatrix& x) {
  RealMatrix out(x.rows(), x.cols());
  const double d = static_cast<double>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / d;
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    const double inv = 1.0 / std::sqrt(var / d + 1e-5);
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (r[j] - mean) * inv;
  }
  return out;
}

RealMatrix forward_pass(const TransformerModel& model, const RealMatrix& x, std::span<const double> m,
                        const Reducer& reducer) {
  return run_layers(model, x, m, reducer, [](std::span<const RealMatrix>, std::size_t) {});
}

RealMatrix centralized_forward(const TransformerModel& model, const RealMatrix& x0) {
  const TransformerConfig& cfg = model.config;
  if (x0.rows() != cfg.seq_len || x0.cols() != cfg.d_model) throw DimensionError("forward input must be seq_len x d_model");
  std::vector<std::size_t> all(cfg.num_heads);
  std::iota(all.begin(), all.end(), 0);
  RealMatrix x = x0;
  for (const LayerWeights& layer : model.layers) {
    x += attention_heads(layer_norm(x), layer, cfg.num_heads, all) * layer.wo;
    x += relu(layer_norm(x) * layer.w) * layer.u;
  }
  return layer_norm(x) * model.head;
}

RealMatrix partial_rms_profile(const TransformerModel& model, const RealMatrix& x, std::span<const double> m) {
  RealMatrix out(model.config.reduces_per_pass(), m.size());
  ExactReducer exact;
  run_layers(model, x, m, exact, [&](std::span<const RealMatrix> partials, std::size_t call) {
    for (std::size_t n = 0; n < partials.size(); ++n) out(call, n) = rms(partials[n]);
  });
  return out;
}

RealMatrix log_softmax(const RealMatrix& logits) {
  RealMatrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto r = logits.row(i);
    const double top = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - top);
    const double lz = top + std::log(z);
    for (std::size_t j = 0; j < r.size(); ++j) out(i, j) = r[j] - lz;
  }
  return out;
}

std::vector<std::size_t> argmax_rows(const RealMatrix& logits) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto r = logits.row(i);
    out[i] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

}  // namespace airtp
