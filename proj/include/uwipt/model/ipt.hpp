#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "uwipt/core/ops.hpp"
#include "uwipt/core/rng.hpp"
#include "uwipt/core/tensor.hpp"
#include "uwipt/model/config.hpp"
#include "uwipt/model/task.hpp"

namespace uwipt {

/// Pairwise interactions of global attention over `n_pixels` units.
inline std::uint64_t attention_cost(std::uint64_t n_pixels) {
  if (n_pixels == 0) throw ContractError("attention_cost: n_pixels must be >= 1");
  return n_pixels * n_pixels;
}

/// Tokens cut from a C x H x W feature map, one per P x P patch.
template <typename T>
struct PatchSequence {
  Tensor<T> tokens;  // [rows*cols x C*P*P]
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return rows * cols; }
};

/// Instrumentation filled by forward passes.
template <typename T>
struct ForwardStats {
  std::uint64_t attention_entries = 0;  // score-matrix entries, summed over heads and layers
  bool keep_attention = false;
  std::vector<Tensor<T>> attention_maps;
};

template <typename T>
PatchSequence<T> flatten_patches(const Tensor<T>& features, std::size_t patch) {
  detail::require_rank(features, 3, "flatten_patches");
  const std::size_t c = features.extent(0), h = features.extent(1), w = features.extent(2);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw DimensionError("flatten_patches: extents " + std::to_string(h) + "x" + std::to_string(w) +
                         " are not multiples of patch size " + std::to_string(patch));
  }
  const std::size_t rows = h / patch, cols = w / patch, dim = c * patch * patch;
  auto index = std::make_shared<std::vector<std::uint32_t>>(rows * cols * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t q = 0; q < cols; ++q) {
      std::uint32_t* dst = index->data() + (r * cols + q) * dim;
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t py = 0; py < patch; ++py) {
          for (std::size_t px = 0; px < patch; ++px) {
            *dst++ = static_cast<std::uint32_t>((ch * h + r * patch + py) * w + q * patch + px);
          }
        }
      }
    }
  }
  PatchSequence<T> seq;
  seq.tokens = gather(features, {rows * cols, dim}, std::move(index), "flatten_patches");
  seq.rows = rows;
  seq.cols = cols;
  seq.channels = c;
  seq.height = h;
  seq.width = w;
  return seq;
}

template <typename T>
Tensor<T> unflatten_patches(const PatchSequence<T>& seq) {
  const std::size_t c = seq.channels, h = seq.height, w = seq.width;
  const std::size_t patch = h / seq.rows;
  const std::size_t dim = c * patch * patch;
  if (seq.tokens.rank() != 2 || seq.tokens.extent(0) != seq.size() || seq.tokens.extent(1) != dim) {
    throw DimensionError("unflatten_patches: tokens " + shape_str(seq.tokens.shape()) +
                         " do not match grid " + std::to_string(seq.rows) + "x" + std::to_string(seq.cols));
  }
  auto index = std::make_shared<std::vector<std::uint32_t>>(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t token = (y / patch) * seq.cols + x / patch;
        const std::size_t elem = (ch * patch + y % patch) * patch + x % patch;
        (*index)[(ch * h + y) * w + x] = static_cast<std::uint32_t>(token * dim + elem);
      }
    }
  }
  return gather(seq.tokens, {c, h, w}, std::move(index), "unflatten_patches");
}

template <typename T>
struct ConvLayer {
  Tensor<T> weight;  // [out x in x k x k]
  Tensor<T> bias;    // [out]
};

template <typename T>
struct Head {
  std::vector<ConvLayer<T>> convs;  // 3 -> C -> C -> C
};

template <typename T>
struct Tail {
  std::size_t scale = 1;
  std::vector<ConvLayer<T>> convs;
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gain;
  Tensor<T> shift;
};

template <typename T>
struct AttentionParams {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
struct FeedForwardParams {
  Tensor<T> w1, b1, w2, b2;
};

template <typename T>
struct EncoderBlock {
  LayerNormParams<T> norm1;
  AttentionParams<T> attn;
  LayerNormParams<T> norm2;
  FeedForwardParams<T> ffn;
};

template <typename T>
struct DecoderBlock {
  LayerNormParams<T> norm1;
  AttentionParams<T> self_attn;
  LayerNormParams<T> norm2;
  AttentionParams<T> cross_attn;
  LayerNormParams<T> norm3;
  FeedForwardParams<T> ffn;
};

/// Prefix that groups a parameter name for reporting, e.g. "head.denoise",
/// "encoder", "pos_embedding".
inline std::string parameter_group(const std::string& name) {
  const auto first = name.find('.');
  if (first == std::string::npos) return name;
  const std::string root = name.substr(0, first);
  if (root == "head" || root == "tail" || root == "task_embedding") {
    const auto second = name.find('.', first + 1);
    return second == std::string::npos ? name : name.substr(0, second);
  }
  return root;
}

/// Multi-task restoration transformer: per-task convolutional heads, a shared
/// encoder over patch tokens, a decoder conditioned on a task embedding, and
/// per-task tails.
template <typename T>
class IptModel {
 public:
  using Param = std::pair<std::string, Tensor<T>>;

  /// Randomly initialized model; identical (config, seed) give identical weights.
  IptModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    build();
    Rng root(seed);
    for (auto& [name, t] : named_parameters()) initialize(name, t, root.split(name));
  }

  const ModelConfig& config() const { return config_; }

  /// Head, flatten, encoder, decoder(task), unflatten, residual, tail.
  /// Extents must be multiples of the patch size (see pad_to_patch).
  Tensor<T> forward(const Tensor<T>& img, TaskId task, ForwardStats<T>* stats = nullptr) const {
    const Tensor<T> features = head_forward(img, task);
    PatchSequence<T> seq = flatten_patches(features, config_.patch);
    PatchSequence<T> encoded = encoder_forward(seq, stats);
    PatchSequence<T> decoded = decoder_forward(encoded, task, stats);
    const Tensor<T> body = add(unflatten_patches(decoded), features);
    return tail_forward(body, task);
  }

  Tensor<T> head_forward(const Tensor<T>& img, TaskId task) const {
    if (img.rank() != 3 || img.extent(0) != 3) {
      throw DimensionError("head_forward: expected a 3 x H x W image, got " + shape_str(img.shape()));
    }
    const auto& head = lookup(heads_, config_.route(task), "head");
    Tensor<T> x = img;
    for (std::size_t i = 0; i < head.convs.size(); ++i) {
      x = conv2d(x, head.convs[i].weight, head.convs[i].bias);
      if (i + 1 < head.convs.size()) x = relu(x);
    }
    return x;
  }

  /// Adds positional embeddings and runs the encoder blocks.
  PatchSequence<T> encoder_forward(const PatchSequence<T>& seq, ForwardStats<T>* stats = nullptr) const {
    check_capacity(seq);
    PatchSequence<T> out = seq;
    Tensor<T> x = add(seq.tokens, slice_rows(pos_embedding_, 0, seq.size()));
    for (const auto& block : encoder_) {
      Tensor<T> y = layernorm(x, block.norm1.gain, block.norm1.shift);
      x = add(x, attention(block.attn, y, y, stats));
      y = layernorm(x, block.norm2.gain, block.norm2.shift);
      x = add(x, feed_forward(block.ffn, y));
    }
    out.tokens = x;
    return out;
  }

  /// Decoder blocks over the encoder output; the task embedding is added to
  /// every query of both attention sublayers.
  PatchSequence<T> decoder_forward(const PatchSequence<T>& encoded, TaskId task,
                                   ForwardStats<T>* stats = nullptr) const {
    check_capacity(encoded);
    const auto& embedding = lookup(task_embeddings_, config_.embedding_owner(task), "task embedding");
    const Tensor<T> task_rows = expand_rows(embedding, encoded.size());
    PatchSequence<T> out = encoded;
    Tensor<T> x = encoded.tokens;
    for (const auto& block : decoder_) {
      Tensor<T> y = layernorm(x, block.norm1.gain, block.norm1.shift);
      x = add(x, attention(block.self_attn, add(y, task_rows), y, stats));
      y = layernorm(x, block.norm2.gain, block.norm2.shift);
      x = add(x, attention(block.cross_attn, add(y, task_rows), encoded.tokens, stats));
      y = layernorm(x, block.norm3.gain, block.norm3.shift);
      x = add(x, feed_forward(block.ffn, y));
    }
    out.tokens = x;
    return out;
  }

  Tensor<T> tail_forward(const Tensor<T>& features, TaskId task) const {
    const auto& tail = lookup(tails_, config_.route(task), "tail");
    Tensor<T> x = features;
    if (tail.scale == 1) {
      for (std::size_t i = 0; i < tail.convs.size(); ++i) {
        x = conv2d(x, tail.convs[i].weight, tail.convs[i].bias);
        if (i + 1 < tail.convs.size()) x = relu(x);
      }
      return x;
    }
    x = conv2d(x, tail.convs[0].weight, tail.convs[0].bias);
    x = depth_to_space(x, tail.scale);
    return conv2d(x, tail.convs[1].weight, tail.convs[1].bias);
  }

  /// Every parameter, in a fixed order, with a dotted name.
  std::vector<Param> named_parameters() const {
    std::vector<Param> out;
    for (const auto& [task, head] : heads_) add_convs(out, "head." + std::string(task_name(task)), head.convs);
    out.emplace_back("pos_embedding", pos_embedding_);
    for (const auto& [task, emb] : task_embeddings_) {
      out.emplace_back("task_embedding." + std::string(task_name(task)), emb);
    }
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
      const std::string p = "encoder." + std::to_string(i) + ".";
      const auto& b = encoder_[i];
      add_norm(out, p + "norm1", b.norm1);
      add_attention(out, p + "attn", b.attn);
      add_norm(out, p + "norm2", b.norm2);
      add_ffn(out, p + "ffn", b.ffn);
    }
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
      const std::string p = "decoder." + std::to_string(i) + ".";
      const auto& b = decoder_[i];
      add_norm(out, p + "norm1", b.norm1);
      add_attention(out, p + "self_attn", b.self_attn);
      add_norm(out, p + "norm2", b.norm2);
      add_attention(out, p + "cross_attn", b.cross_attn);
      add_norm(out, p + "norm3", b.norm3);
      add_ffn(out, p + "ffn", b.ffn);
    }
    for (const auto& [task, tail] : tails_) add_convs(out, "tail." + std::string(task_name(task)), tail.convs);
    return out;
  }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  /// Parameters that a forward pass of any of `tasks` touches.
  std::vector<Param> parameters_for(const std::vector<TaskId>& tasks) const {
    std::vector<std::string> wanted_prefixes = {"pos_embedding", "encoder.", "decoder."};
    for (TaskId t : tasks) {
      const std::string route(task_name(config_.route(t)));
      wanted_prefixes.push_back("head." + route + ".");
      wanted_prefixes.push_back("tail." + route + ".");
      wanted_prefixes.push_back("task_embedding." + std::string(task_name(config_.embedding_owner(t))));
    }
    std::vector<Param> out;
    for (auto& p : named_parameters()) {
      for (const auto& prefix : wanted_prefixes) {
        if (p.first.rfind(prefix, 0) == 0) {
          out.push_back(p);
          break;
        }
      }
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto& [name, t] : named_parameters()) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : named_parameters()) t.zero_grad();
  }

  /// Copies values by name from another model with the same configuration.
  template <typename U>
  void copy_from(const IptModel<U>& other) {
    if (!(other.config() == config_)) throw ConfigError("copy_from: model configurations differ");
    const auto src = other.named_parameters();
    auto dst = named_parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      auto out = dst[i].second.mutable_data();
      const auto in = src[i].second.data();
      for (std::size_t k = 0; k < out.size(); ++k) out[k] = static_cast<T>(in[k]);
    }
  }

  /// Same weights at another precision (float64 shadow for gradient checks).
  template <typename U>
  IptModel<U> cast() const {
    IptModel<U> out(config_, 0);
    out.copy_from(*this);
    return out;
  }

  /// Debug model that reproduces its input: identity convolutions, zeroed
  /// attention/FFN output projections, zero embeddings.
  static IptModel identity(ModelConfig config) {
    IptModel model(std::move(config), 0);
    for (auto& [name, t] : model.named_parameters()) {
      auto d = t.mutable_data();
      const bool is_gain = name.find(".gain") != std::string::npos;
      std::fill(d.begin(), d.end(), is_gain ? T{1} : T{0});
    }
    auto set_identity = [](ConvLayer<T>& conv, std::size_t channels, T value) {
      const std::size_t in = conv.weight.extent(1), k = conv.weight.extent(2);
      auto w = conv.weight.mutable_data();
      for (std::size_t c = 0; c < channels; ++c) w[((c * in + c) * k + k / 2) * k + k / 2] = value;
    };
    const std::size_t channels = model.config_.channels;
    for (auto& [task, head] : model.heads_) {
      set_identity(head.convs[0], 3, T{1});
      set_identity(head.convs[1], channels, T{1});
      set_identity(head.convs[2], channels, T{1});
    }
    // The body residual doubles the features; the first tail conv halves them.
    for (auto& [task, tail] : model.tails_) {
      if (tail.scale == 1) {
        set_identity(tail.convs[0], channels, T{0.5});
        set_identity(tail.convs[1], channels, T{1});
        set_identity(tail.convs[2], 3, T{1});
      } else {
        const std::size_t s2 = tail.scale * tail.scale;
        auto& conv = tail.convs[0];
        const std::size_t k = conv.weight.extent(2);
        auto w = conv.weight.mutable_data();
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t j = 0; j < s2; ++j) {
            w[(((c * s2 + j) * channels + c) * k + k / 2) * k + k / 2] = T{0.5};
          }
        }
        set_identity(tail.convs[1], 3, T{1});
      }
    }
    return model;
  }

  /// Random transformer body with heads and tails near the identity map:
  /// their weights are the identity plus `jitter` times the random ones.
  static IptModel residual_init(ModelConfig config, std::uint64_t seed, T jitter = T{0.1}) {
    IptModel model(config, seed);
    const IptModel id = identity(std::move(config));
    auto dst = model.named_parameters();
    const auto src = id.named_parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const std::string& name = dst[i].first;
      if (name.rfind("head.", 0) != 0 && name.rfind("tail.", 0) != 0) continue;
      auto d = dst[i].second.mutable_data();
      const auto e = src[i].second.data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] = jitter * d[k] + e[k];
    }
    return model;
  }

 private:
  template <typename Map>
  static const auto& lookup(const Map& map, TaskId task, const char* what) {
    const auto it = map.find(task);
    if (it == map.end()) {
      throw ConfigError(std::string("no ") + what + " configured for task '" + std::string(task_name(task)) + "'");
    }
    return it->second;
  }

  void check_capacity(const PatchSequence<T>& seq) const {
    if (seq.size() > config_.max_tokens) {
      throw CapacityError("sequence of " + std::to_string(seq.size()) + " tokens exceeds the positional table (" +
                          std::to_string(config_.max_tokens) + " rows)");
    }
  }

  Tensor<T> attention(const AttentionParams<T>& p, const Tensor<T>& query_in, const Tensor<T>& kv_in,
                      ForwardStats<T>* stats) const {
    const std::size_t heads = config_.attn_heads;
    const std::size_t dim = config_.embed_dim() / heads;
    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dim)));
    const Tensor<T> q = linear(query_in, p.wq, p.bq);
    const Tensor<T> k = linear(kv_in, p.wk, p.bk);
    const Tensor<T> v = linear(kv_in, p.wv, p.bv);
    std::vector<Tensor<T>> outputs;
    outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const Tensor<T> qh = slice_cols(q, h * dim, dim);
      const Tensor<T> kh = slice_cols(k, h * dim, dim);
      const Tensor<T> vh = slice_cols(v, h * dim, dim);
      const Tensor<T> weights = softmax(scale(matmul_nt(qh, kh), inv_sqrt));
      if (stats) {
        stats->attention_entries += weights.numel();
        if (stats->keep_attention) stats->attention_maps.push_back(weights.detach());
      }
      outputs.push_back(matmul(weights, vh));
    }
    const Tensor<T> merged = heads == 1 ? outputs[0] : concat_cols(outputs);
    return linear(merged, p.wo, p.bo);
  }

  Tensor<T> feed_forward(const FeedForwardParams<T>& p, const Tensor<T>& x) const {
    return linear(gelu(linear(x, p.w1, p.b1)), p.w2, p.b2);
  }

  static ConvLayer<T> make_conv(std::size_t out, std::size_t in, std::size_t k) {
    return {Tensor<T>::zeros({out, in, k, k}, true), Tensor<T>::zeros({out}, true)};
  }
  static LayerNormParams<T> make_norm(std::size_t d) {
    return {Tensor<T>::full({d}, T{1}, true), Tensor<T>::zeros({d}, true)};
  }
  static AttentionParams<T> make_attention(std::size_t d) {
    auto w = [d] { return Tensor<T>::zeros({d, d}, true); };
    auto b = [d] { return Tensor<T>::zeros({d}, true); };
    return {w(), b(), w(), b(), w(), b(), w(), b()};
  }
  static FeedForwardParams<T> make_ffn(std::size_t d, std::size_t hidden) {
    return {Tensor<T>::zeros({d, hidden}, true), Tensor<T>::zeros({hidden}, true),
            Tensor<T>::zeros({hidden, d}, true), Tensor<T>::zeros({d}, true)};
  }

  void build() {
    const std::size_t c = config_.channels, e = config_.embed_dim();
    const std::size_t hidden = e * config_.ffn_multiplier;
    for (TaskId task : config_.tasks) {
      const TaskId owner = config_.route(task);
      if (!heads_.count(owner)) {
        heads_[owner] = Head<T>{{make_conv(c, 3, 3), make_conv(c, c, 3), make_conv(c, c, 3)}};
        Tail<T> tail;
        tail.scale = task_scale(owner);
        if (tail.scale == 1) {
          tail.convs = {make_conv(c, c, 3), make_conv(c, c, 3), make_conv(3, c, 3)};
        } else {
          tail.convs = {make_conv(c * tail.scale * tail.scale, c, 3), make_conv(3, c, 3)};
        }
        tails_[owner] = std::move(tail);
      }
      const TaskId emb = config_.embedding_owner(task);
      if (!task_embeddings_.count(emb)) task_embeddings_[emb] = Tensor<T>::zeros({e}, true);
    }
    pos_embedding_ = Tensor<T>::zeros({config_.max_tokens, e}, true);
    for (std::size_t i = 0; i < config_.encoder_layers; ++i) {
      encoder_.push_back({make_norm(e), make_attention(e), make_norm(e), make_ffn(e, hidden)});
    }
    for (std::size_t i = 0; i < config_.decoder_layers; ++i) {
      decoder_.push_back({make_norm(e), make_attention(e), make_norm(e), make_attention(e), make_norm(e),
                          make_ffn(e, hidden)});
    }
  }

  // Truncated normal (0.02) for linear maps and embeddings, fan-in scaled
  // normal for convolutions, zeros for biases, ones for norm gains.
  static void initialize(const std::string& name, Tensor<T>& t, Rng rng) {
    auto d = t.mutable_data();
    if (name.ends_with(".gain")) {
      std::fill(d.begin(), d.end(), T{1});
    } else if (t.rank() == 4) {
      const double fan_in = static_cast<double>(t.extent(1) * t.extent(2) * t.extent(3));
      const double stddev = std::sqrt(2.0 / fan_in);
      for (auto& v : d) v = static_cast<T>(rng.normal() * stddev);
    } else if (t.rank() == 2 || name.rfind("task_embedding", 0) == 0) {
      for (auto& v : d) v = static_cast<T>(rng.truncated_normal(0.02));
    } else {
      std::fill(d.begin(), d.end(), T{0});
    }
  }

  static void add_convs(std::vector<Param>& out, const std::string& prefix, const std::vector<ConvLayer<T>>& convs) {
    for (std::size_t i = 0; i < convs.size(); ++i) {
      out.emplace_back(prefix + ".conv" + std::to_string(i) + ".weight", convs[i].weight);
      out.emplace_back(prefix + ".conv" + std::to_string(i) + ".bias", convs[i].bias);
    }
  }
  static void add_norm(std::vector<Param>& out, const std::string& prefix, const LayerNormParams<T>& n) {
    out.emplace_back(prefix + ".gain", n.gain);
    out.emplace_back(prefix + ".shift", n.shift);
  }
  static void add_attention(std::vector<Param>& out, const std::string& prefix, const AttentionParams<T>& a) {
    out.emplace_back(prefix + ".wq", a.wq);
    out.emplace_back(prefix + ".bq", a.bq);
    out.emplace_back(prefix + ".wk", a.wk);
    out.emplace_back(prefix + ".bk", a.bk);
    out.emplace_back(prefix + ".wv", a.wv);
    out.emplace_back(prefix + ".bv", a.bv);
    out.emplace_back(prefix + ".wo", a.wo);
    out.emplace_back(prefix + ".bo", a.bo);
  }
  static void add_ffn(std::vector<Param>& out, const std::string& prefix, const FeedForwardParams<T>& f) {
    out.emplace_back(prefix + ".w1", f.w1);
    out.emplace_back(prefix + ".b1", f.b1);
    out.emplace_back(prefix + ".w2", f.w2);
    out.emplace_back(prefix + ".b2", f.b2);
  }

  ModelConfig config_;
  std::map<TaskId, Head<T>> heads_;
  std::map<TaskId, Tail<T>> tails_;
  std::map<TaskId, Tensor<T>> task_embeddings_;
  Tensor<T> pos_embedding_;
  std::vector<EncoderBlock<T>> encoder_;
  std::vector<DecoderBlock<T>> decoder_;
};

}  // namespace uwipt
