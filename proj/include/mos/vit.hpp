#pragma once

#include <string>
#include <vector>

#include "mos/image.hpp"
#include "mos/nn_ops.hpp"
#include "mos/rng.hpp"
#include "mos/tensor.hpp"

namespace mos {

/**
 * Pre-norm Vision Transformer: learnable CLS token and positional
 * embeddings, depth x (LN -> multi-head self-attention -> residual,
 * LN -> MLP with GELU -> residual), final LN before CLS readout.
 */
struct ViTConfig {
  int image_size = 32;
  int patch_size = 2;
  int embed_dim = 64;
  int depth = 4;
  int heads = 4;
  double mlp_ratio = 4.0;
  /// Stochastic residual-branch drop rate (DropConnect). Off by default;
  /// forced off in deterministic mode.
  double drop_path = 0.0;

  int patch_dim() const { return patch_size * patch_size * 3; }
  int grid() const { return image_size / patch_size; }
  int tokens() const { return grid() * grid(); }
  int seq_len() const { return tokens() + 1; }
  int head_dim() const { return embed_dim / heads; }
  int mlp_hidden() const { return static_cast<int>(embed_dim * mlp_ratio); }

  void validate() const {
    if (image_size < 1 || patch_size < 1) throw ConfigError("vit: sizes must be positive");
    if (image_size % patch_size != 0) throw ShapeError("vit: image_size must be divisible by patch_size");
    if (embed_dim < 1 || depth < 1 || heads < 1) throw ConfigError("vit: embed_dim, depth, heads must be positive");
    if (embed_dim % heads != 0) throw ConfigError("vit: embed_dim must be divisible by heads");
    if (mlp_hidden() < 1) throw ConfigError("vit: mlp_ratio too small");
    if (drop_path < 0.0 || drop_path >= 1.0) throw ConfigError("vit: drop_path must lie in [0,1)");
  }
};

template <typename T>
struct ViTBlockParams {
  Tensor<T> ln1_g, ln1_b;
  Tensor<T> qkv_w, qkv_b;
  Tensor<T> attn_out_w, attn_out_b;
  Tensor<T> ln2_g, ln2_b;
  Tensor<T> mlp_fc1_w, mlp_fc1_b;
  Tensor<T> mlp_fc2_w, mlp_fc2_b;
};

template <typename T>
struct ViTParams {
  Tensor<T> patch_weight, patch_bias; // [patch_dim, D], [D]
  Tensor<T> cls_token;                // [D]
  Tensor<T> pos_embed;                // [S, D]
  std::vector<ViTBlockParams<T>> blocks;
  Tensor<T> final_g, final_b;

  /// Truncated-normal(0.02) weights, zero biases, unit norm scales.
  static ViTParams init(const ViTConfig &cfg, Rng rng) {
    cfg.validate();
    ViTParams p = zeros(cfg);
    auto trunc_fill = [&rng](Tensor<T> &t) {
      for (auto &v : t.data) v = static_cast<T>(rng.truncated_normal(0.02));
    };
    trunc_fill(p.patch_weight);
    trunc_fill(p.cls_token);
    trunc_fill(p.pos_embed);
    for (auto &blk : p.blocks) {
      blk.ln1_g.fill(T(1));
      blk.ln2_g.fill(T(1));
      trunc_fill(blk.qkv_w);
      trunc_fill(blk.attn_out_w);
      trunc_fill(blk.mlp_fc1_w);
      trunc_fill(blk.mlp_fc2_w);
    }
    p.final_g.fill(T(1));
    return p;
  }

  /// Same shapes, all zeros (gradient buffers).
  static ViTParams zeros(const ViTConfig &cfg) {
    const auto d = static_cast<std::size_t>(cfg.embed_dim);
    const auto md = static_cast<std::size_t>(cfg.mlp_hidden());
    ViTParams p;
    p.patch_weight = Tensor<T>({static_cast<std::size_t>(cfg.patch_dim()), d});
    p.patch_bias = Tensor<T>({d});
    p.cls_token = Tensor<T>({d});
    p.pos_embed = Tensor<T>({static_cast<std::size_t>(cfg.seq_len()), d});
    p.blocks.resize(cfg.depth);
    for (auto &blk : p.blocks) {
      blk.ln1_g = Tensor<T>({d});
      blk.ln1_b = Tensor<T>({d});
      blk.qkv_w = Tensor<T>({d, 3 * d});
      blk.qkv_b = Tensor<T>({3 * d});
      blk.attn_out_w = Tensor<T>({d, d});
      blk.attn_out_b = Tensor<T>({d});
      blk.ln2_g = Tensor<T>({d});
      blk.ln2_b = Tensor<T>({d});
      blk.mlp_fc1_w = Tensor<T>({d, md});
      blk.mlp_fc1_b = Tensor<T>({md});
      blk.mlp_fc2_w = Tensor<T>({md, d});
      blk.mlp_fc2_b = Tensor<T>({d});
    }
    p.final_g = Tensor<T>({d});
    p.final_b = Tensor<T>({d});
    return p;
  }

  void collect(const std::string &prefix, std::vector<ParamRef<T>> &out) {
    out.push_back({prefix + ".patch.weight", &patch_weight, true});
    out.push_back({prefix + ".patch.bias", &patch_bias, false});
    out.push_back({prefix + ".cls", &cls_token, false});
    out.push_back({prefix + ".pos", &pos_embed, false});
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string b = prefix + ".block" + std::to_string(i);
      auto &blk = blocks[i];
      out.push_back({b + ".ln1.g", &blk.ln1_g, false});
      out.push_back({b + ".ln1.b", &blk.ln1_b, false});
      out.push_back({b + ".qkv.weight", &blk.qkv_w, true});
      out.push_back({b + ".qkv.bias", &blk.qkv_b, false});
      out.push_back({b + ".attn_out.weight", &blk.attn_out_w, true});
      out.push_back({b + ".attn_out.bias", &blk.attn_out_b, false});
      out.push_back({b + ".ln2.g", &blk.ln2_g, false});
      out.push_back({b + ".ln2.b", &blk.ln2_b, false});
      out.push_back({b + ".mlp_fc1.weight", &blk.mlp_fc1_w, true});
      out.push_back({b + ".mlp_fc1.bias", &blk.mlp_fc1_b, false});
      out.push_back({b + ".mlp_fc2.weight", &blk.mlp_fc2_w, true});
      out.push_back({b + ".mlp_fc2.bias", &blk.mlp_fc2_b, false});
    }
    out.push_back({prefix + ".final_norm.g", &final_g, false});
    out.push_back({prefix + ".final_norm.b", &final_b, false});
  }
};

/// Patch tokenization of one image: (side/patch)^2 tokens of dimension
/// patch^2 * channels, row-major patch order, pixels row-major with
/// interleaved channels inside each token.
template <typename T>
Tensor<T> patchify(const Image &img, int patch) {
  if (patch < 1) throw ShapeError("patchify: patch must be positive");
  if (img.height != img.width || img.height % patch != 0)
    throw ShapeError("patchify: image side must be a square multiple of patch");
  const int grid = img.height / patch;
  const int dim = patch * patch * img.channels;
  Tensor<T> tokens({static_cast<std::size_t>(grid) * grid, static_cast<std::size_t>(dim)});
  for (int py = 0; py < grid; ++py) {
    for (int px = 0; px < grid; ++px) {
      T *row = tokens.ptr() + (static_cast<std::size_t>(py) * grid + px) * dim;
      std::size_t idx = 0;
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx)
          for (int c = 0; c < img.channels; ++c) row[idx++] = static_cast<T>(img.at(py * patch + dy, px * patch + dx, c));
    }
  }
  return tokens;
}

template <typename T>
struct ViTBlockCache {
  Tensor<T> x_in;                 // [B*S, D]
  Tensor<T> ln1_out, ln1_mean, ln1_rstd;
  Tensor<T> qkv;                  // [B*S, 3D]
  Tensor<T> attn;                 // [B, H, S, S]
  Tensor<T> ctx;                  // [B*S, D]
  Tensor<T> res1;                 // [B*S, D]
  Tensor<T> ln2_out, ln2_mean, ln2_rstd;
  Tensor<T> mlp_pre, mlp_act;     // [B*S, MD]
  std::vector<T> keep_attn, keep_mlp; // per-sample drop-path multipliers
};

template <typename T>
struct ViTCache {
  std::size_t batch = 0;
  Tensor<T> patch_tokens; // [B*T, patch_dim]
  std::vector<ViTBlockCache<T>> blocks;
  Tensor<T> final_in;                       // [B, D] CLS rows entering final norm
  Tensor<T> final_mean, final_rstd;         // [B]
};

namespace detail {

template <typename T>
void attention_forward(const ViTConfig &cfg, std::size_t batch, const Tensor<T> &qkv, Tensor<T> &attn, Tensor<T> &ctx) {
  const std::size_t s = cfg.seq_len();
  const std::size_t d = cfg.embed_dim;
  const std::size_t h = cfg.heads;
  const std::size_t hd = cfg.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  parallel_for(batch * h, [&](std::size_t bh) {
    const std::size_t b = bh / h;
    const std::size_t head = bh % h;
    const T *qkv_base = qkv.ptr() + b * s * 3 * d;
    T *attn_base = attn.ptr() + (b * h + head) * s * s;
    for (std::size_t s1 = 0; s1 < s; ++s1) {
      const T *q = qkv_base + s1 * 3 * d + head * hd;
      T *row = attn_base + s1 * s;
      for (std::size_t s2 = 0; s2 < s; ++s2) {
        const T *k = qkv_base + s2 * 3 * d + d + head * hd;
        T acc = T(0);
        for (std::size_t e = 0; e < hd; ++e) acc += q[e] * k[e];
        row[s2] = acc * scale;
      }
      nn::softmax_row(row, s);
      T *out = ctx.ptr() + (b * s + s1) * d + head * hd;
      for (std::size_t e = 0; e < hd; ++e) out[e] = T(0);
      for (std::size_t s2 = 0; s2 < s; ++s2) {
        const T a = row[s2];
        const T *v = qkv_base + s2 * 3 * d + 2 * d + head * hd;
        for (std::size_t e = 0; e < hd; ++e) out[e] += a * v[e];
      }
    }
  });
}

template <typename T>
void attention_backward(const ViTConfig &cfg, std::size_t batch, const Tensor<T> &qkv, const Tensor<T> &attn,
                        const Tensor<T> &d_ctx, Tensor<T> &d_qkv) {
  const std::size_t s = cfg.seq_len();
  const std::size_t d = cfg.embed_dim;
  const std::size_t h = cfg.heads;
  const std::size_t hd = cfg.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  parallel_for(batch * h, [&](std::size_t bh) {
    const std::size_t b = bh / h;
    const std::size_t head = bh % h;
    const T *qkv_base = qkv.ptr() + b * s * 3 * d;
    T *d_base = d_qkv.ptr() + b * s * 3 * d;
    const T *attn_base = attn.ptr() + (b * h + head) * s * s;
    std::vector<T> d_scores(s);
    for (std::size_t s1 = 0; s1 < s; ++s1) {
      const T *dc = d_ctx.ptr() + (b * s + s1) * d + head * hd;
      const T *a_row = attn_base + s1 * s;
      // dA then softmax backward gives d(scores).
      T dot = T(0);
      for (std::size_t s2 = 0; s2 < s; ++s2) {
        const T *v = qkv_base + s2 * 3 * d + 2 * d + head * hd;
        T da = T(0);
        for (std::size_t e = 0; e < hd; ++e) da += dc[e] * v[e];
        d_scores[s2] = da;
        dot += da * a_row[s2];
      }
      for (std::size_t s2 = 0; s2 < s; ++s2) d_scores[s2] = (d_scores[s2] - dot) * a_row[s2];

      // dV += A^T dctx, dQ += dS k scale, dK += dS q scale.
      const T *q = qkv_base + s1 * 3 * d + head * hd;
      T *dq = d_base + s1 * 3 * d + head * hd;
      for (std::size_t s2 = 0; s2 < s; ++s2) {
        const T ds = d_scores[s2] * scale;
        const T a = a_row[s2];
        const T *k = qkv_base + s2 * 3 * d + d + head * hd;
        T *dk = d_base + s2 * 3 * d + d + head * hd;
        T *dv = d_base + s2 * 3 * d + 2 * d + head * hd;
        for (std::size_t e = 0; e < hd; ++e) {
          dq[e] += ds * k[e];
          dk[e] += ds * q[e];
          dv[e] += a * dc[e];
        }
      }
    }
  });
}

} // namespace detail

/**
 * Forward pass over a batch of images. Returns CLS embeddings [B, D].
 * With a cache, every intermediate needed by vit_backward is retained.
 * drop_rng enables stochastic residual drop when cfg.drop_path > 0.
 * Throws NumericError naming the first block producing non-finite values.
 */
template <typename T>
Tensor<T> vit_forward(const ViTParams<T> &params, const ViTConfig &cfg, const std::vector<Image> &batch,
                      ViTCache<T> *cache = nullptr, Rng *drop_rng = nullptr) {
  cfg.validate();
  const std::size_t b_count = batch.size();
  if (b_count == 0) throw ShapeError("vit: empty batch");
  for (const Image &img : batch)
    if (img.height != cfg.image_size || img.width != cfg.image_size)
      throw ShapeError("vit: image does not match configured image_size");

  const std::size_t s = cfg.seq_len();
  const std::size_t d = cfg.embed_dim;
  const std::size_t tokens = cfg.tokens();
  const std::size_t pd = cfg.patch_dim();

  Tensor<T> patch_tokens({b_count * tokens, pd});
  parallel_for(b_count, [&](std::size_t b) {
    Tensor<T> one = patchify<T>(batch[b], cfg.patch_size);
    std::copy(one.data.begin(), one.data.end(), patch_tokens.data.begin() + b * tokens * pd);
  });

  Tensor<T> proj({b_count * tokens, d});
  nn::linear_forward(patch_tokens.ptr(), params.patch_weight.ptr(), params.patch_bias.ptr(), proj.ptr(),
                     b_count * tokens, pd, d);

  Tensor<T> x({b_count * s, d});
  parallel_for(b_count, [&](std::size_t b) {
    T *base = x.ptr() + b * s * d;
    for (std::size_t e = 0; e < d; ++e) base[e] = params.cls_token[e] + params.pos_embed[e];
    for (std::size_t tok = 0; tok < tokens; ++tok) {
      const T *src = proj.ptr() + (b * tokens + tok) * d;
      T *dst = base + (tok + 1) * d;
      const T *pos = params.pos_embed.ptr() + (tok + 1) * d;
      for (std::size_t e = 0; e < d; ++e) dst[e] = src[e] + pos[e];
    }
  });

  if (cache) {
    cache->batch = b_count;
    cache->patch_tokens = std::move(patch_tokens);
    cache->blocks.resize(cfg.depth);
  }

  const std::size_t rows = b_count * s;
  const std::size_t md = cfg.mlp_hidden();
  Tensor<T> ln_out({rows, d}), ln_mean({rows}), ln_rstd({rows});
  Tensor<T> qkv({rows, 3 * d});
  Tensor<T> attn({b_count * static_cast<std::size_t>(cfg.heads), s * s});
  Tensor<T> ctx({rows, d});
  Tensor<T> branch({rows, d});
  Tensor<T> mlp_pre({rows, md}), mlp_act({rows, md});

  for (int blk_idx = 0; blk_idx < cfg.depth; ++blk_idx) {
    const auto &blk = params.blocks[blk_idx];
    ViTBlockCache<T> *bc = cache ? &cache->blocks[blk_idx] : nullptr;
    if (bc) bc->x_in = x;

    std::vector<T> keep_attn(b_count, T(1)), keep_mlp(b_count, T(1));
    if (cfg.drop_path > 0.0 && drop_rng) {
      const T inv_keep = T(1) / static_cast<T>(1.0 - cfg.drop_path);
      for (std::size_t b = 0; b < b_count; ++b) {
        keep_attn[b] = drop_rng->bernoulli(cfg.drop_path) ? T(0) : inv_keep;
        keep_mlp[b] = drop_rng->bernoulli(cfg.drop_path) ? T(0) : inv_keep;
      }
    }

    // Attention branch.
    nn::layernorm_forward(x.ptr(), blk.ln1_g.ptr(), blk.ln1_b.ptr(), ln_out.ptr(), ln_mean.ptr(), ln_rstd.ptr(),
                          rows, d);
    nn::linear_forward(ln_out.ptr(), blk.qkv_w.ptr(), blk.qkv_b.ptr(), qkv.ptr(), rows, d, 3 * d);
    detail::attention_forward(cfg, b_count, qkv, attn, ctx);
    nn::linear_forward(ctx.ptr(), blk.attn_out_w.ptr(), blk.attn_out_b.ptr(), branch.ptr(), rows, d, d);
    if (bc) {
      bc->ln1_out = ln_out;
      bc->ln1_mean = ln_mean;
      bc->ln1_rstd = ln_rstd;
      bc->qkv = qkv;
      bc->attn = attn;
      bc->ctx = ctx;
      bc->keep_attn = keep_attn;
      bc->keep_mlp = keep_mlp;
    }
    parallel_for(b_count, [&](std::size_t b) {
      const T keep = keep_attn[b];
      T *xr = x.ptr() + b * s * d;
      const T *br = branch.ptr() + b * s * d;
      for (std::size_t e = 0; e < s * d; ++e) xr[e] += keep * br[e];
    });
    if (bc) bc->res1 = x;

    // MLP branch.
    nn::layernorm_forward(x.ptr(), blk.ln2_g.ptr(), blk.ln2_b.ptr(), ln_out.ptr(), ln_mean.ptr(), ln_rstd.ptr(),
                          rows, d);
    nn::linear_forward(ln_out.ptr(), blk.mlp_fc1_w.ptr(), blk.mlp_fc1_b.ptr(), mlp_pre.ptr(), rows, d, md);
    nn::gelu_forward(mlp_pre.ptr(), mlp_act.ptr(), rows * md);
    nn::linear_forward(mlp_act.ptr(), blk.mlp_fc2_w.ptr(), blk.mlp_fc2_b.ptr(), branch.ptr(), rows, md, d);
    if (bc) {
      bc->ln2_out = ln_out;
      bc->ln2_mean = ln_mean;
      bc->ln2_rstd = ln_rstd;
      bc->mlp_pre = mlp_pre;
      bc->mlp_act = mlp_act;
    }
    parallel_for(b_count, [&](std::size_t b) {
      const T keep = keep_mlp[b];
      T *xr = x.ptr() + b * s * d;
      const T *br = branch.ptr() + b * s * d;
      for (std::size_t e = 0; e < s * d; ++e) xr[e] += keep * br[e];
    });

    if (!nn::all_finite(x.ptr(), rows * d))
      throw NumericError("vit: non-finite activation after block " + std::to_string(blk_idx));
  }

  // Final layer norm on the CLS rows only; other rows never reach the output.
  Tensor<T> cls_rows({b_count, d});
  for (std::size_t b = 0; b < b_count; ++b)
    std::copy(x.data.begin() + b * s * d, x.data.begin() + b * s * d + d, cls_rows.data.begin() + b * d);

  Tensor<T> out({b_count, d});
  Tensor<T> f_mean({b_count}), f_rstd({b_count});
  nn::layernorm_forward(cls_rows.ptr(), params.final_g.ptr(), params.final_b.ptr(), out.ptr(), f_mean.ptr(),
                        f_rstd.ptr(), b_count, d);
  if (cache) {
    cache->final_in = std::move(cls_rows);
    cache->final_mean = std::move(f_mean);
    cache->final_rstd = std::move(f_rstd);
  }
  return out;
}

/// Deterministic CLS embedding of a batch under the given parameters.
template <typename T>
Tensor<T> encode(const std::vector<Image> &batch, const ViTParams<T> &params, const ViTConfig &cfg) {
  return vit_forward<T>(params, cfg, batch);
}

/**
 * Backward pass from CLS-embedding gradients [B, D]. Accumulates parameter
 * gradients into `grads` (same structure as the parameters).
 */
template <typename T>
void vit_backward(const ViTParams<T> &params, const ViTConfig &cfg, const ViTCache<T> &cache,
                  const Tensor<T> &d_cls, ViTParams<T> &grads) {
  const std::size_t b_count = cache.batch;
  const std::size_t s = cfg.seq_len();
  const std::size_t d = cfg.embed_dim;
  const std::size_t tokens = cfg.tokens();
  const std::size_t pd = cfg.patch_dim();
  const std::size_t md = cfg.mlp_hidden();
  const std::size_t rows = b_count * s;

  // Final norm backward (CLS rows only).
  Tensor<T> d_cls_in({b_count, d});
  nn::layernorm_backward(cache.final_in.ptr(), params.final_g.ptr(), cache.final_mean.ptr(), cache.final_rstd.ptr(),
                         d_cls.ptr(), d_cls_in.ptr(), grads.final_g.ptr(), grads.final_b.ptr(), b_count, d);

  Tensor<T> dx({rows, d});
  for (std::size_t b = 0; b < b_count; ++b)
    std::copy(d_cls_in.data.begin() + b * d, d_cls_in.data.begin() + (b + 1) * d, dx.data.begin() + b * s * d);

  Tensor<T> d_branch({rows, d});
  Tensor<T> d_mlp_act({rows, md});
  Tensor<T> d_ln_out({rows, d});
  Tensor<T> d_ctx({rows, d});
  Tensor<T> d_qkv({rows, 3 * d});
  Tensor<T> d_tmp({rows, d});

  for (int blk_idx = cfg.depth - 1; blk_idx >= 0; --blk_idx) {
    const auto &blk = params.blocks[blk_idx];
    auto &gblk = grads.blocks[blk_idx];
    const ViTBlockCache<T> &bc = cache.blocks[blk_idx];

    // MLP branch backward: res2 = res1 + keep*fc2(gelu(fc1(ln2(res1)))).
    parallel_for(b_count, [&](std::size_t b) {
      const T keep = bc.keep_mlp[b];
      const T *src = dx.ptr() + b * s * d;
      T *dst = d_branch.ptr() + b * s * d;
      for (std::size_t e = 0; e < s * d; ++e) dst[e] = keep * src[e];
    });
    nn::linear_backward(bc.mlp_act.ptr(), blk.mlp_fc2_w.ptr(), d_branch.ptr(), d_mlp_act.ptr(), gblk.mlp_fc2_w.ptr(),
                        gblk.mlp_fc2_b.ptr(), rows, md, d);
    nn::gelu_backward(bc.mlp_pre.ptr(), d_mlp_act.ptr(), d_mlp_act.ptr(), rows * md);
    nn::linear_backward(bc.ln2_out.ptr(), blk.mlp_fc1_w.ptr(), d_mlp_act.ptr(), d_ln_out.ptr(), gblk.mlp_fc1_w.ptr(),
                        gblk.mlp_fc1_b.ptr(), rows, d, md);
    nn::layernorm_backward(bc.res1.ptr(), blk.ln2_g.ptr(), bc.ln2_mean.ptr(), bc.ln2_rstd.ptr(), d_ln_out.ptr(),
                           d_tmp.ptr(), gblk.ln2_g.ptr(), gblk.ln2_b.ptr(), rows, d);
    for (std::size_t e = 0; e < rows * d; ++e) dx[e] += d_tmp[e];

    // Attention branch backward: res1 = x_in + keep*proj(attn(ln1(x_in))).
    parallel_for(b_count, [&](std::size_t b) {
      const T keep = bc.keep_attn[b];
      const T *src = dx.ptr() + b * s * d;
      T *dst = d_branch.ptr() + b * s * d;
      for (std::size_t e = 0; e < s * d; ++e) dst[e] = keep * src[e];
    });
    nn::linear_backward(bc.ctx.ptr(), blk.attn_out_w.ptr(), d_branch.ptr(), d_ctx.ptr(), gblk.attn_out_w.ptr(),
                        gblk.attn_out_b.ptr(), rows, d, d);
    d_qkv.zero();
    detail::attention_backward(cfg, b_count, bc.qkv, bc.attn, d_ctx, d_qkv);
    nn::linear_backward(bc.ln1_out.ptr(), blk.qkv_w.ptr(), d_qkv.ptr(), d_ln_out.ptr(), gblk.qkv_w.ptr(),
                        gblk.qkv_b.ptr(), rows, d, 3 * d);
    nn::layernorm_backward(bc.x_in.ptr(), blk.ln1_g.ptr(), bc.ln1_mean.ptr(), bc.ln1_rstd.ptr(), d_ln_out.ptr(),
                           d_tmp.ptr(), gblk.ln1_g.ptr(), gblk.ln1_b.ptr(), rows, d);
    for (std::size_t e = 0; e < rows * d; ++e) dx[e] += d_tmp[e];
  }

  // Embedding backward.
  Tensor<T> d_proj({b_count * tokens, d});
  for (std::size_t b = 0; b < b_count; ++b) {
    const T *base = dx.ptr() + b * s * d;
    for (std::size_t e = 0; e < d; ++e) {
      grads.cls_token[e] += base[e];
      grads.pos_embed[e] += base[e];
    }
    for (std::size_t tok = 0; tok < tokens; ++tok) {
      const T *src = base + (tok + 1) * d;
      T *pos_g = grads.pos_embed.ptr() + (tok + 1) * d;
      T *dst = d_proj.ptr() + (b * tokens + tok) * d;
      for (std::size_t e = 0; e < d; ++e) {
        pos_g[e] += src[e];
        dst[e] = src[e];
      }
    }
  }
  nn::linear_backward(cache.patch_tokens.ptr(), params.patch_weight.ptr(), d_proj.ptr(), static_cast<T *>(nullptr),
                      grads.patch_weight.ptr(), grads.patch_bias.ptr(), b_count * tokens, pd, d);
}

} // namespace mos
