#include <doctest.h>

#include <cmath>

#include "mos/augment.hpp"
#include "mos/encoder.hpp"
#include "mos/synthetic.hpp"

using namespace mos;

namespace {

ViTConfig micro_vit() { return ViTConfig{8, 2, 16, 2, 2, 4.0, 0.0}; }

std::vector<Image> micro_batch(int n, std::uint64_t seed = 3) {
  Dataset ds = generate_synthetic(static_cast<std::size_t>(n), 3, 16, seed);
  std::vector<Image> out;
  for (auto &img : ds.images) out.push_back(resize_bilinear(img, 8, 8));
  return out;
}

} // namespace

TEST_CASE("patchify: token count, dimension and order") {
  Image img(32, 32, 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(y * 32 + x) + 0.1f * static_cast<float>(c);

  Tensor<float> tokens = patchify<float>(img, 2);
  REQUIRE(tokens.shape == std::vector<std::size_t>{256, 12});
  // Token 0 holds the 2x2 patch at the origin, channels interleaved.
  CHECK(tokens[0] == img.at(0, 0, 0));
  CHECK(tokens[1] == img.at(0, 0, 1));
  CHECK(tokens[3] == img.at(0, 1, 0));
  CHECK(tokens[6] == img.at(1, 0, 0));
  // Token 1 is the next patch to the right (row-major patch order).
  CHECK(tokens[12] == img.at(0, 2, 0));
}

TEST_CASE("patchify: constant image gives identical tokens") {
  Image img(8, 8, 3);
  for (float &v : img.pixels) v = 0.7f;
  Tensor<float> tokens = patchify<float>(img, 2);
  for (std::size_t t = 1; t < tokens.shape[0]; ++t)
    for (std::size_t d = 0; d < tokens.shape[1]; ++d) CHECK(tokens[t * 12 + d] == tokens[d]);
}

TEST_CASE("patchify: non-divisible patch is a shape error") {
  Image img(32, 32, 3);
  CHECK_THROWS_AS(patchify<float>(img, 5), ShapeError);
}

TEST_CASE("encode: permuting the batch permutes outputs identically") {
  const ViTConfig cfg = micro_vit();
  ViTParams<float> params = ViTParams<float>::init(cfg, Rng(1));
  std::vector<Image> batch = micro_batch(4);
  Tensor<float> out = encode<float>(batch, params, cfg);

  std::vector<Image> permuted = {batch[2], batch[0], batch[3], batch[1]};
  Tensor<float> out_p = encode<float>(permuted, params, cfg);
  const int perm[] = {2, 0, 3, 1};
  for (int i = 0; i < 4; ++i)
    for (int d = 0; d < cfg.embed_dim; ++d) CHECK(out_p[i * cfg.embed_dim + d] == out[perm[i] * cfg.embed_dim + d]);
}

TEST_CASE("encode: bit-identical across runs") {
  const ViTConfig cfg = micro_vit();
  ViTParams<float> params = ViTParams<float>::init(cfg, Rng(2));
  std::vector<Image> batch = micro_batch(3);
  Tensor<float> a = encode<float>(batch, params, cfg);
  Tensor<float> b = encode<float>(batch, params, cfg);
  CHECK(a.data == b.data);
}

TEST_CASE("encode: zeroed residual branches make the last block an identity") {
  ViTConfig deep = micro_vit(); // depth 2
  ViTConfig shallow = deep;
  shallow.depth = 1;

  ViTParams<float> params = ViTParams<float>::init(deep, Rng(4));
  // Zero the second block's branch outputs: attention out-projection and MLP fc2.
  params.blocks[1].attn_out_w.zero();
  params.blocks[1].attn_out_b.zero();
  params.blocks[1].mlp_fc2_w.zero();
  params.blocks[1].mlp_fc2_b.zero();

  ViTParams<float> truncated = ViTParams<float>::init(shallow, Rng(4));
  truncated.patch_weight = params.patch_weight;
  truncated.patch_bias = params.patch_bias;
  truncated.cls_token = params.cls_token;
  truncated.pos_embed = params.pos_embed;
  truncated.blocks[0] = params.blocks[0];
  truncated.final_g = params.final_g;
  truncated.final_b = params.final_b;

  std::vector<Image> batch = micro_batch(2);
  Tensor<float> a = encode<float>(batch, params, deep);
  Tensor<float> b = encode<float>(batch, truncated, shallow);
  CHECK(a.data == b.data);
}

TEST_CASE("encode: non-finite activations are reported with the block") {
  const ViTConfig cfg = micro_vit();
  ViTParams<float> params = ViTParams<float>::init(cfg, Rng(5));
  params.blocks[1].mlp_fc2_w[0] = std::numeric_limits<float>::quiet_NaN();
  std::vector<Image> batch = micro_batch(2);
  CHECK_THROWS_WITH_AS(encode<float>(batch, params, cfg), doctest::Contains("block 1"), NumericError);
}

TEST_CASE("heads: zero input with zero bias maps to zero") {
  HeadConfig cfg{16, 32, 8, 3, NormKind::Layer, false};
  HeadParams<double> params = HeadParams<double>::init(cfg, Rng(6));
  Tensor<double> zero({4, 16});
  Tensor<double> out = head_forward<double>(params, zero);
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("heads: output dimension matches the configuration for any batch") {
  HeadConfig cfg{16, 32, 8, 2, NormKind::Layer, false};
  HeadParams<double> params = HeadParams<double>::init(cfg, Rng(7));
  for (std::size_t rows : {1u, 5u, 17u}) {
    Tensor<double> x({rows, 16});
    Rng rng(rows);
    for (auto &v : x.data) v = rng.normal();
    Tensor<double> out = head_forward<double>(params, x);
    CHECK(out.shape == std::vector<std::size_t>{rows, 8});
  }
}

TEST_CASE("heads: analytic gradients match finite differences") {
  auto check_norm = [](NormKind norm) {
    HeadConfig proj_cfg{6, 10, 4, 3, norm, false};
    HeadConfig pred_cfg{4, 10, 4, 2, norm, false};
    HeadParams<double> proj = HeadParams<double>::init(proj_cfg, Rng(8));
    HeadParams<double> pred = HeadParams<double>::init(pred_cfg, Rng(9));

    Tensor<double> x({5, 6});
    Tensor<double> probe({5, 4});
    Rng rng(10);
    for (auto &v : x.data) v = rng.normal();
    for (auto &v : probe.data) v = rng.normal();

    auto value = [&]() {
      Tensor<double> out = head_forward<double>(pred, head_forward<double>(proj, x));
      double acc = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) acc += probe[i] * out[i];
      return acc;
    };

    // Analytic.
    HeadParams<double> g_proj = HeadParams<double>::zeros(proj_cfg);
    HeadParams<double> g_pred = HeadParams<double>::zeros(pred_cfg);
    HeadCache<double> c_proj, c_pred;
    Tensor<double> mid = head_forward<double>(proj, x, &c_proj);
    head_forward<double>(pred, mid, &c_pred);
    Tensor<double> d_mid = head_backward<double>(pred, c_pred, probe, g_pred);
    head_backward<double>(proj, c_proj, d_mid, g_proj);

    std::vector<ParamRef<double>> params, grads;
    proj.collect("proj", params);
    pred.collect("pred", params);
    g_proj.collect("proj", grads);
    g_pred.collect("pred", grads);

    const double h = 1e-5;
    double max_rel = 0.0;
    for (std::size_t t = 0; t < params.size(); ++t) {
      Tensor<double> &p = *params[t].tensor;
      for (std::size_t e = 0; e < p.size(); ++e) {
        const double saved = p[e];
        p[e] = saved + h;
        const double up = value();
        p[e] = saved - h;
        const double down = value();
        p[e] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double an = (*grads[t].tensor)[e];
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
        max_rel = std::max(max_rel, rel);
      }
    }
    CHECK(max_rel < 1e-4);
  };
  check_norm(NormKind::Layer);
  check_norm(NormKind::Batch);
}

TEST_CASE("ema: endpoints and a scalar case") {
  const ViTConfig cfg = micro_vit();
  EncoderState<float> state =
      EncoderState<float>::init(cfg, HeadConfig{16, 16, 8, 3}, HeadConfig{8, 16, 8, 2}, Rng(11));

  std::vector<ParamRef<float>> theta_refs;
  state.theta.collect("base", theta_refs);

  // mu = 1 leaves xi untouched.
  ViTParams<float> xi_before = state.xi;
  state.xi.cls_token[0] = 1.0f;
  ema_update<float>(state.momentum(), theta_refs, 1.0);
  CHECK(state.xi.cls_token[0] == 1.0f);

  // mu = 0 snaps xi to theta exactly.
  ema_update<float>(state.momentum(), theta_refs, 0.0);
  std::vector<ParamRef<float>> xi_refs = state.momentum();
  for (std::size_t i = 0; i < xi_refs.size(); ++i) CHECK(xi_refs[i].tensor->data == theta_refs[i].tensor->data);

  // Scalar case: xi = 1, theta = 0, mu = 0.99 -> 0.99.
  state.theta.cls_token[0] = 0.0f;
  state.xi.cls_token[0] = 1.0f;
  ema_update<float>(state.momentum(), theta_refs, 0.99);
  CHECK(state.xi.cls_token[0] == doctest::Approx(0.99f));
  (void)xi_before;
}

TEST_CASE("ema: geometric convergence toward a constant theta") {
  // Gap scales by mu^k after k steps (double precision, tolerance 1e-9).
  Tensor<double> xi_t({1}), theta_t({1});
  xi_t[0] = 1.0;
  theta_t[0] = 0.0;
  std::vector<ParamRef<double>> xi = {{"x", &xi_t, false}};
  std::vector<ParamRef<double>> theta = {{"t", &theta_t, false}};
  const double mu = 0.9;
  for (int k = 0; k < 20; ++k) ema_update<double>(xi, theta, mu);
  CHECK(std::abs(xi_t[0] - std::pow(mu, 20)) < 1e-9);
}

TEST_CASE("forward_all: shapes, stop-gradient isolation, identity-predictor path equality") {
  const ViTConfig cfg = micro_vit();
  HeadConfig proj_cfg{16, 16, 8, 3, NormKind::Layer, false};
  HeadConfig pred_identity{8, 16, 8, 2, NormKind::Layer, true};
  EncoderState<double> state = EncoderState<double>::init(cfg, proj_cfg, pred_identity, Rng(12));

  std::vector<Image> a = micro_batch(4, 21), b = micro_batch(4, 22), c = micro_batch(4, 23),
                     d = micro_batch(4, 24);
  EmbeddingBundle<double> bundle = forward_all<double>(state, a, b, c, d);
  for (const Tensor<double> *t : {&bundle.p_mul1, &bundle.p3, &bundle.z_mul2, &bundle.z3, &bundle.z4})
    CHECK(t->shape == std::vector<std::size_t>{4, 8});

  // xi == theta and identity predictor: the base path on x3 equals the
  // momentum path on x3.
  for (std::size_t i = 0; i < bundle.p3.size(); ++i) CHECK(bundle.p3[i] == doctest::Approx(bundle.z3[i]).epsilon(1e-12));

  // Perturbing momentum parameters must not touch the differentiated path.
  state.xi.blocks[0].qkv_w[0] += 0.5;
  EmbeddingBundle<double> bundle2 = forward_all<double>(state, a, b, c, d);
  CHECK(bundle2.p_mul1.data == bundle.p_mul1.data);
  CHECK(bundle2.p3.data == bundle.p3.data);
  CHECK(bundle2.z3.data != bundle.z3.data);
}
