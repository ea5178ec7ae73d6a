#include <cmath>
#include <vector>

#include "doctest.h"
#include "recon/critic.hpp"
#include "recon/errors.hpp"
#include "recon/nn/ops.hpp"
#include "recon/rng.hpp"
#include "test_support.hpp"

using namespace recon;
using namespace recon::gan;

namespace {

// Random nonnegative magnitude planes, [n, 1, h, w].
nn::Tensor rand_mag(int n, int h, int w, Rng& rng) {
  nn::Tensor t = nn::Tensor::zeros({n, 1, h, w});
  for (double& v : t.data) v = std::fabs(rng.normal());
  return t;
}

CriticConfig small_cfg() {
  CriticConfig cfg;
  cfg.base_channels = 4;
  return cfg;
}

void zero_all(CriticParams& params) {
  for (auto& l : params.layers) {
    std::fill(l.w->value.data.begin(), l.w->value.data.end(), 0.0);
    std::fill(l.b->value.data.begin(), l.b->value.data.end(), 0.0);
    if (l.has_bn)
      std::fill(l.bn_shift->value.data.begin(), l.bn_shift->value.data.end(),
                0.0);
  }
  std::fill(params.lin_w->value.data.begin(), params.lin_w->value.data.end(),
            0.0);
  params.lin_b->value.data[0] = 0.0;
}

}  // namespace

TEST_CASE("critic maps a batch of pairs to one finite score per element") {
  CriticConfig cfg = small_cfg();
  CriticParams params = init_critic(cfg, 32, 32, 5);
  Rng rng(1);
  nn::Var cond = nn::constant(rand_mag(3, 32, 32, rng));
  nn::Var x = nn::constant(rand_mag(3, 32, 32, rng));
  for (bool training : {false, true}) {
    nn::Var s = critic_forward(cond, x, params, cfg, training);
    CHECK(s->value.shape == std::vector<int>{3, 1});
    CHECK(s->value.all_finite());
  }
}

TEST_CASE("channel plan doubles per layer and feature map shrinks 16x") {
  CriticConfig cfg;
  cfg.base_channels = 8;
  CriticParams params = init_critic(cfg, 64, 48, 2);
  for (int j = 0; j < CriticConfig::kNumLayers; ++j) {
    CHECK(params.layers[static_cast<std::size_t>(j)].w->value.dim(0) ==
          8 << j);
    CHECK(params.layers[static_cast<std::size_t>(j)].has_bn == (j > 0));
  }
  Rng rng(3);
  nn::Var cond = nn::constant(rand_mag(2, 64, 48, rng));
  nn::Var x = nn::constant(rand_mag(2, 64, 48, rng));
  CriticTrace trace;
  critic_forward(cond, x, params, cfg, false, &trace);
  CHECK(trace.features->value.shape == std::vector<int>{2, 64, 4, 3});
}

TEST_CASE("indivisible spatial dims are rejected") {
  CriticConfig cfg = small_cfg();
  CHECK_THROWS_AS(init_critic(cfg, 24, 32, 1), DimensionError);
  CHECK_THROWS_AS(init_critic(cfg, 32, 40, 1), DimensionError);
  CriticParams params = init_critic(cfg, 32, 32, 1);
  Rng rng(4);
  nn::Var bad = nn::constant(rand_mag(1, 24, 24, rng));
  CHECK_THROWS_AS(critic_forward(bad, bad, params, cfg, false), DimensionError);
}

TEST_CASE("zero weights give score zero for any input") {
  CriticConfig cfg = small_cfg();
  CriticParams params = init_critic(cfg, 32, 32, 7);
  zero_all(params);
  Rng rng(5);
  nn::Var cond = nn::constant(rand_mag(2, 32, 32, rng));
  nn::Var x = nn::constant(rand_mag(2, 32, 32, rng));
  for (bool training : {false, true}) {
    nn::Var s = critic_forward(cond, x, params, cfg, training);
    for (double v : s->value.data) CHECK(v == 0.0);
  }
}

TEST_CASE("conditioning on the zero-fill image is structurally real") {
  CriticConfig cfg = small_cfg();
  CriticParams params = init_critic(cfg, 32, 32, 11);
  Rng rng(6);
  nn::Var cond = nn::constant(rand_mag(1, 32, 32, rng));
  nn::Var x = nn::constant(rand_mag(1, 32, 32, rng));
  const double base =
      critic_forward(cond, x, params, cfg, false)->value.scalar_value();
  int differs = 0;
  for (int t = 0; t < 100; ++t) {
    nn::Var other = nn::constant(rand_mag(1, 32, 32, rng));
    const double s =
        critic_forward(other, x, params, cfg, false)->value.scalar_value();
    if (s != base) ++differs;
  }
  CHECK(differs >= 99);
}

TEST_CASE("unconditional critic scores the candidate alone") {
  CriticConfig cfg = small_cfg();
  cfg.conditional = false;
  CriticParams params = init_critic(cfg, 32, 32, 13);
  CHECK(params.layers[0].w->value.dim(1) == 1);
  Rng rng(7);
  nn::Var x = nn::constant(rand_mag(2, 32, 32, rng));
  nn::Var s = critic_forward(nn::Var{}, x, params, cfg, false);
  CHECK(s->value.shape == std::vector<int>{2, 1});
  CHECK(s->value.all_finite());
  // Passing a condition anyway (or omitting a required one) is an error.
  CHECK_THROWS_AS(critic_forward(x, x, params, cfg, false), DimensionError);
  CriticConfig cc = small_cfg();
  CriticParams pc = init_critic(cc, 32, 32, 13);
  CHECK_THROWS_AS(critic_forward(nn::Var{}, x, pc, cc, false), DimensionError);
}

TEST_CASE("clip_weights clamps every trainable and only those") {
  CriticConfig cfg = small_cfg();
  CriticParams params = init_critic(cfg, 32, 32, 17);
  // Direct rule on a planted value.
  params.layers[0].w->value.data[0] = 0.02;
  params.layers[0].w->value.data[1] = -0.005;
  // Running stats must survive unclipped.
  params.layers[1].bn_running_mean.data[0] = 3.5;
  params.layers[1].bn_running_var.data[0] = 7.0;

  clip_weights(params, 0.01);
  CHECK(params.layers[0].w->value.data[0] == 0.01);
  CHECK(params.layers[0].w->value.data[1] == -0.005);
  CHECK(params.layers[1].bn_running_mean.data[0] == 3.5);
  CHECK(params.layers[1].bn_running_var.data[0] == 7.0);

  // Exhaustive scan: nothing above c anywhere, and the bound is attained
  // (the batch-norm scales start at 1, so clipping must have bitten).
  double mx = 0.0;
  for (const auto& p : params.trainables())
    for (double v : p->value.data) mx = std::max(mx, std::fabs(v));
  CHECK(mx == 0.01);

  // Idempotence: a second clip is a bitwise no-op.
  std::vector<std::vector<double>> snapshot;
  for (const auto& p : params.trainables()) snapshot.push_back(p->value.data);
  clip_weights(params, 0.01);
  std::size_t i = 0;
  for (const auto& p : params.trainables())
    CHECK(p->value.data == snapshot[i++]);

  // In-range parameter set is untouched by a loose clip.
  CriticParams loose = init_critic(cfg, 32, 32, 18);
  std::vector<std::vector<double>> before;
  for (const auto& p : loose.trainables()) before.push_back(p->value.data);
  clip_weights(loose, 10.0);
  i = 0;
  for (const auto& p : loose.trainables()) CHECK(p->value.data == before[i++]);

  CHECK_THROWS_AS(clip_weights(params, 0.0), ConfigError);
  CHECK_THROWS_AS(clip_weights(params, -1.0), ConfigError);
}

TEST_CASE("receptive window follows the stride/kernel arithmetic") {
  CriticConfig cfg;  // kernel 4, stride 2, pad 1, four layers
  CHECK(receptive_field(cfg) == 46);
  ReceptiveWindow w = receptive_window(cfg, 0, 0);
  CHECK(w.r0 == -15);
  CHECK(w.r1 == 30);
  // Shift by one output step moves the window by the total stride.
  ReceptiveWindow w2 = receptive_window(cfg, 1, 2);
  CHECK(w2.r0 == -15 + 16);
  CHECK(w2.r1 == 30 + 16);
  CHECK(w2.c0 == -15 + 32);
  CHECK(w2.c1 == 30 + 32);

  CriticConfig k6 = cfg;
  k6.kernel_size = 6;
  CHECK(receptive_field(k6) == 76);
}

TEST_CASE("final activations ignore pixels outside the derived window") {
  CriticConfig cfg = small_cfg();
  CriticParams params = init_critic(cfg, 64, 64, 23);
  Rng rng(8);
  nn::Tensor cond = rand_mag(1, 64, 64, rng);
  nn::Tensor x = rand_mag(1, 64, 64, rng);

  const int out_r = 1, out_c = 1;
  ReceptiveWindow w = receptive_window(cfg, out_r, out_c);

  auto features = [&](const nn::Tensor& c, const nn::Tensor& im) {
    CriticTrace trace;
    // Evaluation mode: batch statistics would couple every pixel globally.
    critic_forward(nn::constant(c), nn::constant(im), params, cfg, false,
                   &trace);
    return trace.features->value;
  };
  auto at = [](const nn::Tensor& f, int ch, int r, int c) {
    return f.data[static_cast<std::size_t>(((ch)*f.dim(2) + r) * f.dim(3)) + c];
  };

  nn::Tensor masked_c = cond, masked_x = x;
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      const bool inside = r >= w.r0 && r <= w.r1 && c >= w.c0 && c <= w.c1;
      if (inside) continue;
      masked_c.data[static_cast<std::size_t>(r) * 64 + c] = 0.0;
      masked_x.data[static_cast<std::size_t>(r) * 64 + c] = 0.0;
    }
  }
  nn::Tensor base = features(cond, x);
  nn::Tensor masked = features(masked_c, masked_x);
  REQUIRE(base.shape == std::vector<int>{1, 32, 4, 4});
  for (int ch = 0; ch < 32; ++ch)
    CHECK(at(masked, ch, out_r, out_c) == at(base, ch, out_r, out_c));

  // Tightness control: a window-corner pixel does influence the activation.
  nn::Tensor poked_x = masked_x;
  poked_x.data[static_cast<std::size_t>(w.r0) * 64 + w.c0] += 1.0;
  nn::Tensor poked = features(masked_c, poked_x);
  double delta = 0.0;
  for (int ch = 0; ch < 32; ++ch)
    delta = std::max(delta, std::fabs(at(poked, ch, out_r, out_c) -
                                      at(masked, ch, out_r, out_c)));
  CHECK(delta > 1e-15);
}

TEST_CASE("evaluation scores are per-element: batch order is irrelevant") {
  CriticConfig cfg = small_cfg();
  CriticParams params = init_critic(cfg, 32, 32, 29);
  Rng rng(9);
  nn::Tensor cond = rand_mag(3, 32, 32, rng);
  nn::Tensor x = rand_mag(3, 32, 32, rng);

  auto rotate_batch = [](const nn::Tensor& t) {
    nn::Tensor out = t;
    const std::size_t per = t.data.size() / 3;
    for (int n = 0; n < 3; ++n)
      std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(per * n),
                t.data.begin() + static_cast<std::ptrdiff_t>(per * (n + 1)),
                out.data.begin() + static_cast<std::ptrdiff_t>(per * ((n + 1) % 3)));
    return out;
  };

  nn::Var s = critic_forward(nn::constant(cond), nn::constant(x), params, cfg,
                             false);
  nn::Var sr = critic_forward(nn::constant(rotate_batch(cond)),
                              nn::constant(rotate_batch(x)), params, cfg, false);
  for (int n = 0; n < 3; ++n)
    CHECK(s->value.data[static_cast<std::size_t>(n)] ==
          sr->value.data[static_cast<std::size_t>((n + 1) % 3)]);
}

TEST_CASE("init is deterministic per seed and varies across seeds") {
  CriticConfig cfg = small_cfg();
  CriticParams a = init_critic(cfg, 32, 32, 41);
  CriticParams b = init_critic(cfg, 32, 32, 41);
  auto ea = a.named_entries();
  auto eb = b.named_entries();
  REQUIRE(ea.size() == eb.size());
  for (std::size_t i = 0; i < ea.size(); ++i) {
    CHECK(ea[i].first == eb[i].first);
    CHECK(ea[i].second->value.data == eb[i].second->value.data);
  }
  CriticParams c = init_critic(cfg, 32, 32, 42);
  CHECK(a.layers[0].w->value.data != c.layers[0].w->value.data);

  // Inventory: 4 conv layers (weight+bias), batch norm on layers 1-3,
  // linear head, and one pair of running buffers per normalized layer.
  CHECK(ea.size() == 4 * 2 + 3 * 2 + 2);
  CHECK(a.named_buffers().size() == 3 * 2);
}

TEST_CASE("critic gradients match finite differences") {
  CriticConfig cfg = small_cfg();
  CriticParams params = init_critic(cfg, 32, 32, 31);
  Rng rng(10);
  nn::Var cond = nn::constant(rand_mag(2, 32, 32, rng));
  nn::Var x = nn::leaf(rand_mag(2, 32, 32, rng), true);

  auto build = [&] {
    return nn::sum(critic_forward(cond, x, params, cfg, true));
  };
  std::vector<nn::Var> probes = params.trainables();
  probes.push_back(x);  // the generator receives gradients through x
  CHECK(testsup::fd_gradcheck(probes, build, 1e-6, 6) < 1e-3);
}
