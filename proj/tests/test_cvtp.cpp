#include <doctest.h>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "gradcheck.hpp"
#include "vtg/core/random.hpp"
#include "vtg/cvtp/trainer.hpp"
#include "vtg/nn/ops.hpp"

using namespace vtg;
using namespace vtg::cvtp;
using vtg::testing::grad_check;
namespace fs = std::filesystem;

namespace {

EncoderConfig tiny_config(int window = 3) {
  EncoderConfig c;
  c.window = window;
  c.base_width = 8;
  c.stage_blocks = {1, 1};
  c.embed_dim = 16;
  c.norm_groups = 2;
  return c;
}

template <typename Clip>
Clip random_clip(int window, int64_t size, uint64_t seed) {
  Clip clip;
  RandomStream rng(seed, Purpose::test);
  for (int k = 0; k < window; ++k) {
    data::ImageFrame f(size, size);
    rng.fill_uniform(f.pixels.span(), -1.0, 1.0);
    clip.frames.push_back(std::move(f));
  }
  return clip;
}

std::vector<float> unit(int64_t dim, uint64_t seed) {
  std::vector<float> v(static_cast<size_t>(dim));
  RandomStream rng(seed, Purpose::test, 1);
  double n = 0;
  for (auto& e : v) {
    e = static_cast<float>(rng.normal());
    n += e * e;
  }
  for (auto& e : v) e = static_cast<float>(e / std::sqrt(n));
  return v;
}

std::vector<float> basis(int64_t dim, int64_t i, float sign = 1.0f) {
  std::vector<float> v(static_cast<size_t>(dim), 0.0f);
  v[static_cast<size_t>(i)] = sign;
  return v;
}

nn::Var<double> row_var(const std::vector<float>& v) {
  Tensor<double> t({1, static_cast<int64_t>(v.size())});
  for (size_t i = 0; i < v.size(); ++i) t[static_cast<int64_t>(i)] = v[i];
  return nn::constant(std::move(t));
}

MemoryBank filled_bank(int64_t k, const std::vector<float>& fill) {
  MemoryBank bank(k, static_cast<int64_t>(fill.size()), 0);
  for (int64_t i = 0; i < k; ++i) bank.push(fill);
  return bank;
}

}  // namespace

TEST_CASE("encoders give unit-norm, deterministic, per-item embeddings") {
  const auto config = tiny_config();
  ClipEncoder<float> visual(config, 3);
  ClipEncoder<float> tactile(config, 4);
  std::vector<data::VisualClip> vclips;
  std::vector<data::TactileClip> tclips;
  for (uint64_t i = 0; i < 4; ++i) {
    vclips.push_back(random_clip<data::VisualClip>(3, 32, 10 + i));
    tclips.push_back(random_clip<data::TactileClip>(3, 32, 20 + i));
  }
  auto as_ptrs = [](const auto& clips, std::vector<size_t> order) {
    std::vector<const typename std::decay_t<decltype(clips)>::value_type*> out;
    for (size_t i : order) out.push_back(&clips[i]);
    return out;
  };
  const std::vector<size_t> id{0, 1, 2, 3}, perm{2, 0, 3, 1};
  for (int modality = 0; modality < 2; ++modality) {
    CAPTURE(modality);
    const auto& enc = modality == 0 ? visual : tactile;
    const Tensor<float> x = modality == 0 ? batch_clips(as_ptrs(vclips, id), 3) : batch_clips(as_ptrs(tclips, id), 3);
    const Tensor<float> xp = modality == 0 ? batch_clips(as_ptrs(vclips, perm), 3) : batch_clips(as_ptrs(tclips, perm), 3);
    const auto z = embed(enc, x);
    REQUIRE(z.shape() == Shape{4, 16});
    for (int64_t r = 0; r < 4; ++r) {
      double n = 0;
      for (int64_t j = 0; j < 16; ++j) n += static_cast<double>(z.at(r, j)) * z.at(r, j);
      CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-5));
    }
    CHECK(embed(enc, x) == z);
    const auto zp = embed(enc, xp);
    for (size_t r = 0; r < 4; ++r)
      for (int64_t j = 0; j < 16; ++j) CHECK(zp.at(static_cast<int64_t>(r), j) == z.at(static_cast<int64_t>(perm[r]), j));
  }
  const auto single = embed_visual(visual, vclips[1]);
  for (int64_t j = 0; j < 16; ++j) CHECK(single[j] == doctest::Approx(embed(visual, batch_clips(as_ptrs(vclips, id), 3)).at(1, j)).epsilon(1e-5));
}

TEST_CASE("clip length mismatch is a validation error") {
  ClipEncoder<float> enc(tiny_config(3), 1);
  const auto clip = random_clip<data::VisualClip>(5, 32, 1);
  try {
    embed_visual(enc, clip);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::validation);
  }
}

TEST_CASE("infonce uniform case is ln K") {
  const auto e = unit(16, 1);
  const auto bank = filled_bank(8, e);
  const auto loss = infonce_loss(row_var(e), row_var(e), bank, 0.07);
  CHECK(std::fabs(loss->value[0] - std::log(8.0)) < 1e-9);

  const auto v = row_var(e);
  const auto total = cvtp_loss(v, v, bank, bank, 0.07);
  CHECK(std::fabs(total->value[0] - 2 * std::log(8.0)) < 1e-9);
}

TEST_CASE("infonce with opposite negatives against a high-precision oracle") {
  using boost::multiprecision::cpp_dec_float_50;
  const auto bank = filled_bank(8, basis(16, 0, -1.0f));
  const auto a = row_var(basis(16, 0));
  const double loss = infonce_loss(a, a, bank, 0.07)->value[0];
  const cpp_dec_float_50 tau("0.07");
  const cpp_dec_float_50 oracle = -log(1 / (1 + 7 * exp(-2 / tau)));
  CHECK(loss < 1e-10);
  CHECK(std::fabs(loss - oracle.convert_to<double>()) <= 1e-6 * oracle.convert_to<double>());
}

TEST_CASE("infonce approaches ln K at large temperature") {
  MemoryBank bank(8, 16, 5);  // random unit entries
  const auto a = row_var(unit(16, 2));
  const auto p = row_var(unit(16, 3));
  CHECK(std::fabs(infonce_loss(a, p, bank, 1e6)->value[0] - std::log(8.0)) < 1e-4);
}

TEST_CASE("infonce rejects bad temperature and non-finite input") {
  MemoryBank bank(8, 16, 5);
  const auto a = row_var(unit(16, 2));
  for (double tau : {0.0, -0.5}) {
    try {
      infonce_loss(a, a, bank, tau);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::validation);
    }
  }
  auto bad = unit(16, 2);
  bad[3] = std::nanf("");
  try {
    infonce_loss(row_var(bad), a, bank, 0.07);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::numeric);
  }
}

TEST_CASE("infonce is non-negative and decreases as the positive aligns") {
  MemoryBank bank(16, 16, 9);
  const auto anchor = basis(16, 0);
  double previous = INFINITY;
  for (int i = 0; i <= 10; ++i) {
    // Positive rotates from e1 toward the anchor, so a.p rises from 0 to 1.
    const double angle = (1.0 - i / 10.0) * M_PI / 2;
    std::vector<float> p(16, 0.0f);
    p[0] = static_cast<float>(std::cos(angle));
    p[1] = static_cast<float>(std::sin(angle));
    const double loss = infonce_loss(row_var(anchor), row_var(p), bank, 0.07)->value[0];
    CHECK(loss >= 0.0);
    CHECK(loss < previous);
    previous = loss;
  }
}

TEST_CASE("fresh positive replaces the stale copy in its slot") {
  auto bank = filled_bank(8, basis(16, 1));
  const auto a = row_var(basis(16, 0));
  // Designated slot still holds e1, but the loss must use the fresh positive a.
  const double loss = infonce_loss(a, a, bank, 0.5)->value[0];
  CHECK(loss == doctest::Approx(-std::log(std::exp(2.0) / (std::exp(2.0) + 7.0))).epsilon(1e-12));
}

TEST_CASE("batch rows own consecutive slots and see each other as negatives") {
  MemoryBank bank(6, 4, 3);
  bank.set_cursor(4);
  CHECK(bank.designated_slots(3) == std::vector<int64_t>{4, 5, 0});
  Tensor<double> rows({3, 4}, 0.0);
  for (int r = 0; r < 3; ++r) rows.at(r, r) = 1.0;
  const auto view = bank.with_batch(rows);
  for (int r = 0; r < 3; ++r)
    for (int j = 0; j < 4; ++j) CHECK(view.at(bank.designated_slots(3)[static_cast<size_t>(r)], j) == rows.at(r, j));
  for (int64_t k : {1, 2, 3})
    for (int j = 0; j < 4; ++j) CHECK(view.at(k, j) == static_cast<double>(bank.slot(k)[static_cast<size_t>(j)]));
  CHECK_THROWS_AS(bank.designated_slots(7), Error);
}

TEST_CASE("cvtp loss is symmetric under swapping modalities") {
  MemoryBank vb(12, 16, 1, 0), tb(12, 16, 1, 1);
  Tensor<double> v({3, 16}), t({3, 16});
  for (int r = 0; r < 3; ++r) {
    const auto a = unit(16, 40 + r), b = unit(16, 50 + r);
    for (int j = 0; j < 16; ++j) {
      v.at(r, j) = a[static_cast<size_t>(j)];
      t.at(r, j) = b[static_cast<size_t>(j)];
    }
  }
  const double forward = cvtp_loss(nn::constant(v), nn::constant(t), vb, tb, 0.07)->value[0];
  const double swapped = cvtp_loss(nn::constant(t), nn::constant(v), tb, vb, 0.07)->value[0];
  CHECK(forward == swapped);
  CHECK(cvtp_loss(nn::constant(v), nn::constant(t), vb, tb, 0.07, true)->value[0] == forward);
}

TEST_CASE("perfectly overfit pair gives near-zero loss") {
  const auto e = basis(16, 2);
  const auto bank = filled_bank(16, basis(16, 2, -1.0f));
  const auto v = row_var(e);
  const double loss = cvtp_loss(v, v, bank, bank, 0.07)->value[0];
  const double oracle = 2 * std::log1p(15 * std::exp(-2 / 0.07));
  CHECK(loss < 1e-6);
  CHECK(loss == doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("memory bank is a FIFO ring with unit-norm entries") {
  const int64_t k = 5;
  MemoryBank bank(k, 8, 0);
  for (int64_t i = 0; i < k; ++i) {
    const double n = std::sqrt(std::inner_product(bank.slot(i).begin(), bank.slot(i).end(), bank.slot(i).begin(), 0.0));
    CHECK(n == doctest::Approx(1.0).epsilon(1e-6));
  }
  std::vector<std::vector<float>> pushed;
  for (int64_t i = 0; i < k; ++i) {
    pushed.push_back(unit(8, 100 + static_cast<uint64_t>(i)));
    bank.push(pushed.back());
    const auto last = bank.slot((bank.cursor() + k - 1) % k);
    CHECK(std::vector<float>(last.begin(), last.end()) == pushed.back());
  }
  CHECK(bank.cursor() == 0);
  for (int64_t i = 0; i < k; ++i) CHECK(std::vector<float>(bank.slot(i).begin(), bank.slot(i).end()) == pushed[static_cast<size_t>(i)]);
  const auto extra = unit(8, 200);
  bank.push(extra);
  CHECK(std::vector<float>(bank.slot(0).begin(), bank.slot(0).end()) == extra);
  CHECK(std::vector<float>(bank.slot(1).begin(), bank.slot(1).end()) == pushed[1]);

  auto scaled = unit(8, 300);
  for (auto& x : scaled) x *= 1.01f;
  try {
    bank.push(scaled);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::validation);
  }
  CHECK(bank.cursor() == 1);
}

TEST_CASE("cvtp loss gradient through small encoders") {
  EncoderConfig c;
  c.window = 1;
  c.base_width = 4;
  c.stage_blocks = {1};
  c.embed_dim = 6;
  c.norm_groups = 2;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    ClipEncoder<double> visual(c, 2 * seed), tactile(c, 2 * seed + 1);
    Tensor<double> xv({2, 3, 12, 12}), xt({2, 3, 12, 12});
    RandomStream rng(seed, Purpose::test, 7);
    rng.fill_normal(xv.span());
    rng.fill_normal(xt.span());
    MemoryBank vb(5, 6, seed, 0), tb(5, 6, seed, 1);
    auto loss = [&] {
      return cvtp_loss(visual.forward(nn::constant(xv)), tactile.forward(nn::constant(xt)), vb, tb, 0.07);
    };
    auto params = nn::vars_of(visual.params());
    for (const auto& p : nn::vars_of(tactile.params())) params.push_back(p);
    const auto r = grad_check(loss, params, 1e-5, 24, 1e-7, true);
    CHECK(r.max_rel_error <= 1e-4);

    // Detached positives: the gradient is that of the anchor terms alone,
    // i.e. each encoder sees the other modality's output as a constant.
    const auto zt_fixed = tactile.forward(nn::constant(xt))->value;
    auto visual_only = [&] {
      return nn::mean(infonce_loss(visual.forward(nn::constant(xv)), nn::constant(zt_fixed), tb, 0.07));
    };
    auto vparams = nn::vars_of(visual.params());
    for (auto& p : params) p->zero_grad();
    nn::backward(cvtp_loss(visual.forward(nn::constant(xv)), tactile.forward(nn::constant(xt)), vb, tb, 0.07, true));
    std::vector<Tensor<double>> detached;
    for (auto& p : vparams) detached.push_back(p->grad);
    for (auto& p : params) p->zero_grad();
    nn::backward(visual_only());
    for (size_t i = 0; i < vparams.size(); ++i)
      for (int64_t j = 0; j < detached[i].numel(); ++j)
        CHECK(detached[i][j] == doctest::Approx(vparams[i]->grad[j]).epsilon(1e-12).scale(1e-12));
    for (auto& p : params) p->zero_grad();
  }
}

TEST_CASE("cvtp checkpoint round trip") {
  const auto config = tiny_config();
  CvtpModel model(config, 7, 11);
  model.visual_bank.push(unit(16, 1));
  model.tactile_bank.push(unit(16, 2));
  model.tactile_bank.push(unit(16, 3));
  const fs::path path = fs::temp_directory_path() / "vtg_test_cvtp.ckpt";
  model.save(path, {{"note", "roundtrip"}});
  const auto loaded = CvtpModel::load(path);
  CHECK(loaded.config.to_json() == config.to_json());
  CHECK(loaded.visual_bank.entries() == model.visual_bank.entries());
  CHECK(loaded.tactile_bank.entries() == model.tactile_bank.entries());
  CHECK(loaded.visual_bank.cursor() == 1);
  CHECK(loaded.tactile_bank.cursor() == 2);
  const auto clip = random_clip<data::VisualClip>(3, 32, 8);
  CHECK(embed_visual(loaded.visual, clip) == embed_visual(model.visual, clip));
  const auto tclip = random_clip<data::TactileClip>(3, 32, 9);
  CHECK(embed_tactile(loaded.tactile, tclip) == embed_tactile(model.tactile, tclip));
  fs::remove(path);
}

TEST_CASE("cvtp training is deterministic and lowers the loss") {
  std::vector<data::PairItem> items;
  for (uint64_t i = 0; i < 8; ++i) {
    data::PairItem item;
    item.id = "p" + std::to_string(i);
    item.visual = random_clip<data::VisualClip>(3, 32, 500 + i);
    item.tactile = random_clip<data::TactileClip>(3, 32, 600 + i);
    items.push_back(std::move(item));
  }
  CvtpTrainOptions opt;
  opt.epochs = 6;
  opt.batch_size = 8;
  opt.bank_size = 8;
  opt.lr = 0.01;
  opt.seed = 3;
  std::vector<double> losses;
  opt.on_step = [&](int64_t, double l) { losses.push_back(l); };
  const auto a = train_cvtp(items, tiny_config(), opt);
  opt.on_step = nullptr;
  const auto b = train_cvtp(items, tiny_config(), opt);
  CHECK(a.visual_bank.entries() == b.visual_bank.entries());
  CHECK(a.tactile_bank.entries() == b.tactile_bank.entries());
  REQUIRE(losses.size() == 6);
  CHECK(losses.back() < losses.front());

  opt.bank_size = 4;
  CHECK_THROWS_AS(train_cvtp(items, tiny_config(), opt), Error);
}

TEST_CASE("epoch order is a permutation that changes per epoch") {
  const auto a = epoch_order(20, 1, 0), b = epoch_order(20, 1, 1);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<size_t> id(20);
  std::iota(id.begin(), id.end(), 0);
  CHECK(sorted == id);
  CHECK(a != b);
  CHECK(a == epoch_order(20, 1, 0));
}
