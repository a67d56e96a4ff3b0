#include "vtg/cvtp/trainer.hpp"

#include <numeric>

#include "vtg/io/params.hpp"
#include "vtg/nn/optim.hpp"
#include "vtg/simd/kernels.hpp"

namespace vtg::cvtp {

CvtpModel::CvtpModel(const EncoderConfig& c, int64_t bank_size, uint64_t seed)
    : config(c),
      visual(c, seed * 2 + 1),
      tactile(c, seed * 2 + 2),
      visual_bank(bank_size, c.embed_dim, seed, 0),
      tactile_bank(bank_size, c.embed_dim, seed, 1) {}

void CvtpModel::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
  io::Archive a;
  a.metadata = extra.is_object() ? extra : nlohmann::json::object();
  a.metadata["kind"] = "cvtp";
  a.metadata["encoder"] = config.to_json();
  a.metadata["bank_size"] = visual_bank.capacity();
  a.metadata["bank_cursor"] = {visual_bank.cursor(), tactile_bank.cursor()};
  io::store_params(a, "visual.", visual.params());
  io::store_params(a, "tactile.", tactile.params());
  a.put("bank.visual", visual_bank.entries());
  a.put("bank.tactile", tactile_bank.entries());
  a.save(path);
}

CvtpModel CvtpModel::load(const std::filesystem::path& path) {
  const auto a = io::Archive::load(path);
  if (a.metadata.value("kind", std::string()) != "cvtp")
    fail(ErrorCode::load, path.string() + " is not a CVTP checkpoint");
  const auto config = EncoderConfig::from_json(a.metadata.at("encoder"));
  const int64_t k = a.metadata.at("bank_size").get<int64_t>();
  CvtpModel m(config, 1, 0);
  io::load_params(a, "visual.", m.visual.params());
  io::load_params(a, "tactile.", m.tactile.params());
  m.visual_bank.set_entries(a.get_f32("bank.visual", {k, config.embed_dim}));
  m.tactile_bank.set_entries(a.get_f32("bank.tactile", {k, config.embed_dim}));
  const auto cursors = a.metadata.at("bank_cursor").get<std::vector<int64_t>>();
  m.visual_bank.set_cursor(cursors.at(0));
  m.tactile_bank.set_cursor(cursors.at(1));
  return m;
}

std::vector<size_t> epoch_order(size_t count, uint64_t seed, uint64_t epoch) {
  std::vector<size_t> order(count);
  std::iota(order.begin(), order.end(), size_t{0});
  RandomStream rng(seed, Purpose::data_order, epoch);
  for (size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

CvtpModel train_cvtp(const std::vector<data::PairItem>& items, const EncoderConfig& config,
                     const CvtpTrainOptions& opt) {
  require(!items.empty(), "CVTP training needs at least one pair");
  require(opt.batch_size >= 1 && opt.epochs >= 0, "invalid batch size or epoch count");
  require(opt.bank_size >= 2, "memory bank needs at least 2 slots");
  if (opt.batch_size > opt.bank_size) fail(ErrorCode::configuration, "batch size exceeds the memory bank size");
  CvtpModel model(config, opt.bank_size, opt.seed);

  std::vector<Tensor<float>> vis, tac;
  for (const auto& item : items) {
    vis.push_back(batch_clips<data::VisualClip>({&item.visual}, config.window).slice0(0));
    tac.push_back(batch_clips<data::TactileClip>({&item.tactile}, config.window).slice0(0));
  }

  auto params = nn::vars_of(model.visual.params());
  for (const auto& v : nn::vars_of(model.tactile.params())) params.push_back(v);
  nn::Sgd<float> sgd(params, {opt.lr, opt.momentum, opt.weight_decay});

  const size_t n = items.size();
  const int64_t per_epoch = static_cast<int64_t>((n + opt.batch_size - 1) / opt.batch_size);
  const int64_t total = per_epoch * opt.epochs;
  int64_t step = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const auto order = epoch_order(n, opt.seed, static_cast<uint64_t>(epoch));
    for (size_t start = 0; start < n; start += static_cast<size_t>(opt.batch_size), ++step) {
      const size_t end = std::min(n, start + static_cast<size_t>(opt.batch_size));
      std::vector<Tensor<float>> vb, tb;
      for (size_t i = start; i < end; ++i) {
        vb.push_back(vis[order[i]]);
        tb.push_back(tac[order[i]]);
      }
      sgd.set_lr(nn::cosine_lr(opt.lr, step, total));
      sgd.zero_grad();
      auto zv = model.visual.forward(nn::constant(stack(vb)));
      auto zt = model.tactile.forward(nn::constant(stack(tb)));
      auto loss = cvtp_loss(zv, zt, model.visual_bank, model.tactile_bank, config.tau, true);
      nn::backward(loss);
      sgd.step();
      model.visual_bank.push_rows(zv->value);
      model.tactile_bank.push_rows(zt->value);
      if (opt.on_step) opt.on_step(step, loss->value[0]);
    }
  }
  return model;
}

Retrieval retrieval_top1(const CvtpModel& model, const std::vector<data::PairItem>& items) {
  require(!items.empty(), "retrieval needs at least one pair");
  std::vector<const data::VisualClip*> vc;
  std::vector<const data::TactileClip*> tc;
  for (const auto& item : items) {
    vc.push_back(&item.visual);
    tc.push_back(&item.tactile);
  }
  const auto zv = embed(model.visual, batch_clips(vc, model.config.window));
  const auto zt = embed(model.tactile, batch_clips(tc, model.config.window));
  const int64_t n = zv.dim(0), d = zv.dim(1);
  std::vector<float> sim(static_cast<size_t>(n * n));
  simd::gemm<float>(false, true, n, n, d, zv.data(), d, zt.data(), d, sim.data(), n, false);
  int64_t v2t = 0, t2v = 0;
  for (int64_t i = 0; i < n; ++i) {
    int64_t best_row = 0, best_col = 0;
    for (int64_t j = 1; j < n; ++j) {
      if (sim[static_cast<size_t>(i * n + j)] > sim[static_cast<size_t>(i * n + best_row)]) best_row = j;
      if (sim[static_cast<size_t>(j * n + i)] > sim[static_cast<size_t>(best_col * n + i)]) best_col = j;
    }
    v2t += best_row == i;
    t2v += best_col == i;
  }
  return {static_cast<double>(v2t) / n, static_cast<double>(t2v) / n};
}

}  // namespace vtg::cvtp
