#include "vtg/tasks/train.hpp"

#include "vtg/cvtp/trainer.hpp"
#include "vtg/diffusion/loss.hpp"
#include "vtg/nn/optim.hpp"

namespace vtg::tasks {

namespace {

const data::ImageFrame& target_frame(Direction direction, const data::PairItem& item) {
  return direction == Direction::touch_to_image ? item.visual.center() : item.tactile.center();
}

// Identity node that copies the gradient reaching it into `sink`.
nn::Var<float> tap(const nn::Var<float>& x, Tensor<float>* sink) {
  return nn::make_result<float>(x->value, {x}, [sink](nn::Node<float>& self) {
    *sink = self.grad;
    auto& g = self.parents[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

}  // namespace

void preflight(const TaskSpec& spec, ConditionKind condition, const std::vector<data::PairItem>& items) {
  spec.validate();
  if (items.empty()) fail(ErrorCode::validation, "training set is empty");
  for (const auto& item : items) {
    if (spec.hand_free && !item.mask)
      fail(ErrorCode::validation, "hand-free training needs a mask for every item; '" + item.id + "' has none");
    if (spec.concat == ConcatSource::reflectance && !item.reflectance)
      fail(ErrorCode::validation, "reflectance conditioning needs a reflectance map; '" + item.id + "' has none");
    if (spec.concat == ConcatSource::reference && !item.reference)
      fail(ErrorCode::validation, "reference conditioning needs a reference image; '" + item.id + "' has none");
    if (condition == ConditionKind::label && item.label < 0)
      fail(ErrorCode::validation, "item '" + item.id + "' has a negative label");
  }
  const auto& first = target_frame(spec.direction, items.front());
  for (const auto& item : items) {
    const auto& f = target_frame(spec.direction, item);
    if (f.height() != first.height() || f.width() != first.width())
      fail(ErrorCode::validation, "item '" + item.id + "' has a different frame size from '" + items.front().id + "'");
  }
}

Bundle train_task(const TaskModelConfig& config, const std::vector<data::PairItem>& items,
                  const DiffusionTrainOptions& opt, TrainReport* report) {
  preflight(config.spec, config.condition, items);
  if (opt.batch_size < 1) fail(ErrorCode::configuration, "batch size must be positive");
  if (!(opt.drop_prob >= 0.0 && opt.drop_prob < 1.0)) fail(ErrorCode::configuration, "drop probability must be in [0, 1)");
  if (!(opt.lr > 0.0)) fail(ErrorCode::configuration, "learning rate must be positive");

  // Condition encoder: from the CVTP checkpoint when given.
  std::optional<ConditionEncoder> condition;
  if (config.condition == ConditionKind::label) {
    int labels = config.num_labels;
    for (const auto& item : items) labels = std::max(labels, item.label + 1);
    condition = ConditionEncoder::label(labels, config.unet.context_dim, opt.seed);
  } else if (config.cvtp_checkpoint) {
    const auto cvtp_model = cvtp::CvtpModel::load(*config.cvtp_checkpoint);
    condition = ConditionEncoder::clip(cvtp_model.config, opt.seed);
    condition->load_weights(config.spec.direction == Direction::touch_to_image ? cvtp_model.tactile : cvtp_model.visual);
  } else {
    condition = ConditionEncoder::clip(config.encoder, opt.seed);
  }

  diffusion::UNetConfig unet = config.unet;
  unet.in_channels = config.spec.concat == ConcatSource::none ? 3 : 6;
  unet.out_channels = 3;
  Bundle bundle(config.spec, config.codec, diffusion::make_schedule(config.timesteps), unet, std::move(*condition),
                opt.seed);
  bundle.sample_steps = config.sample_steps;
  bundle.drop_prob = opt.drop_prob;
  bundle.x0_clip = config.codec.kind == codec::CodecKind::learned ? 0.0 : 1.0;
  const auto& frame0 = target_frame(config.spec.direction, items.front());
  bundle.frame_height = frame0.height();
  bundle.frame_width = frame0.width();
  if (frame0.height() % config.codec.factor != 0 || frame0.width() % config.codec.factor != 0)
    fail(ErrorCode::configuration, "frame size is not divisible by the codec factor");

  // Everything that does not change between steps is computed once.
  const auto codec = bundle.codec();
  const size_t n = items.size();
  std::vector<Tensor<float>> z0(n), masks(n), maps(n), inputs(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& item = items[i];
    z0[i] = codec.encode(target_frame(config.spec.direction, item)).code;
    if (config.spec.hand_free)
      masks[i] = data::downsample_mask(*item.mask, z0[i].dim(1), z0[i].dim(2)).mask.reshaped({1, z0[i].dim(1), z0[i].dim(2)});
    maps[i] = concat_latent(codec, config.spec.concat, item);
    inputs[i] = condition_input(bundle, item).slice0(0);
  }

  auto params = nn::vars_of(bundle.denoiser.params());
  for (const auto& v : nn::vars_of(bundle.condition.params())) params.push_back(v);
  nn::Adam<float> adam(params, {opt.lr});

  const int64_t per_epoch = static_cast<int64_t>((n + opt.batch_size - 1) / opt.batch_size);
  const int64_t total = opt.max_steps > 0 ? opt.max_steps : per_epoch * opt.epochs;
  const int64_t dim = bundle.condition.dim();
  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep = TrainReport{};

  std::vector<size_t> order;
  for (int64_t step = 0; step < total; ++step) {
    const int64_t epoch = step / per_epoch, pos = step % per_epoch;
    if (pos == 0) order = cvtp::epoch_order(n, opt.seed, static_cast<uint64_t>(epoch));
    const size_t start = static_cast<size_t>(pos * opt.batch_size);
    const size_t end = std::min(n, start + static_cast<size_t>(opt.batch_size));
    const int64_t b = static_cast<int64_t>(end - start);

    diffusion::EpsLossBatch<float> batch;
    std::vector<Tensor<float>> zb, mb, cb, ib;
    for (size_t i = start; i < end; ++i) {
      zb.push_back(z0[order[i]]);
      if (config.spec.hand_free) mb.push_back(masks[order[i]]);
      if (config.spec.concat != ConcatSource::none) cb.push_back(maps[order[i]]);
      ib.push_back(inputs[order[i]]);
    }
    batch.z0 = stack(zb);
    if (!mb.empty()) batch.mask = stack(mb);
    if (!cb.empty()) batch.cond_map = stack(cb);
    diffusion::draw_timesteps_and_noise(batch, opt.seed, static_cast<uint64_t>(step), bundle.schedule);

    // Condition dropping: dropped items see the zero (null) context.
    Tensor<float> keep({b, dim}, 1.0f);
    RandomStream drop(opt.seed, Purpose::cond_drop, static_cast<uint64_t>(step));
    for (int64_t r = 0; r < b; ++r)
      if (drop.uniform() < opt.drop_prob)
        for (int64_t j = 0; j < dim; ++j) keep.at(r, j) = 0.0f;

    // Once per epoch on hand-free runs, check that no gradient leaves a masked cell.
    const bool probe = config.spec.hand_free && pos == 0;
    Tensor<float> out_grad;
    diffusion::DenoiseFn<float> model = [&](const nn::Var<float>& x, const std::vector<int>& t,
                                            const nn::Var<float>& ctx) {
      auto y = bundle.denoiser.forward(x, t, ctx);
      return probe ? tap(y, &out_grad) : y;
    };

    adam.zero_grad();
    auto ctx = nn::mul_const(bundle.condition.forward(stack(ib)), keep);
    auto loss = diffusion::eps_loss(model, batch, ctx, bundle.schedule);
    nn::backward(loss);
    if (probe) {
      const int64_t h = batch.z0.dim(2), w = batch.z0.dim(3), c = batch.z0.dim(1);
      for (int64_t r = 0; r < b; ++r)
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w; ++x) {
            if (batch.mask.at(r, 0, y, x) != 0.0f) continue;
            for (int64_t ch = 0; ch < c; ++ch)
              if (!out_grad.empty() && out_grad.at(r, ch, y, x) != 0.0f)
                fail(ErrorCode::numeric, "hand-free gradient probe: masked cell received a gradient at step " +
                                             std::to_string(step));
          }
      ++rep.hand_free_probes;
    }
    if (opt.cosine_decay) adam.set_lr(nn::cosine_lr(opt.lr, step, total));
    adam.step();
    rep.losses.push_back(loss->value[0]);
    if (opt.on_step) opt.on_step(step, loss->value[0]);
  }

  bundle.training = {{"steps", total},
                     {"batch_size", opt.batch_size},
                     {"lr", opt.lr},
                     {"drop_prob", opt.drop_prob},
                     {"cosine_decay", opt.cosine_decay},
                     {"seed", opt.seed},
                     {"pairs", n},
                     {"cvtp_init", config.cvtp_checkpoint.has_value()}};

  if (opt.fingerprint) {
    Fingerprint f;
    f.seed = opt.seed;
    f.steps = bundle.sample_steps;
    f.guidance = bundle.spec.guidance;
    f.context = bundle.condition.embed(inputs.front().reshaped([&] {
      Shape s = inputs.front().shape();
      s.insert(s.begin(), 1);
      return s;
    }()));
    if (!maps.front().empty()) {
      Shape s = maps.front().shape();
      s.insert(s.begin(), 1);
      f.concat = maps.front().reshaped(s);
    }
    f.latent = bundle.sample_latents(f.context, {f.seed}, f.concat, f.steps, f.guidance);
    bundle.fingerprint = std::move(f);
  }
  return bundle;
}

}  // namespace vtg::tasks
