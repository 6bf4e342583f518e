#include "actprompt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "actprompt/errors.hpp"

namespace actprompt {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// Rejection-sampled bounded draw; keeps shuffles identical across standard
// library implementations.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return draw % n;
}

void fisher_yates(std::vector<int>& order, std::mt19937_64& rng) {
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(bounded(rng, i));
    std::swap(order[i - 1], order[j]);
  }
}

struct AdamState {
  int t = 0;
};

void adam_update(Model& model, const std::vector<Mat>& grads, double lr, double wd,
                 AdamState& state) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, state.t);
  const double bc2 = 1.0 - std::pow(kBeta2, state.t);
  auto& params = model.params();
  for (size_t i = 0; i < params.size(); ++i) {
    Param& p = params[i];
    const Mat& g = grads[i];
    if (p.m.size() == 0) {
      p.m = Mat::Zero(p.value.rows(), p.value.cols());
      p.v = Mat::Zero(p.value.rows(), p.value.cols());
    }
    p.m = kBeta1 * p.m + (1.0 - kBeta1) * g;
    p.v = kBeta2 * p.v + (1.0 - kBeta2) * g.cwiseProduct(g);
    const Mat mhat = p.m / bc1;
    const Mat vhat = p.v / bc2;
    p.value -= lr * (mhat.array() / (vhat.array().sqrt() + kAdamEps)).matrix();
    if (wd > 0.0 && p.decay) p.value -= (lr * wd) * p.value;
  }
  model.clamp_logit_scale();
  model.invalidate_cache();
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2) throw InputError("trainer: batch_size must be >= 2");
  if (epochs < 1 && max_steps < 1) throw InputError("trainer: epochs must be >= 1");
  // base_lr 0 is tolerated as a no-op sweep sanity point
  if (base_lr < 0.0) throw InputError("trainer: base_lr must be >= 0");
  if (weight_decay < 0.0) throw InputError("trainer: weight_decay must be >= 0");
  if (warmup_frac < 0.0 || warmup_frac >= 1.0) {
    throw InputError("trainer: warmup_frac must lie in [0, 1)");
  }
  if (weights.lambda1 < 0.0 || weights.lambda2 < 0.0) {
    throw InputError("trainer: loss weights must be >= 0");
  }
}

double lr_at(int step, int total_steps, const TrainConfig& cfg) {
  if (total_steps < 1) throw InputError("lr_at: total_steps must be >= 1");
  if (step < 0 || step > total_steps) throw InputError("lr_at: step outside [0, total_steps]");
  const double warmup = cfg.warmup_frac * total_steps;
  if (warmup > 0.0 && static_cast<double>(step) < warmup) {
    return cfg.base_lr * static_cast<double>(step) / warmup;
  }
  const double span = static_cast<double>(total_steps) - warmup;
  const double progress = span > 0.0 ? (static_cast<double>(step) - warmup) / span : 1.0;
  return cfg.base_lr * 0.5 * (1.0 + std::cos(M_PI * std::clamp(progress, 0.0, 1.0)));
}

std::vector<TrainItem> prepare_training_items(const std::vector<AnnotatedVideo>& videos,
                                              const SampleConfig& sample_cfg,
                                              const ActionVocab& vocab,
                                              const VariantTable& table) {
  std::vector<TrainItem> items;
  for (const auto& video : videos) {
    for (const auto& window : plan_cuts(video.length(), sample_cfg)) {
      TrainItem item;
      item.cut = extract_cut(video, window, sample_cfg.k_max);
      item.bundle = build_prompt_bundle(item.cut, vocab, table);
      items.push_back(std::move(item));
    }
  }
  return items;
}

TrainResult train(Model& model, const std::vector<TrainItem>& items, const TrainConfig& cfg,
                  const std::string& checkpoint_path, std::ostream* log,
                  const std::string& resume_from) {
  cfg.validate();
  if (items.empty()) throw InputError("trainer: no training items");

  const int n = static_cast<int>(items.size());
  int batches_per_epoch = n / cfg.batch_size;
  if (n % cfg.batch_size >= 2) ++batches_per_epoch;
  if (batches_per_epoch == 0) {
    throw InputError("trainer: need at least 2 items to form a batch");
  }
  int total_steps = cfg.epochs * batches_per_epoch;
  if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);
  if (total_steps < 1) throw InputError("trainer: schedule has no steps");

  std::mt19937_64 rng(cfg.seed);
  AdamState adam;
  int step = 0;
  int start_epoch = 0;

  if (!resume_from.empty()) {
    CheckpointExtra extra;
    Model restored = load_checkpoint(resume_from, &extra);
    if (restored.params().size() != model.params().size()) {
      throw InputError("resume: checkpoint does not match the model");
    }
    auto need_mat = [&](const std::string& key) -> const Mat& {
      auto it = extra.mats.find(key);
      if (it == extra.mats.end()) {
        throw InputError("resume: checkpoint missing training state '" + key + "'");
      }
      return it->second;
    };
    for (size_t i = 0; i < model.params().size(); ++i) {
      Param& p = model.params()[i];
      p.value = restored.params()[i].value;
      p.m = need_mat("opt.m/" + p.name);
      p.v = need_mat("opt.v/" + p.name);
    }
    adam.t = static_cast<int>(need_mat("train.adam_t")(0, 0));
    step = static_cast<int>(need_mat("train.step")(0, 0));
    start_epoch = static_cast<int>(need_mat("train.epoch")(0, 0));
    auto rng_it = extra.blobs.find("train.rng");
    if (rng_it == extra.blobs.end()) throw InputError("resume: checkpoint missing rng state");
    std::istringstream rs(rng_it->second);
    rs >> rng;
    model.invalidate_cache();
  }

  auto save = [&](int epoch_done) {
    if (checkpoint_path.empty()) return;
    CheckpointExtra extra;
    for (const auto& p : model.params()) {
      extra.mats["opt.m/" + p.name] =
          p.m.size() != 0 ? p.m : Mat::Zero(p.value.rows(), p.value.cols());
      extra.mats["opt.v/" + p.name] =
          p.v.size() != 0 ? p.v : Mat::Zero(p.value.rows(), p.value.cols());
    }
    extra.mats["train.adam_t"] = Mat::Constant(1, 1, adam.t);
    extra.mats["train.step"] = Mat::Constant(1, 1, step);
    extra.mats["train.epoch"] = Mat::Constant(1, 1, epoch_done);
    std::ostringstream rs;
    rs << rng;
    extra.blobs["train.rng"] = rs.str();
    save_checkpoint(checkpoint_path, model, extra);
  };

  TrainResult result;
  std::vector<int> order(static_cast<size_t>(n));
  bool stop = false;

  for (int epoch = start_epoch; epoch < cfg.epochs && !stop; ++epoch) {
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    fisher_yates(order, rng);
    for (int batch_start = 0; batch_start < n; batch_start += cfg.batch_size) {
      const int batch_n = std::min(cfg.batch_size, n - batch_start);
      if (batch_n < 2) break;  // a 1-cut tail cannot form a contrastive batch
      if (step >= total_steps) {
        stop = true;
        break;
      }

      std::vector<const VideoCut*> cuts;
      std::vector<const PromptBundle*> bundles;
      for (int j = 0; j < batch_n; ++j) {
        const TrainItem& item = items[static_cast<size_t>(order[static_cast<size_t>(batch_start + j)])];
        cuts.push_back(&item.cut);
        bundles.push_back(&item.bundle);
      }

      ag::Tape tape;
      Model::GraphParams params = model.leaf_params(tape, /*requires_grad=*/true);
      TotalLossGraph graph = total_loss_graph(tape, model, params, cuts, bundles, cfg.weights);

      const std::string line = graph.report.to_line(step);
      result.loss_lines.push_back(line);
      if (log != nullptr) (*log) << line << "\n";

      if (!std::isfinite(graph.report.total)) {
        throw NumericError("training aborted: non-finite loss at " + line);
      }

      if (graph.has_terms) {
        tape.backward(graph.loss);
        std::vector<Mat> grads;
        grads.reserve(model.params().size());
        for (size_t i = 0; i < model.params().size(); ++i) {
          const Mat& g = tape.grad(params.vars[i]);
          grads.push_back(g.size() != 0 ? g
                                        : Mat::Zero(model.params()[i].value.rows(),
                                                    model.params()[i].value.cols()));
        }
        const double lr = lr_at(std::min(step + 1, total_steps), total_steps, cfg);
        adam_update(model, grads, lr, cfg.weight_decay, adam);
      }

      result.final_loss = graph.report.total;
      ++step;
      if (cfg.early_stop_loss > 0.0 && graph.has_terms &&
          graph.report.total < cfg.early_stop_loss) {
        stop = true;
        break;
      }
    }
    if (!stop) save(epoch + 1);
    if (cfg.stop_after_epochs > 0 && epoch + 1 >= cfg.stop_after_epochs) {
      result.steps_run = step;
      return result;
    }
  }
  save(cfg.epochs);
  result.steps_run = step;
  return result;
}

}  // namespace actprompt
