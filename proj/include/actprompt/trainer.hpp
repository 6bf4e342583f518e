#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "actprompt/contrastive.hpp"
#include "actprompt/dataset.hpp"
#include "actprompt/model.hpp"
#include "actprompt/prompts.hpp"
#include "actprompt/sampler.hpp"

namespace actprompt {

struct TrainConfig {
  int batch_size = 12;
  int epochs = 50;
  int max_steps = 0;          // 0 = run all epochs
  double base_lr = 1e-3;      // desk-scale from-scratch default
  double weight_decay = 0.2;
  double warmup_frac = 0.1;
  std::uint64_t seed = 0;
  LossWeights weights;
  double early_stop_loss = 0.0;  // stop once total drops below; 0 disables
  // Halt after this many epochs without shortening the lr schedule; the
  // checkpoint then resumes the same run. 0 runs to completion.
  int stop_after_epochs = 0;

  void validate() const;  // throws InputError
};

// Linear warm-up over the first warmup_frac*total_steps, then cosine decay
// to zero at total_steps.
double lr_at(int step, int total_steps, const TrainConfig& cfg);

struct TrainItem {
  VideoCut cut;
  PromptBundle bundle;
};

// Every planned window of every video, with its prompt bundle.
std::vector<TrainItem> prepare_training_items(const std::vector<AnnotatedVideo>& videos,
                                              const SampleConfig& sample_cfg,
                                              const ActionVocab& vocab,
                                              const VariantTable& table);

struct TrainResult {
  std::vector<std::string> loss_lines;
  int steps_run = 0;
  double final_loss = 0.0;
};

// Shuffles items each epoch with a seeded generator, forms batches of
// batch_size, applies decoupled-weight-decay Adam, and checkpoints at every
// epoch end when checkpoint_path is non-empty. Resumable to a bit-identical
// continuation. Throws NumericError on a non-finite loss.
TrainResult train(Model& model, const std::vector<TrainItem>& items, const TrainConfig& cfg,
                  const std::string& checkpoint_path = "", std::ostream* log = nullptr,
                  const std::string& resume_from = "");

}  // namespace actprompt
