#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sqz/augment.hpp"
#include "sqz/model.hpp"
#include "sqz/optimizer.hpp"
#include "sqz/schedule.hpp"
#include "sqz/synthetic.hpp"

namespace sqz {

struct TrainOptions {
  int64_t steps = 2000;
  int64_t batch_size = 8;
  int64_t eval_interval = 100;
  int64_t eval_samples = 32;
  int64_t checkpoint_interval = 0;  // 0 = only on request via checkpoint_path
  std::string checkpoint_path;      // final checkpoint, empty = none
  uint64_t seed = 1;
  ScheduleParams schedule;
  AdamWParams optimizer;
  // Stop once eval accuracy reaches this bar (0 disables early stopping).
  double stop_at_accuracy = 0.0;
  // Apply SpecAugment to each training batch (never to eval inputs).
  bool use_spec_augment = false;
  SpecAugmentParams spec_augment;
};

struct TrainRecord {
  int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double accuracy = -1.0;  // -1 on non-eval steps
};

struct TrainLog {
  std::vector<TrainRecord> records;
  double final_accuracy = 0.0;
  int64_t steps_run = 0;

  std::string to_jsonl() const;  // one structured record per line
};

// Single-threaded training loop over freshly generated batches; evaluation
// runs greedy decoding on a fixed held-out set and reports token accuracy
// (1 - edit distance / reference length). Aborts with a diagnostic naming
// the step if the loss stops being finite.
TrainLog train(EncoderModel& model, const SyntheticTask& task,
               const TrainOptions& options);

// Token accuracy of greedy decoding over a sample set (eval mode).
double evaluate_accuracy(const EncoderModel& model,
                         const std::vector<Sample>& samples);

}  // namespace sqz
