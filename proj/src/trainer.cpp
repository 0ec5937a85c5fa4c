#include "sqz/trainer.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "sqz/checkpoint.hpp"
#include "sqz/ctc.hpp"

namespace sqz {

double evaluate_accuracy(const EncoderModel& model,
                         const std::vector<Sample>& samples) {
  int64_t edits = 0, ref_len = 0;
  for (const auto& s : samples) {
    Graph g(false);
    Ctx ctx{g, false, nullptr};
    auto logits = model.forward(ctx, s.features);
    const auto decoded = ctc_greedy_decode(*logits);
    edits += edit_distance(decoded, s.labels);
    ref_len += static_cast<int64_t>(s.labels.size());
  }
  const double acc =
      1.0 - static_cast<double>(edits) / static_cast<double>(ref_len);
  return acc < 0.0 ? 0.0 : acc;
}

TrainLog train(EncoderModel& model, const SyntheticTask& task,
               const TrainOptions& options) {
  validate(task);
  validate(options.schedule);
  if (model.config.vocab_size != task.vocab) {
    throw std::invalid_argument(
        "train: model vocab " + std::to_string(model.config.vocab_size) +
        " does not match task vocab " + std::to_string(task.vocab));
  }

  std::vector<TensorPtr> params;
  for (auto& [name, t] : model.named_parameters()) params.push_back(t);
  AdamW optimizer(params, options.optimizer);

  Rng root(options.seed);
  Rng dropout_rng = root.fork(0x11);
  SyntheticTask eval_task = task;
  eval_task.seed = root.fork(0x22).next_u64();
  const auto eval_set = gen_synthetic(eval_task, options.eval_samples);

  TrainLog log;
  for (int64_t step = 1; step <= options.steps; ++step) {
    SyntheticTask step_task = task;
    step_task.seed = Rng(task.seed).fork(static_cast<uint64_t>(step)).next_u64();
    const auto batch = gen_synthetic(step_task, options.batch_size);

    Graph g;
    Ctx ctx{g, true, &dropout_rng};
    optimizer.zero_grad();
    TensorPtr total;
    int64_t sample_index = 0;
    for (const auto& s : batch) {
      auto features = s.features;
      if (options.use_spec_augment) {
        features = spec_augment(
            features, options.spec_augment,
            Rng(options.seed)
                .fork(0x5A << 16)
                .fork(static_cast<uint64_t>(step))
                .fork(static_cast<uint64_t>(sample_index))
                .next_u64());
      }
      ++sample_index;
      auto logits = model.forward(ctx, features);
      auto lp = log_softmax(g, logits);
      auto loss = ctc_loss(g, lp, s.labels);
      total = total ? add(g, total, loss) : loss;
    }
    auto mean_loss =
        scale(g, total, 1.0 / static_cast<double>(options.batch_size));
    const double loss_value = mean_loss->data[0];
    if (!std::isfinite(loss_value)) {
      throw std::runtime_error("train: diverged at step " +
                               std::to_string(step) + " (loss " +
                               std::to_string(loss_value) + ")");
    }
    g.backward(mean_loss);

    const double step_lr = lr(static_cast<double>(step), options.schedule);
    optimizer.step(step_lr);

    TrainRecord rec{step, step_lr, loss_value, -1.0};
    const bool eval_now =
        options.eval_interval > 0 &&
        (step % options.eval_interval == 0 || step == options.steps);
    if (eval_now) {
      rec.accuracy = evaluate_accuracy(model, eval_set);
      log.final_accuracy = rec.accuracy;
    }
    log.records.push_back(rec);
    log.steps_run = step;

    if (options.checkpoint_interval > 0 && !options.checkpoint_path.empty() &&
        step % options.checkpoint_interval == 0) {
      save_checkpoint(options.checkpoint_path + "." + std::to_string(step),
                      model);
    }
    if (options.stop_at_accuracy > 0.0 && rec.accuracy >= 0.0 &&
        rec.accuracy >= options.stop_at_accuracy) {
      break;
    }
  }
  if (options.eval_interval <= 0) {
    log.final_accuracy = evaluate_accuracy(model, eval_set);
  }
  if (!options.checkpoint_path.empty()) {
    save_checkpoint(options.checkpoint_path, model);
  }
  return log;
}

std::string TrainLog::to_jsonl() const {
  std::ostringstream os;
  os.precision(17);
  for (const auto& r : records) {
    os << "{\"step\":" << r.step << ",\"lr\":" << r.lr
       << ",\"loss\":" << r.loss;
    if (r.accuracy >= 0.0) os << ",\"accuracy\":" << r.accuracy;
    os << "}\n";
  }
  return os.str();
}

}  // namespace sqz
