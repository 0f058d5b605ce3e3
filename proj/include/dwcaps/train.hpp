#ifndef DWCAPS_TRAIN_HPP_
#define DWCAPS_TRAIN_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "dwcaps/dataset.hpp"
#include "dwcaps/model.hpp"

namespace dwcaps {

struct TrainConfig {
  int epochs = 1;
  std::int64_t batch_size = 32;
  double learning_rate = 1e-3;
  std::string optimizer = "adam";  // "adam" (b1 .9, b2 .999, eps 1e-8) | "sgd"
  std::uint64_t seed = 0;
  double split_ratio = 0.7;
  double subsample_fraction = 0.5;
  std::string variant = "32-v1-2-2-k3";
  CapsuleConfig caps;
  // Stop once the measured train accuracy reaches this value; < 0 disables.
  double stop_at_train_acc = -1.0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;          // 1-based
  double train_loss = 0;  // mean over the epoch's optimization steps
  double train_acc = 0;   // measured on the train split after the epoch
  double test_acc = 0;
  double seconds = 0;     // wall clock, the only non-deterministic column
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  std::string final_checksum;  // CRC-32 (hex) of the saved checkpoint

  // Header: epoch,train_loss,train_acc,test_acc,seconds
  std::string to_csv() const;
};

struct EvalResult {
  double accuracy = 0;
  // confusion[target][predicted]; row sums are the per-class counts.
  std::vector<std::vector<std::int64_t>> confusion;
};

// Mini-batch optimization of the margin loss. The dataset must already be
// split; its class count must match the model. When out_dir is non-empty,
// writes <out_dir>/run.csv and <out_dir>/model.ckpt. A NaN loss aborts
// with TrainingError.
template <class T>
RunRecord train(ModelGraph<T>& model, const DatasetBundle& data,
                const TrainConfig& cfg, const std::string& out_dir);

template <class T>
EvalResult evaluate(const ModelGraph<T>& model, const DatasetBundle& data,
                    const std::vector<std::int64_t>& indices);

}  // namespace dwcaps

#endif  // DWCAPS_TRAIN_HPP_
