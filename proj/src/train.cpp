#include "dwcaps/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dwcaps/checkpoint.hpp"
#include "dwcaps/rng.hpp"

namespace dwcaps {

void TrainConfig::validate() const {
  if (epochs < 1) throw DomainError("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw DomainError("TrainConfig: batch_size must be >= 1");
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0)) {
    throw DomainError("TrainConfig: subsample_fraction must be in (0,1]");
  }
  if (optimizer != "adam" && optimizer != "sgd") {
    throw DomainError("TrainConfig: optimizer must be adam or sgd");
  }
}

std::string RunRecord::to_csv() const {
  std::string out = "epoch,train_loss,train_acc,test_acc,seconds\n";
  char buf[160];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.3f\n", e.epoch,
                  e.train_loss, e.train_acc, e.test_acc, e.seconds);
    out += buf;
  }
  return out;
}

namespace {

template <class T>
class Optimizer {
 public:
  Optimizer(std::vector<Var<T>> params, const TrainConfig& cfg)
      : params_(std::move(params)),
        lr_(static_cast<T>(cfg.learning_rate)),
        adam_(cfg.optimizer == "adam") {
    if (adam_) {
      for (const auto& p : params_) {
        m_.emplace_back(p.value().shape());
        v_.emplace_back(p.value().shape());
      }
    }
  }

  void step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Var<T>& p = params_[i];
      if (p.grad().empty()) continue;
      Tensor<T>& w = p.mutable_value();
      const Tensor<T>& g = p.grad();
      if (!adam_) {
        for (std::int64_t j = 0; j < w.size(); ++j) w[j] -= lr_ * g[j];
        continue;
      }
      const T b1 = T(0.9), b2 = T(0.999), eps = T(1e-8);
      const T corr1 = T(1) - std::pow(b1, static_cast<T>(t_));
      const T corr2 = T(1) - std::pow(b2, static_cast<T>(t_));
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      for (std::int64_t j = 0; j < w.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        const T mhat = m[j] / corr1;
        const T vhat = v[j] / corr2;
        w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::vector<Var<T>> params_;
  T lr_;
  bool adam_;
  long t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace

template <class T>
EvalResult evaluate(const ModelGraph<T>& model, const DatasetBundle& data,
                    const std::vector<std::int64_t>& indices) {
  if (model.capsules().num_classes != data.num_classes()) {
    throw ContractError("evaluate: model has " +
                        std::to_string(model.capsules().num_classes) +
                        " classes, dataset has " +
                        std::to_string(data.num_classes()));
  }
  const auto classes = static_cast<std::size_t>(data.num_classes());
  EvalResult result;
  result.confusion.assign(classes, std::vector<std::int64_t>(classes, 0));
  if (indices.empty()) return result;

  NoGradGuard no_grad;
  constexpr std::int64_t kEvalBatch = 64;
  std::int64_t correct = 0;
  for (std::size_t at = 0; at < indices.size();
       at += static_cast<std::size_t>(kEvalBatch)) {
    const std::size_t hi = std::min(indices.size(),
                                    at + static_cast<std::size_t>(kEvalBatch));
    std::vector<std::int64_t> chunk(indices.begin() + at, indices.begin() + hi);
    Var<T> images = Var<T>::constant(data.batch<T>(chunk));
    Tensor<T> caps = model.forward(images).value();
    const std::vector<int> predicted = class_predictions(caps);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const int target = data.labels[static_cast<std::size_t>(chunk[b])];
      ++result.confusion[static_cast<std::size_t>(target)]
                        [static_cast<std::size_t>(predicted[b])];
      if (predicted[b] == target) ++correct;
    }
  }
  result.accuracy =
      static_cast<double>(correct) / static_cast<double>(indices.size());
  return result;
}

template <class T>
RunRecord train(ModelGraph<T>& model, const DatasetBundle& data,
                const TrainConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  if (model.capsules().num_classes != data.num_classes()) {
    throw ContractError("train: model has " +
                        std::to_string(model.capsules().num_classes) +
                        " classes, dataset has " +
                        std::to_string(data.num_classes()));
  }
  if (data.train_indices.empty() || data.test_indices.empty()) {
    throw ContractError("train: dataset has no train/test split");
  }

  std::vector<Var<T>> leaves;
  for (auto& [name, var] : model.parameters()) leaves.push_back(var);
  Optimizer<T> optimizer(leaves, cfg);

  RunRecord record;
  std::vector<std::int64_t> order = data.train_indices;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng(mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0;
    std::int64_t seen = 0;
    for (std::size_t at = 0; at < order.size();
         at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi =
          std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::int64_t> chunk(order.begin() + at, order.begin() + hi);
      Var<T> images = Var<T>::constant(data.batch<T>(chunk));
      Var<T> loss = margin_loss(model.forward(images), data.labels_for(chunk));
      const double loss_value = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(loss_value)) {
        throw TrainingError("training diverged: loss " +
                            std::to_string(loss_value) + " at epoch " +
                            std::to_string(epoch) + ", item " +
                            std::to_string(at));
      }
      optimizer.zero_grad();
      backward(loss);
      optimizer.step();
      loss_sum += loss_value * static_cast<double>(chunk.size());
      seen += static_cast<std::int64_t>(chunk.size());
    }

    EpochRecord row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(seen);
    row.train_acc = evaluate(model, data, data.train_indices).accuracy;
    row.test_acc = evaluate(model, data, data.test_indices).accuracy;
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    record.epochs.push_back(row);
    if (cfg.stop_at_train_acc >= 0 && row.train_acc >= cfg.stop_at_train_acc)
      break;
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::uint32_t checksum =
        save_checkpoint(model, out_dir + "/model.ckpt");
    char hex[16];
    std::snprintf(hex, sizeof(hex), "%08x", checksum);
    record.final_checksum = hex;
    std::ofstream csv(out_dir + "/run.csv", std::ios::binary | std::ios::trunc);
    if (!csv) throw FormatError("cannot write " + out_dir + "/run.csv");
    csv << record.to_csv();
  }
  return record;
}

#define DWCAPS_INSTANTIATE(T)                                            \
  template RunRecord train<T>(ModelGraph<T>&, const DatasetBundle&,      \
                              const TrainConfig&, const std::string&);   \
  template EvalResult evaluate<T>(const ModelGraph<T>&,                  \
                                  const DatasetBundle&,                  \
                                  const std::vector<std::int64_t>&);

DWCAPS_INSTANTIATE(float)
DWCAPS_INSTANTIATE(double)
#undef DWCAPS_INSTANTIATE

}  // namespace dwcaps
