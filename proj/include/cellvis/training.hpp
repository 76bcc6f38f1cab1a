#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "cellvis/tensor.hpp"

namespace cellvis {

struct TrainOptions {
  int epochs = 30;
  int batchSize = 32;
  int patience = 5;
  nn::AdamOptions adam;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

struct EpochLog {
  int epoch = 0;
  double trainMse = 0.0;
  double valMse = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> curve;
  int bestEpoch = 0;
  double bestLoss = 0.0;
  bool stoppedEarly = false;
};

/// Loss of one mini-batch and the number of target entries it averages over.
/// A weight of 0 skips the batch.
struct BatchLoss {
  nn::Tensor loss;
  double weight = 0.0;
};

/// Shuffled mini-batch Adam over `sampleCount` samples. Early stopping
/// watches `validationLoss` (the epoch's training loss when it is empty);
/// the best parameters are restored before returning.
TrainResult runTraining(nn::ParameterSet& params, std::size_t sampleCount,
                        const std::function<BatchLoss(std::span<const std::size_t>)>& batchLoss,
                        const std::function<double()>& validationLoss, const TrainOptions& options,
                        const std::function<void(const EpochLog&)>& onEpoch = {});

/// "epoch,train_mse,val_mse" rows.
void writeLossCsv(const std::filesystem::path& path, const std::vector<EpochLog>& curve);

}  // namespace cellvis
