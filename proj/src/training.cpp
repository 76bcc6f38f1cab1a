#include "cellvis/training.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

#include "cellvis/errors.hpp"

namespace cellvis {

TrainResult runTraining(nn::ParameterSet& params, std::size_t sampleCount,
                        const std::function<BatchLoss(std::span<const std::size_t>)>& batchLoss,
                        const std::function<double()>& validationLoss, const TrainOptions& options,
                        const std::function<void(const EpochLog&)>& onEpoch) {
  if (sampleCount == 0) throw ArgumentError("train: empty dataset");
  if (options.batchSize < 1 || options.epochs < 1 || options.patience < 1)
    throw ConfigError("train: epochs, batch_size and patience must be positive");
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(sampleCount);
  std::iota(order.begin(), order.end(), 0);
  nn::AdamState adam;
  adam.options = options.adam;

  TrainResult result;
  result.bestLoss = std::numeric_limits<double>::infinity();
  nn::ParameterSet best = params.clone();
  const auto batch = static_cast<std::size_t>(options.batchSize);

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    if (options.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0, weight = 0.0;
    for (std::size_t i = 0; i < order.size(); i += batch) {
      const std::span<const std::size_t> ids(order.data() + i, std::min(batch, order.size() - i));
      params.zeroGrad();
      const BatchLoss b = batchLoss(ids);
      if (b.weight == 0.0) continue;
      nn::backward(b.loss);
      nn::adamStep(params, adam);
      total += b.loss.item() * b.weight;
      weight += b.weight;
    }
    EpochLog log{epoch, weight > 0.0 ? total / weight : 0.0, 0.0};
    log.valMse = validationLoss ? validationLoss() : log.trainMse;
    result.curve.push_back(log);
    if (onEpoch) onEpoch(log);

    if (log.valMse < result.bestLoss) {
      result.bestLoss = log.valMse;
      result.bestEpoch = epoch;
      best = params.clone();
    } else if (epoch - result.bestEpoch >= options.patience) {
      result.stoppedEarly = true;
      break;
    }
  }
  params.assign(best);
  params.zeroGrad();
  return result;
}

void writeLossCsv(const std::filesystem::path& path, const std::vector<EpochLog>& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss curve: " + path.string());
  out << "epoch,train_mse,val_mse\n" << std::setprecision(17);
  for (const auto& e : curve) out << e.epoch << ',' << e.trainMse << ',' << e.valMse << '\n';
}

}  // namespace cellvis
