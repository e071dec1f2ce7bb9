#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svr/linalg.hpp"
#include "svr/tensorio.hpp"

namespace svr {

struct TrainConfig {
  std::vector<std::size_t> widths;  // e.g. {784, 40, 40, 40, 10}
  std::size_t epochs = 5;
  double learning_rate = 0.05;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::optional<std::size_t> train_subset;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0;        // mean training loss over the epoch
  double test_accuracy = 0;
};

struct TrainResult {
  Model model;
  double test_accuracy = 0;
  std::vector<EpochLog> log;

  /// epoch,loss,test_acc with the configuration in a leading comment.
  [[nodiscard]] std::string log_csv(const TrainConfig& config) const;
};

/// Bias-free ReLU MLP named fc0, fc1, ... with an argmax head.
Model mlp_model(const std::vector<std::size_t>& widths);

/// He initialization: N(0, 2 / fan_in) for every weight.
Model he_init(const std::vector<std::size_t>& widths, std::uint64_t seed);

/// Mean softmax cross-entropy over the columns of `inputs` and its gradient
/// with respect to every weight matrix.
double loss_and_gradients(const std::vector<Matrix>& weights, const Matrix& inputs, std::span<const int> labels,
                          std::vector<Matrix>* gradients);

/// Plain mini-batch SGD on shuffled data. Throws NumericalError when the loss
/// stops being finite. `on_epoch` runs after each epoch when set.
TrainResult train_mlp(const TrainConfig& config, const Dataset& train, const Dataset& test,
                      const std::function<void(const EpochLog&)>& on_epoch = {});

struct WidthRun {
  std::size_t n = 0;
  std::size_t run = 0;
  std::size_t d_out[2] = {0, 0};
  std::size_t d_in[2] = {0, 0};
  double accuracy = 0;
};

struct WidthSummary {
  std::size_t n = 0;
  double mean_d_out[2] = {0, 0};
  double mean_d_in[2] = {0, 0};
  double mean_accuracy = 0;
  double d_out_le_d_in[2] = {0, 0};  // share of runs with d_out <= d_in
};

struct WidthReport {
  TrainConfig base;
  std::vector<WidthRun> runs;
  std::vector<WidthSummary> summary;

  [[nodiscard]] std::string runs_csv() const;
  [[nodiscard]] std::string summary_csv() const;
};

/// Trains `runs` networks [input, n, n, classes] per n, builds their SVR and
/// records the internal dimensions of both adjacencies. Run r of width n is
/// seeded from (base.seed, n, r).
WidthReport width_experiment(std::span<const std::size_t> n_values, std::size_t runs, const Dataset& train,
                             const Dataset& test, const TrainConfig& base, unsigned threads = 1);

}  // namespace svr
