#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/reduction.hpp"

namespace qgrom {

/// LSTM training hyperparameters. Two presets match the model families used
/// for vorticity (1 layer, 100 cells, batch 8) and stream function
/// (3 layers, 50 cells, batch 16, dropout 0.1).
struct LstmHyper {
  int layers = 1;
  int cells = 100;
  int batch_size = 8;
  int epochs = 500;
  double validation_fraction = 0.2;
  double learning_rate = 1e-3;
  double dropout = 0.0;
  double weight_decay = 1e-5;
  int lookback = 3;  ///< sigma_L

  static LstmHyper preset_q();
  static LstmHyper preset_psi();
  void validate() const;
};

/// Per-component affine map to [-1,1]; components with zero range map to 0.
struct AffineNorm {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;  ///< half-range, >= 0

  Eigen::VectorXd normalize(const Eigen::VectorXd& x) const;
  Eigen::VectorXd denormalize(const Eigen::VectorXd& x) const;
  static AffineNorm fit(const Eigen::MatrixXd& rows);  ///< per-column min/max
};

/// Supervised windows built from a coefficient table: each input is a
/// sigma_L x (N + d + 1) matrix with rows (mu, t, alpha(t)) ordered newest
/// first (times strictly decreasing down the window); the target is the
/// coefficient vector one step ahead. Inputs and targets are stored
/// normalized; the fitted statistics travel with the dataset.
struct SequenceDataset {
  int lookback = 0;
  int input_width = 0;   ///< N + d + 1
  int output_width = 0;  ///< N
  int param_dim = 0;     ///< d
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::VectorXd> targets;
  std::vector<int> sample_of;  ///< parameter index of each window
  AffineNorm input_norm;
  AffineNorm target_norm;

  int size() const { return static_cast<int>(inputs.size()); }
};

SequenceDataset build_dataset(const CoefficientTable& coeffs,
                              const Eigen::MatrixXd& samples,
                              const std::vector<double>& times, int sigma_L);

struct LstmLayerParams {
  // gate order: input, forget, candidate, output
  Eigen::MatrixXd Wi, Wf, Wg, Wo;  ///< cells x layer input width
  Eigen::MatrixXd Ui, Uf, Ug, Uo;  ///< cells x cells
  Eigen::VectorXd bi, bf, bg, bo;

  void set_zero(int cells, int in_width);
};

/// Stacked LSTM mapping a lookback window to the next coefficient vector.
struct LstmModel {
  LstmHyper hyper;
  int input_width = 0;
  int output_width = 0;
  std::vector<LstmLayerParams> layers;
  Eigen::MatrixXd W_out;  ///< output_width x cells
  Eigen::VectorXd b_out;
  AffineNorm input_norm;
  AffineNorm target_norm;
  std::uint64_t seed = 0;

  bool all_finite() const;
};

/// Deterministic inference pass (dropout off). The window must already be
/// normalized with the model's statistics; rows are consumed oldest to
/// newest (bottom row first).
Eigen::VectorXd forward(const LstmModel& model, const Eigen::MatrixXd& window);

struct TrainResult {
  LstmModel model;
  std::vector<double> train_loss;  ///< per-epoch mean batch MSE (normalized)
  std::vector<double> val_loss;    ///< per-epoch validation MSE, NaN if none
};

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) on the MSE loss with decoupled
/// weight decay. The chronologically last validation_fraction of each
/// parameter's windows is held out. Reproducible: one seeded generator drives
/// initialization, epoch shuffling and dropout masks.
TrainResult train(const SequenceDataset& dataset, const LstmHyper& hyper,
                  std::uint64_t seed);

/// Central finite differences vs backpropagation on one (window, target)
/// pair; checks up to n_params randomly chosen parameters. Returns the
/// maximum relative discrepancy.
struct GradientCheckResult {
  double max_relative = 0.0;
  double max_absolute = 0.0;
  int checked = 0;
};
GradientCheckResult gradient_check(const LstmModel& model,
                                   const Eigen::MatrixXd& window,
                                   const Eigen::VectorXd& target,
                                   double epsilon, std::uint64_t seed = 0,
                                   int n_params = 100,
                                   bool with_dropout_mask = false);

struct RolloutResult {
  Eigen::MatrixXd coeffs;  ///< steps x N, de-normalized
  bool mu_outside_training_box = false;
};

/// Autoregressive prediction: each output becomes the newest window row with
/// the next horizon time stamp and constant mu. seed_window is in raw
/// (de-normalized) units, newest row first.
RolloutResult predict_autoregressive(const LstmModel& model,
                                     const Eigen::MatrixXd& seed_window,
                                     const Eigen::VectorXd& mu,
                                     const std::vector<double>& horizon_times);

/// Model archive, magic "QGLSTM01": hyperparameters, normalization
/// statistics, seed, and all weights.
void write_model(const LstmModel& model, const std::string& path);
LstmModel read_model(const std::string& path);

/// CSV "epoch,train_mse,val_mse".
void write_loss_history_csv(const TrainResult& result, const std::string& path);

}  // namespace qgrom
