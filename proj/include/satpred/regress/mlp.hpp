#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "satpred/regress/gbrt.hpp"
#include "satpred/rng.hpp"

namespace satpred {

struct MlpParams {
  std::vector<int> layers{128, 64};
  double lr = 1e-3;
  int epochs = 200;
  int batch = 64;
  /// Early-stopping patience in epochs on validation RMSE; 0 disables.
  int patience = 10;
};

struct MlpGradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// Fully connected ReLU network with a linear scalar head. Inputs are
/// standardized with training statistics held inside the model. Layer l maps
/// width(l) -> width(l+1); the last layer is the 1-unit output.
class Mlp {
public:
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_scale;

  /// Hidden weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), hidden biases 0, output
  /// weights 0, output bias `output_bias`; identity standardization.
  static Mlp init(Eigen::Index inputs, const std::vector<int>& hidden, double output_bias, Rng& rng);

  Eigen::Index inputs() const { return weights.front().cols(); }

  /// Raw rows in, one prediction per row.
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;

  /// Standardized inputs, one column per sample.
  Eigen::MatrixXd standardize(const Eigen::MatrixXd& X) const;
  Eigen::RowVectorXd forward(const Eigen::MatrixXd& Z) const;

  /// Mean squared error over the columns of Z; fills `grad` by backpropagation.
  double loss_and_gradient(const Eigen::MatrixXd& Z, const Eigen::RowVectorXd& y, MlpGradient& grad) const;
  double loss(const Eigen::MatrixXd& Z, const Eigen::RowVectorXd& y) const;

  std::size_t num_parameters() const;
  /// Layer by layer: weights (column-major) then biases.
  Eigen::VectorXd flat_parameters() const;
  void set_flat_parameters(const Eigen::VectorXd& flat);
  static Eigen::VectorXd flatten(const MlpGradient& grad);
};

struct MlpFit {
  Mlp model;
  std::vector<double> train_loss;
  std::vector<double> val_curve;
  int best_epoch = 0;
  int epochs_run = 0;
};

/// Mini-batch Adam on the MSE objective. With a validation set and
/// patience > 0, stops after `patience` epochs without improvement and
/// returns the best-validation parameters. Throws DataError on a non-finite loss.
MlpFit fit_mlp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const MlpParams& params, std::uint64_t seed,
               ValidationSet val = {});

void validate(const MlpParams& params);

}  // namespace satpred
