#include "satpred/regress/mlp.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "satpred/error.hpp"

namespace satpred {

void validate(const MlpParams& p) {
  if (p.layers.empty()) throw ConfigError("mlp needs at least one hidden layer");
  for (int w : p.layers) {
    if (w < 1) throw ConfigError("mlp layer widths must be >= 1");
  }
  if (!(p.lr > 0.0)) throw ConfigError("mlp lr must be positive");
  if (p.epochs < 1) throw ConfigError("mlp epochs must be >= 1");
  if (p.batch < 1) throw ConfigError("mlp batch must be >= 1");
  if (p.patience < 0) throw ConfigError("mlp patience must be >= 0");
}

Mlp Mlp::init(Eigen::Index inputs, const std::vector<int>& hidden, double output_bias, Rng& rng) {
  Mlp m;
  Eigen::Index fan_in = inputs;
  std::vector<Eigen::Index> widths(hidden.begin(), hidden.end());
  widths.push_back(1);
  for (Eigen::Index out : widths) {
    const double limit = std::sqrt(6.0 / static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
    Eigen::MatrixXd W(out, fan_in);
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = rng.uniform(-limit, limit);
    }
    m.weights.push_back(std::move(W));
    m.biases.push_back(Eigen::VectorXd::Zero(out));
    fan_in = out;
  }
  m.weights.back().setZero();
  m.biases.back()[0] = output_bias;
  m.input_mean = Eigen::VectorXd::Zero(inputs);
  m.input_scale = Eigen::VectorXd::Ones(inputs);
  return m;
}

Eigen::MatrixXd Mlp::standardize(const Eigen::MatrixXd& X) const {
  if (X.cols() != inputs()) throw DataError("mlp input has the wrong width");
  return ((X.rowwise() - input_mean.transpose()).array().rowwise() / input_scale.transpose().array()).transpose();
}

Eigen::RowVectorXd Mlp::forward(const Eigen::MatrixXd& Z) const {
  Eigen::MatrixXd a = Z;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Eigen::MatrixXd pre = (weights[l] * a).colwise() + biases[l];
    if (l + 1 < weights.size()) a = pre.cwiseMax(0.0);
    else a = std::move(pre);
  }
  return a.row(0);
}

Eigen::VectorXd Mlp::predict(const Eigen::MatrixXd& X) const { return forward(standardize(X)).transpose(); }

double Mlp::loss(const Eigen::MatrixXd& Z, const Eigen::RowVectorXd& y) const {
  return (forward(Z) - y).squaredNorm() / static_cast<double>(y.size());
}

double Mlp::loss_and_gradient(const Eigen::MatrixXd& Z, const Eigen::RowVectorXd& y, MlpGradient& grad) const {
  const std::size_t L = weights.size();
  const auto n = static_cast<double>(Z.cols());
  std::vector<Eigen::MatrixXd> acts;  // inputs to each layer
  std::vector<Eigen::MatrixXd> pres;  // pre-activations of hidden layers
  acts.reserve(L);
  pres.reserve(L);
  acts.push_back(Z);
  Eigen::MatrixXd out;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd pre = (weights[l] * acts.back()).colwise() + biases[l];
    if (l + 1 < L) {
      acts.push_back(pre.cwiseMax(0.0));
      pres.push_back(std::move(pre));
    } else {
      out = std::move(pre);
    }
  }
  const Eigen::RowVectorXd err = out.row(0) - y;
  const double loss = err.squaredNorm() / n;

  grad.weights.resize(L);
  grad.biases.resize(L);
  Eigen::MatrixXd delta = (2.0 / n) * err;  // d loss / d pre-activation, 1 x n
  for (std::size_t l = L; l-- > 0;) {
    grad.weights[l] = delta * acts[l].transpose();
    grad.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = (weights[l].transpose() * delta).cwiseProduct((pres[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return loss;
}

std::size_t Mlp::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  return n;
}

Eigen::VectorXd Mlp::flat_parameters() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(num_parameters()));
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.segment(k, weights[l].size()) = weights[l].reshaped();
    k += weights[l].size();
    flat.segment(k, biases[l].size()) = biases[l];
    k += biases[l].size();
  }
  return flat;
}

void Mlp::set_flat_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(num_parameters())) throw DataError("parameter vector has the wrong size");
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l].reshaped() = flat.segment(k, weights[l].size());
    k += weights[l].size();
    biases[l] = flat.segment(k, biases[l].size());
    k += biases[l].size();
  }
}

Eigen::VectorXd Mlp::flatten(const MlpGradient& grad) {
  Eigen::Index total = 0;
  for (std::size_t l = 0; l < grad.weights.size(); ++l) total += grad.weights[l].size() + grad.biases[l].size();
  Eigen::VectorXd flat(total);
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < grad.weights.size(); ++l) {
    flat.segment(k, grad.weights[l].size()) = grad.weights[l].reshaped();
    k += grad.weights[l].size();
    flat.segment(k, grad.biases[l].size()) = grad.biases[l];
    k += grad.biases[l].size();
  }
  return flat;
}

namespace {

struct Adam {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  long long t = 0;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit Adam(const Mlp& m) {
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      mw.push_back(Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
      vw.push_back(mw.back());
      mb.push_back(Eigen::VectorXd::Zero(m.biases[l].size()));
      vb.push_back(mb.back());
    }
  }

  void step(Mlp& m, const MlpGradient& g, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
    const double step = lr * std::sqrt(c2) / c1;
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      mw[l] = kBeta1 * mw[l] + (1.0 - kBeta1) * g.weights[l];
      vw[l] = kBeta2 * vw[l] + (1.0 - kBeta2) * g.weights[l].cwiseAbs2();
      m.weights[l].array() -= step * mw[l].array() / (vw[l].array().sqrt() + kEps);
      mb[l] = kBeta1 * mb[l] + (1.0 - kBeta1) * g.biases[l];
      vb[l] = kBeta2 * vb[l] + (1.0 - kBeta2) * g.biases[l].cwiseAbs2();
      m.biases[l].array() -= step * mb[l].array() / (vb[l].array().sqrt() + kEps);
    }
  }
};

}  // namespace

MlpFit fit_mlp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const MlpParams& params, std::uint64_t seed,
               ValidationSet val) {
  validate(params);
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n < 1) throw DataError("mlp needs at least one row");
  if (y.size() != n) throw DataError("mlp: X and y disagree in length");
  if (val && val.X->cols() != p) throw DataError("mlp: validation set has a different width");

  Rng rng(seed);
  MlpFit fit;
  fit.model = Mlp::init(p, params.layers, y.mean(), rng);
  Mlp& model = fit.model;
  model.input_mean = X.colwise().mean().transpose();
  model.input_scale = ((X.rowwise() - model.input_mean.transpose()).cwiseAbs2().colwise().sum() / static_cast<double>(n))
                          .cwiseSqrt()
                          .transpose();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(model.input_scale[j] > 0.0)) model.input_scale[j] = 1.0;
  }

  const Eigen::MatrixXd Z = model.standardize(X);
  const Eigen::RowVectorXd yt = y.transpose();
  Eigen::MatrixXd Zval;
  Eigen::RowVectorXd yval;
  if (val) {
    Zval = model.standardize(*val.X);
    yval = val.y->transpose();
  }

  const Eigen::Index batch = std::min<Eigen::Index>(params.batch, n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Adam adam(model);
  MlpGradient grad;
  Eigen::MatrixXd Zb;
  Eigen::RowVectorXd yb;

  const bool early_stop = val && params.patience > 0;
  double best_val = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_params;
  int since_best = 0;

  for (int epoch = 1; epoch <= params.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index len = std::min(batch, n - start);
      Zb.resize(p, len);
      yb.resize(len);
      for (Eigen::Index j = 0; j < len; ++j) {
        const Eigen::Index src = order[static_cast<std::size_t>(start + j)];
        Zb.col(j) = Z.col(src);
        yb[j] = yt[src];
      }
      const double loss = model.loss_and_gradient(Zb, yb, grad);
      if (!std::isfinite(loss)) {
        throw DataError("mlp loss became non-finite at epoch " + std::to_string(epoch) +
                        "; the learning rate is probably too high");
      }
      epoch_loss += loss * static_cast<double>(len);
      adam.step(model, grad, params.lr);
    }
    fit.train_loss.push_back(epoch_loss / static_cast<double>(n));
    fit.epochs_run = epoch;
    if (val) {
      const double rmse = std::sqrt(model.loss(Zval, yval));
      if (!std::isfinite(rmse)) throw DataError("mlp validation loss became non-finite");
      fit.val_curve.push_back(rmse);
      if (rmse < best_val) {
        best_val = rmse;
        fit.best_epoch = epoch;
        since_best = 0;
        if (early_stop) best_params = model.flat_parameters();
      } else if (early_stop && ++since_best >= params.patience) {
        break;
      }
    } else {
      fit.best_epoch = epoch;
    }
  }
  if (early_stop && best_params.size() > 0) model.set_flat_parameters(best_params);
  return fit;
}

}  // namespace satpred
