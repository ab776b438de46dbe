#pragma once

// Fully connected network with tanh hidden layers and a linear output layer,
// with hand-written reverse mode.

#include <Eigen/Dense>
#include <random>
#include <vector>

namespace essvi_mm {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  Eigen::Index input_dim() const { return layers.front().weight.cols(); }
  Eigen::Index output_dim() const { return layers.back().weight.rows(); }
  Eigen::Index num_params() const;

  MlpParams zeros_like() const;
  // Appends all weights (column-major) then the bias of each layer in order.
  void flatten_into(std::vector<double>& out) const;
  // Reads parameters in flatten_into order starting at *offset and advances it.
  void unflatten_from(const std::vector<double>& flat, std::size_t* offset);
  bool all_finite() const;
};

// dims = {in, hidden..., out}. Weights are drawn N(0, gain^2 / fan_in); the last
// layer uses out_gain instead of gain. Biases start at zero.
MlpParams make_mlp(const std::vector<int>& dims, std::mt19937_64& rng, double gain = 1.0,
                   double out_gain = 1.0);

struct MlpCache {
  std::vector<Eigen::VectorXd> inputs;  // input to each layer
  std::vector<Eigen::VectorXd> hidden;  // tanh output of each hidden layer
};

// Throws ShapeMismatch if x has the wrong length.
Eigen::VectorXd mlp_forward(const MlpParams& p, const Eigen::VectorXd& x, MlpCache* cache = nullptr);

// Accumulates dL/dparams into grads (same shape as p) and returns dL/dx.
Eigen::VectorXd mlp_backward(const MlpParams& p, const MlpCache& cache, const Eigen::VectorXd& dy,
                             MlpParams* grads);

}  // namespace essvi_mm
