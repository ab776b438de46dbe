#include "essvi_mm/mlp.hpp"

#include <cmath>
#include <sstream>

#include "essvi_mm/errors.hpp"

namespace essvi_mm {

Eigen::Index MlpParams::num_params() const {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z;
  z.layers.reserve(layers.size());
  for (const auto& l : layers) {
    z.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                        Eigen::VectorXd::Zero(l.bias.size())});
  }
  return z;
}

void MlpParams::flatten_into(std::vector<double>& out) const {
  for (const auto& l : layers) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
}

void MlpParams::unflatten_from(const std::vector<double>& flat, std::size_t* offset) {
  if (static_cast<Eigen::Index>(flat.size() - *offset) < num_params()) {
    throw ShapeMismatch("flat parameter vector too short");
  }
  for (auto& l : layers) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(*offset), l.weight.size(), l.weight.data());
    *offset += static_cast<std::size_t>(l.weight.size());
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(*offset), l.bias.size(), l.bias.data());
    *offset += static_cast<std::size_t>(l.bias.size());
  }
}

bool MlpParams::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

MlpParams make_mlp(const std::vector<int>& dims, std::mt19937_64& rng, double gain,
                   double out_gain) {
  if (dims.size() < 2) throw ShapeMismatch("network needs an input and an output size");
  std::normal_distribution<double> normal(0.0, 1.0);
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int in = dims[i];
    const int out = dims[i + 1];
    const double g = (i + 2 == dims.size()) ? out_gain : gain;
    const double scale = g / std::sqrt(static_cast<double>(in));
    DenseLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = scale * normal(rng);
    }
    p.layers.push_back(std::move(l));
  }
  return p;
}

Eigen::VectorXd mlp_forward(const MlpParams& p, const Eigen::VectorXd& x, MlpCache* cache) {
  if (p.layers.empty()) throw ShapeMismatch("network has no layers");
  if (x.size() != p.input_dim()) {
    std::ostringstream msg;
    msg << "network expects input of size " << p.input_dim() << ", got " << x.size();
    throw ShapeMismatch(msg.str());
  }
  if (cache) {
    cache->inputs.clear();
    cache->hidden.clear();
  }
  Eigen::VectorXd h = x;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const DenseLayer& l = p.layers[i];
    if (cache) cache->inputs.push_back(h);
    Eigen::VectorXd z = l.weight * h + l.bias;
    if (i + 1 < p.layers.size()) {
      h = z.array().tanh().matrix();
      if (cache) cache->hidden.push_back(h);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Eigen::VectorXd mlp_backward(const MlpParams& p, const MlpCache& cache, const Eigen::VectorXd& dy,
                             MlpParams* grads) {
  if (cache.inputs.size() != p.layers.size()) throw ShapeMismatch("cache does not match network");
  if (dy.size() != p.output_dim()) throw ShapeMismatch("output gradient has the wrong size");
  Eigen::VectorXd g = dy;
  for (std::size_t i = p.layers.size(); i-- > 0;) {
    const DenseLayer& l = p.layers[i];
    if (i + 1 < p.layers.size()) {
      const Eigen::VectorXd& h = cache.hidden[i];
      g = (g.array() * (1.0 - h.array().square())).matrix();
    }
    if (grads) {
      grads->layers[i].weight.noalias() += g * cache.inputs[i].transpose();
      grads->layers[i].bias += g;
    }
    g = l.weight.transpose() * g;
  }
  return g;
}

}  // namespace essvi_mm
