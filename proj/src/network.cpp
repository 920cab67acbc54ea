#include "fq/network.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace fq {

double Activation::lipschitz() const {
  switch (kind) {
    case ActivationKind::LeakyReLU:
      return std::max(1.0, std::abs(alpha));
    case ActivationKind::ReLU:
    case ActivationKind::Identity:
      break;
  }
  return 1.0;
}

void Activation::apply(Eigen::VectorXd& v) const {
  switch (kind) {
    case ActivationKind::ReLU:
      v = v.cwiseMax(0.0);
      break;
    case ActivationKind::LeakyReLU:
      v = v.unaryExpr([a = alpha](double t) { return t >= 0.0 ? t : a * t; });
      break;
    case ActivationKind::Identity:
      break;
  }
}

Eigen::Index layer_in(const Layer& layer) {
  return std::visit([](const auto& l) -> Eigen::Index {
    if constexpr (std::is_same_v<std::decay_t<decltype(l)>, AffineLayer>) {
      return l.in();
    } else {
      return l.width();
    }
  }, layer);
}

Eigen::Index layer_out(const Layer& layer) {
  return std::visit([](const auto& l) -> Eigen::Index {
    if constexpr (std::is_same_v<std::decay_t<decltype(l)>, AffineLayer>) {
      return l.out();
    } else {
      return l.width();
    }
  }, layer);
}

void Model::validate() const {
  if (layers.empty()) throw InvalidArgument("model has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (const auto* a = std::get_if<AffineLayer>(&layers[i])) {
      if (a->W.size() == 0) throw InvalidArgument(fmt::format("layer {}: empty weight matrix", i));
      if (a->b && a->b->size() != a->out()) {
        throw InvalidArgument(fmt::format("layer {}: bias has {} entries, expected {}", i, a->b->size(), a->out()));
      }
    } else {
      const auto& r = std::get<ResidualBlock>(layers[i]);
      const auto k = r.W1.rows();
      if (k == 0 || r.W1.cols() != k || r.W2.rows() != k || r.W2.cols() != k) {
        throw InvalidArgument(fmt::format("layer {}: residual block weights must both be k x k", i));
      }
      if (r.b && r.b->size() != k) throw InvalidArgument(fmt::format("layer {}: residual bias size mismatch", i));
    }
    if (i > 0 && layer_in(layers[i]) != layer_out(layers[i - 1])) {
      throw InvalidArgument(fmt::format("layer {}: input dimension {} does not match previous output {}", i,
                                        layer_in(layers[i]), layer_out(layers[i - 1])));
    }
  }
  if (has_residual() && activation.kind != ActivationKind::ReLU) {
    throw InvalidArgument("residual blocks require the ReLU activation");
  }
}

Eigen::Index Model::input_dim() const { return layers.empty() ? 0 : layer_in(layers.front()); }
Eigen::Index Model::output_dim() const { return layers.empty() ? 0 : layer_out(layers.back()); }

bool Model::has_residual() const {
  return std::any_of(layers.begin(), layers.end(),
                     [](const Layer& l) { return std::holds_alternative<ResidualBlock>(l); });
}

bool Model::has_bias() const {
  return std::any_of(layers.begin(), layers.end(), [](const Layer& l) {
    return std::visit([](const auto& x) { return x.b.has_value(); }, l);
  });
}

Eigen::VectorXd forward(const Model& model, const Eigen::VectorXd& x) {
  model.validate();
  if (x.size() != model.input_dim()) {
    throw InvalidArgument(fmt::format("input has dimension {}, model expects {}", x.size(), model.input_dim()));
  }
  Eigen::VectorXd v = x;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (i > 0) model.activation.apply(v);
    if (const auto* a = std::get_if<AffineLayer>(&model.layers[i])) {
      Eigen::VectorXd next = a->W * v;
      if (a->b) next += *a->b;
      v = std::move(next);
    } else {
      const auto& r = std::get<ResidualBlock>(model.layers[i]);
      Eigen::VectorXd inner = r.W1 * v;
      if (r.b) inner += *r.b;
      model.activation.apply(inner);
      v = r.W2 * inner + v;
    }
  }
  return v;
}

std::size_t classify(const Eigen::VectorXd& output) {
  if (output.size() == 0) throw InvalidArgument("classify: empty output");
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < output.size(); ++i) {
    if (output(i) > output(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  }
  return best;
}

std::size_t classify(const Model& model, const Eigen::VectorXd& x) { return classify(forward(model, x)); }

}  // namespace fq
