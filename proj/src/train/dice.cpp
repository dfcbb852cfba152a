#include "erfseg/train/dice.hpp"

#include <memory>
#include <stdexcept>

#include "erfseg/error.hpp"

namespace erfseg {

template <typename T>
Var<T> dice_loss(Var<T> prob, const Tensor<T>& target, T eps) {
  const Tensor<T>& p = prob.value();
  if (p.rank() != 4 || p.dim(1) != 1) throw ShapeError("dice_loss expects [B, 1, H, W], got " + shape_str(p.shape()));
  if (target.shape() != p.shape()) {
    throw ShapeError("dice_loss: target " + shape_str(target.shape()) + " vs prob " + shape_str(p.shape()));
  }
  for (T g : target.data()) {
    if (g != T{0} && g != T{1}) throw std::domain_error("dice_loss: target must be binary");
  }
  for (T v : p.data()) {
    // NaN passes through so a diverging network yields a NaN loss, not a domain error.
    if (v < T{0} || v > T{1}) throw std::domain_error("dice_loss: probabilities must lie in [0, 1]");
  }

  const std::size_t batch = p.dim(0), plane = p.numel() / batch;
  // Per-sample numerator 2*I + eps and denominator P + G + eps, accumulated
  // in double for a batch-size independent rounding profile.
  auto num = std::make_shared<std::vector<double>>(batch);
  auto den = std::make_shared<std::vector<double>>(batch);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double inter = 0.0, pp = 0.0, gg = 0.0;
    for (std::size_t i = b * plane; i < (b + 1) * plane; ++i) {
      const double pv = p[i], gv = target[i];
      inter += pv * gv;
      pp += pv * pv;
      gg += gv * gv;
    }
    (*num)[b] = 2.0 * inter + static_cast<double>(eps);
    (*den)[b] = pp + gg + static_cast<double>(eps);
    loss += 1.0 - (*num)[b] / (*den)[b];
  }
  loss /= static_cast<double>(batch);

  const Var<T> tgt = prob.tape().constant(target);
  return prob.tape().record(
      OpKind::Custom, {prob.id(), tgt.id()}, Tensor<T>::scalar(static_cast<T>(loss)),
      [num, den, batch, plane](Tape<T>& tape, const typename Tape<T>::Node& n) {
        const double up = static_cast<double>(tape.grad(n.output)[0]) / static_cast<double>(batch);
        const Tensor<T>& pv = tape.value(n.inputs[0]);
        const Tensor<T>& gv = tape.value(n.inputs[1]);
        auto dp = tape.grad(n.inputs[0]).data();
        for (std::size_t b = 0; b < batch; ++b) {
          const double nb = (*num)[b], db = (*den)[b];
          for (std::size_t i = b * plane; i < (b + 1) * plane; ++i) {
            // d/dp [1 - N/D] = -(2 g D - 2 p N) / D^2
            const double grad = -(2.0 * gv[i] * db - 2.0 * pv[i] * nb) / (db * db);
            dp[i] += static_cast<T>(up * grad);
          }
        }
      });
}

template Var<float> dice_loss<float>(Var<float>, const Tensor<float>&, float);
template Var<double> dice_loss<double>(Var<double>, const Tensor<double>&, double);

}  // namespace erfseg
