#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gracias/tensor.hpp"

namespace gracias {

enum class Arch { Linear, Mlp, ConvSmall };

std::string arch_name(Arch arch);
Arch arch_from_name(const std::string& name);

// All weights live in `weights` in a fixed per-architecture order:
//   linear:     W [C,N], b [C]
//   mlp:        W1 [hidden,N], b1 [hidden], W2 [C,hidden], b2 [C]
//   conv-small: K [channels,3,3,Cin], b1 [channels],
//               W2 [C, channels*(H/2)*(W/2)], b2 [C]
// Conv layer is 3x3 zero-padded same-size, then ReLU, then 2x2 max-pool with
// stride 2 (odd trailing row/column dropped, ties to the first row-major hit).
struct ClassifierParams {
  Arch arch{Arch::Linear};
  std::vector<std::size_t> input_shape;  // H,W,C
  std::size_t num_classes{0};
  std::size_t hidden{64};
  std::size_t channels{8};
  std::uint64_t init_seed{0};
  std::vector<Tensor> weights;

  std::size_t input_size() const;
  void validate() const;
};

ClassifierParams init_classifier(Arch arch, std::vector<std::size_t> input_shape,
                                 std::size_t num_classes, std::uint64_t seed,
                                 std::size_t hidden = 64, std::size_t channels = 8);

Tensor forward(const ClassifierParams& params, const Tensor& x);  // logits [C]
std::size_t predict(const ClassifierParams& params, const Tensor& x);
Tensor softmax(const Tensor& logits);

struct BackpropResult {
  double loss{0.0};
  Tensor input_grad;                // shaped like x
  std::vector<Tensor> param_grads;  // shaped like params.weights
};

// Cross-entropy loss at label y with exact hand-coded backpropagation.
BackpropResult backprop(const ClassifierParams& params, const Tensor& x, std::size_t y);

struct LossInputGrad {
  double loss{0.0};
  Tensor input_grad;
};
LossInputGrad loss_and_input_grad(const ClassifierParams& params, const Tensor& x, std::size_t y);

struct Batch {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
};

struct TrainConfig {
  double lr{0.1};
  std::size_t epochs{10};
  std::size_t batch{32};
  std::uint64_t seed{0};
};

struct TrainTrace {
  std::vector<double> epoch_loss;  // mean per epoch
};

// Plain minibatch SGD with a seeded shuffle; deterministic given the seed.
TrainTrace train_sgd(ClassifierParams& params, const Batch& data, const TrainConfig& config);

double accuracy(const ClassifierParams& params, const Batch& data);

// Checkpoint file: one-line JSON header (architecture, shapes, seed of the
// init) followed by the raw little-endian float64 weight payload.
void save_checkpoint(const ClassifierParams& params, const std::string& path);
ClassifierParams load_checkpoint(const std::string& path);

}  // namespace gracias
