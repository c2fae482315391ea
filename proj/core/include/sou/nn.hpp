#pragma once

// A small fixed-sequence CNN: forward and reverse-mode backward passes with
// gradients for both parameters and inputs, cross-entropy loss, Adam and a
// seeded mini-batch training loop.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <variant>
#include <vector>

namespace sou::nn {

/// Dense tensor, row-major; shape is (batch, channels, height, width) or
/// (batch, features).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);

  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t size() const { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

enum class Mode { train, eval };

struct Conv3x3 {  // stride 1, padding 1
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::vector<double> weight;  // out_ch x in_ch x 3 x 3
  std::vector<double> bias;    // out_ch
};

struct BatchNorm {
  std::size_t channels = 0;
  std::vector<double> gamma, beta;
  std::vector<double> running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

struct ReLU {};
struct MaxPool2x2 {};  // odd trailing rows/columns are dropped
struct Dropout {
  double p = 0.2;  // inverted dropout; identity in eval mode
};
struct GlobalAvgPool {};
struct Flatten {};

struct Dense {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weight;  // out_dim x in_dim
  std::vector<double> bias;
};

using Layer = std::variant<Conv3x3, BatchNorm, ReLU, MaxPool2x2, Dropout, GlobalAvgPool, Flatten, Dense>;

struct ModelGraph {
  std::vector<std::size_t> input_shape;  // per-sample shape: (C, H, W) or (F)
  std::vector<Layer> layers;
  Mode mode = Mode::eval;

  std::size_t parameter_count() const;
};

/// Per-sample output shape after every layer; throws ShapeError if the layer
/// chain is inconsistent.
std::vector<std::vector<std::size_t>> layer_shapes(const ModelGraph& model);

/// Trainable parameter blocks in a fixed order (conv/dense weight then bias,
/// batch-norm gamma then beta).
std::vector<std::span<double>> parameters(ModelGraph& model);
std::vector<std::span<const double>> parameters(const ModelGraph& model);

struct LayerCache {
  Tensor input;
  std::vector<double> aux;          // dropout mask or batch-norm x-hat
  std::vector<std::size_t> index;   // max-pool argmax positions
  std::vector<double> mean, var;    // batch-norm statistics used in forward
};

struct ForwardResult {
  Tensor logits;
  std::vector<LayerCache> cache;
  Mode mode = Mode::eval;
};

/// Runs the layer sequence. Train mode needs `rng` for dropout masks and uses
/// batch statistics in batch norm without touching the running statistics.
ForwardResult forward(const ModelGraph& model, const Tensor& x, Mode mode,
                      std::mt19937_64* rng = nullptr);

Tensor softmax(const Tensor& logits);
double cross_entropy(const Tensor& logits, std::span<const int> labels);
/// Gradient of the mean cross-entropy with respect to the logits.
Tensor cross_entropy_grad(const Tensor& logits, std::span<const int> labels);

struct Gradients {
  std::vector<std::vector<double>> params;  // same order as parameters()
  Tensor input;
};

Gradients backward(const ModelGraph& model, const ForwardResult& fwd, std::span<const int> labels);
Gradients backward_from_logits(const ModelGraph& model, const ForwardResult& fwd,
                               const Tensor& logit_grad);

/// Folds the batch statistics of a train-mode forward into the running
/// statistics (momentum update, unbiased variance).
void update_running_stats(ModelGraph& model, const ForwardResult& fwd);

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m, v;

  static AdamState for_model(const ModelGraph& model, double lr = 0.001);
};

void adam_step(std::span<const std::span<double>> params,
               const std::vector<std::vector<double>>& grads, AdamState& state);
void adam_step(ModelGraph& model, const std::vector<std::vector<double>>& grads, AdamState& state);

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  bool shuffle = true;
  double lr = 0.001;
};

struct Dataset {
  Tensor inputs;            // (N, ...) matching the model input shape
  std::vector<int> labels;  // N class indices

  std::size_t size() const { return labels.size(); }
  Tensor batch(std::span<const std::size_t> rows) const;
};

struct TrainHistory {
  std::vector<double> epoch_loss;
  std::vector<std::size_t> batch_sizes;  // for the first epoch
};

/// Seeded mini-batch training; the final partial batch is kept. Leaves the
/// model in eval mode.
TrainHistory train(ModelGraph& model, const Dataset& data, const TrainConfig& cfg);

/// Eval-mode class probabilities, processed in batches of `batch_size`.
Tensor predict_proba(const ModelGraph& model, const Tensor& x, std::size_t batch_size = 64);

struct GenderArch {
  std::size_t in_channels = 1, height = 64, width = 52;
  std::size_t c1 = 16, c2 = 32, hidden = 64, classes = 2;
  double dropout = 0.2;
};

struct DiagnosisArch {
  std::size_t in_channels = 1, height = 64, width = 52;
  std::size_t c1 = 16, c2 = 32, c3 = 64, hidden = 128, classes = 2;
  double dropout = 0.2;
};

/// Conv-BN-ReLU-Pool-Dropout x2, global average pooling, Dense-ReLU-Dense.
ModelGraph make_gender_model(const GenderArch& arch, std::uint64_t seed);
/// Conv-BN-ReLU-Pool-Dropout x3, flatten, Dense-ReLU-Dense.
ModelGraph make_diagnosis_model(const DiagnosisArch& arch, std::uint64_t seed);

/// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases, unit gamma.
void initialize(ModelGraph& model, std::uint64_t seed);

void save_model(const ModelGraph& model, const std::filesystem::path& path);
ModelGraph load_model(const std::filesystem::path& path);

/// Uniform double in [0, 1) from the top 53 bits; independent of the
/// standard library's distribution implementations.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace sou::nn
