#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <pnkit/image.hpp>

namespace pnkit::nn {

/// Dense NHWC tensor of doubles.
struct Tensor4 {
    int n = 0, h = 0, w = 0, c = 0;
    std::vector<double> data;

    Tensor4() = default;
    Tensor4(int n_, int h_, int w_, int c_)
        : n(n_), h(h_), w(w_), c(c_),
          data(static_cast<std::size_t>(n_) * h_ * w_ * c_, 0.0) {}

    std::size_t size() const { return data.size(); }
    double* slice(int in, int iy, int ix) {
        return data.data() + ((static_cast<std::size_t>(in) * h + iy) * w + ix) * c;
    }
    const double* slice(int in, int iy, int ix) const {
        return data.data() + ((static_cast<std::size_t>(in) * h + iy) * w + ix) * c;
    }
};

struct ConvLayer {
    int kh = 0, kw = 0, in_ch = 0, out_ch = 0;
    int stride_h = 1, stride_w = 1;
    int dil_h = 1, dil_w = 1;
    std::vector<double> kernel;  // [kh][kw][in_ch][out_ch]
    std::vector<double> bias;    // [out_ch]
};

struct BatchNormLayer {
    int channels = 0;
    std::vector<double> gamma, beta;
    std::vector<double> running_mean, running_var;
    double epsilon = 1e-5;
    double momentum_stat = 0.1;  // running = (1-m)*running + m*batch
};

struct PoolSpec {
    int kh = 5, kw = 5;
    int stride_h = 2, stride_w = 2;
};

struct FcLayer {
    int in = 0, out = 2;
    std::vector<double> weights;  // [in][out]
    std::vector<double> bias;     // [out]
};

/// The fixed layer stack: conv -> BN -> clipped ReLU -> maxpool -> conv ->
/// BN -> clipped ReLU -> FC(2) -> softmax. Geometry fields default to the
/// published architecture; the input size is a parameter so miniatures of
/// the same stack can be built for testing.
struct CnnConfig {
    int input_h = 280, input_w = 280, input_c = 3;
    int conv1_k = 5, conv1_filters = 8, conv1_dilation = 3, conv1_stride = 1;
    int pool_k = 5, pool_stride = 2;  // 2x2 window/stride variant selectable
    int conv2_k = 3, conv2_filters = 16, conv2_dilation = 2, conv2_stride = 3;
    double relu_ceiling = 10.0;
};

struct TrainOptions {
    double learning_rate = 0.01;
    double momentum = 0.9;
    int max_epochs = 250;
    int batch_size = 16;
    int validation_frequency = 25;  // optimizer iterations between val passes
    bool shuffle_each_epoch = true;
    std::uint64_t seed = 0;
};

struct CnnModel {
    CnnConfig config;
    TrainOptions options;
    ConvLayer conv1, conv2;
    BatchNormLayer bn1, bn2;
    FcLayer fc;
    bool trained = false;
    int epochs_run = 0;
    double final_val_accuracy = 0.0;

    /// Spatial dims after each stage for the configured input (h1,w1 after
    /// conv1/pool etc.); also yields the flattened FC input size.
    int fc_input_size() const;
};

/// Output spatial size under 'same' padding: ceil(in / stride).
inline int same_out(int in, int stride) { return (in + stride - 1) / stride; }

// --- individual operations (each is pure unless noted) ----------------------

/// Dilated cross-correlation with 'same' padding (zero-filled, extra pad on
/// bottom/right).
Tensor4 conv2d_forward(const Tensor4& x, const ConvLayer& layer);

enum class BnMode { train, infer };

/// Train mode normalizes by batch statistics and updates the running stats
/// in `layer` (the one mutating op); infer mode uses the stored ones.
Tensor4 batchnorm_forward(const Tensor4& x, BatchNormLayer& layer, BnMode mode);

Tensor4 clipped_relu(const Tensor4& x, double ceiling);

/// Per-window maximum, 'same' padding with cells outside the image treated
/// as -infinity.
Tensor4 maxpool(const Tensor4& x, const PoolSpec& pool);

/// Flattens each sample, applies the linear layer and a max-shifted softmax.
std::vector<std::array<double, 2>> fc_softmax_forward(const Tensor4& x, const FcLayer& fc);

/// -log(probs[label]) with the probability floored at 1e-12.
double cross_entropy_loss(const std::array<double, 2>& probs, int label);

/// v <- momentum*v - lr*g; p <- p + v (dispatched kernel).
void sgdm_step(std::vector<double>& params, std::vector<double>& velocity,
               const std::vector<double>& grads, double lr, double momentum);

// --- training ----------------------------------------------------------------

/// Gradient of the mean cross-entropy over a batch with respect to every
/// learnable parameter. Field shapes mirror the model's.
struct Gradients {
    std::vector<double> conv1_kernel, conv1_bias;
    std::vector<double> bn1_gamma, bn1_beta;
    std::vector<double> conv2_kernel, conv2_bias;
    std::vector<double> bn2_gamma, bn2_beta;
    std::vector<double> fc_weights, fc_bias;
};

/// He-initialized model (weights ~ N(0, 2/fan_in), biases 0, gamma 1,
/// beta 0), fully determined by the seed.
CnnModel make_model(const CnnConfig& config, std::uint64_t seed);

/// Train-mode loss of a batch without touching running statistics; the
/// finite-difference reference in the tests drives this.
double training_loss(const CnnModel& model, const Tensor4& batch, const std::vector<int>& labels);

/// Analytic gradients of the train-mode loss; does not update running stats.
Gradients backward(const CnnModel& model, const Tensor4& batch, const std::vector<int>& labels,
                   double* loss_out = nullptr);

/// Inference-mode class probabilities per sample.
std::vector<std::array<double, 2>> forward_infer(const CnnModel& model, const Tensor4& batch);

struct LabeledRaster {
    RgbImage image;
    int label = 0;  // 0 = typical, 1 = atypical
};

struct TrainLogEntry {
    int iteration = 0;
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    CnnModel model;
    std::vector<TrainLogEntry> log;
};

/// SGDM training over shuffled mini-batches. Validation accuracy is computed
/// every options.validation_frequency iterations (inference mode; validation
/// never updates weights). Deterministic for a fixed seed.
TrainResult train_cnn(const std::vector<LabeledRaster>& train_set,
                      const std::vector<LabeledRaster>& val_set, const CnnConfig& config,
                      const TrainOptions& options);

struct Prediction {
    int label = 0;
    std::array<double, 2> probs{0.0, 0.0};
};

/// Inference on one image (resized to the model input if needed). Ties in
/// probability go to class 0.
Prediction predict(const CnnModel& model, const RgbImage& img);

// --- serialization -------------------------------------------------------------

/// Little-endian container, magic "PNKITCNN1": layer spec, options, seed,
/// all parameters and running statistics as 64-bit floats.
std::vector<std::uint8_t> serialize_model(const CnnModel& model);
CnnModel deserialize_model(const std::vector<std::uint8_t>& bytes);
void save_model(const CnnModel& model, const std::string& path);
CnnModel load_model(const std::string& path);

/// CSV: iteration,epoch,train_loss,val_accuracy
void write_training_log_csv(const std::vector<TrainLogEntry>& log, const std::string& path);

}  // namespace pnkit::nn
