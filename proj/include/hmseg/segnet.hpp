#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/torch.h>

#include "hmseg/augment.hpp"
#include "hmseg/corpus.hpp"
#include "hmseg/metrics.hpp"
#include "hmseg/raster.hpp"

namespace hmseg::seg {

struct SegConfig {
    int stages = 8;
    int base_channels = 32;
    int max_channels = 512;
    int num_classes = kNumClasses;
    int in_channels = 3;
    int crop_px = 500;
    int epochs = 200;
    int batch_size = 32;
    ScaleRange scale_range{0.7, 1.4};
    double learning_rate = 1e-2;
    double momentum = 0.99;
    double weight_decay = 3e-5;
    double poly_exponent = 0.9;
    std::uint64_t seed = 0;

    void validate() const;
    /// End-to-end downsampling factor, 2^(stages - 1).
    [[nodiscard]] int downsampling_factor() const { return 1 << (stages - 1); }
    [[nodiscard]] int channels_at(int stage) const;

    static SegConfig paper(Collection c);
    /// Desk-scale profile: 5 stages, 128 px crops, batch 8, 20 epochs.
    static SegConfig toy();

    [[nodiscard]] nlohmann::json to_json() const;
    static SegConfig from_json(const nlohmann::json& j);
};

/// Convolution with mirror padding, instance norm and leaky ReLU.
struct ConvNormActImpl : torch::nn::Module {
    ConvNormActImpl(int in_ch, int out_ch, int stride);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv{nullptr};
    torch::nn::InstanceNorm2d norm{nullptr};
};
TORCH_MODULE(ConvNormAct);

/// U-Net encoder/decoder with skip connections. Stage 0 keeps resolution, each
/// later stage halves it with a stride-2 3×3 convolution; the decoder mirrors
/// the encoder with transposed convolutions. Inputs are mirror-padded to a
/// multiple of the downsampling factor and logits are cropped back, so the
/// output always matches the input's spatial shape.
struct UNetImpl : torch::nn::Module {
    explicit UNetImpl(const SegConfig& cfg);
    /// [N, in_channels, H, W] -> [N, num_classes, H, W]
    torch::Tensor forward(const torch::Tensor& x);
    /// Encoder feature maps (deepest last), for shape inspection.
    std::vector<torch::Tensor> encode(const torch::Tensor& x);

    SegConfig cfg;
    torch::nn::ModuleList encoder;
    torch::nn::ModuleList upsamplers;
    torch::nn::ModuleList decoder;
    torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(UNet);

/// Deterministic given cfg.seed.
UNet build_model(const SegConfig& cfg);

/// Mirror (reflect-101) padding that works for any spatial size >= 1.
torch::Tensor mirror_pad(const torch::Tensor& x, int top, int bottom, int left, int right);

/// RGB uint8 -> [1, 3, H, W] float in [-1, 1].
torch::Tensor image_to_tensor(const Image& img);
/// [3, H, W] or [1, 3, H, W] float in [-1, 1] -> RGB uint8.
Image tensor_to_image(const torch::Tensor& t);
/// -> [1, H, W] int64
torch::Tensor labels_to_tensor(const LabelRaster& labels);

inline constexpr double kDiceSmooth = 1e-5;

/// Mean cross-entropy plus (1 - mean soft Dice over classes), Dice pooled over
/// the batch. logits [N, C, H, W], target [N, H, W] int64.
torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& target);

/// A training/validation example: a map image with its target labels.
struct Sample {
    std::string tile_id;
    Image image;
    LabelRaster labels;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_score = 0.0;
    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainState {
    int epoch = 0;
    int best_epoch = 0;
    double best_val_score = -1.0;
    double initial_val_score = 0.0;
    std::uint64_t rng_seed = 0;
    bool no_validation = false;  // empty validation set: last epoch kept
    std::vector<EpochRecord> loss_history;
    std::vector<std::pair<std::string, torch::Tensor>> best_parameters;

    [[nodiscard]] nlohmann::json to_json() const;  // everything except parameters
    static TrainState from_json(const nlohmann::json& j);
};

struct TrainOptions {
    MetricConfig metric;
    bool verbose = false;
};

/// Poly learning-rate schedule, decaying to 0 over `epochs`.
double poly_lr(double initial, int epoch, int epochs, double exponent);

/// Supervised loop: cfg.epochs epochs of random-resized-crop minibatches; after
/// each epoch the validation mean dIoU is recorded and the best snapshot kept.
/// The model ends up holding the best (or, with no validation data, the last)
/// parameters.
TrainState train_supervised(UNet& model, const std::vector<Sample>& train, const std::vector<Sample>& val,
                            const SegConfig& cfg, const TrainOptions& opts = {});

/// Weak supervision: historical images paired by tile_id with modern labels.
TrainState train_weak(UNet& model, const std::map<std::string, Image>& historical,
                      const std::map<std::string, LabelRaster>& modern_labels, const WeakSplit& split,
                      const SegConfig& cfg, const TrainOptions& opts = {});

/// Pairs images and labels by id; a missing label raises PairingError.
std::vector<Sample> pair_samples(const std::vector<std::string>& ids, const std::map<std::string, Image>& images,
                                 const std::map<std::string, LabelRaster>& labels);

/// Per-pixel argmax of the model applied to the whole image.
LabelRaster predict_direct(UNet& model, const Image& image);

/// Non-overlapping patch inference: extract_patches -> argmax -> stitch -> crop.
LabelRaster predict_tile(UNet& model, const Image& image, int patch_px);

/// Validation score of the current parameters: pooled mean dIoU over samples.
double validation_score(UNet& model, const std::vector<Sample>& samples, int patch_px, const MetricConfig& metric);
MetricReport evaluate_samples(UNet& model, const std::vector<Sample>& samples, int patch_px,
                              const MetricConfig& metric);

std::vector<std::pair<std::string, torch::Tensor>> snapshot_parameters(const torch::nn::Module& module);
void restore_parameters(torch::nn::Module& module, const std::vector<std::pair<std::string, torch::Tensor>>& snap);

struct Checkpoint {
    SegConfig cfg;
    TrainState state;
};

/// Single archive with parameters, SegConfig, seeds and loss history.
void save_checkpoint(const std::filesystem::path& path, UNet& model, const SegConfig& cfg, const TrainState& state);
std::pair<UNet, Checkpoint> load_checkpoint(const std::filesystem::path& path);

}  // namespace hmseg::seg
