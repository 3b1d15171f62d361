#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/torch.h>

#include "hmseg/augment.hpp"
#include "hmseg/raster.hpp"
#include "hmseg/segnet.hpp"

namespace hmseg::trans {

struct LossWeights {
    double lambda_cyc = 1.0;
    double lambda_id = 0.5;
    double lambda_tran = 0.5;

    /// Negative weights raise ConfigError.
    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static LossWeights from_json(const nlohmann::json& j);
};

struct TransConfig {
    int epochs = 100;
    int batch_size = 1;
    double learning_rate = 2e-4;  // constant
    double beta1 = 0.5;
    double beta2 = 0.999;
    int crop_px = 500;
    ScaleRange scale_range{0.7, 1.4};
    int max_steps = 0;  // 0: run all epochs
    int gen_filters = 64;
    int gen_blocks = 9;
    int disc_filters = 64;
    int disc_layers = 3;  // 3 -> 70×70 receptive field
    std::uint64_t seed = 0;

    void validate() const;
    static TransConfig paper(int crop_px);
    /// Desk-scale profile: 3 residual blocks, 64 px crops, 2000 steps.
    static TransConfig toy();
    [[nodiscard]] nlohmann::json to_json() const;
    static TransConfig from_json(const nlohmann::json& j);
};

struct ResidualBlockImpl : torch::nn::Module {
    explicit ResidualBlockImpl(int ch);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
    torch::nn::InstanceNorm2d norm1{nullptr}, norm2{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// ResNet generator: 7×7 stem, two stride-2 downsamplings, residual blocks,
/// two transposed-conv upsamplings, 7×7 tanh head. Shape preserving for any
/// H×W (inputs are mirror-padded to a multiple of 4 and cropped back).
struct GeneratorImpl : torch::nn::Module {
    GeneratorImpl(int filters, int blocks);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(Generator);

/// PatchGAN: a grid of realness scores, one per receptive-field patch.
struct DiscriminatorImpl : torch::nn::Module {
    DiscriminatorImpl(int filters, int layers);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(Discriminator);

/// G_{X->Y} (historical -> modern), G_{Y->X}, D_X, D_Y.
struct TranslationModelPair {
    Generator gen_xy{nullptr};
    Generator gen_yx{nullptr};
    Discriminator disc_x{nullptr};
    Discriminator disc_y{nullptr};

    static TranslationModelPair build(const TransConfig& cfg);
    std::vector<torch::Tensor> generator_parameters() const;
    std::vector<torch::Tensor> discriminator_parameters() const;
    void to(torch::Dtype dtype);
    void train(bool on = true);
};

using GenFn = std::function<torch::Tensor(const torch::Tensor&)>;

GenFn as_fn(Generator g);

struct AdversarialTerms {
    torch::Tensor gen;
    torch::Tensor disc;
};

/// Least-squares GAN terms: disc = mean((D(real)-1)^2) + mean(D(fake)^2),
/// gen = mean((D(fake)-1)^2).
AdversarialTerms adversarial_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake);

/// mean|G_yx(G_xy(x)) - x| + mean|G_xy(G_yx(y)) - y|
torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& y, const GenFn& gen_xy, const GenFn& gen_yx);
/// mean|G_xy(y) - y| + mean|G_yx(x) - x|
torch::Tensor identity_loss(const torch::Tensor& x, const torch::Tensor& y, const GenFn& gen_xy, const GenFn& gen_yx);

/// Historical/modern batch cut from the same footprints.
struct AlignedBatch {
    std::vector<std::string> ids_x;
    std::vector<std::string> ids_y;
    torch::Tensor x;  // historical, [N, 3, H, W] in [-1, 1]
    torch::Tensor y;  // modern
};

/// Weak-alignment loss: mean|G_yx(y) - x| + mean|G_xy(x) - y| over aligned
/// pairs; mismatched ids raise PairingError.
torch::Tensor translation_loss(const AlignedBatch& batch, const GenFn& gen_xy, const GenFn& gen_yx);

template <typename T>
struct LossComponents {
    T gan;
    T cyc;
    T id;
    T tran;
};

/// L_GAN + λ_cyc L_cyc + λ_id L_id + λ_tran L_tran
template <typename T>
T generator_objective(const LossComponents<T>& c, const LossWeights& w) {
    w.validate();
    return c.gan + w.lambda_cyc * c.cyc + w.lambda_id * c.id + w.lambda_tran * c.tran;
}

/// Discriminator objective: the LSGAN realisation of -L_GAN.
template <typename T>
T discriminator_objective(const T& disc_x_term, const T& disc_y_term) {
    return disc_x_term + disc_y_term;
}

struct GeneratorPass {
    LossComponents<torch::Tensor> components;
    torch::Tensor fake_x;  // G_yx(y)
    torch::Tensor fake_y;  // G_xy(x)
};

/// Generator-side loss components on one batch; the fakes are kept for the
/// discriminator update on the same batch.
GeneratorPass generator_pass(const AlignedBatch& batch, TranslationModelPair& pair);

struct TransStepRecord {
    int step = 0;
    double gen_objective = 0.0;
    double disc_objective = 0.0;
    double tran = 0.0;
};

struct TransState {
    int steps = 0;
    int epochs_completed = 0;
    std::vector<TransStepRecord> history;  // one entry per epoch
};

/// Aligned historical/modern rendering of one footprint.
struct AlignedPair {
    std::string tile_id;
    Image historical;
    Image modern;
};

/// Alternating updates (generators, then both discriminators) with Adam at a
/// constant rate; discriminators only see fakes generated from the current
/// batch. `on_step` is called after every generator step.
TransState train_translation(TranslationModelPair& pair, const std::vector<AlignedPair>& data, const TransConfig& cfg,
                             const LossWeights& weights,
                             const std::function<void(int step, TranslationModelPair&)>& on_step = {});

/// Applies a generator patchwise (non-overlapping, mirror-padded) and stitches.
Image translate_image(Generator& gen, const Image& image, int patch_px);

/// gen_xy patchwise, then seg::predict_tile on the generated modern-style map.
LabelRaster translate_then_segment(TranslationModelPair& pair, seg::UNet& seg_model, const Image& image,
                                   int patch_px);

/// Mean absolute difference in [-1, 1] units between gen_xy(historical) and
/// the aligned modern rendering, averaged over pairs.
double aligned_l1(TranslationModelPair& pair, const std::vector<AlignedPair>& data);

void save_checkpoint(const std::filesystem::path& path, TranslationModelPair& pair, const TransConfig& cfg,
                     const LossWeights& weights, int step);

struct TransCheckpoint {
    TransConfig cfg;
    LossWeights weights;
    int step = 0;
};

std::pair<TranslationModelPair, TransCheckpoint> load_checkpoint(const std::filesystem::path& path);

/// Side-by-side (input | translated) grid, one row per image.
Image preview_grid(const std::vector<Image>& inputs, const std::vector<Image>& translated);

}  // namespace hmseg::trans
