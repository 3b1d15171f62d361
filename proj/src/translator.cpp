#include "hmseg/translator.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "hmseg/corpus.hpp"

namespace hmseg::trans {

using nlohmann::json;
namespace F = torch::nn::functional;
namespace nn = torch::nn;

namespace {

struct MirrorPadImpl : nn::Module {
    explicit MirrorPadImpl(int p) : pad(p) {}
    torch::Tensor forward(const torch::Tensor& x) { return seg::mirror_pad(x, pad, pad, pad, pad); }
    int pad;
};
TORCH_MODULE(MirrorPad);

void init_weights(nn::Module& m) {
    torch::NoGradGuard guard;
    for (auto& p : m.named_parameters()) {
        const auto& name = p.key();
        auto& t = p.value();
        if (name.ends_with("bias")) {
            t.zero_();
        } else if (t.dim() > 1) {
            t.normal_(0.0, 0.02);
        } else {
            t.normal_(1.0, 0.02);  // instance-norm scale
        }
    }
}

nn::InstanceNorm2d inorm(int ch) { return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(ch).affine(true)); }

torch::Tensor l1(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().mean(); }

}  // namespace

void LossWeights::validate() const {
    if (!(lambda_cyc >= 0.0) || !(lambda_id >= 0.0) || !(lambda_tran >= 0.0)) {
        throw ConfigError("loss weights must be non-negative");
    }
}

json LossWeights::to_json() const {
    return {{"lambda_cyc", lambda_cyc}, {"lambda_id", lambda_id}, {"lambda_tran", lambda_tran}};
}

LossWeights LossWeights::from_json(const json& j) {
    LossWeights w;
    try {
        w.lambda_cyc = j.value("lambda_cyc", w.lambda_cyc);
        w.lambda_id = j.value("lambda_id", w.lambda_id);
        w.lambda_tran = j.value("lambda_tran", w.lambda_tran);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("LossWeights: ") + e.what());
    }
    w.validate();
    return w;
}

void TransConfig::validate() const {
    if (epochs < 0 || batch_size < 1 || crop_px < 1 || max_steps < 0) {
        throw ConfigError("TransConfig: epochs, batch, crop and steps must be positive");
    }
    if (!(learning_rate >= 0.0) || gen_filters < 1 || gen_blocks < 0 || disc_filters < 1 || disc_layers < 1) {
        throw ConfigError("TransConfig: invalid architecture or optimizer settings");
    }
    if (!(scale_range.low > 0.0) || scale_range.high < scale_range.low) {
        throw ConfigError("TransConfig: invalid scale range");
    }
    // The PatchGAN's two final 4×4 convolutions need a 3×3 map after downsampling.
    int side = crop_px;
    for (int i = 0; i < disc_layers; ++i) side = (side - 2) / 2 + 1;
    if (side < 3) {
        throw ConfigError("TransConfig: crop_px " + std::to_string(crop_px) + " is too small for " +
                          std::to_string(disc_layers) + " discriminator layers");
    }
}

TransConfig TransConfig::paper(int crop_px) {
    TransConfig c;
    c.crop_px = crop_px;
    return c;
}

TransConfig TransConfig::toy() {
    TransConfig c;
    c.crop_px = 64;
    c.gen_blocks = 3;
    c.gen_filters = 8;
    c.disc_filters = 8;
    c.max_steps = 2000;
    c.epochs = 1000;
    return c;
}

json TransConfig::to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"beta1", beta1},
            {"beta2", beta2},
            {"crop_px", crop_px},
            {"scale_range", {scale_range.low, scale_range.high}},
            {"max_steps", max_steps},
            {"gen_filters", gen_filters},
            {"gen_blocks", gen_blocks},
            {"disc_filters", disc_filters},
            {"disc_layers", disc_layers},
            {"fake_sampling", "same_batch"},
            {"seed", seed}};
}

TransConfig TransConfig::from_json(const json& j) {
    TransConfig c;
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.crop_px = j.value("crop_px", c.crop_px);
        if (j.contains("scale_range")) {
            c.scale_range = {j["scale_range"].at(0).get<double>(), j["scale_range"].at(1).get<double>()};
        }
        c.max_steps = j.value("max_steps", c.max_steps);
        c.gen_filters = j.value("gen_filters", c.gen_filters);
        c.gen_blocks = j.value("gen_blocks", c.gen_blocks);
        c.disc_filters = j.value("disc_filters", c.disc_filters);
        c.disc_layers = j.value("disc_layers", c.disc_layers);
        if (j.value("fake_sampling", std::string("same_batch")) != "same_batch") {
            throw ConfigError("TransConfig.fake_sampling: only 'same_batch' is supported (no image buffer)");
        }
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("TransConfig: ") + e.what());
    }
    c.validate();
    return c;
}

ResidualBlockImpl::ResidualBlockImpl(int ch) {
    conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(ch, ch, 3)));
    norm1 = register_module("norm1", inorm(ch));
    conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(ch, ch, 3)));
    norm2 = register_module("norm2", inorm(ch));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
    auto h = torch::relu(norm1(conv1(seg::mirror_pad(x, 1, 1, 1, 1))));
    h = norm2(conv2(seg::mirror_pad(h, 1, 1, 1, 1)));
    return x + h;
}

GeneratorImpl::GeneratorImpl(int f, int blocks) {
    nn::Sequential s;
    s->push_back(MirrorPad(3));
    s->push_back(nn::Conv2d(nn::Conv2dOptions(3, f, 7)));
    s->push_back(inorm(f));
    s->push_back(nn::ReLU());
    s->push_back(nn::Conv2d(nn::Conv2dOptions(f, 2 * f, 3).stride(2).padding(1)));
    s->push_back(inorm(2 * f));
    s->push_back(nn::ReLU());
    s->push_back(nn::Conv2d(nn::Conv2dOptions(2 * f, 4 * f, 3).stride(2).padding(1)));
    s->push_back(inorm(4 * f));
    s->push_back(nn::ReLU());
    for (int b = 0; b < blocks; ++b) s->push_back(ResidualBlock(4 * f));
    s->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(4 * f, 2 * f, 3).stride(2).padding(1).output_padding(1)));
    s->push_back(inorm(2 * f));
    s->push_back(nn::ReLU());
    s->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(2 * f, f, 3).stride(2).padding(1).output_padding(1)));
    s->push_back(inorm(f));
    s->push_back(nn::ReLU());
    s->push_back(MirrorPad(3));
    s->push_back(nn::Conv2d(nn::Conv2dOptions(f, 3, 7)));
    s->push_back(nn::Tanh());
    body = register_module("body", s);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) {
    const auto h = x.size(2);
    const auto w = x.size(3);
    const int ph = round_up_to_multiple(static_cast<int>(h), 4) - static_cast<int>(h);
    const int pw = round_up_to_multiple(static_cast<int>(w), 4) - static_cast<int>(w);
    return body->forward(seg::mirror_pad(x, 0, ph, 0, pw)).slice(2, 0, h).slice(3, 0, w);
}

DiscriminatorImpl::DiscriminatorImpl(int f, int layers) {
    const auto lrelu = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); };
    nn::Sequential s;
    s->push_back(nn::Conv2d(nn::Conv2dOptions(3, f, 4).stride(2).padding(1)));
    s->push_back(lrelu());
    int mult = 1;
    for (int n = 1; n < layers; ++n) {
        const int prev = mult;
        mult = std::min(1 << n, 8);
        s->push_back(nn::Conv2d(nn::Conv2dOptions(f * prev, f * mult, 4).stride(2).padding(1)));
        s->push_back(inorm(f * mult));
        s->push_back(lrelu());
    }
    const int prev = mult;
    mult = std::min(1 << layers, 8);
    s->push_back(nn::Conv2d(nn::Conv2dOptions(f * prev, f * mult, 4).stride(1).padding(1)));
    s->push_back(inorm(f * mult));
    s->push_back(lrelu());
    s->push_back(nn::Conv2d(nn::Conv2dOptions(f * mult, 1, 4).stride(1).padding(1)));
    body = register_module("body", s);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) { return body->forward(x); }

TranslationModelPair TranslationModelPair::build(const TransConfig& cfg) {
    cfg.validate();
    torch::manual_seed(cfg.seed);
    TranslationModelPair p;
    p.gen_xy = Generator(cfg.gen_filters, cfg.gen_blocks);
    p.gen_yx = Generator(cfg.gen_filters, cfg.gen_blocks);
    p.disc_x = Discriminator(cfg.disc_filters, cfg.disc_layers);
    p.disc_y = Discriminator(cfg.disc_filters, cfg.disc_layers);
    init_weights(*p.gen_xy);
    init_weights(*p.gen_yx);
    init_weights(*p.disc_x);
    init_weights(*p.disc_y);
    return p;
}

std::vector<torch::Tensor> TranslationModelPair::generator_parameters() const {
    auto a = gen_xy->parameters();
    auto b = gen_yx->parameters();
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::vector<torch::Tensor> TranslationModelPair::discriminator_parameters() const {
    auto a = disc_x->parameters();
    auto b = disc_y->parameters();
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

void TranslationModelPair::to(torch::Dtype dtype) {
    gen_xy->to(dtype);
    gen_yx->to(dtype);
    disc_x->to(dtype);
    disc_y->to(dtype);
}

void TranslationModelPair::train(bool on) {
    gen_xy->train(on);
    gen_yx->train(on);
    disc_x->train(on);
    disc_y->train(on);
}

GenFn as_fn(Generator g) {
    return [g](const torch::Tensor& x) mutable { return g->forward(x); };
}

AdversarialTerms adversarial_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
    if (d_real.sizes() != d_fake.sizes()) {
        throw DimensionError("adversarial_loss: score grids differ in shape");
    }
    return {(d_fake - 1.0).pow(2).mean(), (d_real - 1.0).pow(2).mean() + d_fake.pow(2).mean()};
}

torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& y, const GenFn& gen_xy, const GenFn& gen_yx) {
    if (x.sizes() != y.sizes()) throw DimensionError("cycle_loss: x and y differ in shape");
    return l1(gen_yx(gen_xy(x)), x) + l1(gen_xy(gen_yx(y)), y);
}

torch::Tensor identity_loss(const torch::Tensor& x, const torch::Tensor& y, const GenFn& gen_xy,
                            const GenFn& gen_yx) {
    if (x.sizes() != y.sizes()) throw DimensionError("identity_loss: x and y differ in shape");
    return l1(gen_xy(y), y) + l1(gen_yx(x), x);
}

namespace {
void require_aligned(const AlignedBatch& batch) {
    if (batch.ids_x != batch.ids_y) {
        std::string msg = "translation pairs are not aligned:";
        for (std::size_t i = 0; i < std::max(batch.ids_x.size(), batch.ids_y.size()); ++i) {
            const auto a = i < batch.ids_x.size() ? batch.ids_x[i] : std::string("<none>");
            const auto b = i < batch.ids_y.size() ? batch.ids_y[i] : std::string("<none>");
            if (a != b) msg += " '" + a + "' vs '" + b + "'";
        }
        throw PairingError(msg);
    }
    if (batch.x.sizes() != batch.y.sizes()) throw DimensionError("aligned batch: x and y differ in shape");
}
}  // namespace

torch::Tensor translation_loss(const AlignedBatch& batch, const GenFn& gen_xy, const GenFn& gen_yx) {
    require_aligned(batch);
    return l1(gen_yx(batch.y), batch.x) + l1(gen_xy(batch.x), batch.y);
}

GeneratorPass generator_pass(const AlignedBatch& batch, TranslationModelPair& pair) {
    require_aligned(batch);
    const auto& x = batch.x;
    const auto& y = batch.y;
    GeneratorPass g;
    g.fake_y = pair.gen_xy->forward(x);
    g.fake_x = pair.gen_yx->forward(y);
    auto& c = g.components;
    c.gan = (pair.disc_y->forward(g.fake_y) - 1.0).pow(2).mean() + (pair.disc_x->forward(g.fake_x) - 1.0).pow(2).mean();
    c.cyc = l1(pair.gen_yx->forward(g.fake_y), x) + l1(pair.gen_xy->forward(g.fake_x), y);
    c.id = l1(pair.gen_xy->forward(y), y) + l1(pair.gen_yx->forward(x), x);
    c.tran = l1(g.fake_x, x) + l1(g.fake_y, y);
    return g;
}

TransState train_translation(TranslationModelPair& pair, const std::vector<AlignedPair>& data, const TransConfig& cfg,
                             const LossWeights& weights,
                             const std::function<void(int step, TranslationModelPair&)>& on_step) {
    cfg.validate();
    weights.validate();
    if (data.empty()) throw DataError("train_translation: no aligned historical/modern pairs");
    for (const auto& d : data) {
        if (d.historical.empty() || d.modern.empty()) throw DataError("train_translation: empty image in '" + d.tile_id + "'");
    }

    TransState state;
    torch::optim::Adam opt_g(pair.generator_parameters(),
                             torch::optim::AdamOptions(cfg.learning_rate).betas({cfg.beta1, cfg.beta2}));
    torch::optim::Adam opt_d(pair.discriminator_parameters(),
                             torch::optim::AdamOptions(cfg.learning_rate).betas({cfg.beta1, cfg.beta2}));
    std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
    std::vector<std::size_t> order(data.size());
    const auto set_disc_grad = [&](bool on) {
        for (auto& p : pair.discriminator_parameters()) p.requires_grad_(on);
    };
    pair.train(true);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        TransStepRecord rec;
        int n = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            if (cfg.max_steps > 0 && state.steps >= cfg.max_steps) break;
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            AlignedBatch batch;
            std::vector<torch::Tensor> xs, ys;
            for (std::size_t i = start; i < end; ++i) {
                const auto& d = data[order[i]];
                auto [hx, my] = random_resized_crop_pair(d.historical, d.modern, cfg.crop_px, cfg.scale_range, rng);
                xs.push_back(seg::image_to_tensor(hx));
                ys.push_back(seg::image_to_tensor(my));
                batch.ids_x.push_back(d.tile_id);
                batch.ids_y.push_back(d.tile_id);
            }
            batch.x = torch::cat(xs, 0);
            batch.y = torch::cat(ys, 0);

            // generators
            set_disc_grad(false);
            opt_g.zero_grad();
            const auto pass = generator_pass(batch, pair);
            const auto& c = pass.components;
            const auto& fake_x = pass.fake_x;
            const auto& fake_y = pass.fake_y;
            const auto g_obj = generator_objective(c, weights);
            g_obj.backward();
            opt_g.step();
            set_disc_grad(true);

            // discriminators, on this batch's fakes only
            opt_d.zero_grad();
            const auto dy = adversarial_loss(pair.disc_y->forward(batch.y), pair.disc_y->forward(fake_y.detach())).disc;
            const auto dx = adversarial_loss(pair.disc_x->forward(batch.x), pair.disc_x->forward(fake_x.detach())).disc;
            const auto d_obj = discriminator_objective(dx, dy);
            d_obj.backward();
            opt_d.step();

            ++state.steps;
            rec.gen_objective += g_obj.item<double>();
            rec.disc_objective += d_obj.item<double>();
            rec.tran += c.tran.item<double>();
            ++n;
            if (on_step) on_step(state.steps, pair);
        }
        if (n > 0) {
            rec.step = state.steps;
            rec.gen_objective /= n;
            rec.disc_objective /= n;
            rec.tran /= n;
            state.history.push_back(rec);
            state.epochs_completed = epoch + 1;
        }
        if (cfg.max_steps > 0 && state.steps >= cfg.max_steps) break;
    }
    pair.train(false);
    return state;
}

Image translate_image(Generator& gen, const Image& image, int patch_px) {
    torch::NoGradGuard guard;
    gen->eval();
    const auto patches = extract_patches(image, nullptr, patch_px);
    std::vector<Image> out;
    std::vector<PatchOffset> offsets;
    for (const auto& p : patches) {
        out.push_back(seg::tensor_to_image(gen->forward(seg::image_to_tensor(p.image))));
        offsets.push_back(p.offset);
    }
    return stitch(out, offsets, image.height, image.width);
}

LabelRaster translate_then_segment(TranslationModelPair& pair, seg::UNet& seg_model, const Image& image,
                                   int patch_px) {
    const Image modern_style = translate_image(pair.gen_xy, image, patch_px);
    return seg::predict_tile(seg_model, modern_style, patch_px);
}

double aligned_l1(TranslationModelPair& pair, const std::vector<AlignedPair>& data) {
    if (data.empty()) throw DataError("aligned_l1: no pairs");
    torch::NoGradGuard guard;
    pair.gen_xy->eval();
    double sum = 0.0;
    for (const auto& d : data) {
        const auto fake = pair.gen_xy->forward(seg::image_to_tensor(d.historical));
        sum += (fake - seg::image_to_tensor(d.modern)).abs().mean().item<double>();
    }
    return sum / static_cast<double>(data.size());
}

namespace {
constexpr const char* kFormat = "translation-checkpoint-v1";
}

void save_checkpoint(const std::filesystem::path& path, TranslationModelPair& pair, const TransConfig& cfg,
                     const LossWeights& weights, int step) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive;
    archive.write("hmseg.format", c10::IValue(std::string(kFormat)));
    archive.write("hmseg.trans_config", c10::IValue(cfg.to_json().dump()));
    archive.write("hmseg.loss_weights", c10::IValue(weights.to_json().dump()));
    archive.write("hmseg.step", c10::IValue(static_cast<int64_t>(step)));
    const std::pair<const char*, nn::Module*> nets[] = {
        {"gen_xy", pair.gen_xy.get()}, {"gen_yx", pair.gen_yx.get()}, {"disc_x", pair.disc_x.get()}, {"disc_y", pair.disc_y.get()}};
    for (const auto& [name, module] : nets) {
        torch::serialize::OutputArchive sub;
        module->save(sub);
        archive.write(name, sub);
    }
    archive.save_to(path.string());
}

std::pair<TranslationModelPair, TransCheckpoint> load_checkpoint(const std::filesystem::path& path) {
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot read checkpoint '" + path.string() + "': " + e.what_without_backtrace());
    }
    c10::IValue format, cfg, weights, step;
    if (!archive.try_read("hmseg.format", format) || format.toStringRef() != kFormat) {
        throw SchemaError("'" + path.string() + "' is not a translation checkpoint");
    }
    archive.read("hmseg.trans_config", cfg);
    archive.read("hmseg.loss_weights", weights);
    archive.read("hmseg.step", step);
    TransCheckpoint ck;
    ck.cfg = TransConfig::from_json(json::parse(cfg.toStringRef()));
    ck.weights = LossWeights::from_json(json::parse(weights.toStringRef()));
    ck.step = static_cast<int>(step.toInt());
    auto pair = TranslationModelPair::build(ck.cfg);
    const std::pair<const char*, nn::Module*> nets[] = {
        {"gen_xy", pair.gen_xy.get()}, {"gen_yx", pair.gen_yx.get()}, {"disc_x", pair.disc_x.get()}, {"disc_y", pair.disc_y.get()}};
    for (const auto& [name, module] : nets) {
        torch::serialize::InputArchive sub;
        archive.read(name, sub);
        module->load(sub);
    }
    return {pair, ck};
}

Image preview_grid(const std::vector<Image>& inputs, const std::vector<Image>& translated) {
    if (inputs.size() != translated.size() || inputs.empty()) {
        throw DimensionError("preview_grid: need matching, non-empty input and output lists");
    }
    constexpr int gap = 4;
    int h = 0, w = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        h += inputs[i].height + (i ? gap : 0);
        w = std::max(w, inputs[i].width + gap + translated[i].width);
    }
    Image grid(h, w, 3, 255);
    int top = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto blit = [&](const Image& img, int left) {
            for (int r = 0; r < img.height; ++r)
                for (int c = 0; c < img.width; ++c)
                    for (int ch = 0; ch < 3; ++ch) grid.at(top + r, left + c, ch) = img.at(r, c, ch);
        };
        blit(inputs[i], 0);
        blit(translated[i], inputs[i].width + gap);
        top += inputs[i].height + gap;
    }
    return grid;
}

}  // namespace hmseg::trans
