#include "hmseg/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

namespace hmseg::seg {

using nlohmann::json;
namespace F = torch::nn::functional;

void SegConfig::validate() const {
    if (stages < 2) throw ConfigError("SegConfig.stages must be at least 2");
    if (stages > 12) throw ConfigError("SegConfig.stages must be at most 12");
    if (base_channels < 1 || max_channels < base_channels) throw ConfigError("SegConfig: invalid channel widths");
    if (num_classes < 2 || in_channels < 1) throw ConfigError("SegConfig: invalid class/input channel count");
    if (crop_px < 1 || epochs < 0 || batch_size < 1) throw ConfigError("SegConfig: crop, epochs and batch must be positive");
    if (!(scale_range.low > 0.0) || scale_range.high < scale_range.low) throw ConfigError("SegConfig: invalid scale range");
    if (learning_rate < 0.0 || momentum < 0.0 || momentum >= 1.0 || weight_decay < 0.0) {
        throw ConfigError("SegConfig: invalid optimizer settings");
    }
}

int SegConfig::channels_at(int stage) const {
    long ch = static_cast<long>(base_channels) << stage;
    return static_cast<int>(std::min<long>(ch, max_channels));
}

SegConfig SegConfig::paper(Collection c) {
    SegConfig cfg;
    cfg.crop_px = c == Collection::cassini ? 1000 : 500;
    return cfg;
}

SegConfig SegConfig::toy() {
    SegConfig cfg;
    cfg.stages = 5;
    cfg.base_channels = 8;
    cfg.max_channels = 128;
    cfg.crop_px = 128;
    cfg.batch_size = 8;
    cfg.epochs = 20;
    return cfg;
}

json SegConfig::to_json() const {
    return {{"stages", stages},
            {"base_channels", base_channels},
            {"max_channels", max_channels},
            {"num_classes", num_classes},
            {"in_channels", in_channels},
            {"padding_mode", "mirror"},
            {"crop_px", crop_px},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"scale_range", {scale_range.low, scale_range.high}},
            {"learning_rate", learning_rate},
            {"momentum", momentum},
            {"weight_decay", weight_decay},
            {"poly_exponent", poly_exponent},
            {"seed", seed}};
}

SegConfig SegConfig::from_json(const json& j) {
    SegConfig c;
    try {
        c.stages = j.value("stages", c.stages);
        c.base_channels = j.value("base_channels", c.base_channels);
        c.max_channels = j.value("max_channels", c.max_channels);
        c.num_classes = j.value("num_classes", c.num_classes);
        c.in_channels = j.value("in_channels", c.in_channels);
        if (j.value("padding_mode", std::string("mirror")) != "mirror") {
            throw ConfigError("SegConfig.padding_mode: only 'mirror' is supported");
        }
        c.crop_px = j.value("crop_px", c.crop_px);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        if (j.contains("scale_range")) {
            c.scale_range = {j["scale_range"].at(0).get<double>(), j["scale_range"].at(1).get<double>()};
        }
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.momentum = j.value("momentum", c.momentum);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.poly_exponent = j.value("poly_exponent", c.poly_exponent);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("SegConfig: ") + e.what());
    }
    c.validate();
    return c;
}

torch::Tensor mirror_pad(const torch::Tensor& x, int top, int bottom, int left, int right) {
    if (top == 0 && bottom == 0 && left == 0 && right == 0) {
        return x;
    }
    const auto h = x.size(-2);
    const auto w = x.size(-1);
    if (std::max(top, bottom) < h && std::max(left, right) < w) {
        return F::pad(x, F::PadFuncOptions({left, right, top, bottom}).mode(torch::kReflect));
    }
    auto fold = [](int before, int n, int after) {
        std::vector<int64_t> idx;
        idx.reserve(static_cast<std::size_t>(before + n + after));
        for (int i = -before; i < n + after; ++i) idx.push_back(mirror_index(i, n));
        return torch::tensor(idx, torch::kLong);
    };
    auto out = x.index_select(-2, fold(top, static_cast<int>(h), bottom).to(x.device()));
    return out.index_select(-1, fold(left, static_cast<int>(w), right).to(x.device()));
}

ConvNormActImpl::ConvNormActImpl(int in_ch, int out_ch, int stride) {
    conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3).stride(stride).padding(0)));
    norm = register_module("norm", torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out_ch).affine(true)));
}

torch::Tensor ConvNormActImpl::forward(const torch::Tensor& x) {
    return F::leaky_relu(norm(conv(mirror_pad(x, 1, 1, 1, 1))), F::LeakyReLUFuncOptions().negative_slope(0.01));
}

UNetImpl::UNetImpl(const SegConfig& config) : cfg(config) {
    cfg.validate();
    encoder = register_module("encoder", torch::nn::ModuleList());
    upsamplers = register_module("upsamplers", torch::nn::ModuleList());
    decoder = register_module("decoder", torch::nn::ModuleList());
    int in_ch = cfg.in_channels;
    for (int s = 0; s < cfg.stages; ++s) {
        const int ch = cfg.channels_at(s);
        torch::nn::Sequential stage(ConvNormAct(in_ch, ch, s == 0 ? 1 : 2), ConvNormAct(ch, ch, 1));
        encoder->push_back(stage);
        in_ch = ch;
    }
    for (int s = cfg.stages - 2; s >= 0; --s) {
        const int ch = cfg.channels_at(s);
        upsamplers->push_back(torch::nn::ConvTranspose2d(
            torch::nn::ConvTranspose2dOptions(cfg.channels_at(s + 1), ch, 2).stride(2)));
        decoder->push_back(torch::nn::Sequential(ConvNormAct(2 * ch, ch, 1), ConvNormAct(ch, ch, 1)));
    }
    head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.channels_at(0), cfg.num_classes, 1)));
}

std::vector<torch::Tensor> UNetImpl::encode(const torch::Tensor& x) {
    std::vector<torch::Tensor> feats;
    torch::Tensor h = x;
    for (const auto& stage : *encoder) {
        h = stage->as<torch::nn::Sequential>()->forward(h);
        feats.push_back(h);
    }
    return feats;
}

torch::Tensor UNetImpl::forward(const torch::Tensor& x) {
    const auto h = x.size(2);
    const auto w = x.size(3);
    const int f = cfg.downsampling_factor();
    const int pad_h = round_up_to_multiple(static_cast<int>(h), f) - static_cast<int>(h);
    const int pad_w = round_up_to_multiple(static_cast<int>(w), f) - static_cast<int>(w);
    const auto feats = encode(mirror_pad(x, 0, pad_h, 0, pad_w));
    torch::Tensor y = feats.back();
    for (std::size_t i = 0; i < upsamplers->size(); ++i) {
        y = upsamplers[i]->as<torch::nn::ConvTranspose2d>()->forward(y);
        y = torch::cat({y, feats[feats.size() - 2 - i]}, 1);
        y = decoder[i]->as<torch::nn::Sequential>()->forward(y);
    }
    return head(y).slice(2, 0, h).slice(3, 0, w);
}

UNet build_model(const SegConfig& cfg) {
    cfg.validate();
    torch::manual_seed(cfg.seed);
    return UNet(cfg);
}

torch::Tensor image_to_tensor(const Image& img) {
    if (img.channels != 3) throw DimensionError("image_to_tensor expects RGB");
    auto t = torch::from_blob(const_cast<std::uint8_t*>(img.data.data()), {img.height, img.width, 3}, torch::kUInt8);
    return t.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).unsqueeze(0).contiguous();
}

Image tensor_to_image(const torch::Tensor& t) {
    auto x = t.dim() == 4 ? t.squeeze(0) : t;
    x = x.detach().to(torch::kFloat32).add(1.0).mul(127.5).round().clamp(0, 255).to(torch::kUInt8);
    x = x.permute({1, 2, 0}).contiguous();
    Image img(static_cast<int>(x.size(0)), static_cast<int>(x.size(1)), 3);
    std::memcpy(img.data.data(), x.data_ptr<std::uint8_t>(), img.data.size());
    return img;
}

torch::Tensor labels_to_tensor(const LabelRaster& labels) {
    auto t = torch::from_blob(const_cast<std::uint8_t*>(labels.data.data.data()), {labels.height(), labels.width()},
                              torch::kUInt8);
    return t.to(torch::kLong).unsqueeze(0).contiguous();
}

torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& target) {
    if (logits.dim() != 4 || target.dim() != 3 || logits.size(0) != target.size(0) ||
        logits.size(2) != target.size(1) || logits.size(3) != target.size(2)) {
        throw DimensionError("seg_loss: logits [N,C,H,W] and target [N,H,W] shapes are inconsistent");
    }
    const auto num_classes = logits.size(1);
    if (target.numel() > 0 && (target.min().item<int64_t>() < 0 || target.max().item<int64_t>() >= num_classes)) {
        throw DomainError("seg_loss: target contains a class outside [0, " + std::to_string(num_classes) + ")");
    }
    const auto ce = F::cross_entropy(logits, target);
    const auto probs = torch::softmax(logits, 1);
    const auto onehot = F::one_hot(target, num_classes).permute({0, 3, 1, 2}).to(logits.dtype());
    const auto inter = (probs * onehot).sum({0, 2, 3});
    const auto denom = probs.sum({0, 2, 3}) + onehot.sum({0, 2, 3});
    const auto dice = (2.0 * inter + kDiceSmooth) / (denom + kDiceSmooth);
    return ce + (1.0 - dice.mean());
}

json TrainState::to_json() const {
    json hist = json::array();
    for (const auto& r : loss_history) hist.push_back({r.epoch, r.train_loss, r.val_score});
    return {{"epoch", epoch},
            {"best_epoch", best_epoch},
            {"best_val_score", best_val_score},
            {"initial_val_score", initial_val_score},
            {"rng_seed", rng_seed},
            {"no_validation", no_validation},
            {"loss_history", hist}};
}

TrainState TrainState::from_json(const json& j) {
    TrainState s;
    s.epoch = j.at("epoch").get<int>();
    s.best_epoch = j.at("best_epoch").get<int>();
    s.best_val_score = j.at("best_val_score").get<double>();
    s.initial_val_score = j.at("initial_val_score").get<double>();
    s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    s.no_validation = j.at("no_validation").get<bool>();
    for (const auto& r : j.at("loss_history")) {
        s.loss_history.push_back({r.at(0).get<int>(), r.at(1).get<double>(), r.at(2).get<double>()});
    }
    return s;
}

double poly_lr(double initial, int epoch, int epochs, double exponent) {
    if (epochs <= 0) return initial;
    return initial * std::pow(1.0 - static_cast<double>(epoch) / epochs, exponent);
}

std::vector<std::pair<std::string, torch::Tensor>> snapshot_parameters(const torch::nn::Module& module) {
    std::vector<std::pair<std::string, torch::Tensor>> snap;
    for (const auto& p : module.named_parameters()) snap.emplace_back(p.key(), p.value().detach().clone());
    for (const auto& b : module.named_buffers()) snap.emplace_back(b.key(), b.value().detach().clone());
    return snap;
}

void restore_parameters(torch::nn::Module& module, const std::vector<std::pair<std::string, torch::Tensor>>& snap) {
    torch::NoGradGuard guard;
    auto params = module.named_parameters();
    auto buffers = module.named_buffers();
    for (const auto& [name, value] : snap) {
        if (auto* p = params.find(name)) {
            p->copy_(value);
        } else if (auto* b = buffers.find(name)) {
            b->copy_(value);
        } else {
            throw DataError("snapshot entry '" + name + "' does not match the model");
        }
    }
}

LabelRaster predict_direct(UNet& model, const Image& image) {
    torch::NoGradGuard guard;
    model->eval();
    const auto pred = model->forward(image_to_tensor(image)).argmax(1).squeeze(0).to(torch::kUInt8).contiguous();
    LabelRaster out(image.height, image.width);
    std::memcpy(out.data.data.data(), pred.data_ptr<std::uint8_t>(), out.data.data.size());
    return out;
}

LabelRaster predict_tile(UNet& model, const Image& image, int patch_px) {
    const auto patches = extract_patches(image, nullptr, patch_px);
    std::vector<Raster<std::uint8_t>> preds;
    std::vector<PatchOffset> offsets;
    preds.reserve(patches.size());
    for (const auto& p : patches) {
        preds.push_back(predict_direct(model, p.image).data);
        offsets.push_back(p.offset);
    }
    LabelRaster out;
    out.data = stitch(preds, offsets, image.height, image.width);
    return out;
}

MetricReport evaluate_samples(UNet& model, const std::vector<Sample>& samples, int patch_px,
                              const MetricConfig& metric) {
    std::vector<MetricReport> reports;
    reports.reserve(samples.size());
    for (const auto& s : samples) {
        reports.push_back(evaluate_pair(predict_tile(model, s.image, patch_px), s.labels, metric));
    }
    return aggregate_reports(reports);
}

double validation_score(UNet& model, const std::vector<Sample>& samples, int patch_px, const MetricConfig& metric) {
    return evaluate_samples(model, samples, patch_px, metric).mean_diou();
}

std::vector<Sample> pair_samples(const std::vector<std::string>& ids, const std::map<std::string, Image>& images,
                                 const std::map<std::string, LabelRaster>& labels) {
    std::vector<Sample> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        const auto img = images.find(id);
        if (img == images.end()) throw PairingError("tile '" + id + "' has no image");
        const auto lab = labels.find(id);
        if (lab == labels.end()) throw PairingError("tile '" + id + "' has no aligned label raster");
        if (lab->second.height() != img->second.height || lab->second.width() != img->second.width) {
            throw PairingError("tile '" + id + "': image and label raster differ in shape");
        }
        out.push_back({id, img->second, lab->second});
    }
    return out;
}

TrainState train_supervised(UNet& model, const std::vector<Sample>& train, const std::vector<Sample>& val,
                            const SegConfig& cfg, const TrainOptions& opts) {
    cfg.validate();
    if (train.empty()) throw DataError("train_supervised: empty training set");

    TrainState state;
    state.rng_seed = cfg.seed;
    state.no_validation = val.empty();
    if (state.no_validation && opts.verbose) {
        std::cerr << "warning: empty validation set, keeping the last epoch\n";
    }
    if (!val.empty()) state.initial_val_score = validation_score(model, val, cfg.crop_px, opts.metric);

    torch::optim::SGD optimizer(model->parameters(), torch::optim::SGDOptions(cfg.learning_rate)
                                                         .momentum(cfg.momentum)
                                                         .nesterov(cfg.momentum > 0.0)
                                                         .weight_decay(cfg.weight_decay));
    std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66DULL);
    std::vector<std::size_t> order(train.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = poly_lr(cfg.learning_rate, epoch, cfg.epochs, cfg.poly_exponent);
        for (auto& group : optimizer.param_groups()) {
            static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
        }
        model->train();
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<torch::Tensor> xs, ys;
            for (std::size_t i = start; i < end; ++i) {
                const auto& s = train[order[i]];
                const auto crop = random_resized_crop(s.image, s.labels, cfg.crop_px, cfg.scale_range, rng);
                xs.push_back(image_to_tensor(crop.image));
                ys.push_back(labels_to_tensor(crop.labels));
            }
            optimizer.zero_grad();
            const auto loss = seg_loss(model->forward(torch::cat(xs, 0)), torch::cat(ys, 0));
            loss.backward();
            torch::nn::utils::clip_grad_norm_(model->parameters(), 12.0);
            optimizer.step();
            loss_sum += loss.item<double>();
            ++batches;
        }

        EpochRecord rec{epoch + 1, loss_sum / std::max(1, batches), 0.0};
        if (!val.empty()) {
            rec.val_score = validation_score(model, val, cfg.crop_px, opts.metric);
            if (rec.val_score > state.best_val_score) {
                state.best_val_score = rec.val_score;
                state.best_epoch = rec.epoch;
                state.best_parameters = snapshot_parameters(*model);
            }
        }
        state.loss_history.push_back(rec);
        state.epoch = rec.epoch;
        if (opts.verbose) {
            std::cerr << "epoch " << rec.epoch << " lr " << lr << " loss " << rec.train_loss << " val " << rec.val_score
                      << '\n';
        }
    }

    if (state.no_validation || state.best_parameters.empty()) {
        state.best_epoch = state.epoch;
        state.best_parameters = snapshot_parameters(*model);
        if (state.no_validation) state.best_val_score = 0.0;
        else state.best_val_score = state.initial_val_score;
    } else {
        restore_parameters(*model, state.best_parameters);
    }
    return state;
}

TrainState train_weak(UNet& model, const std::map<std::string, Image>& historical,
                      const std::map<std::string, LabelRaster>& modern_labels, const WeakSplit& split,
                      const SegConfig& cfg, const TrainOptions& opts) {
    const auto train = pair_samples(split.train, historical, modern_labels);
    const auto val = pair_samples(split.val, historical, modern_labels);
    return train_supervised(model, train, val, cfg, opts);
}

namespace {
constexpr const char* kConfigKey = "hmseg.seg_config";
constexpr const char* kStateKey = "hmseg.train_state";
constexpr const char* kFormatKey = "hmseg.format";
}  // namespace

void save_checkpoint(const std::filesystem::path& path, UNet& model, const SegConfig& cfg, const TrainState& state) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    torch::serialize::OutputArchive archive;
    archive.write(kFormatKey, c10::IValue(std::string("segnet-checkpoint-v1")));
    archive.write(kConfigKey, c10::IValue(cfg.to_json().dump()));
    archive.write(kStateKey, c10::IValue(state.to_json().dump()));
    torch::serialize::OutputArchive params;
    model->save(params);
    archive.write("model", params);
    archive.save_to(path.string());
}

std::pair<UNet, Checkpoint> load_checkpoint(const std::filesystem::path& path) {
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot read checkpoint '" + path.string() + "': " + e.what_without_backtrace());
    }
    c10::IValue format, config, state;
    if (!archive.try_read(kFormatKey, format) || format.toStringRef() != "segnet-checkpoint-v1") {
        throw SchemaError("'" + path.string() + "' is not a segmentation checkpoint");
    }
    archive.read(kConfigKey, config);
    archive.read(kStateKey, state);
    Checkpoint ck;
    ck.cfg = SegConfig::from_json(json::parse(config.toStringRef()));
    ck.state = TrainState::from_json(json::parse(state.toStringRef()));
    UNet model = build_model(ck.cfg);
    torch::serialize::InputArchive params;
    archive.read("model", params);
    model->load(params);
    ck.state.best_parameters = snapshot_parameters(*model);
    return {model, ck};
}

}  // namespace hmseg::seg
