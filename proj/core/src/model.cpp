#include "audiomod/model.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "audiomod/errors.hpp"

namespace audiomod::model {

using nn::AxisMask;
using nn::BatchNormLayer;
using nn::Conv2dLayer;
using nn::LinearLayer;
using nn::SeedSequence;
using nn::StateCollector;

Arch parse_arch(std::string_view name) {
  if (name == "resnet18") return Arch::kResnet18;
  if (name == "resnet50") return Arch::kResnet50;
  if (name == "micro") return Arch::kMicro;
  throw ConfigKeyError("model.arch",
                       "unknown value '" + std::string(name) + "' (allowed: resnet18|resnet50|micro)");
}

std::string_view to_string(Arch a) {
  switch (a) {
    case Arch::kResnet50: return "resnet50";
    case Arch::kMicro: return "micro";
    default: return "resnet18";
  }
}

std::vector<int> ModelConfig::stage_widths() const {
  if (!channels.empty()) return channels;
  if (arch == Arch::kMicro) return {8, 16, 32, 64};
  return {64, 128, 256, 512};
}

std::vector<int> ModelConfig::stage_blocks() const {
  switch (arch) {
    case Arch::kResnet50: return {3, 4, 6, 3};
    case Arch::kMicro: return {1, 1, 1, 1};
    default: return {2, 2, 2, 2};
  }
}

int ModelConfig::embedding_dim() const {
  return stage_widths().back() * (bottleneck() ? 4 : 1);
}

void ModelConfig::validate() const {
  if (n_classes < 2) throw ConfigKeyError("model.n_classes", "must be >= 2");
  if (n_mels < 1) throw ConfigKeyError("fbank.n_mels", "must be >= 1");
  if (!channels.empty()) {
    if (channels.size() != 4) throw ConfigKeyError("model.channels", "needs exactly 4 stage widths");
    for (int c : channels) {
      if (c < 1) throw ConfigKeyError("model.channels", "widths must be positive");
    }
  }
  if (attention.reduction_r < 1) throw ConfigKeyError("model.attention_r", "must be >= 1");
}

std::string describe(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "model.arch = " << to_string(cfg.arch) << '\n';
  os << "model.channels = ";
  const auto widths = cfg.stage_widths();
  for (size_t i = 0; i < widths.size(); ++i) os << (i ? "," : "") << widths[i];
  os << '\n';
  os << "model.attention = " << attention::to_string(cfg.attention.variant) << '\n';
  os << "model.attention_r = " << cfg.attention.reduction_r << '\n';
  os << "model.pooling = " << aggregation::to_string(cfg.pooling) << '\n';
  os << "model.n_classes = " << cfg.n_classes << '\n';
  os << "model.n_mels = " << cfg.n_mels << '\n';
  os << "model.embedding_dim = " << cfg.embedding_dim() << '\n';
  return os.str();
}

namespace {

// Zeroes padded time rows. No-op when nothing is padded.
template <typename T>
Tensor<T> mask_time(const Tensor<T>& x, const std::vector<int>& lens) {
  const int t = x.dim(2);
  if (std::all_of(lens.begin(), lens.end(), [t](int l) { return l >= t; })) return x;
  return nn::apply_mask(x, AxisMask{2, lens});
}

std::vector<int> halve_all(const std::vector<int>& lens) {
  std::vector<int> out(lens.size());
  std::transform(lens.begin(), lens.end(), out.begin(), halve_ceil);
  return out;
}

template <typename T>
struct Shortcut {
  bool present = false;
  Conv2dLayer<T> conv;
  BatchNormLayer<T> bn;

  Shortcut() = default;
  Shortcut(int in, int out, int stride, SeedSequence& seeds) : present(true),
      conv(in, out, 1, {stride, 0}, false, seeds), bn(out) {}

  Tensor<T> operator()(const Tensor<T>& x, const std::vector<int>& lens, Mode mode) {
    if (!present) return x;
    return mask_time(bn(conv(x), mode), lens);
  }

  void collect(const std::string& prefix, StateCollector<T>& c) {
    if (!present) return;
    conv.collect(prefix + ".conv", c);
    bn.collect(prefix + ".bn", c);
  }
};

// conv3x3-BN-ReLU-conv3x3-BN, gated by attention, plus shortcut.
template <typename T>
struct BasicBlock {
  int stride = 1;
  Conv2dLayer<T> conv1, conv2;
  BatchNormLayer<T> bn1, bn2;
  attention::AttentionBlock<T> attn;
  Shortcut<T> shortcut;

  BasicBlock(int in, int out, int s, const attention::AttentionKind& kind, SeedSequence& seeds,
             SeedSequence& attn_seeds)
      : stride(s),
        conv1(in, out, 3, {s, 1}, false, seeds),
        conv2(out, out, 3, {1, 1}, false, seeds),
        bn1(out),
        bn2(out),
        attn(kind, out, attn_seeds) {
    if (s != 1 || in != out) shortcut = Shortcut<T>(in, out, s, seeds);
  }

  Tensor<T> forward(const Tensor<T>& x, std::vector<int>& lens, Mode mode) {
    const std::vector<int> out_lens = stride == 2 ? halve_all(lens) : lens;
    Tensor<T> y = nn::relu(mask_time(bn1(conv1(x), mode), out_lens));
    y = mask_time(bn2(conv2(y), mode), out_lens);
    const AxisMask mask{2, out_lens};
    y = attn(y, mode, &mask);
    Tensor<T> out = nn::relu(nn::add(y, shortcut(x, out_lens, mode)));
    lens = out_lens;
    return out;
  }

  void collect(const std::string& prefix, StateCollector<T>& c) {
    conv1.collect(prefix + ".conv1", c);
    bn1.collect(prefix + ".bn1", c);
    conv2.collect(prefix + ".conv2", c);
    bn2.collect(prefix + ".bn2", c);
    attn.collect(prefix + ".attn", c);
    shortcut.collect(prefix + ".shortcut", c);
  }
};

// 1x1 reduce, 3x3 (strided), 1x1 expand by 4.
template <typename T>
struct BottleneckBlock {
  int stride = 1;
  Conv2dLayer<T> conv1, conv2, conv3;
  BatchNormLayer<T> bn1, bn2, bn3;
  attention::AttentionBlock<T> attn;
  Shortcut<T> shortcut;

  BottleneckBlock(int in, int width, int s, const attention::AttentionKind& kind, SeedSequence& seeds,
                  SeedSequence& attn_seeds)
      : stride(s),
        conv1(in, width, 1, {1, 0}, false, seeds),
        conv2(width, width, 3, {s, 1}, false, seeds),
        conv3(width, width * 4, 1, {1, 0}, false, seeds),
        bn1(width),
        bn2(width),
        bn3(width * 4),
        attn(kind, width * 4, attn_seeds) {
    if (s != 1 || in != width * 4) shortcut = Shortcut<T>(in, width * 4, s, seeds);
  }

  Tensor<T> forward(const Tensor<T>& x, std::vector<int>& lens, Mode mode) {
    const std::vector<int> out_lens = stride == 2 ? halve_all(lens) : lens;
    Tensor<T> y = nn::relu(mask_time(bn1(conv1(x), mode), lens));
    y = nn::relu(mask_time(bn2(conv2(y), mode), out_lens));
    y = mask_time(bn3(conv3(y), mode), out_lens);
    const AxisMask mask{2, out_lens};
    y = attn(y, mode, &mask);
    Tensor<T> out = nn::relu(nn::add(y, shortcut(x, out_lens, mode)));
    lens = out_lens;
    return out;
  }

  void collect(const std::string& prefix, StateCollector<T>& c) {
    conv1.collect(prefix + ".conv1", c);
    bn1.collect(prefix + ".bn1", c);
    conv2.collect(prefix + ".conv2", c);
    bn2.collect(prefix + ".bn2", c);
    conv3.collect(prefix + ".conv3", c);
    bn3.collect(prefix + ".bn3", c);
    attn.collect(prefix + ".attn", c);
    shortcut.collect(prefix + ".shortcut", c);
  }
};

// Independent seed streams keep backbone initialization identical whatever
// attention or pooling variant is selected.
constexpr std::uint64_t kAttentionStream = 0xA77E'0000'0000'0001ULL;
constexpr std::uint64_t kHeadStream = 0x4EAD'0000'0000'0002ULL;

}  // namespace

template <typename T>
struct Model<T>::Impl {
  Conv2dLayer<T> stem_conv;
  BatchNormLayer<T> stem_bn;
  std::vector<BasicBlock<T>> basic;
  std::vector<BottleneckBlock<T>> bottleneck;
  std::vector<std::string> block_names;
  aggregation::PoolingHead<T> head;
  LinearLayer<T> fc;
};

template <typename T>
Model<T>::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), impl_(std::make_unique<Impl>()) {
  cfg_.validate();
  SeedSequence seeds(seed);
  SeedSequence attn_seeds(seed ^ kAttentionStream);
  SeedSequence head_seeds(seed ^ kHeadStream);

  const auto widths = cfg_.stage_widths();
  const auto blocks = cfg_.stage_blocks();
  Impl& m = *impl_;
  m.stem_conv = Conv2dLayer<T>(1, widths[0], 7, {2, 3}, false, seeds);
  m.stem_bn = BatchNormLayer<T>(widths[0]);

  int in = widths[0];
  for (size_t s = 0; s < widths.size(); ++s) {
    for (int b = 0; b < blocks[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      m.block_names.push_back("stage" + std::to_string(s + 1) + ".block" + std::to_string(b));
      if (cfg_.bottleneck()) {
        m.bottleneck.emplace_back(in, widths[s], stride, cfg_.attention, seeds, attn_seeds);
        in = widths[s] * 4;
      } else {
        m.basic.emplace_back(in, widths[s], stride, cfg_.attention, seeds, attn_seeds);
        in = widths[s];
      }
    }
  }
  m.head = aggregation::PoolingHead<T>(cfg_.pooling, in, head_seeds);
  m.fc = LinearLayer<T>(in, cfg_.n_classes, true, head_seeds);

  StateCollector<T> c{params_, buffers_};
  m.stem_conv.collect("stem.conv", c);
  m.stem_bn.collect("stem.bn", c);
  for (size_t i = 0; i < m.block_names.size(); ++i) {
    if (cfg_.bottleneck()) {
      m.bottleneck[i].collect(m.block_names[i], c);
    } else {
      m.basic[i].collect(m.block_names[i], c);
    }
  }
  m.head.collect("head", c);
  m.fc.collect("fc", c);

  std::unordered_set<std::string> names;
  for (const auto& p : state()) {
    if (!names.insert(p.name).second) throw ContractError("duplicate parameter name " + p.name);
  }
}

template <typename T>
Model<T>::~Model() = default;
template <typename T>
Model<T>::Model(Model&&) noexcept = default;
template <typename T>
Model<T>& Model<T>::operator=(Model&&) noexcept = default;

template <typename T>
aggregation::FrameFeatures<T> Model<T>::forward_features(const Tensor<T>& x,
                                                         const std::vector<int>& valid_frames,
                                                         Mode mode) {
  if (x.ndim() != 4 || x.dim(1) != 1 || x.dim(3) != cfg_.n_mels) {
    throw ShapeError("model input must be N x 1 x T x " + std::to_string(cfg_.n_mels) + ", got " +
                     nn::shape_str(x.shape()));
  }
  const int t = x.dim(2);
  if (t < kTimeReduction) {
    throw ShapeError("need at least " + std::to_string(kTimeReduction) + " frames, got " + std::to_string(t));
  }
  if (static_cast<int>(valid_frames.size()) != x.dim(0)) {
    throw ShapeError("one valid frame count per batch item required");
  }
  for (int v : valid_frames) {
    if (v < 1 || v > t) throw ShapeError("valid frame count " + std::to_string(v) + " outside [1, T]");
  }

  Impl& m = *impl_;
  std::vector<int> lens = valid_frames;
  Tensor<T> h = mask_time(x, lens);
  lens = halve_all(lens);
  h = nn::relu(mask_time(m.stem_bn(m.stem_conv(h), mode), lens));
  lens = halve_all(lens);
  h = mask_time(nn::pool2d(h, nn::PoolKind::kMax, {3, 2, 1}), lens);

  if (cfg_.bottleneck()) {
    for (auto& block : m.bottleneck) h = block.forward(h, lens, mode);
  } else {
    for (auto& block : m.basic) h = block.forward(h, lens, mode);
  }

  // Collapse frequency: N x d x T' x F' -> N x d x T'.
  const int n = h.dim(0), d = h.dim(1), frames = h.dim(2);
  aggregation::FrameFeatures<T> out;
  out.values = nn::reshape(nn::reduce(h, {3}, nn::ReduceKind::kMean), {n, d, frames});
  out.valid_len = std::move(lens);
  return out;
}

template <typename T>
Tensor<T> Model<T>::forward_classify(const Tensor<T>& x, const std::vector<int>& valid_frames, Mode mode) {
  const auto features = forward_features(x, valid_frames, mode);
  return impl_->fc(impl_->head(features));
}

template <typename T>
nn::ParameterList<T> Model<T>::state() const {
  nn::ParameterList<T> all = params_;
  all.insert(all.end(), buffers_.begin(), buffers_.end());
  return all;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template class Model<float>;
template class Model<double>;

}  // namespace audiomod::model
