#include "audiomod/attention.hpp"

#include <algorithm>

#include "audiomod/errors.hpp"

namespace audiomod::attention {

using nn::ReduceKind;

AttentionVariant parse_attention(std::string_view name) {
  if (name == "none") return AttentionVariant::kNone;
  if (name == "se") return AttentionVariant::kSe;
  if (name == "cbam") return AttentionVariant::kCbam;
  if (name == "ca") return AttentionVariant::kCa;
  throw ConfigKeyError("model.attention",
                       "unknown value '" + std::string(name) + "' (allowed: none|se|cbam|ca)");
}

std::string_view to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::kSe: return "se";
    case AttentionVariant::kCbam: return "cbam";
    case AttentionVariant::kCa: return "ca";
    default: return "none";
  }
}

int reduced_channels(int channels, int reduction_r) {
  if (reduction_r < 1) throw ConfigKeyError("model.attention_r", "must be >= 1");
  return std::max(1, channels / reduction_r);
}

namespace {

template <typename T>
Tensor<T> learnable(Tensor<T> t) {
  t.set_requires_grad(true);
  return t;
}

// N x C x 1 x 1 -> N x C
template <typename T>
Tensor<T> flatten_channels(const Tensor<T>& t) {
  return nn::reshape(t, {t.dim(0), t.dim(1)});
}

template <typename T>
Tensor<T> as_channel_gate(const Tensor<T>& s) {
  return nn::reshape(s, {s.dim(0), s.dim(1), 1, 1});
}

void check_mask(const AxisMask* mask) {
  if (mask != nullptr && mask->axis != 2) throw ContractError("attention masks must use axis 2");
}

}  // namespace

template <typename T>
SEWeights<T> SEWeights<T>::make(int channels, int reduction_r, nn::SeedSequence& seeds) {
  const int mid = reduced_channels(channels, reduction_r);
  SEWeights<T> w;
  w.w1 = learnable(nn::he_normal<T>({mid, channels}, channels, seeds.next()));
  w.w2 = learnable(nn::he_normal<T>({channels, mid}, mid, seeds.next()));
  return w;
}

template <typename T>
void SEWeights<T>::collect(const std::string& prefix, nn::StateCollector<T>& c) {
  c.param(prefix + ".w1", w1);
  c.param(prefix + ".w2", w2);
}

template <typename T>
CBAMWeights<T> CBAMWeights<T>::make(int channels, int reduction_r, nn::SeedSequence& seeds) {
  const int mid = reduced_channels(channels, reduction_r);
  CBAMWeights<T> w;
  w.w0 = learnable(nn::he_normal<T>({mid, channels}, channels, seeds.next()));
  w.w1 = learnable(nn::he_normal<T>({channels, mid}, mid, seeds.next()));
  w.spatial = learnable(nn::he_normal<T>({1, 2, 7, 7}, 2 * 49, seeds.next()));
  return w;
}

template <typename T>
void CBAMWeights<T>::collect(const std::string& prefix, nn::StateCollector<T>& c) {
  c.param(prefix + ".w0", w0);
  c.param(prefix + ".w1", w1);
  c.param(prefix + ".spatial", spatial);
}

template <typename T>
CAWeights<T> CAWeights<T>::make(int channels, int reduction_r, nn::SeedSequence& seeds) {
  const int mid = reduced_channels(channels, reduction_r);
  CAWeights<T> w;
  w.reduce = nn::Conv2dLayer<T>(channels, mid, 1, {}, false, seeds);  // BN follows; a bias would be inert
  w.bn = nn::BatchNormLayer<T>(mid);
  w.gate_h = nn::Conv2dLayer<T>(mid, channels, 1, {}, true, seeds);
  w.gate_w = nn::Conv2dLayer<T>(mid, channels, 1, {}, true, seeds);
  return w;
}

template <typename T>
void CAWeights<T>::collect(const std::string& prefix, nn::StateCollector<T>& c) {
  reduce.collect(prefix + ".reduce", c);
  bn.collect(prefix + ".bn", c);
  gate_h.collect(prefix + ".gate_h", c);
  gate_w.collect(prefix + ".gate_w", c);
}

template <typename T>
Tensor<T> se_block(const Tensor<T>& x, const SEWeights<T>& w, const AxisMask* mask) {
  check_mask(mask);
  const Tensor<T> z = flatten_channels(nn::reduce(x, {2, 3}, ReduceKind::kMean, mask));
  const Tensor<T> s = nn::sigmoid(nn::linear(nn::relu(nn::linear(z, w.w1)), w.w2));
  return nn::mul(x, as_channel_gate(s));
}

template <typename T>
Tensor<T> cbam_block(const Tensor<T>& x, const CBAMWeights<T>& w, const AxisMask* mask) {
  check_mask(mask);
  auto mlp = [&w](const Tensor<T>& v) { return nn::linear(nn::relu(nn::linear(v, w.w0)), w.w1); };
  const Tensor<T> avg = flatten_channels(nn::reduce(x, {2, 3}, ReduceKind::kMean, mask));
  const Tensor<T> mx = flatten_channels(nn::reduce(x, {2, 3}, ReduceKind::kMax, mask));
  const Tensor<T> channel_gate = nn::sigmoid(nn::add(mlp(avg), mlp(mx)));
  const Tensor<T> refined = nn::mul(x, as_channel_gate(channel_gate));

  const Tensor<T> pooled = nn::concat<T>({nn::reduce(refined, {1}, ReduceKind::kMean),
                                          nn::reduce(refined, {1}, ReduceKind::kMax)},
                                         1);
  const Tensor<T> spatial_gate = nn::sigmoid(nn::conv2d<T>(pooled, w.spatial, nullptr, {1, 3}));
  return nn::mul(refined, spatial_gate);
}

template <typename T>
Tensor<T> ca_block(const Tensor<T>& x, CAWeights<T>& w, Mode mode, const AxisMask* mask) {
  check_mask(mask);
  const int h = x.dim(2);
  const int wd = x.dim(3);
  // z^h: mean over width for each row; z^w: mean over (valid) rows per column.
  const Tensor<T> zh = nn::reduce(x, {3}, ReduceKind::kMean);
  const Tensor<T> zw = nn::transpose(nn::reduce(x, {2}, ReduceKind::kMean, mask), 2, 3);
  const Tensor<T> joined = nn::concat<T>({zh, zw}, 2);  // N x C x (H+W) x 1
  const Tensor<T> u = nn::relu(w.bn(w.reduce(joined), mode));
  const Tensor<T> uh = nn::slice(u, 2, 0, h);
  const Tensor<T> uw = nn::transpose(nn::slice(u, 2, h, wd), 2, 3);
  const Tensor<T> sh = nn::sigmoid(w.gate_h(uh));  // N x C x H x 1
  const Tensor<T> sw = nn::sigmoid(w.gate_w(uw));  // N x C x 1 x W
  return nn::mul(nn::mul(x, sh), sw);
}

template <typename T>
AttentionBlock<T>::AttentionBlock(AttentionKind kind, int channels, nn::SeedSequence& seeds)
    : variant_(kind.variant) {
  switch (variant_) {
    case AttentionVariant::kSe: se_ = SEWeights<T>::make(channels, kind.reduction_r, seeds); break;
    case AttentionVariant::kCbam: cbam_ = CBAMWeights<T>::make(channels, kind.reduction_r, seeds); break;
    case AttentionVariant::kCa: ca_ = CAWeights<T>::make(channels, kind.reduction_r, seeds); break;
    default: break;
  }
}

template <typename T>
Tensor<T> AttentionBlock<T>::operator()(const Tensor<T>& x, Mode mode, const AxisMask* mask) {
  switch (variant_) {
    case AttentionVariant::kSe: return se_block(x, se_, mask);
    case AttentionVariant::kCbam: return cbam_block(x, cbam_, mask);
    case AttentionVariant::kCa: return ca_block(x, ca_, mode, mask);
    default: return x;
  }
}

template <typename T>
void AttentionBlock<T>::collect(const std::string& prefix, nn::StateCollector<T>& c) {
  switch (variant_) {
    case AttentionVariant::kSe: se_.collect(prefix + ".se", c); break;
    case AttentionVariant::kCbam: cbam_.collect(prefix + ".cbam", c); break;
    case AttentionVariant::kCa: ca_.collect(prefix + ".ca", c); break;
    default: break;
  }
}

#define AUDIOMOD_INSTANTIATE(T)                                                            \
  template struct SEWeights<T>;                                                            \
  template struct CBAMWeights<T>;                                                          \
  template struct CAWeights<T>;                                                            \
  template class AttentionBlock<T>;                                                        \
  template Tensor<T> se_block(const Tensor<T>&, const SEWeights<T>&, const AxisMask*);     \
  template Tensor<T> cbam_block(const Tensor<T>&, const CBAMWeights<T>&, const AxisMask*); \
  template Tensor<T> ca_block(const Tensor<T>&, CAWeights<T>&, Mode, const AxisMask*);

AUDIOMOD_INSTANTIATE(float)
AUDIOMOD_INSTANTIATE(double)

#undef AUDIOMOD_INSTANTIATE

}  // namespace audiomod::attention
