#include "audiomod/aggregation.hpp"

#include "audiomod/errors.hpp"

namespace audiomod::aggregation {

using nn::AxisMask;
using nn::ReduceKind;

template <typename T>
void FrameFeatures<T>::validate() const {
  if (values.ndim() != 3) throw ShapeError("frame features must be N x d x T', got " + nn::shape_str(values.shape()));
  if (static_cast<int>(valid_len.size()) != batch()) throw ShapeError("one valid length per utterance required");
  for (int len : valid_len) {
    if (len < 1 || len > frames()) {
      throw ShapeError("valid length " + std::to_string(len) + " outside [1, " + std::to_string(frames()) + "]");
    }
  }
}

PoolingVariant parse_pooling(std::string_view name) {
  if (name == "average") return PoolingVariant::kAverage;
  if (name == "attentive") return PoolingVariant::kAttentive;
  if (name == "max") return PoolingVariant::kMax;
  throw ConfigKeyError("model.pooling",
                       "unknown value '" + std::string(name) + "' (allowed: average|attentive|max)");
}

std::string_view to_string(PoolingVariant v) {
  switch (v) {
    case PoolingVariant::kAttentive: return "attentive";
    case PoolingVariant::kMax: return "max";
    default: return "average";
  }
}

template <typename T>
AttentiveParams<T> AttentiveParams<T>::make(int d, nn::SeedSequence& seeds) {
  AttentiveParams<T> p;
  p.w = nn::he_normal<T>({d, d}, d, seeds.next());
  p.w.set_requires_grad(true);
  p.b = Tensor<T>::zeros({d});
  p.b.set_requires_grad(true);
  p.v = nn::he_normal<T>({1, d}, d, seeds.next());
  p.v.set_requires_grad(true);
  return p;
}

template <typename T>
void AttentiveParams<T>::collect(const std::string& prefix, nn::StateCollector<T>& c) {
  c.param(prefix + ".w", w);
  c.param(prefix + ".b", b);
  c.param(prefix + ".v", v);
}

namespace {

template <typename T>
Tensor<T> pool_reduce(const FrameFeatures<T>& h, ReduceKind kind) {
  h.validate();
  const AxisMask mask{2, h.valid_len};
  return nn::reshape(nn::reduce(h.values, {2}, kind, &mask), {h.batch(), h.dim()});
}

}  // namespace

template <typename T>
Tensor<T> average_pool_time(const FrameFeatures<T>& h) {
  return pool_reduce(h, ReduceKind::kMean);
}

template <typename T>
Tensor<T> max_pool_time(const FrameFeatures<T>& h) {
  return pool_reduce(h, ReduceKind::kMax);
}

template <typename T>
Tensor<T> attention_weights(const FrameFeatures<T>& h, const AttentiveParams<T>& p) {
  h.validate();
  const int n = h.batch(), d = h.dim(), t = h.frames();
  const Tensor<T> frames = nn::reshape(nn::transpose(h.values, 1, 2), {n * t, d});
  const Tensor<T> scores = nn::linear(nn::tanh(nn::linear(frames, p.w, &p.b)), p.v);
  return nn::masked_softmax(nn::reshape(scores, {n, t}), h.valid_len);
}

template <typename T>
Tensor<T> attentive_pool_time(const FrameFeatures<T>& h, const AttentiveParams<T>& p) {
  const Tensor<T> a = attention_weights(h, p);
  const Tensor<T> weighted = nn::mul(h.values, nn::reshape(a, {h.batch(), 1, h.frames()}));
  const AxisMask mask{2, h.valid_len};
  return nn::reshape(nn::reduce(weighted, {2}, ReduceKind::kSum, &mask), {h.batch(), h.dim()});
}

template <typename T>
PoolingHead<T>::PoolingHead(PoolingVariant variant, int d, nn::SeedSequence& seeds) : variant_(variant) {
  if (variant_ == PoolingVariant::kAttentive) attentive_ = AttentiveParams<T>::make(d, seeds);
}

template <typename T>
Tensor<T> PoolingHead<T>::operator()(const FrameFeatures<T>& h) const {
  switch (variant_) {
    case PoolingVariant::kAttentive: return attentive_pool_time(h, attentive_);
    case PoolingVariant::kMax: return max_pool_time(h);
    default: return average_pool_time(h);
  }
}

template <typename T>
void PoolingHead<T>::collect(const std::string& prefix, nn::StateCollector<T>& c) {
  if (variant_ == PoolingVariant::kAttentive) attentive_.collect(prefix + ".attentive", c);
}

#define AUDIOMOD_INSTANTIATE(T)                                                                  \
  template struct FrameFeatures<T>;                                                              \
  template struct AttentiveParams<T>;                                                            \
  template class PoolingHead<T>;                                                                 \
  template Tensor<T> average_pool_time(const FrameFeatures<T>&);                                 \
  template Tensor<T> max_pool_time(const FrameFeatures<T>&);                                     \
  template Tensor<T> attentive_pool_time(const FrameFeatures<T>&, const AttentiveParams<T>&);    \
  template Tensor<T> attention_weights(const FrameFeatures<T>&, const AttentiveParams<T>&);

AUDIOMOD_INSTANTIATE(float)
AUDIOMOD_INSTANTIATE(double)

#undef AUDIOMOD_INSTANTIATE

}  // namespace audiomod::aggregation
