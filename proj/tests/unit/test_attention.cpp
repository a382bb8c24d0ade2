#include <gtest/gtest.h>

#include "audiomod/attention.hpp"
#include "audiomod/errors.hpp"
#include "block_oracles.hpp"

namespace audiomod {
namespace {

using attention::AttentionKind;
using attention::AttentionVariant;
using nn::Mode;
using nn::Tensor;
using testing::random_tensor;
using testing::vals;

TEST(Attention, ParseVariants) {
  EXPECT_EQ(attention::parse_attention("none"), AttentionVariant::kNone);
  EXPECT_EQ(attention::parse_attention("se"), AttentionVariant::kSe);
  EXPECT_EQ(attention::parse_attention("cbam"), AttentionVariant::kCbam);
  EXPECT_EQ(attention::parse_attention("ca"), AttentionVariant::kCa);
  for (auto v : {AttentionVariant::kNone, AttentionVariant::kSe, AttentionVariant::kCbam, AttentionVariant::kCa})
    EXPECT_EQ(attention::parse_attention(attention::to_string(v)), v);
  try {
    attention::parse_attention("cbamm");
    FAIL();
  } catch (const ConfigKeyError& e) {
    EXPECT_EQ(e.key(), "model.attention");
  }
}

TEST(Attention, ReducedChannelsClampsAtOne) {
  EXPECT_EQ(attention::reduced_channels(64, 16), 4);
  EXPECT_EQ(attention::reduced_channels(8, 16), 1);
  EXPECT_EQ(attention::reduced_channels(1, 1), 1);
  EXPECT_THROW(attention::reduced_channels(8, 0), ConfigKeyError);
}

TEST(Attention, BlocksMatchLoopOracles) {
  for (const auto& [name, err] : testing::attention_oracle_errors(60)) {
    SCOPED_TRACE(name);
    EXPECT_LE(err, 1e-6);
  }
}

struct Blocks {
  attention::SEWeights<double> se;
  attention::CBAMWeights<double> cbam;
  attention::CAWeights<double> ca;
};

Blocks make_blocks(int c, int r, std::uint64_t seed) {
  nn::SeedSequence seeds(seed);
  return {attention::SEWeights<double>::make(c, r, seeds), attention::CBAMWeights<double>::make(c, r, seeds),
          attention::CAWeights<double>::make(c, r, seeds)};
}

template <typename T>
void zero_out(Tensor<T>& t) {
  for (auto& v : t.mutable_data()) v = 0;
}

TEST(Attention, ZeroWeightsGiveFixedGates) {
  auto b = make_blocks(6, 2, 3);
  zero_out(b.se.w1);
  zero_out(b.se.w2);
  zero_out(b.cbam.w0);
  zero_out(b.cbam.w1);
  zero_out(b.cbam.spatial);
  zero_out(b.ca.gate_h.weight);
  zero_out(b.ca.gate_h.bias);
  zero_out(b.ca.gate_w.weight);
  zero_out(b.ca.gate_w.bias);
  const auto x = random_tensor<double>({2, 6, 5, 4}, 9);
  const auto se = vals(attention::se_block(x, b.se));
  const auto cbam = vals(attention::cbam_block(x, b.cbam));
  const auto ca = vals(attention::ca_block(x, b.ca, Mode::kEval));
  const auto xv = vals(x);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    EXPECT_DOUBLE_EQ(se[i], 0.5 * xv[i]);
    EXPECT_DOUBLE_EQ(cbam[i], 0.25 * xv[i]);
    EXPECT_DOUBLE_EQ(ca[i], 0.25 * xv[i]);
  }
}

TEST(Attention, ZeroInputGivesZeroOutput) {
  auto b = make_blocks(8, 4, 5);
  const auto x = Tensor<double>::zeros({2, 8, 6, 3});
  for (const auto& out : {attention::se_block(x, b.se), attention::cbam_block(x, b.cbam),
                          attention::ca_block(x, b.ca, Mode::kEval), attention::ca_block(x, b.ca, Mode::kTrain)})
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Attention, ShapePreservedAcrossSizes) {
  for (int c : {1, 3, 16}) {
    for (auto [h, w] : {std::pair{1, 1}, std::pair{7, 2}, std::pair{3, 9}}) {
      auto b = make_blocks(c, 16, static_cast<std::uint64_t>(c * 100 + h * 10 + w));
      const auto x = random_tensor<double>({2, c, h, w}, 1);
      const nn::Shape want{2, c, h, w};
      EXPECT_EQ(attention::se_block(x, b.se).shape(), want);
      EXPECT_EQ(attention::cbam_block(x, b.cbam).shape(), want);
      EXPECT_EQ(attention::ca_block(x, b.ca, Mode::kTrain).shape(), want);
      EXPECT_EQ(attention::ca_block(x, b.ca, Mode::kEval).shape(), want);
    }
  }
}

TEST(Attention, NoneVariantIsIdentity) {
  nn::SeedSequence seeds(1);
  attention::AttentionBlock<double> none(AttentionKind{}, 4, seeds);
  const auto x = random_tensor<double>({1, 4, 3, 3}, 2);
  EXPECT_EQ(vals(none(x, Mode::kTrain, nullptr)), vals(x));
}

TEST(Attention, BlockHolderCollectsNamedState) {
  for (auto v : {AttentionVariant::kSe, AttentionVariant::kCbam, AttentionVariant::kCa}) {
    nn::SeedSequence seeds(1);
    attention::AttentionBlock<double> blk(AttentionKind{v, 4}, 8, seeds);
    nn::ParameterList<double> params, buffers;
    nn::StateCollector<double> c{params, buffers};
    blk.collect("a", c);
    EXPECT_FALSE(params.empty());
    EXPECT_EQ(buffers.size(), v == AttentionVariant::kCa ? 2u : 0u);
  }
}

// Rows at or beyond the mask length along H: arbitrary values must not change
// the gated output of the valid rows.
Tensor<double> fuzz_rows(Tensor<double> x, const std::vector<int>& lens, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-50, 50);
  const int c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto d = x.mutable_data();
  for (int n = 0; n < x.dim(0); ++n)
    for (int ch = 0; ch < c; ++ch)
      for (int i = lens[n]; i < h; ++i)
        for (int j = 0; j < w; ++j) d[((static_cast<std::size_t>(n) * c + ch) * h + i) * w + j] = u(rng);
  return x;
}

std::vector<double> valid_rows(const Tensor<double>& y, const std::vector<int>& lens) {
  std::vector<double> out;
  const int c = y.dim(1), h = y.dim(2), w = y.dim(3);
  for (int n = 0; n < y.dim(0); ++n)
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < lens[n]; ++i)
        for (int j = 0; j < w; ++j) out.push_back(y.data()[((static_cast<std::size_t>(n) * c + ch) * h + i) * w + j]);
  return out;
}

TEST(Attention, MaskedStatisticsIgnorePaddedRows) {
  const std::vector<int> lens{3, 6};
  const nn::AxisMask mask{2, lens};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto b = make_blocks(5, 2, seed);
    const auto x = fuzz_rows(random_tensor<double>({2, 5, 6, 4}, seed), lens, seed);
    const auto y = fuzz_rows(x, lens, seed + 100);
    EXPECT_EQ(valid_rows(attention::se_block(x, b.se, &mask), lens),
              valid_rows(attention::se_block(y, b.se, &mask), lens));
    EXPECT_EQ(valid_rows(attention::ca_block(x, b.ca, Mode::kEval, &mask), lens),
              valid_rows(attention::ca_block(y, b.ca, Mode::kEval, &mask), lens));
  }
}

// With zeroed padding and a mask, each item's valid rows match running the
// block on that item cropped to its length.
TEST(Attention, MaskedBatchMatchesCroppedItems) {
  const std::vector<int> lens{2, 5, 4};
  const nn::AxisMask mask{2, lens};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto b = make_blocks(6, 3, seed);
    const auto x = nn::apply_mask(random_tensor<double>({3, 6, 5, 3}, seed), mask);
    const auto se = attention::se_block(x, b.se, &mask);
    const auto cbam = attention::cbam_block(x, b.cbam, &mask);
    const auto ca = attention::ca_block(x, b.ca, Mode::kEval, &mask);
    for (int n = 0; n < 3; ++n) {
      const auto item = nn::slice(nn::slice(x, 0, n, 1), 2, 0, lens[n]);
      const std::vector<int> one{lens[n]};
      auto crop = [&](const Tensor<double>& t) { return valid_rows(nn::slice(t, 0, n, 1), one); };
      EXPECT_LE(testing::max_abs_diff(crop(se), vals(attention::se_block(item, b.se))), 1e-12);
      EXPECT_LE(testing::max_abs_diff(crop(cbam), vals(attention::cbam_block(item, b.cbam))), 1e-12);
      EXPECT_LE(testing::max_abs_diff(crop(ca), vals(attention::ca_block(item, b.ca, Mode::kEval))), 1e-12);
    }
  }
}

TEST(Attention, MaskOnWrongAxisRejected) {
  auto b = make_blocks(4, 2, 1);
  const auto x = random_tensor<double>({1, 4, 3, 3}, 1);
  const nn::AxisMask mask{3, {2}};
  EXPECT_THROW(attention::se_block(x, b.se, &mask), ContractError);
}

TEST(Attention, FloatMatchesDouble) {
  nn::SeedSequence sd(4), sf(4);
  auto wd = attention::CBAMWeights<double>::make(6, 2, sd);
  auto wf = attention::CBAMWeights<float>::make(6, 2, sf);
  const auto xd = random_tensor<double>({2, 6, 4, 5}, 8);
  const auto xf = random_tensor<float>({2, 6, 4, 5}, 8);
  const auto yd = attention::cbam_block(xd, wd);
  const auto yf = attention::cbam_block(xf, wf);
  for (std::size_t i = 0; i < yd.data().size(); ++i) EXPECT_NEAR(yf.data()[i], yd.data()[i], 1e-5);
}

}  // namespace
}  // namespace audiomod
