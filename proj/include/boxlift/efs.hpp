#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "boxlift/rasterizer.hpp"
#include "boxlift/tensor.hpp"

namespace boxlift {

/// Geometry and widths of the feature synthesizer.
///   c0: replication width of the pseudo-BEV expansion (64 by default)
///   stages (L): encoder depth; the BEV grid shrinks by 2^L
///   ego_channels (C): channel width of the ego latent feature
/// Feature dims are (H, W) = (H_bev / 2^L, W_bev / 2^L). Both must be
/// divisible by 4 so the two pyramid downsamplings realign exactly with the
/// pooled ego feature and the x2/x4 upsampling restores H x W.
struct EfsConfig {
    int base_channels = 64;
    int stages = 2;
    int ego_channels = 256;
    GridSpec grid;

    GridDims bev_dims() const { return grid_dims(grid); }
    int feature_rows() const;
    int feature_cols() const;
    int object_channels() const { return ego_channels / 2; }  // width of O_i

    /// Encoder channel plan: double per stage from c0, capped at C/2; the
    /// final stage always lands on C/2.
    int stage_channels(int stage) const;  // stage in [0, L], 0 = expansion width
    void validate() const;
};

/// Conv -> BN -> SiLU.
struct CbaParams {
    ConvParams conv;
    BnAffine bn;
};

/// x + BN(Conv(SiLU(BN(Conv(x))))), both convs 3x3 stride 1.
struct ResBlockParams {
    ConvParams conv1;
    BnAffine bn1;
    ConvParams conv2;
    BnAffine bn2;
};

/// All learnable blocks of the synthesizer.
///   oce: per stage a stride-2 CBA (channel increase) then a stride-1 CBA
///   eim: shared Down_1, Down_2 and the two upsampling CBAs (all keep C/2)
///   elr: two projection CBAs (3C/2 -> C -> C) and three residual blocks at C
struct EfsParams {
    std::vector<CbaParams> oce;  // 2 * stages entries: [s2, s1] per stage
    CbaParams eim_down1, eim_down2, eim_up1, eim_up2;
    CbaParams elr_proj1, elr_proj2;
    std::array<ResBlockParams, 3> elr_blocks;
    std::uint64_t seed = 0;
};

/// Seeded Xavier-uniform initialization: every conv weight is drawn from
/// U(-a, a), a = sqrt(6 / (fan_in + fan_out)) with fan = channels * k^2, via
/// one SplitMix64 stream. Draw order: blocks as listed in EfsParams (oce
/// stage by stage, s2 before s1; eim down1, down2, up1, up2; elr proj1,
/// proj2; then each residual block's conv1, conv2), and within a conv the
/// weights in storage order [out][ky][kx][in]. Biases start at zero and BN at
/// identity statistics (mean 0, var 1, scale 1, shift 0).
EfsParams init_params(const EfsConfig& cfg, std::uint64_t seed);

/// Replicate the single-channel map across c0 channels; no parameters.
FeatureMap expand(const PseudoBev& x, int c0);

FeatureMap cba_forward(const FeatureMap& x, const CbaParams& p);
FeatureMap resblock_forward(const FeatureMap& x, const ResBlockParams& p);

/// Parameter-free C -> C/2 reduction: average adjacent channel pairs.
FeatureMap reduce_channels_pairwise(const FeatureMap& f);

/// Object-centric encoding of the pseudo-BEV map: (H_bev, W_bev, 1) ->
/// (H, W, C/2).
FeatureMap oce_forward(const PseudoBev& x, const EfsParams& p, const EfsConfig& cfg);

/// Two-stage pyramid that injects the (channel-reduced, pooled) ego feature
/// additively before each downsampling; both outputs are (H, W, C/2).
std::pair<FeatureMap, FeatureMap> eim_forward(const FeatureMap& object_feat,
                                              const FeatureMap& ego_feat,
                                              const EfsParams& p, const EfsConfig& cfg);

/// Concat [O, Z1, Z2] -> project to C -> three residual blocks -> (H, W, C).
FeatureMap elr_forward(const FeatureMap& object_feat, const FeatureMap& z1,
                       const FeatureMap& z2, const EfsParams& p, const EfsConfig& cfg);

/// Full synthesis: (H_bev, W_bev, 1) pseudo-BEV + (H, W, C) ego feature ->
/// (H, W, C).
FeatureMap efs_forward(const PseudoBev& x, const FeatureMap& ego_feat,
                       const EfsParams& p, const EfsConfig& cfg);

/// Fixed seeded network standing in for a frozen ego encoder: the OCE encoder
/// trunk followed by the ELR projection/refinement widths, mapping a BEV map
/// to an (H, W, C) feature.
struct EncoderStubParams {
    std::vector<CbaParams> stages;  // 2 * L entries
    CbaParams proj1, proj2;
    std::array<ResBlockParams, 3> blocks;
    std::uint64_t seed = 0;
};

EncoderStubParams init_encoder_stub(const EfsConfig& cfg, std::uint64_t seed);
FeatureMap encoder_stub_forward(const PseudoBev& x, const EncoderStubParams& p,
                                const EfsConfig& cfg);

/// Flat scalar stream with a per-block manifest header; hexfloat scalars make
/// the round trip bit-exact.
void save_efs_params(std::ostream& os, const EfsParams& p);
EfsParams load_efs_params(std::istream& is);

}  // namespace boxlift
