#include "boxlift/efs.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>

#include "boxlift/error.hpp"
#include "boxlift/rng.hpp"

namespace boxlift {

int EfsConfig::feature_rows() const { return bev_dims().rows / (1 << stages); }
int EfsConfig::feature_cols() const { return bev_dims().cols / (1 << stages); }

int EfsConfig::stage_channels(int stage) const {
    if (stage <= 0) return base_channels;
    if (stage >= stages) return object_channels();
    const long long doubled = static_cast<long long>(base_channels) << stage;
    return static_cast<int>(std::min<long long>(doubled, object_channels()));
}

void EfsConfig::validate() const {
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
    if (stages < 1 || stages > 16) throw ConfigError("stages must be in [1, 16]");
    if (ego_channels < 2 || ego_channels % 2 != 0)
        throw ConfigError("ego_channels must be a positive even number");
    const GridDims d = bev_dims();
    const int div = 1 << stages;
    if (d.rows % div != 0 || d.cols % div != 0)
        throw ConfigError("2^stages must divide the BEV grid dims (" + std::to_string(d.rows) +
                          "x" + std::to_string(d.cols) + " / " + std::to_string(div) + ")");
    if (feature_rows() % 4 != 0 || feature_cols() % 4 != 0)
        throw ConfigError("feature dims must be divisible by 4 for the two-stage pyramid");
}

namespace {

struct XavierInit {
    SplitMix64 rng;

    explicit XavierInit(std::uint64_t seed) : rng(seed) {}

    void fill(ConvParams& p) {
        const double fan_in = static_cast<double>(p.in_channels) * p.kernel * p.kernel;
        const double fan_out = static_cast<double>(p.out_channels) * p.kernel * p.kernel;
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (float& w : p.weight) w = static_cast<float>((2.0 * rng.uniform01() - 1.0) * a);
    }

    void fill_bias(ConvParams& p) {
        const double fan_in = static_cast<double>(p.in_channels) * p.kernel * p.kernel;
        const double bound = 1.0 / std::sqrt(fan_in);
        for (float& b : p.bias) b = static_cast<float>((2.0 * rng.uniform01() - 1.0) * bound);
    }

    CbaParams cba(int in_ch, int out_ch, int kernel, int stride, bool with_bias = false) {
        CbaParams p;
        p.conv = ConvParams(in_ch, out_ch, kernel, stride);
        fill(p.conv);
        if (with_bias) fill_bias(p.conv);
        p.bn = BnAffine::identity(out_ch);
        return p;
    }

    ResBlockParams resblock(int ch, bool with_bias = false) {
        ResBlockParams p;
        p.conv1 = ConvParams(ch, ch, 3, 1);
        fill(p.conv1);
        if (with_bias) fill_bias(p.conv1);
        p.bn1 = BnAffine::identity(ch);
        p.conv2 = ConvParams(ch, ch, 3, 1);
        fill(p.conv2);
        if (with_bias) fill_bias(p.conv2);
        p.bn2 = BnAffine::identity(ch);
        return p;
    }
};

FeatureMap add_maps(const FeatureMap& a, const FeatureMap& b) {
    if (!a.same_shape(b)) throw ShapeError("elementwise add: shape mismatch");
    FeatureMap out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b, const FeatureMap& c) {
    if (a.rows != b.rows || a.cols != b.cols || a.rows != c.rows || a.cols != c.cols)
        throw ShapeError("concat: spatial dims mismatch");
    FeatureMap out(a.rows, a.cols, a.channels + b.channels + c.channels);
    const std::size_t cells = static_cast<std::size_t>(a.rows) * a.cols;
    for (std::size_t i = 0; i < cells; ++i) {
        float* dst = out.data.data() + i * out.channels;
        const float* pa = a.data.data() + i * a.channels;
        const float* pb = b.data.data() + i * b.channels;
        const float* pc = c.data.data() + i * c.channels;
        for (int ch = 0; ch < a.channels; ++ch) dst[ch] = pa[ch];
        dst += a.channels;
        for (int ch = 0; ch < b.channels; ++ch) dst[ch] = pb[ch];
        dst += b.channels;
        for (int ch = 0; ch < c.channels; ++ch) dst[ch] = pc[ch];
    }
    return out;
}

void expect_shape(const FeatureMap& x, int rows, int cols, int ch, const char* what) {
    if (x.rows != rows || x.cols != cols || x.channels != ch)
        throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + "x" + std::to_string(ch) + ", got " +
                         std::to_string(x.rows) + "x" + std::to_string(x.cols) + "x" +
                         std::to_string(x.channels));
}

}  // namespace

EfsParams init_params(const EfsConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    XavierInit init(seed);
    const int c_half = cfg.object_channels();
    const int c = cfg.ego_channels;

    EfsParams p;
    p.seed = seed;
    for (int stage = 1; stage <= cfg.stages; ++stage) {
        const int in_ch = cfg.stage_channels(stage - 1);
        const int out_ch = cfg.stage_channels(stage);
        p.oce.push_back(init.cba(in_ch, out_ch, 3, 2));
        p.oce.push_back(init.cba(out_ch, out_ch, 3, 1));
    }
    p.eim_down1 = init.cba(c_half, c_half, 3, 2);
    p.eim_down2 = init.cba(c_half, c_half, 3, 2);
    p.eim_up1 = init.cba(c_half, c_half, 3, 1);
    p.eim_up2 = init.cba(c_half, c_half, 3, 1);
    p.elr_proj1 = init.cba(3 * c_half, c, 3, 1);
    p.elr_proj2 = init.cba(c, c, 3, 1);
    for (auto& rb : p.elr_blocks) rb = init.resblock(c);
    return p;
}

FeatureMap expand(const PseudoBev& x, int c0) {
    if (c0 < 1) throw ConfigError("expand: c0 must be >= 1");
    if (x.map.channels != 1) throw ShapeError("expand: pseudo-BEV must be single-channel");
    FeatureMap out(x.map.rows, x.map.cols, c0);
    const std::size_t cells = static_cast<std::size_t>(x.map.rows) * x.map.cols;
    for (std::size_t i = 0; i < cells; ++i) {
        const float v = x.map.data[i];
        float* dst = out.data.data() + i * c0;
        for (int ch = 0; ch < c0; ++ch) dst[ch] = v;
    }
    return out;
}

FeatureMap cba_forward(const FeatureMap& x, const CbaParams& p) {
    return silu(bn_affine(conv2d(x, p.conv), p.bn));
}

FeatureMap resblock_forward(const FeatureMap& x, const ResBlockParams& p) {
    FeatureMap y = bn_affine(conv2d(x, p.conv1), p.bn1);
    y = silu(y);
    y = bn_affine(conv2d(y, p.conv2), p.bn2);
    return add_maps(x, y);
}

FeatureMap reduce_channels_pairwise(const FeatureMap& f) {
    if (f.channels % 2 != 0) throw ShapeError("pairwise reduction needs an even channel count");
    FeatureMap out(f.rows, f.cols, f.channels / 2);
    const std::size_t cells = static_cast<std::size_t>(f.rows) * f.cols;
    for (std::size_t i = 0; i < cells; ++i) {
        const float* src = f.data.data() + i * f.channels;
        float* dst = out.data.data() + i * out.channels;
        for (int ch = 0; ch < out.channels; ++ch)
            dst[ch] = 0.5f * (src[2 * ch] + src[2 * ch + 1]);
    }
    return out;
}

FeatureMap oce_forward(const PseudoBev& x, const EfsParams& p, const EfsConfig& cfg) {
    cfg.validate();
    const GridDims d = cfg.bev_dims();
    expect_shape(x.map, d.rows, d.cols, 1, "oce input");
    if (p.oce.size() != static_cast<std::size_t>(2 * cfg.stages))
        throw ConfigError("oce params do not match the configured stage count");
    FeatureMap h = expand(x, cfg.base_channels);
    for (int stage = 0; stage < cfg.stages; ++stage) {
        h = cba_forward(h, p.oce[2 * stage]);      // stride 2
        h = cba_forward(h, p.oce[2 * stage + 1]);  // stride 1
    }
    expect_shape(h, cfg.feature_rows(), cfg.feature_cols(), cfg.object_channels(), "oce output");
    return h;
}

std::pair<FeatureMap, FeatureMap> eim_forward(const FeatureMap& object_feat,
                                              const FeatureMap& ego_feat,
                                              const EfsParams& p, const EfsConfig& cfg) {
    const int h = cfg.feature_rows(), w = cfg.feature_cols();
    expect_shape(object_feat, h, w, cfg.object_channels(), "eim object feature");
    expect_shape(ego_feat, h, w, cfg.ego_channels, "eim ego feature");

    const FeatureMap ego_half = reduce_channels_pairwise(ego_feat);

    // Stage 1: inject at full resolution, downsample, restore.
    FeatureMap z1 = cba_forward(add_maps(object_feat, ego_half), p.eim_down1);
    z1 = cba_forward(bilinear_upsample(z1, 2), p.eim_up1);

    // Stage 2: downsample first, inject the pooled ego feature, go one level
    // deeper, restore. Down_1 is the same operator in both stages.
    FeatureMap z2 = cba_forward(object_feat, p.eim_down1);
    z2 = add_maps(z2, adaptive_avg_pool(ego_half, h / 2, w / 2));
    z2 = cba_forward(z2, p.eim_down2);
    z2 = cba_forward(bilinear_upsample(z2, 4), p.eim_up2);

    expect_shape(z1, h, w, cfg.object_channels(), "eim stage-1 output");
    expect_shape(z2, h, w, cfg.object_channels(), "eim stage-2 output");
    return {std::move(z1), std::move(z2)};
}

FeatureMap elr_forward(const FeatureMap& object_feat, const FeatureMap& z1,
                       const FeatureMap& z2, const EfsParams& p, const EfsConfig& cfg) {
    const int h = cfg.feature_rows(), w = cfg.feature_cols();
    expect_shape(object_feat, h, w, cfg.object_channels(), "elr input o");
    expect_shape(z1, h, w, cfg.object_channels(), "elr input z1");
    expect_shape(z2, h, w, cfg.object_channels(), "elr input z2");
    FeatureMap y = concat_channels(object_feat, z1, z2);
    y = cba_forward(y, p.elr_proj1);
    y = cba_forward(y, p.elr_proj2);
    for (const ResBlockParams& rb : p.elr_blocks) y = resblock_forward(y, rb);
    expect_shape(y, h, w, cfg.ego_channels, "elr output");
    return y;
}

FeatureMap efs_forward(const PseudoBev& x, const FeatureMap& ego_feat,
                       const EfsParams& p, const EfsConfig& cfg) {
    const FeatureMap o = oce_forward(x, p, cfg);
    auto [z1, z2] = eim_forward(o, ego_feat, p, cfg);
    return elr_forward(o, z1, z2, p, cfg);
}

EncoderStubParams init_encoder_stub(const EfsConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    XavierInit init(seed);
    const int c_half = cfg.object_channels();
    const int c = cfg.ego_channels;

    // Unlike the synthesizer blocks this network also draws conv biases
    // (uniform in +-1/sqrt(fan_in), after each weight block): a real frozen
    // encoder never emits exactly-zero feature vectors, and downstream cosine
    // terms treat zero-norm cells as maximally misaligned.
    EncoderStubParams p;
    p.seed = seed;
    for (int stage = 1; stage <= cfg.stages; ++stage) {
        const int in_ch = cfg.stage_channels(stage - 1);
        const int out_ch = cfg.stage_channels(stage);
        p.stages.push_back(init.cba(in_ch, out_ch, 3, 2, true));
        p.stages.push_back(init.cba(out_ch, out_ch, 3, 1, true));
    }
    p.proj1 = init.cba(c_half, c, 3, 1, true);
    p.proj2 = init.cba(c, c, 3, 1, true);
    for (auto& rb : p.blocks) rb = init.resblock(c, true);
    return p;
}

FeatureMap encoder_stub_forward(const PseudoBev& x, const EncoderStubParams& p,
                                const EfsConfig& cfg) {
    cfg.validate();
    const GridDims d = cfg.bev_dims();
    expect_shape(x.map, d.rows, d.cols, 1, "encoder stub input");
    FeatureMap h = expand(x, cfg.base_channels);
    for (const CbaParams& cba : p.stages) h = cba_forward(h, cba);
    h = cba_forward(h, p.proj1);
    h = cba_forward(h, p.proj2);
    for (const ResBlockParams& rb : p.blocks) h = resblock_forward(h, rb);
    expect_shape(h, cfg.feature_rows(), cfg.feature_cols(), cfg.ego_channels, "encoder stub output");
    return h;
}

namespace {

void write_scalars(std::ostream& os, const std::vector<float>& v) {
    char buf[48];
    for (const float x : v) {
        std::snprintf(buf, sizeof buf, "%a", static_cast<double>(x));
        os << buf << '\n';
    }
}

void write_conv(std::ostream& os, const std::string& name, const ConvParams& c) {
    os << "conv " << name << ' ' << c.out_channels << ' ' << c.in_channels << ' '
       << c.kernel << ' ' << c.stride << '\n';
    write_scalars(os, c.weight);
    write_scalars(os, c.bias);
}

void write_bn(std::ostream& os, const std::string& name, const BnAffine& b) {
    char buf[48];
    os << "bn " << name << ' ' << b.channels() << '\n';
    write_scalars(os, b.mean);
    write_scalars(os, b.var);
    write_scalars(os, b.scale);
    write_scalars(os, b.shift);
    std::snprintf(buf, sizeof buf, "%a", static_cast<double>(b.epsilon));
    os << buf << '\n';
}

void write_cba(std::ostream& os, const std::string& name, const CbaParams& p) {
    write_conv(os, name, p.conv);
    write_bn(os, name, p.bn);
}

void write_rb(std::ostream& os, const std::string& name, const ResBlockParams& p) {
    write_conv(os, name + ".conv1", p.conv1);
    write_bn(os, name + ".bn1", p.bn1);
    write_conv(os, name + ".conv2", p.conv2);
    write_bn(os, name + ".bn2", p.bn2);
}

struct ParamReader {
    std::istream& is;
    int line = 1;

    // istream extraction does not accept hexfloat tokens; go through strtod.
    float scalar() {
        std::string tok;
        if (!(is >> tok)) throw ParseError("expected scalar", line);
        ++line;
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
            throw ParseError("bad scalar \"" + tok + "\"", line);
        return static_cast<float>(v);
    }

    void scalars(std::vector<float>& v) {
        for (float& x : v) x = scalar();
    }

    void expect(const std::string& tag, const std::string& name) {
        std::string t, n;
        if (!(is >> t >> n) || t != tag || n != name)
            throw ParseError("expected \"" + tag + " " + name + "\"", line);
    }

    ConvParams conv(const std::string& name) {
        expect("conv", name);
        int out_ch, in_ch, k, s;
        if (!(is >> out_ch >> in_ch >> k >> s)) throw ParseError("bad conv header", line);
        ++line;
        ConvParams c(in_ch, out_ch, k, s);
        scalars(c.weight);
        scalars(c.bias);
        return c;
    }

    BnAffine bn(const std::string& name) {
        expect("bn", name);
        int ch;
        if (!(is >> ch)) throw ParseError("bad bn header", line);
        ++line;
        BnAffine b;
        b.mean.resize(ch);
        b.var.resize(ch);
        b.scale.resize(ch);
        b.shift.resize(ch);
        scalars(b.mean);
        scalars(b.var);
        scalars(b.scale);
        scalars(b.shift);
        b.epsilon = scalar();
        return b;
    }

    CbaParams cba(const std::string& name) { return {conv(name), bn(name)}; }

    ResBlockParams rb(const std::string& name) {
        ResBlockParams p;
        p.conv1 = conv(name + ".conv1");
        p.bn1 = bn(name + ".bn1");
        p.conv2 = conv(name + ".conv2");
        p.bn2 = bn(name + ".bn2");
        return p;
    }
};

}  // namespace

void save_efs_params(std::ostream& os, const EfsParams& p) {
    os << "boxlift-params 1\n";
    os << "seed " << p.seed << '\n';
    os << "oce-stages " << p.oce.size() / 2 << '\n';
    for (std::size_t i = 0; i < p.oce.size(); ++i)
        write_cba(os, "oce" + std::to_string(i), p.oce[i]);
    write_cba(os, "eim.down1", p.eim_down1);
    write_cba(os, "eim.down2", p.eim_down2);
    write_cba(os, "eim.up1", p.eim_up1);
    write_cba(os, "eim.up2", p.eim_up2);
    write_cba(os, "elr.proj1", p.elr_proj1);
    write_cba(os, "elr.proj2", p.elr_proj2);
    for (std::size_t i = 0; i < p.elr_blocks.size(); ++i)
        write_rb(os, "elr.rb" + std::to_string(i), p.elr_blocks[i]);
}

EfsParams load_efs_params(std::istream& is) {
    ParamReader r{is};
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != "boxlift-params" || version != 1)
        throw ParseError("bad params header", 1);
    EfsParams p;
    std::string tag;
    std::size_t stages = 0;
    if (!(is >> tag >> p.seed) || tag != "seed") throw ParseError("missing seed", 2);
    if (!(is >> tag >> stages) || tag != "oce-stages") throw ParseError("missing oce-stages", 3);
    for (std::size_t i = 0; i < 2 * stages; ++i)
        p.oce.push_back(r.cba("oce" + std::to_string(i)));
    p.eim_down1 = r.cba("eim.down1");
    p.eim_down2 = r.cba("eim.down2");
    p.eim_up1 = r.cba("eim.up1");
    p.eim_up2 = r.cba("eim.up2");
    p.elr_proj1 = r.cba("elr.proj1");
    p.elr_proj2 = r.cba("elr.proj2");
    for (std::size_t i = 0; i < p.elr_blocks.size(); ++i)
        p.elr_blocks[i] = r.rb("elr.rb" + std::to_string(i));
    return p;
}

}  // namespace boxlift
