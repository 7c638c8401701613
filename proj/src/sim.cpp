#include "boxlift/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "boxlift/error.hpp"
#include "boxlift/rng.hpp"

namespace boxlift {

int AgentConfig::stages() const {
    int s = encoder_stride, l = 0;
    while (s > 1) {
        if (s % 2 != 0) throw ConfigError("encoder_stride must be a power of two");
        s /= 2;
        ++l;
    }
    return l;
}

EfsConfig AgentConfig::efs_config(int base_channels) const {
    EfsConfig cfg;
    cfg.base_channels = base_channels;
    cfg.stages = stages();
    cfg.ego_channels = feature_channels;
    cfg.grid = grid;
    cfg.validate();
    return cfg;
}

void AgentConfig::validate() const {
    grid.validate();
    if (lidar_beams != 64 && lidar_beams != 128)
        throw ConfigError("lidar_beams must be 64 or 128");
    if (feature_channels < 2 || feature_channels % 2 != 0)
        throw ConfigError("feature_channels must be a positive even number");
    if (encoder_stride < 1) throw ConfigError("encoder_stride must be >= 1");
    const GridDims d = grid_dims(grid);
    if (stages() < 1) throw ConfigError("encoder_stride must be >= 2");
    if (d.rows % encoder_stride != 0 || d.cols % encoder_stride != 0)
        throw ConfigError("encoder_stride must divide the grid dims");
}

AgentConfig preset_agent(const std::string& name, int lidar_beams) {
    AgentConfig a;
    a.name = name;
    a.lidar_beams = lidar_beams;
    if (name == "PP4") {
        a.grid = {-102.4, 102.4, -38.4, 38.4, 0.4, 0.4};
        a.feature_channels = 256;
        a.encoder_stride = 4;
    } else if (name == "PP6") {
        a.grid = {-105.6, 105.6, -38.4, 38.4, 0.6, 0.6};
        a.feature_channels = 256;
        a.encoder_stride = 2;
    } else if (name == "PP8") {
        a.grid = {-102.4, 102.4, -38.4, 38.4, 0.8, 0.8};
        a.feature_channels = 256;
        a.encoder_stride = 2;
    } else if (name == "SD2") {
        a.grid = {-102.4, 102.4, -38.4, 38.4, 0.2, 0.2};
        a.feature_channels = 512;
        a.encoder_stride = 8;
    } else if (name == "SD3") {
        a.grid = {-105.6, 105.6, -38.4, 38.4, 0.3, 0.3};
        a.feature_channels = 512;
        a.encoder_stride = 4;
    } else {
        throw ConfigError("unknown agent preset \"" + name + "\"");
    }
    a.validate();
    return a;
}

MessageSchema schema_for_agent(const AgentConfig& agent, int bits, int k_max) {
    return MessageSchema::with_defaults(agent.grid.x_min, agent.grid.x_max,
                                        agent.grid.y_min, agent.grid.y_max, bits, k_max);
}

namespace {

struct SizePrior {
    double w_lo, w_hi, l_lo, l_hi;
    double w_ref, l_ref;
};

constexpr std::array<SizePrior, 3> kSizePriors{{
    {1.7, 2.1, 4.2, 5.0, 1.9, 4.6},  // car
    {0.6, 0.9, 0.6, 0.9, 0.75, 0.75},  // pedestrian
    {2.3, 2.7, 7.0, 9.0, 2.5, 8.0},  // truck
}};

constexpr double kMinSeparation = 11.0;  // no two footprints can overlap
constexpr double kPlacementMarginX = 5.0;
constexpr double kPlacementMarginY = 3.0;

}  // namespace

Scenario gen_scenario(std::uint64_t seed, int n_objects, const GridSpec& ego_grid,
                      int n_aux_poses) {
    if (n_objects < 0) throw ConfigError("n_objects must be >= 0");
    ego_grid.validate();
    SplitMix64 rng(seed);
    Scenario s;
    s.seed = seed;

    std::vector<std::array<double, 2>> centers;
    const double x_lo = ego_grid.x_min + kPlacementMarginX, x_hi = ego_grid.x_max - kPlacementMarginX;
    const double y_lo = ego_grid.y_min + kPlacementMarginY, y_hi = ego_grid.y_max - kPlacementMarginY;
    for (int k = 0; k < n_objects; ++k) {
        double cx = 0.0, cy = 0.0;
        for (int attempt = 0; attempt < 200; ++attempt) {
            cx = rng.uniform(x_lo, x_hi);
            cy = rng.uniform(y_lo, y_hi);
            bool ok = true;
            for (const auto& c : centers)
                if (std::hypot(cx - c[0], cy - c[1]) < kMinSeparation) {
                    ok = false;
                    break;
                }
            if (ok) break;
        }
        centers.push_back({cx, cy});
        const int cls = k % 3;
        const SizePrior& pr = kSizePriors[cls];
        BoxBEV b;
        b.x = cx;
        b.y = cy;
        b.yaw = wrap_angle(rng.uniform(-kPi, kPi));
        b.w = rng.uniform(pr.w_lo, pr.w_hi);
        b.l = rng.uniform(pr.l_lo, pr.l_hi);
        b.score = 1.0;
        s.gt[cls].push_back(b);
    }

    for (int j = 0; j < n_aux_poses; ++j) {
        Pose2 p;
        p.x = rng.uniform(-30.0, 30.0);
        p.y = rng.uniform(-10.0, 10.0);
        p.yaw = wrap_angle(rng.uniform(-kPi, kPi));
        s.aux_poses.push_back(p);
    }
    return s;
}

std::vector<BoxBEV> stub_detect(const Scenario& s, const AgentConfig& agent,
                                const Pose2& agent_to_ego, const StubDetectorConfig& cfg,
                                std::uint64_t seed) {
    agent.validate();
    if (cfg.p_miss < 0.0 || cfg.p_miss > 1.0) throw ConfigError("p_miss must be in [0, 1]");
    if (cfg.sigma_pos < 0.0 || cfg.sigma_size < 0.0 || cfg.sigma_yaw < 0.0 || cfg.fp_rate < 0.0)
        throw ConfigError("detector noise parameters must be >= 0");
    SplitMix64 rng(seed);
    const double bf = agent.lidar_beams == 64 ? cfg.beam_factor : 1.0;
    const Pose2 ego_to_agent = pose_inverse(agent_to_ego);

    std::vector<BoxBEV> dets;
    for (const auto& cls_boxes : s.gt) {
        for (const BoxBEV& gt : cls_boxes) {
            const BoxBEV local = transform_box(gt, ego_to_agent);
            if (!agent.grid.contains(local.x, local.y)) continue;
            if (rng.uniform01() < cfg.p_miss) continue;
            const double dx = rng.normal(0.0, cfg.sigma_pos * bf);
            const double dy = rng.normal(0.0, cfg.sigma_pos * bf);
            const double dw = rng.normal(0.0, cfg.sigma_size * bf);
            const double dl = rng.normal(0.0, cfg.sigma_size * bf);
            const double dyaw = rng.normal(0.0, cfg.sigma_yaw * bf);
            BoxBEV d;
            d.x = local.x + dx;
            d.y = local.y + dy;
            d.w = std::max(0.1, local.w + dw);
            d.l = std::max(0.1, local.l + dl);
            d.yaw = wrap_angle(local.yaw + dyaw);
            d.score = std::exp(-(std::hypot(dx, dy) + std::abs(dyaw) + std::abs(dw) + std::abs(dl)));
            dets.push_back(d);
        }
    }

    const int n_fp = rng.poisson(cfg.fp_rate);
    for (int i = 0; i < n_fp; ++i) {
        const int cls = std::min(2, static_cast<int>(rng.uniform01() * 3.0));
        const SizePrior& pr = kSizePriors[cls];
        BoxBEV d;
        d.x = rng.uniform(agent.grid.x_min + 2.0, agent.grid.x_max - 2.0);
        d.y = rng.uniform(agent.grid.y_min + 2.0, agent.grid.y_max - 2.0);
        d.w = rng.uniform(pr.w_lo, pr.w_hi);
        d.l = rng.uniform(pr.l_lo, pr.l_hi);
        d.yaw = wrap_angle(rng.uniform(-kPi, kPi));
        d.score = rng.uniform(0.05, 0.25);
        dets.push_back(d);
    }
    return dets;
}

FeatureMap make_teacher_stub(const Scenario& s, const AgentConfig& agent,
                             const Pose2& agent_to_ego, const EfsConfig& ego_cfg,
                             const EncoderStubParams& encoder) {
    const Pose2 ego_to_agent = pose_inverse(agent_to_ego);
    std::vector<BoxBEV> visible;
    for (const auto& cls_boxes : s.gt)
        for (const BoxBEV& gt : cls_boxes) {
            const BoxBEV local = transform_box(gt, ego_to_agent);
            if (!agent.grid.contains(local.x, local.y)) continue;
            BoxBEV b = gt;  // noiseless view, already in the ego frame
            b.score = 1.0;
            visible.push_back(b);
        }
    const PseudoBev pbev = rasterize(visible, ego_cfg.grid);
    return encoder_stub_forward(pbev, encoder, ego_cfg);
}

FeatureMap make_teacher_stub(const Scenario& s, const AgentConfig& agent,
                             const Pose2& agent_to_ego, const EfsConfig& ego_cfg,
                             std::uint64_t seed) {
    return make_teacher_stub(s, agent, agent_to_ego, ego_cfg, init_encoder_stub(ego_cfg, seed));
}

PipelineReport run_pipeline(const Scenario& s, const std::vector<AgentConfig>& agents,
                            const MessageSchema& base_schema, const EfsParams& params,
                            const EfsConfig& ego_cfg, const StubDetectorConfig& det,
                            const PipelineOptions& opts) {
    if (agents.empty()) throw ConfigError("run_pipeline needs at least the ego agent");
    for (const AgentConfig& a : agents) a.validate();
    ego_cfg.validate();
    base_schema.validate();
    const AgentConfig& ego = agents.front();
    {
        const GridDims dc = grid_dims(ego_cfg.grid), de = grid_dims(ego.grid);
        if (dc.rows != de.rows || dc.cols != de.cols)
            throw ConfigError("EFS config grid does not match the ego agent grid");
    }
    const std::size_t n_aux = agents.size() - 1;
    if (s.aux_poses.size() < n_aux)
        throw ConfigError("scenario provides " + std::to_string(s.aux_poses.size()) +
                          " poses for " + std::to_string(n_aux) + " auxiliary agents");

    PipelineReport rep;
    rep.scenario_seed = s.seed;
    rep.ego_detections = stub_detect(s, ego, Pose2{}, det, derive_seed(opts.detector_seed, 0));

    // Transmission pass: every agent encodes before anything is decoded, so a
    // budget violation reports the complete per-agent breakdown.
    struct Tx {
        MessageSchema schema;
        std::vector<std::uint8_t> bytes;
        int detected = 0;
    };
    std::vector<Tx> txs;
    std::size_t total_bits = 0;
    std::vector<std::pair<std::string, std::size_t>> breakdown;
    for (std::size_t i = 1; i < agents.size(); ++i) {
        const std::vector<BoxBEV> dets =
            stub_detect(s, agents[i], s.aux_poses[i - 1], det, derive_seed(opts.detector_seed, i));
        Tx tx;
        tx.schema = schema_for_agent(agents[i], base_schema.bits(), base_schema.k_max);
        tx.bytes = serialize(encode_message(dets, tx.schema));
        tx.detected = static_cast<int>(dets.size());
        total_bits += tx.bytes.size() * 8;
        breakdown.emplace_back(agents[i].name, tx.bytes.size());
        txs.push_back(std::move(tx));
    }
    if (total_bits > opts.budget_bits)
        throw BudgetError(opts.budget_bits, total_bits, breakdown);
    rep.total_payload_bytes = total_bits / 8;

    const EncoderStubParams encoder = init_encoder_stub(ego_cfg, opts.encoder_seed);
    const FeatureMap ego_feat = make_teacher_stub(s, ego, Pose2{}, ego_cfg, encoder);
    rep.ego_rows = ego_feat.rows;
    rep.ego_cols = ego_feat.cols;
    rep.ego_channels = ego_feat.channels;

    std::vector<double> align_losses;
    for (std::size_t i = 1; i < agents.size(); ++i) {
        const Tx& tx = txs[i - 1];
        AgentReport ar;
        ar.name = agents[i].name;
        ar.payload_bytes = tx.bytes.size();
        ar.boxes_detected = tx.detected;

        const std::vector<BoxBEV> local = decode_message(deserialize(tx.bytes, tx.schema), tx.schema);
        ar.boxes_decoded = static_cast<int>(local.size());
        for (const BoxBEV& b : local) ar.decoded_ego.push_back(transform_box(b, s.aux_poses[i - 1]));

        ar.pbev = rasterize(ar.decoded_ego, ego_cfg.grid);
        ar.masks = build_masks(ar.pbev, ego_cfg.feature_rows(), ego_cfg.feature_cols());
        for (const float v : ar.masks.obj.data) ar.mask_obj_cells += v != 0.0f;

        const FeatureMap fhat = efs_forward(ar.pbev, ego_feat, params, ego_cfg);
        ar.fhat_rows = fhat.rows;
        ar.fhat_cols = fhat.cols;
        ar.fhat_channels = fhat.channels;
        ar.fhat_finite = fhat.all_finite();
        ar.shape_compatible = fhat.same_shape(ego_feat);

        if (opts.compute_alignment) {
            const FeatureMap teacher =
                make_teacher_stub(s, agents[i], s.aux_poses[i - 1], ego_cfg, encoder);
            ar.align_loss = align_loss_agent(fhat, teacher, ar.masks, opts.weights);
            align_losses.push_back(ar.align_loss);
        }
        rep.agents.push_back(std::move(ar));
    }
    rep.loss_total = total_loss(opts.det_loss, align_losses, opts.weights);
    return rep;
}

int classify_box(const BoxBEV& b) {
    int best = 0;
    double best_d = std::numeric_limits<double>::max();
    for (int c = 0; c < 3; ++c) {
        const SizePrior& pr = kSizePriors[c];
        const double dw = (b.w - pr.w_ref) / pr.w_ref;
        const double dl = (b.l - pr.l_ref) / pr.l_ref;
        const double d = dw * dw + dl * dl;
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

std::array<std::vector<BoxBEV>, 3> split_by_class(const std::vector<BoxBEV>& boxes) {
    std::array<std::vector<BoxBEV>, 3> out;
    for (const BoxBEV& b : boxes) out[classify_box(b)].push_back(b);
    return out;
}

double average_precision(const std::vector<BoxBEV>& preds, const std::vector<BoxBEV>& gts,
                         double iou_threshold) {
    if (gts.empty()) return preds.empty() ? 1.0 : 0.0;
    if (preds.empty()) return 0.0;

    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        if (preds[i].score != preds[j].score) return preds[i].score > preds[j].score;
        return i < j;
    });

    std::vector<bool> matched(gts.size(), false);
    std::vector<int> tp(order.size(), 0);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const BoxBEV& p = preds[order[k]];
        int best_gt = -1;
        double best_iou = 0.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (matched[g]) continue;
            const double iou = rotated_iou(p, gts[g]);
            if (iou >= iou_threshold && iou > best_iou) {
                best_iou = iou;
                best_gt = static_cast<int>(g);
            }
        }
        if (best_gt >= 0) {
            matched[best_gt] = true;
            tp[k] = 1;
        }
    }

    const std::size_t n = order.size();
    std::vector<double> recall(n), precision(n);
    int cum_tp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        cum_tp += tp[k];
        recall[k] = static_cast<double>(cum_tp) / static_cast<double>(gts.size());
        precision[k] = static_cast<double>(cum_tp) / static_cast<double>(k + 1);
    }
    // All-point interpolation: integrate the running-max precision envelope
    // over the recall steps.
    std::vector<double> env(n);
    double run = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        run = std::max(run, precision[k]);
        env[k] = run;
    }
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (!tp[k]) continue;
        ap += (recall[k] - prev_recall) * env[k];
        prev_recall = recall[k];
    }
    return ap;
}

MetricsReport evaluate_boxes(const std::array<std::vector<BoxBEV>, 3>& preds, const Scenario& gt) {
    MetricsReport m;
    for (int c = 0; c < 3; ++c) {
        m.per_class[c].ap50 = average_precision(preds[c], gt.gt[c], 0.5);
        m.per_class[c].ap70 = average_precision(preds[c], gt.gt[c], 0.7);
        m.map50 += m.per_class[c].ap50 / 3.0;
        m.map70 += m.per_class[c].ap70 / 3.0;
    }
    return m;
}

MetricsReport evaluate_late_union(const Scenario& s, const std::vector<BoxBEV>& ego_dets,
                                  const std::vector<std::vector<BoxBEV>>& aux_decoded,
                                  double nms_iou) {
    std::vector<BoxBEV> pool = ego_dets;  // ego first: it wins score ties in NMS
    for (const auto& dec : aux_decoded) pool.insert(pool.end(), dec.begin(), dec.end());
    return evaluate_boxes(split_by_class(nms_bev(pool, nms_iou)), s);
}

SweepConfig default_sweep() {
    SweepConfig sc;
    sc.agents = {preset_agent("PP4"), preset_agent("PP6", 64), preset_agent("SD2", 64)};
    return sc;
}

SweepPoint run_sweep_point(int bits, int k_max, const std::vector<std::uint64_t>& seeds,
                           const SweepConfig& sc) {
    if (sc.agents.empty()) throw ConfigError("sweep needs at least the ego agent");
    if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
    const AgentConfig& ego = sc.agents.front();

    SweepPoint pt;
    pt.bits = bits;
    pt.k_max = k_max;
    pt.bytes_per_agent = static_cast<std::size_t>(k_max) * 6 * bits / 8;

    for (const std::uint64_t seed : seeds) {
        const Scenario s =
            gen_scenario(seed, sc.n_objects, ego.grid, static_cast<int>(sc.agents.size()));
        const std::vector<BoxBEV> ego_dets =
            stub_detect(s, ego, Pose2{}, sc.detector, derive_seed(seed, kSweepDetectorSalt));
        std::vector<std::vector<BoxBEV>> decoded;
        for (std::size_t i = 1; i < sc.agents.size(); ++i) {
            const std::vector<BoxBEV> dets = stub_detect(
                s, sc.agents[i], s.aux_poses[i - 1], sc.detector,
                derive_seed(seed, kSweepDetectorSalt + i));
            const MessageSchema schema = schema_for_agent(sc.agents[i], bits, k_max);
            const std::vector<BoxBEV> local =
                decode_message(deserialize(serialize(encode_message(dets, schema)), schema), schema);
            std::vector<BoxBEV> ego_frame;
            for (const BoxBEV& b : local) ego_frame.push_back(transform_box(b, s.aux_poses[i - 1]));
            decoded.push_back(std::move(ego_frame));
        }
        const MetricsReport m = evaluate_late_union(s, ego_dets, decoded, sc.nms_iou);
        for (int c = 0; c < 3; ++c) {
            pt.ap50[c] += m.per_class[c].ap50;
            pt.ap70[c] += m.per_class[c].ap70;
        }
        pt.map50 += m.map50;
        pt.map70 += m.map70;
    }
    const double inv = 1.0 / static_cast<double>(seeds.size());
    for (int c = 0; c < 3; ++c) {
        pt.ap50[c] *= inv;
        pt.ap70[c] *= inv;
    }
    pt.map50 *= inv;
    pt.map70 *= inv;
    return pt;
}

std::vector<SweepPoint> ablate_quant_bits(const std::vector<int>& bits_list,
                                          const std::vector<std::uint64_t>& seeds,
                                          const SweepConfig& sc) {
    std::vector<SweepPoint> out;
    for (const int bits : bits_list) out.push_back(run_sweep_point(bits, sc.k_max, seeds, sc));
    return out;
}

std::vector<SweepPoint> ablate_kmax(const std::vector<int>& kmax_list,
                                    const std::vector<std::uint64_t>& seeds,
                                    const SweepConfig& sc) {
    std::vector<SweepPoint> out;
    for (const int k : kmax_list) out.push_back(run_sweep_point(sc.bits, k, seeds, sc));
    return out;
}

namespace {

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::string metrics_csv_header() {
    std::string h = "seed,bits,k_max,bytes_per_agent";
    for (const char* t : {"0.5", "0.7"}) {
        for (const char* c : kClassNames) h += std::string(",AP_") + c + "@" + t;
        h += std::string(",mAP@") + t;
    }
    return h + "\n";
}

std::string metrics_csv_row(std::uint64_t seed, int bits, int k_max, std::size_t bytes_per_agent,
                            const MetricsReport& m) {
    std::ostringstream os;
    os << seed << ',' << bits << ',' << k_max << ',' << bytes_per_agent;
    for (int c = 0; c < 3; ++c) os << ',' << fmt6(m.per_class[c].ap50);
    os << ',' << fmt6(m.map50);
    for (int c = 0; c < 3; ++c) os << ',' << fmt6(m.per_class[c].ap70);
    os << ',' << fmt6(m.map70);
    os << '\n';
    return os.str();
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
    std::string out = "bits,k_max,bytes_per_agent";
    for (const char* t : {"0.5", "0.7"}) {
        for (const char* c : kClassNames) out += std::string(",AP_") + c + "@" + t;
        out += std::string(",mAP@") + t;
    }
    out += "\n";
    for (const SweepPoint& p : points) {
        std::ostringstream os;
        os << p.bits << ',' << p.k_max << ',' << p.bytes_per_agent;
        for (int c = 0; c < 3; ++c) os << ',' << fmt6(p.ap50[c]);
        os << ',' << fmt6(p.map50);
        for (int c = 0; c < 3; ++c) os << ',' << fmt6(p.ap70[c]);
        os << ',' << fmt6(p.map70);
        os << '\n';
        out += os.str();
    }
    return out;
}

}  // namespace boxlift
