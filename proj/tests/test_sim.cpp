#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "boxlift/error.hpp"
#include "boxlift/rng.hpp"
#include "boxlift/sim.hpp"

using namespace boxlift;

namespace {

AgentConfig mini_ego() {
    AgentConfig a;
    a.name = "mini-ego";
    a.grid = {-12.8, 12.8, -6.4, 6.4, 0.2, 0.2};  // 128 x 64
    a.feature_channels = 32;
    a.encoder_stride = 4;  // feature 32 x 16
    a.validate();
    return a;
}

AgentConfig mini_aux(int beams = 128) {
    AgentConfig a;
    a.name = "mini-aux";
    a.lidar_beams = beams;
    a.grid = {-12.8, 12.8, -6.4, 6.4, 0.4, 0.4};  // 64 x 32
    a.feature_channels = 16;
    a.encoder_stride = 2;
    a.validate();
    return a;
}

StubDetectorConfig noiseless() {
    StubDetectorConfig d;
    d.sigma_pos = d.sigma_size = d.sigma_yaw = 0.0;
    d.p_miss = 0.0;
    d.fp_rate = 0.0;
    d.beam_factor = 1.0;
    return d;
}

}  // namespace

TEST_CASE("agent presets reproduce the published grid geometry") {
    struct Want {
        const char* name;
        int rows, cols, channels, stride;
    };
    const Want wants[] = {
        {"PP4", 512, 192, 256, 4}, {"PP6", 352, 128, 256, 2}, {"PP8", 256, 96, 256, 2},
        {"SD2", 1024, 384, 512, 8}, {"SD3", 704, 256, 512, 4},
    };
    for (const Want& w : wants) {
        const AgentConfig a = preset_agent(w.name);
        const GridDims d = grid_dims(a.grid);
        CHECK(d.rows == w.rows);
        CHECK(d.cols == w.cols);
        CHECK(a.feature_channels == w.channels);
        CHECK(a.encoder_stride == w.stride);
        // Feature grid divides cleanly and survives EFS validation.
        const EfsConfig cfg = a.efs_config();
        CHECK(cfg.feature_rows() == d.rows / w.stride);
        CHECK(cfg.feature_cols() == d.cols / w.stride);
    }
    CHECK_THROWS_AS(preset_agent("PP5"), ConfigError);
}

TEST_CASE("gen_scenario") {
    const GridSpec ego = preset_agent("PP4").grid;
    SUBCASE("n = 0 gives empty ground truth") {
        const Scenario s = gen_scenario(1, 0, ego);
        CHECK(s.gt[0].empty());
        CHECK(s.gt[1].empty());
        CHECK(s.gt[2].empty());
    }
    SUBCASE("same seed reproduces the scenario exactly") {
        const Scenario a = gen_scenario(77, 12, ego);
        const Scenario b = gen_scenario(77, 12, ego);
        for (int c = 0; c < 3; ++c) {
            REQUIRE(a.gt[c].size() == b.gt[c].size());
            for (std::size_t i = 0; i < a.gt[c].size(); ++i) {
                CHECK(a.gt[c][i].x == b.gt[c][i].x);
                CHECK(a.gt[c][i].yaw == b.gt[c][i].yaw);
            }
        }
        REQUIRE(a.aux_poses.size() == b.aux_poses.size());
        for (std::size_t i = 0; i < a.aux_poses.size(); ++i)
            CHECK(a.aux_poses[i].x == b.aux_poses[i].x);
    }
    SUBCASE("all centers stay inside the ego range, classes are balanced") {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            const Scenario s = gen_scenario(seed, 12, ego);
            CHECK(s.gt[0].size() == 4);
            CHECK(s.gt[1].size() == 4);
            CHECK(s.gt[2].size() == 4);
            for (const auto& cls : s.gt)
                for (const BoxBEV& b : cls) {
                    CHECK(b.x >= ego.x_min);
                    CHECK(b.x <= ego.x_max);
                    CHECK(b.y >= ego.y_min);
                    CHECK(b.y <= ego.y_max);
                    CHECK(b.score == 1.0);
                    CHECK(b.valid());
                }
        }
    }
}

TEST_CASE("classify_box recovers the class of prior-sized boxes") {
    const GridSpec ego = preset_agent("PP4").grid;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Scenario s = gen_scenario(seed, 12, ego);
        for (int c = 0; c < 3; ++c)
            for (const BoxBEV& b : s.gt[c]) CHECK(classify_box(b) == c);
    }
}

TEST_CASE("stub_detect") {
    const GridSpec ego_grid = preset_agent("PP4").grid;
    const AgentConfig agent = preset_agent("PP4");
    SUBCASE("noiseless detector reproduces the ground truth with score 1") {
        const Scenario s = gen_scenario(5, 12, ego_grid);
        const auto dets = stub_detect(s, agent, Pose2{}, noiseless(), 9);
        REQUIRE(dets.size() == 12);
        std::size_t k = 0;
        for (const auto& cls : s.gt)
            for (const BoxBEV& gt : cls) {
                CHECK(dets[k].x == doctest::Approx(gt.x).epsilon(1e-12));
                CHECK(dets[k].y == doctest::Approx(gt.y).epsilon(1e-12));
                CHECK(dets[k].w == gt.w);
                CHECK(dets[k].l == gt.l);
                CHECK(dets[k].score == 1.0);
                ++k;
            }
    }
    SUBCASE("p_miss = 1 detects nothing") {
        const Scenario s = gen_scenario(6, 12, ego_grid);
        StubDetectorConfig d = noiseless();
        d.p_miss = 1.0;
        CHECK(stub_detect(s, agent, Pose2{}, d, 9).empty());
    }
    SUBCASE("mean recall over 100 seeds approximates 1 - p_miss") {
        StubDetectorConfig d = noiseless();
        d.p_miss = 0.3;
        long detected = 0, total = 0;
        for (std::uint64_t seed = 1; seed <= 100; ++seed) {
            const Scenario s = gen_scenario(seed, 12, ego_grid);
            detected += static_cast<long>(stub_detect(s, agent, Pose2{}, d, seed).size());
            total += 12;
        }
        const double recall = static_cast<double>(detected) / static_cast<double>(total);
        CHECK(recall == doctest::Approx(0.7).epsilon(0.05 / 0.7));
    }
    SUBCASE("64-beam agents apply the beam factor") {
        const Scenario s = gen_scenario(7, 12, ego_grid);
        StubDetectorConfig d = noiseless();
        d.sigma_pos = 0.2;
        d.beam_factor = 4.0;
        AgentConfig wide = preset_agent("PP4");
        const auto dets128 = stub_detect(s, wide, Pose2{}, d, 33);
        wide.lidar_beams = 64;
        const auto dets64 = stub_detect(s, wide, Pose2{}, d, 33);
        REQUIRE(dets128.size() == dets64.size());
        double err128 = 0.0, err64 = 0.0;
        std::size_t k = 0;
        for (const auto& cls : s.gt)
            for (const BoxBEV& gt : cls) {
                err128 += std::hypot(dets128[k].x - gt.x, dets128[k].y - gt.y);
                err64 += std::hypot(dets64[k].x - gt.x, dets64[k].y - gt.y);
                ++k;
            }
        CHECK(err64 > err128);
    }
}

TEST_CASE("average_precision") {
    const BoxBEV g1{0, 0, 1.9, 4.6, 0, 1}, g2{20, 0, 1.9, 4.6, 0, 1}, g3{40, 0, 1.9, 4.6, 0, 1};
    const std::vector<BoxBEV> gts{g1, g2, g3};
    SUBCASE("perfect predictions score 1 at both thresholds") {
        std::vector<BoxBEV> preds = gts;
        CHECK(average_precision(preds, gts, 0.5) == 1.0);
        CHECK(average_precision(preds, gts, 0.7) == 1.0);
    }
    SUBCASE("no predictions score 0") {
        CHECK(average_precision({}, gts, 0.5) == 0.0);
    }
    SUBCASE("no ground truth scores 1 without predictions, 0 with") {
        CHECK(average_precision({}, {}, 0.5) == 1.0);
        CHECK(average_precision({g1}, {}, 0.5) == 0.0);
    }
    SUBCASE("hand-computed curve: duplicate and false positive") {
        BoxBEV p1 = g1;
        p1.score = 0.9;
        BoxBEV p2 = g1;  // duplicate, slightly shifted
        p2.x = 0.1;
        p2.score = 0.8;
        BoxBEV p3 = g2;
        p3.score = 0.7;
        BoxBEV p4{60, 10, 1.9, 4.6, 0, 0.6};  // matches nothing
        // Ranked: TP (r=1/3, p=1), FP (p=1/2), TP (r=2/3, p=2/3), FP (p=1/2).
        // All-point AP = 1/3 * 1 + 1/3 * 2/3 = 5/9.
        const double ap = average_precision({p1, p2, p3, p4}, gts, 0.5);
        CHECK(ap == doctest::Approx(5.0 / 9.0).epsilon(1e-12));
    }
}

TEST_CASE("run_pipeline") {
    const AgentConfig ego = mini_ego();
    const EfsConfig cfg = ego.efs_config(8);
    const EfsParams params = init_params(cfg, 4);
    const Scenario s = gen_scenario(3, 2, ego.grid);

    SUBCASE("one auxiliary agent at K=20 INT8 transmits exactly 120 bytes") {
        const auto rep = run_pipeline(s, {ego, mini_aux()}, schema_for_agent(ego, 8, 20),
                                      params, cfg, noiseless());
        REQUIRE(rep.agents.size() == 1);
        CHECK(rep.agents[0].payload_bytes == 120);
        CHECK(rep.total_payload_bytes == 120);
        CHECK(rep.agents[0].fhat_rows == cfg.feature_rows());
        CHECK(rep.agents[0].fhat_cols == cfg.feature_cols());
        CHECK(rep.agents[0].fhat_channels == cfg.ego_channels);
        CHECK(rep.agents[0].fhat_finite);
        CHECK(rep.agents[0].shape_compatible);
        CHECK(rep.agents[0].align_loss >= 0.0);
    }
    SUBCASE("K_max = 0 decodes nothing and rasterizes an all-zero map") {
        const auto rep = run_pipeline(s, {ego, mini_aux()}, schema_for_agent(ego, 8, 0),
                                      params, cfg, noiseless());
        CHECK(rep.agents[0].payload_bytes == 0);
        CHECK(rep.agents[0].boxes_decoded == 0);
        for (const float v : rep.agents[0].pbev.map.data) CHECK(v == 0.0f);
        CHECK(rep.agents[0].mask_obj_cells == 0);
    }
    SUBCASE("budget violations carry the per-agent breakdown") {
        PipelineOptions opts;
        opts.budget_bits = 800;  // 100 bytes < 120
        try {
            run_pipeline(s, {ego, mini_aux()}, schema_for_agent(ego, 8, 20), params, cfg,
                         noiseless(), opts);
            FAIL("expected BudgetError");
        } catch (const BudgetError& e) {
            CHECK(e.budget_bits == 800);
            CHECK(e.used_bits == 960);
            REQUIRE(e.bytes_per_agent.size() == 1);
            CHECK(e.bytes_per_agent[0].second == 120);
        }
    }
    SUBCASE("two auxiliary agents accumulate against the budget") {
        PipelineOptions opts;
        opts.budget_bits = 8 * 200;  // 200 bytes < 240
        CHECK_THROWS_AS(run_pipeline(s, {ego, mini_aux(), mini_aux(64)},
                                     schema_for_agent(ego, 8, 20), params, cfg, noiseless(), opts),
                        BudgetError);
        opts.budget_bits = 8 * 240;
        const auto rep = run_pipeline(s, {ego, mini_aux(), mini_aux(64)},
                                      schema_for_agent(ego, 8, 20), params, cfg, noiseless(), opts);
        CHECK(rep.total_payload_bytes == 240);
    }
    SUBCASE("reports are deterministic and the scenario is not mutated") {
        const Scenario copy = s;
        StubDetectorConfig det;
        det.p_miss = 0.2;
        const auto a = run_pipeline(s, {ego, mini_aux()}, schema_for_agent(ego, 8, 20),
                                    params, cfg, det);
        const auto b = run_pipeline(s, {ego, mini_aux()}, schema_for_agent(ego, 8, 20),
                                    params, cfg, det);
        CHECK(a.agents[0].pbev.map.data == b.agents[0].pbev.map.data);
        CHECK(a.agents[0].align_loss == b.agents[0].align_loss);
        CHECK(a.loss_total == b.loss_total);
        REQUIRE(a.agents[0].decoded_ego.size() == b.agents[0].decoded_ego.size());
        for (std::size_t i = 0; i < a.agents[0].decoded_ego.size(); ++i)
            CHECK(a.agents[0].decoded_ego[i].x == b.agents[0].decoded_ego[i].x);
        for (int c = 0; c < 3; ++c) {
            REQUIRE(s.gt[c].size() == copy.gt[c].size());
            for (std::size_t i = 0; i < s.gt[c].size(); ++i) CHECK(s.gt[c][i].x == copy.gt[c][i].x);
        }
    }
    SUBCASE("a never-before-seen agent configuration joins with no state changes") {
        AgentConfig novel;
        novel.name = "novel-0.32";
        novel.lidar_beams = 64;
        novel.grid = {-10.24, 10.24, -5.12, 5.12, 0.32, 0.32};  // 64 x 32
        novel.feature_channels = 24;
        novel.encoder_stride = 2;
        const auto rep = run_pipeline(s, {ego, novel}, schema_for_agent(ego, 8, 20),
                                      params, cfg, noiseless());
        CHECK(rep.agents[0].fhat_finite);
        CHECK(rep.agents[0].shape_compatible);
    }
}

TEST_CASE("make_teacher_stub is deterministic and ego-shaped") {
    const AgentConfig ego = mini_ego();
    const EfsConfig cfg = ego.efs_config(8);
    const Scenario s = gen_scenario(8, 2, ego.grid);
    const FeatureMap t1 = make_teacher_stub(s, ego, Pose2{}, cfg, 123);
    const FeatureMap t2 = make_teacher_stub(s, ego, Pose2{}, cfg, 123);
    CHECK(t1.rows == cfg.feature_rows());
    CHECK(t1.cols == cfg.feature_cols());
    CHECK(t1.channels == cfg.ego_channels);
    CHECK(t1.data == t2.data);

    FeatureMap ones(t1.rows, t1.cols, 1, 1.0f);
    CHECK(cos_align(t1, t2, ones) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sweeps") {
    SweepConfig sc = default_sweep();
    sc.n_objects = 9;
    const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

    SUBCASE("k = 0 equals the ego-only evaluation exactly") {
        const auto rows = ablate_kmax({0, 20}, seeds, sc);
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].bytes_per_agent == 0);
        CHECK(rows[1].bytes_per_agent == 120);

        double map70 = 0.0, map50 = 0.0;
        for (const std::uint64_t seed : seeds) {
            const Scenario s = gen_scenario(seed, sc.n_objects, sc.agents[0].grid,
                                            static_cast<int>(sc.agents.size()));
            const auto ego_dets = stub_detect(s, sc.agents[0], Pose2{}, sc.detector,
                                              derive_seed(seed, kSweepDetectorSalt));
            const MetricsReport m = evaluate_late_union(s, ego_dets, {}, sc.nms_iou);
            map70 += m.map70;
            map50 += m.map50;
        }
        map70 *= 1.0 / static_cast<double>(seeds.size());
        map50 *= 1.0 / static_cast<double>(seeds.size());
        CHECK(rows[0].map70 == map70);
        CHECK(rows[0].map50 == map50);
    }
    SUBCASE("bytes column follows 6k at INT8") {
        const auto rows = ablate_kmax({0, 5, 10, 20, 40, 60}, {1, 2}, sc);
        for (const auto& r : rows) CHECK(r.bytes_per_agent == static_cast<std::size_t>(6 * r.k_max));
    }
    SUBCASE("quantization sweep emits one row per precision") {
        const auto rows = ablate_quant_bits({4, 8, 16, 32}, {1, 2, 3}, sc);
        REQUIRE(rows.size() == 4);
        CHECK(rows[0].bits == 4);
        CHECK(rows[3].bits == 32);
        CHECK(rows[0].bytes_per_agent == 60);
        CHECK(rows[1].bytes_per_agent == 120);
        CHECK(rows[3].bytes_per_agent == 480);
    }
}

TEST_CASE("32-bit pass-through decodes bit-identical boxes") {
    const AgentConfig agent = preset_agent("PP6", 64);
    const Scenario s = gen_scenario(11, 12, preset_agent("PP4").grid);
    const auto dets = stub_detect(s, agent, s.aux_poses[0], noiseless(), 5);
    const MessageSchema schema = schema_for_agent(agent, 32, 20);
    const auto decoded =
        decode_message(deserialize(serialize(encode_message(dets, schema)), schema), schema);
    REQUIRE(decoded.size() == dets.size());
    std::vector<BoxBEV> sorted = dets;
    std::sort(sorted.begin(), sorted.end(),
              [](const BoxBEV& a, const BoxBEV& b) { return a.score > b.score; });
    for (std::size_t i = 0; i < decoded.size(); ++i) {
        CHECK(decoded[i].x == static_cast<double>(static_cast<float>(sorted[i].x)));
        CHECK(decoded[i].y == static_cast<double>(static_cast<float>(sorted[i].y)));
        CHECK(decoded[i].w == static_cast<double>(static_cast<float>(sorted[i].w)));
    }
}

TEST_CASE("lossless limit: zero noise and INT16 give AP@0.7 of 1 on every seed") {
    SweepConfig sc = default_sweep();
    sc.detector = noiseless();
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto pt = run_sweep_point(16, 20, {seed}, sc);
        CHECK(pt.map70 == 1.0);
        CHECK(pt.map50 == 1.0);
    }
}

TEST_CASE("lossless limit: decoded boxes recover the ground truth within half steps") {
    const AgentConfig aux = preset_agent("PP6", 64);
    const GridSpec ego_grid = preset_agent("PP4").grid;
    const Scenario s = gen_scenario(21, 12, ego_grid);
    const Pose2 pose = s.aux_poses[0];
    const auto dets = stub_detect(s, aux, pose, noiseless(), 3);
    const MessageSchema schema = schema_for_agent(aux, 16, 20);
    const auto local =
        decode_message(deserialize(serialize(encode_message(dets, schema)), schema), schema);
    REQUIRE(local.size() == dets.size());

    // Quantization happens in the sender frame, so per-field half-step bounds
    // hold there; the rigid transform to the ego frame preserves the center
    // error norm and shifts the yaw exactly.
    const double sx = schema.fields[0].scale(), sy = schema.fields[1].scale();
    const Pose2 to_agent = pose_inverse(pose);
    std::size_t matched = 0;
    for (const auto& cls : s.gt)
        for (const BoxBEV& gt : cls) {
            const BoxBEV gt_local = transform_box(gt, to_agent);
            if (!aux.grid.contains(gt_local.x, gt_local.y)) continue;
            double best = 1e30;
            const BoxBEV* hit = nullptr;
            for (const BoxBEV& d : local) {
                const double dist = std::hypot(d.x - gt_local.x, d.y - gt_local.y);
                if (dist < best) {
                    best = dist;
                    hit = &d;
                }
            }
            REQUIRE(hit != nullptr);
            CHECK(std::abs(hit->x - gt_local.x) <= sx / 2 + 1e-9);
            CHECK(std::abs(hit->y - gt_local.y) <= sy / 2 + 1e-9);
            CHECK(std::abs(hit->w - gt_local.w) <= schema.fields[2].scale() / 2 + 1e-9);
            CHECK(std::abs(hit->l - gt_local.l) <= schema.fields[3].scale() / 2 + 1e-9);
            CHECK(std::abs(wrap_angle(hit->yaw - gt_local.yaw)) <=
                  schema.fields[4].scale() / 2 + 1e-9);
            ++matched;
        }
    CHECK(matched == dets.size());
}

TEST_CASE("csv emission is stable") {
    const MetricsReport m{};
    const std::string row = metrics_csv_row(7, 8, 20, 120, m);
    CHECK(row == "7,8,20,120,0.000000,0.000000,0.000000,0.000000,0.000000,0.000000,0.000000,0.000000\n");
    CHECK(metrics_csv_header() ==
          "seed,bits,k_max,bytes_per_agent,AP_car@0.5,AP_pedestrian@0.5,AP_truck@0.5,mAP@0.5,"
          "AP_car@0.7,AP_pedestrian@0.7,AP_truck@0.7,mAP@0.7\n");
}
