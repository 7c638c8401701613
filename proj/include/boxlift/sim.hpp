#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "boxlift/codec.hpp"
#include "boxlift/efs.hpp"
#include "boxlift/geometry.hpp"
#include "boxlift/loss.hpp"
#include "boxlift/masks.hpp"
#include "boxlift/rasterizer.hpp"

namespace boxlift {

/// Sensor + encoder configuration of one agent: LiDAR beam tag, BEV grid
/// (detection range + voxel size), feature channel width C, and the encoder
/// stride 2^L between the BEV grid and the feature grid.
struct AgentConfig {
    std::string name = "custom";
    int lidar_beams = 128;  // 128 or 64
    GridSpec grid;
    int feature_channels = 256;
    int encoder_stride = 4;

    int stages() const;  // log2(encoder_stride)
    EfsConfig efs_config(int base_channels = 64) const;
    void validate() const;
};

/// Named presets PP4/PP6/PP8/SD2/SD3 (PointPillar and SECOND voxel variants).
AgentConfig preset_agent(const std::string& name, int lidar_beams = 128);

/// Message schema whose x/y ranges cover the sender's detection range.
MessageSchema schema_for_agent(const AgentConfig& agent, int bits, int k_max);

inline constexpr std::array<const char*, 3> kClassNames{"car", "pedestrian", "truck"};

/// Ground truth in the ego frame plus the relative poses T_{i->1} of the
/// auxiliary agents.
struct Scenario {
    std::uint64_t seed = 0;
    std::array<std::vector<BoxBEV>, 3> gt;  // car / pedestrian / truck
    Pose2 ego_pose;                          // identity: world frame == ego frame
    std::vector<Pose2> aux_poses;
};

/// Deterministic scene synthesis: n_objects boxes with class-conditioned size
/// priors (class of object k is k mod 3), centers inside the ego detection
/// range with at least 11 m separation, plus n_aux_poses agent poses.
Scenario gen_scenario(std::uint64_t seed, int n_objects,
                      const GridSpec& ego_grid, int n_aux_poses = 4);

/// Detector noise model for the black-box per-agent detectors.
struct StubDetectorConfig {
    double sigma_pos = 0.08;   // meters
    double sigma_size = 0.04;  // meters
    double sigma_yaw = 0.02;   // radians
    double p_miss = 0.08;
    double fp_rate = 0.3;      // expected false positives per frame
    double beam_factor = 3.0;  // noise multiplier for 64-beam agents
};

/// Simulate one agent's detections, in the agent frame: transform the ground
/// truth into the agent frame, keep boxes whose center lies in the agent's
/// detection range, drop each with p_miss, perturb the survivors, and append
/// Poisson(fp_rate) low-score false positives. Scores decay with the
/// perturbation magnitude: score = exp(-(|dpos| + |dyaw| + |dw| + |dl|)).
std::vector<BoxBEV> stub_detect(const Scenario& s, const AgentConfig& agent,
                                const Pose2& agent_to_ego, const StubDetectorConfig& cfg,
                                std::uint64_t seed);

/// Surrogate teacher feature: rasterize the agent's noiseless ground-truth
/// view in the ego frame and encode it with the fixed seeded network standing
/// in for the frozen ego encoder.
FeatureMap make_teacher_stub(const Scenario& s, const AgentConfig& agent,
                             const Pose2& agent_to_ego, const EfsConfig& ego_cfg,
                             const EncoderStubParams& encoder);
FeatureMap make_teacher_stub(const Scenario& s, const AgentConfig& agent,
                             const Pose2& agent_to_ego, const EfsConfig& ego_cfg,
                             std::uint64_t seed);

struct AgentReport {
    std::string name;
    std::size_t payload_bytes = 0;
    int boxes_detected = 0;
    int boxes_decoded = 0;
    std::vector<BoxBEV> decoded_ego;  // dequantized boxes in the ego frame
    PseudoBev pbev;
    RegionMasks masks;
    int mask_obj_cells = 0;
    int fhat_rows = 0, fhat_cols = 0, fhat_channels = 0;
    bool fhat_finite = false;
    bool shape_compatible = false;  // synthesized feature matches the ego feature shape
    double align_loss = -1.0;       // -1 when alignment was not computed
};

struct PipelineReport {
    std::uint64_t scenario_seed = 0;
    std::size_t total_payload_bytes = 0;
    int ego_rows = 0, ego_cols = 0, ego_channels = 0;
    std::vector<BoxBEV> ego_detections;
    std::vector<AgentReport> agents;  // auxiliary agents only
    double loss_total = 0.0;
};

struct PipelineOptions {
    std::uint64_t budget_bits = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t detector_seed = 1;
    std::uint64_t encoder_seed = 99;  // frozen-ego-encoder surrogate
    bool compute_alignment = true;
    double det_loss = 1.0;  // externally supplied detector objective value
    LossWeights weights;
};

/// Full per-frame pipeline, ego agent first in `agents`. Per auxiliary agent:
/// detect -> encode -> serialize (bits accounted against the budget) ->
/// deserialize -> decode -> transform into the ego frame -> rasterize ->
/// masks -> feature synthesis against the ego feature. Throws BudgetError
/// with the per-agent byte breakdown when the summed payload exceeds the
/// budget. The scenario is never mutated.
PipelineReport run_pipeline(const Scenario& s, const std::vector<AgentConfig>& agents,
                            const MessageSchema& base_schema, const EfsParams& params,
                            const EfsConfig& ego_cfg, const StubDetectorConfig& det,
                            const PipelineOptions& opts = {});

/// Nearest size-prior superclass of a box (the wire format carries no class
/// field, so decoded boxes are re-classified by their extents).
int classify_box(const BoxBEV& b);
std::array<std::vector<BoxBEV>, 3> split_by_class(const std::vector<BoxBEV>& boxes);

struct ClassAp {
    double ap50 = 0.0;
    double ap70 = 0.0;
};

struct MetricsReport {
    std::array<ClassAp, 3> per_class;
    double map50 = 0.0;
    double map70 = 0.0;
};

/// Greedy matching by descending score; each ground-truth box matches at most
/// once, at rotated IoU >= threshold; all-point interpolated AP. A class with
/// no ground truth scores 1 when it also has no predictions, else 0.
double average_precision(const std::vector<BoxBEV>& preds, const std::vector<BoxBEV>& gts,
                         double iou_threshold);

/// Per-superclass AP at IoU 0.5 and 0.7 plus their unweighted means.
MetricsReport evaluate_boxes(const std::array<std::vector<BoxBEV>, 3>& preds, const Scenario& gt);

/// Decode-side late union: ego detections first, then each agent's decoded
/// boxes, deduplicated with nms_bev and re-classified by size.
MetricsReport evaluate_late_union(const Scenario& s, const std::vector<BoxBEV>& ego_dets,
                                  const std::vector<std::vector<BoxBEV>>& aux_decoded,
                                  double nms_iou);

/// Desk-scale ablation suite configuration.
struct SweepConfig {
    std::vector<AgentConfig> agents;  // ego first
    StubDetectorConfig detector;
    int n_objects = 12;
    double nms_iou = 0.1;
    int bits = 8;
    int k_max = 20;
};

/// Default suite: PP4 ego with two 64-beam collaborators (PP6, SD2).
SweepConfig default_sweep();

/// Detector sub-stream salts used by the sweeps: ego detections use
/// derive_seed(seed, kSweepDetectorSalt); the i-th auxiliary agent (1-based
/// position in the agent list) uses derive_seed(seed, kSweepDetectorSalt + i).
inline constexpr std::uint64_t kSweepDetectorSalt = 1000;

struct SweepPoint {
    int bits = 8;
    int k_max = 20;
    std::size_t bytes_per_agent = 0;
    std::array<double, 3> ap50{};  // per class, mean over seeds
    std::array<double, 3> ap70{};
    double map50 = 0.0;
    double map70 = 0.0;
};

/// Box-level metrics for one (bits, k_max) setting, averaged over seeds.
SweepPoint run_sweep_point(int bits, int k_max, const std::vector<std::uint64_t>& seeds,
                           const SweepConfig& sc);

std::vector<SweepPoint> ablate_quant_bits(const std::vector<int>& bits_list,
                                          const std::vector<std::uint64_t>& seeds,
                                          const SweepConfig& sc);
std::vector<SweepPoint> ablate_kmax(const std::vector<int>& kmax_list,
                                    const std::vector<std::uint64_t>& seeds,
                                    const SweepConfig& sc);

/// CSV emission (fixed 6-decimal formatting keeps reruns byte-identical).
std::string metrics_csv_header();
std::string metrics_csv_row(std::uint64_t seed, int bits, int k_max, std::size_t bytes_per_agent,
                            const MetricsReport& m);
std::string sweep_csv(const std::vector<SweepPoint>& points);

}  // namespace boxlift
