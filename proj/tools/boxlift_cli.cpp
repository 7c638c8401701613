// Command-line front end: box-message codec, BEV rasterization, the seeded
// multi-agent simulation, and the bandwidth/k_max ablation sweeps.
//
// Exit codes: 0 success, 2 input parse error, 3 wire-format error,
// 4 budget violation, 5 config error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "boxlift/codec.hpp"
#include "boxlift/efs.hpp"
#include "boxlift/error.hpp"
#include "boxlift/geometry.hpp"
#include "boxlift/rasterizer.hpp"
#include "boxlift/rng.hpp"
#include "boxlift/sim.hpp"
#include "boxlift/tensor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace boxlift;

namespace {

struct RunConfig {
    std::vector<AgentConfig> agents;
    StubDetectorConfig detector;
    LossWeights weights;
    std::vector<std::uint64_t> seeds{1, 2};
    int n_objects = 12;
    double nms_iou = 0.1;
    int bits = 8;
    int k_max = 20;
    bool explicit_fields = false;
    std::array<FieldSpec, 6> fields{};
    std::uint64_t budget_bytes = 0;  // 0 = unlimited
    double rate_hz = 10.0;
    double det_loss = 1.0;
    int base_channels = 64;
    std::uint64_t params_seed = 7;
    std::uint64_t encoder_seed = 99;
    bool compute_alignment = true;
    std::string out_dir = "out";
};

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError("unknown key \"" + key + "\" in " + ctx);
    }
}

GridSpec parse_grid(const json& j) {
    check_keys(j, {"x_min", "x_max", "y_min", "y_max", "v_x", "v_y"}, "grid");
    GridSpec g;
    g.x_min = j.at("x_min").get<double>();
    g.x_max = j.at("x_max").get<double>();
    g.y_min = j.at("y_min").get<double>();
    g.y_max = j.at("y_max").get<double>();
    g.v_x = j.at("v_x").get<double>();
    g.v_y = j.at("v_y").get<double>();
    return g;
}

AgentConfig parse_agent(const json& j) {
    if (j.is_string()) return preset_agent(j.get<std::string>());
    check_keys(j, {"name", "preset", "lidar_beams", "grid", "feature_channels", "encoder_stride"},
               "agent");
    AgentConfig a;
    if (j.contains("preset")) a = preset_agent(j.at("preset").get<std::string>());
    if (j.contains("name")) a.name = j.at("name").get<std::string>();
    if (j.contains("lidar_beams")) a.lidar_beams = j.at("lidar_beams").get<int>();
    if (j.contains("grid")) a.grid = parse_grid(j.at("grid"));
    if (j.contains("feature_channels")) a.feature_channels = j.at("feature_channels").get<int>();
    if (j.contains("encoder_stride")) a.encoder_stride = j.at("encoder_stride").get<int>();
    a.validate();
    return a;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file \"" + path + "\"");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    check_keys(j,
               {"agents", "detector", "weights", "seeds", "n_objects", "nms_iou", "schema",
                "budget_bytes", "rate_hz", "det_loss", "base_channels", "params_seed",
                "encoder_seed", "compute_alignment", "out_dir"},
               "config");
    RunConfig rc;
    if (j.contains("agents")) {
        rc.agents.clear();
        for (const auto& a : j.at("agents")) rc.agents.push_back(parse_agent(a));
    } else {
        rc.agents = default_sweep().agents;
    }
    if (rc.agents.empty()) throw ConfigError("config needs at least the ego agent");

    if (j.contains("detector")) {
        const json& d = j.at("detector");
        check_keys(d, {"sigma_pos", "sigma_size", "sigma_yaw", "p_miss", "fp_rate", "beam_factor"},
                   "detector");
        if (d.contains("sigma_pos")) rc.detector.sigma_pos = d.at("sigma_pos").get<double>();
        if (d.contains("sigma_size")) rc.detector.sigma_size = d.at("sigma_size").get<double>();
        if (d.contains("sigma_yaw")) rc.detector.sigma_yaw = d.at("sigma_yaw").get<double>();
        if (d.contains("p_miss")) rc.detector.p_miss = d.at("p_miss").get<double>();
        if (d.contains("fp_rate")) rc.detector.fp_rate = d.at("fp_rate").get<double>();
        if (d.contains("beam_factor")) rc.detector.beam_factor = d.at("beam_factor").get<double>();
    }
    if (j.contains("weights")) {
        const json& w = j.at("weights");
        check_keys(w, {"det", "align", "obj", "bg", "cls", "reg"}, "weights");
        if (w.contains("det")) rc.weights.det = w.at("det").get<double>();
        if (w.contains("align")) rc.weights.align = w.at("align").get<double>();
        if (w.contains("obj")) rc.weights.obj = w.at("obj").get<double>();
        if (w.contains("bg")) rc.weights.bg = w.at("bg").get<double>();
        if (w.contains("cls")) rc.weights.cls = w.at("cls").get<double>();
        if (w.contains("reg")) rc.weights.reg = w.at("reg").get<double>();
    }
    if (j.contains("seeds")) {
        rc.seeds.clear();
        const json& s = j.at("seeds");
        if (s.is_array()) {
            for (const auto& v : s) rc.seeds.push_back(v.get<std::uint64_t>());
        } else {
            check_keys(s, {"count", "base"}, "seeds");
            const auto count = s.at("count").get<std::uint64_t>();
            const auto base = s.contains("base") ? s.at("base").get<std::uint64_t>() : 1;
            for (std::uint64_t i = 0; i < count; ++i) rc.seeds.push_back(base + i);
        }
        if (rc.seeds.empty()) throw ConfigError("seeds must not be empty");
    }
    if (j.contains("schema")) {
        const json& s = j.at("schema");
        check_keys(s, {"bits", "k_max", "fields"}, "schema");
        if (s.contains("bits")) rc.bits = s.at("bits").get<int>();
        if (s.contains("k_max")) rc.k_max = s.at("k_max").get<int>();
        if (s.contains("fields")) {
            const json& f = s.at("fields");
            check_keys(f, {"x", "y", "w", "l", "yaw", "score"}, "schema.fields");
            const char* names[6] = {"x", "y", "w", "l", "yaw", "score"};
            const MessageSchema base = schema_for_agent(rc.agents.front(), rc.bits, rc.k_max);
            rc.fields = base.fields;
            for (int i = 0; i < 6; ++i) {
                if (!f.contains(names[i])) continue;
                const auto range = f.at(names[i]).get<std::vector<double>>();
                if (range.size() != 2) throw ConfigError("field range needs [lo, hi]");
                rc.fields[i].v_min = range[0];
                rc.fields[i].v_max = range[1];
            }
            rc.explicit_fields = true;
        }
    }
    if (j.contains("n_objects")) rc.n_objects = j.at("n_objects").get<int>();
    if (j.contains("nms_iou")) rc.nms_iou = j.at("nms_iou").get<double>();
    if (j.contains("budget_bytes")) rc.budget_bytes = j.at("budget_bytes").get<std::uint64_t>();
    if (j.contains("rate_hz")) rc.rate_hz = j.at("rate_hz").get<double>();
    if (j.contains("det_loss")) rc.det_loss = j.at("det_loss").get<double>();
    if (j.contains("base_channels")) rc.base_channels = j.at("base_channels").get<int>();
    if (j.contains("params_seed")) rc.params_seed = j.at("params_seed").get<std::uint64_t>();
    if (j.contains("encoder_seed")) rc.encoder_seed = j.at("encoder_seed").get<std::uint64_t>();
    if (j.contains("compute_alignment")) rc.compute_alignment = j.at("compute_alignment").get<bool>();
    if (j.contains("out_dir")) rc.out_dir = j.at("out_dir").get<std::string>();
    return rc;
}

MessageSchema schema_for(const RunConfig& rc, const AgentConfig& sender) {
    MessageSchema s = schema_for_agent(sender, rc.bits, rc.k_max);
    if (rc.explicit_fields) {
        s.fields = rc.fields;
        for (FieldSpec& f : s.fields) f.bits = rc.bits;
        s.validate();
    }
    return s;
}

std::vector<BoxBEV> read_boxes_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open boxes file \"" + path + "\"", 0);
    return read_box_list(in);
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write \"" + path.string() + "\"");
    out << content;
}

json box_to_json(const BoxBEV& b) {
    return json{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"l", b.l}, {"yaw", b.yaw}, {"score", b.score}};
}

int cmd_encode(const std::string& boxes_path, const std::string& out_path,
               const std::string& agent_name, int bits, int k_max, double rate_hz) {
    const AgentConfig sender = preset_agent(agent_name);
    const MessageSchema schema = schema_for_agent(sender, bits, k_max);
    const std::vector<BoxBEV> boxes = read_boxes_file(boxes_path);
    const std::vector<std::uint8_t> bytes = serialize(encode_message(boxes, schema));
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ConfigError("cannot write \"" + out_path + "\"");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    std::cout << bytes.size() << " bytes\n";
    std::cout << bandwidth_bps(schema, rate_hz) << " bps @" << rate_hz << "Hz\n";
    return 0;
}

int cmd_decode(const std::string& msg_path, const std::string& out_path,
               const std::string& agent_name, int bits, int k_max, const Pose2& pose) {
    const AgentConfig sender = preset_agent(agent_name);
    const MessageSchema schema = schema_for_agent(sender, bits, k_max);
    std::ifstream in(msg_path, std::ios::binary);
    if (!in) throw ParseError("cannot open message file \"" + msg_path + "\"", 0);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    std::vector<BoxBEV> boxes = decode_message(deserialize(bytes, schema), schema);
    for (BoxBEV& b : boxes) b = transform_box(b, pose);
    std::ofstream out(out_path);
    if (!out) throw ConfigError("cannot write \"" + out_path + "\"");
    write_box_list(out, boxes);
    std::cout << "decoded " << boxes.size() << " boxes\n";
    return 0;
}

int cmd_rasterize(const std::string& boxes_path, const std::string& out_stem,
                  const std::string& agent_name) {
    const AgentConfig agent = preset_agent(agent_name);
    const std::vector<BoxBEV> boxes = read_boxes_file(boxes_path);
    const PseudoBev p = rasterize(boxes, agent.grid);
    write_file(out_stem + ".pgm", to_pgm(p));
    std::ostringstream txt;
    dump_feature_map(txt, p.map);
    write_file(out_stem + ".txt", txt.str());
    int occupied = 0;
    for (const float v : p.map.data) occupied += v != 0.0f;
    std::cout << "grid " << p.map.rows << "x" << p.map.cols << ", " << occupied
              << " occupied cells\n";
    return 0;
}

int cmd_simulate(const RunConfig& rc) {
    const AgentConfig& ego = rc.agents.front();
    const EfsConfig cfg = ego.efs_config(rc.base_channels);
    const EfsParams params = init_params(cfg, rc.params_seed);

    PipelineOptions opts;
    opts.budget_bits = rc.budget_bytes == 0 ? std::numeric_limits<std::uint64_t>::max()
                                            : rc.budget_bytes * 8;
    opts.encoder_seed = rc.encoder_seed;
    opts.compute_alignment = rc.compute_alignment;
    opts.det_loss = rc.det_loss;
    opts.weights = rc.weights;

    std::string csv = metrics_csv_header();
    for (const std::uint64_t seed : rc.seeds) {
        const Scenario s = gen_scenario(seed, rc.n_objects, ego.grid,
                                        static_cast<int>(rc.agents.size()));
        PipelineOptions seed_opts = opts;
        seed_opts.detector_seed = derive_seed(seed, kSweepDetectorSalt);
        const MessageSchema base_schema = schema_for(rc, ego);
        const PipelineReport rep =
            run_pipeline(s, rc.agents, base_schema, params, cfg, rc.detector, seed_opts);

        std::vector<std::vector<BoxBEV>> decoded;
        for (const AgentReport& ar : rep.agents) decoded.push_back(ar.decoded_ego);
        const MetricsReport m = evaluate_late_union(s, rep.ego_detections, decoded, rc.nms_iou);
        csv += metrics_csv_row(seed, rc.bits, rc.k_max,
                               rep.agents.empty() ? 0 : rep.agents.front().payload_bytes, m);

        json jr;
        jr["seed"] = seed;
        jr["total_payload_bytes"] = rep.total_payload_bytes;
        jr["bandwidth_bps_at_rate"] =
            static_cast<double>(rep.total_payload_bytes) * 8.0 * rc.rate_hz;
        jr["ego_feature"] = {{"rows", rep.ego_rows}, {"cols", rep.ego_cols},
                             {"channels", rep.ego_channels}};
        jr["loss_total"] = rep.loss_total;
        jr["map50"] = m.map50;
        jr["map70"] = m.map70;
        jr["agents"] = json::array();
        for (const AgentReport& ar : rep.agents) {
            json ja;
            ja["name"] = ar.name;
            ja["payload_bytes"] = ar.payload_bytes;
            ja["boxes_detected"] = ar.boxes_detected;
            ja["boxes_decoded"] = ar.boxes_decoded;
            ja["mask_obj_cells"] = ar.mask_obj_cells;
            ja["fhat"] = {{"rows", ar.fhat_rows}, {"cols", ar.fhat_cols},
                          {"channels", ar.fhat_channels}, {"finite", ar.fhat_finite},
                          {"shape_compatible", ar.shape_compatible}};
            ja["align_loss"] = ar.align_loss;
            ja["decoded_boxes"] = json::array();
            for (const BoxBEV& b : ar.decoded_ego) ja["decoded_boxes"].push_back(box_to_json(b));
            jr["agents"].push_back(std::move(ja));

            write_file(fs::path(rc.out_dir) /
                           ("pbev_seed" + std::to_string(seed) + "_" + ar.name + ".pgm"),
                       to_pgm(ar.pbev));
        }
        write_file(fs::path(rc.out_dir) / ("report_seed" + std::to_string(seed) + ".json"),
                   jr.dump(2) + "\n");
    }
    write_file(fs::path(rc.out_dir) / "metrics.csv", csv);
    std::cout << "wrote " << rc.seeds.size() << " pipeline reports to " << rc.out_dir << "\n";
    return 0;
}

int cmd_ablate(const RunConfig& rc, const std::string& mode) {
    SweepConfig sc;
    sc.agents = rc.agents;
    sc.detector = rc.detector;
    sc.n_objects = rc.n_objects;
    sc.nms_iou = rc.nms_iou;
    sc.bits = rc.bits;
    sc.k_max = rc.k_max;

    std::vector<SweepPoint> rows;
    if (mode == "bits") {
        rows = ablate_quant_bits({4, 8, 16, 32}, rc.seeds, sc);
    } else if (mode == "kmax") {
        rows = ablate_kmax({0, 5, 10, 20, 40, 60}, rc.seeds, sc);
    } else {
        throw ConfigError("ablate mode must be \"bits\" or \"kmax\"");
    }
    const std::string csv = sweep_csv(rows);
    write_file(fs::path(rc.out_dir) / ("ablate_" + mode + ".csv"), csv);
    std::cout << csv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Box-level V2X message codec, BEV rasterizer and fusion simulator"};
    app.require_subcommand(1);

    std::string boxes_path, msg_path, out_path, config_path, agent = "PP4", mode = "bits";
    std::string out_dir;
    int bits = 8, k_max = 20;
    double rate_hz = 10.0;
    std::uint64_t seed = 0;
    std::uint64_t budget_bytes = 0;
    std::vector<double> pose_vals;

    CLI::App* enc = app.add_subcommand("encode", "Quantize and serialize a box list file");
    enc->add_option("boxes", boxes_path, "box list file (x y w l yaw score per line)")->required();
    enc->add_option("-o,--out", out_path, "output message file")->required();
    enc->add_option("--agent", agent, "sender preset for the x/y ranges (default PP4)");
    enc->add_option("--bits", bits, "field width: 4, 8, 16 or 32");
    enc->add_option("--kmax", k_max, "records per message");
    enc->add_option("--rate-hz", rate_hz, "frame rate for the bandwidth printout");

    CLI::App* dec = app.add_subcommand("decode", "Deserialize and dequantize a message file");
    dec->add_option("message", msg_path, "wire message file")->required();
    dec->add_option("-o,--out", out_path, "output box list file")->required();
    dec->add_option("--agent", agent, "sender preset for the x/y ranges (default PP4)");
    dec->add_option("--bits", bits, "field width: 4, 8, 16 or 32");
    dec->add_option("--kmax", k_max, "records per message");
    dec->add_option("--pose", pose_vals, "sender-to-ego pose: x y yaw")->expected(3);

    CLI::App* ras = app.add_subcommand("rasterize", "Rasterize ego-frame boxes to a pseudo-BEV map");
    ras->add_option("boxes", boxes_path, "box list file in the ego frame")->required();
    ras->add_option("-o,--out", out_path, "output stem (.pgm and .txt are appended)")->required();
    ras->add_option("--agent", agent, "grid preset (default PP4)");

    CLI::App* sim = app.add_subcommand("simulate", "Run the full pipeline over seeded scenarios");
    sim->add_option("--config", config_path, "JSON run config")->required();
    CLI::Option* sim_seed = sim->add_option("--seed", seed, "run a single seed instead of the config list");
    sim->add_option("--out-dir", out_dir, "output directory (overrides the config)");
    CLI::Option* sim_budget =
        sim->add_option("--budget-bytes", budget_bytes, "total payload budget per frame");
    CLI::Option* sim_rate = sim->add_option("--rate-hz", rate_hz, "frame rate for bandwidth reporting");

    CLI::App* abl = app.add_subcommand("ablate", "Sweep quantization precision or K_max");
    abl->add_option("--config", config_path, "JSON run config")->required();
    abl->add_option("--mode", mode, "bits | kmax")->required();
    CLI::Option* abl_seed = abl->add_option("--seed", seed, "run a single seed instead of the config list");
    abl->add_option("--out-dir", out_dir, "output directory (overrides the config)");
    CLI::Option* abl_bits = abl->add_option("--bits", bits, "base field width for the kmax sweep");
    CLI::Option* abl_kmax = abl->add_option("--kmax", k_max, "base record cap for the bits sweep");

    CLI11_PARSE(app, argc, argv);

    try {
        if (enc->parsed()) return cmd_encode(boxes_path, out_path, agent, bits, k_max, rate_hz);
        if (dec->parsed()) {
            Pose2 pose;
            if (pose_vals.size() == 3) pose = {pose_vals[0], pose_vals[1], wrap_angle(pose_vals[2])};
            return cmd_decode(msg_path, out_path, agent, bits, k_max, pose);
        }
        if (ras->parsed()) return cmd_rasterize(boxes_path, out_path, agent);

        RunConfig rc = load_run_config(config_path);
        if ((sim->parsed() && sim_seed->count()) || (abl->parsed() && abl_seed->count()))
            rc.seeds = {seed};
        if (!out_dir.empty()) rc.out_dir = out_dir;
        if (sim->parsed() && sim_budget->count()) rc.budget_bytes = budget_bytes;
        if (sim->parsed() && sim_rate->count()) rc.rate_hz = rate_hz;
        if (abl->parsed() && abl_bits->count()) rc.bits = bits;
        if (abl->parsed() && abl_kmax->count()) rc.k_max = k_max;
        if (sim->parsed()) return cmd_simulate(rc);
        return cmd_ablate(rc, mode);
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const DecodeError& e) {
        std::cerr << "wire-format error: " << e.what() << "\n";
        return 3;
    } catch (const BudgetError& e) {
        std::cerr << "budget violation: " << e.what() << "\n";
        return 4;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
