#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lascar/baselines.hpp"
#include "lascar/graphcut.hpp"
#include "lascar/mesh.hpp"
#include "lascar/metrics.hpp"
#include "lascar/patches.hpp"
#include "lascar/phantom.hpp"
#include "lascar/ply.hpp"
#include "lascar/potential_nets.hpp"
#include "lascar/volume_io.hpp"

// Orchestration of the study pipeline: phantom cohorts on disk, network
// training, per-method segmentation, evaluation tables and parameter sweeps.
// Every stage is a pure function of (config, manifest), so re-runs reproduce
// outputs byte for byte.

namespace lascar {

namespace fs = std::filesystem;
using nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CohortConfig {
    int n_train = 20;
    int n_test = 10;
    uint64_t train_seed0 = 1000;
    uint64_t test_seed0 = 2000;
    uint64_t perturb_seed0 = 500;
    double perturb_mm = 3.0;
    PhantomSpec phantom;
};

struct ExperimentConfig {
    fs::path out_dir = "out";
    CohortConfig cohort;
    PatchGeometry patch;
    TrainConfig train;
    int node_samples_per_case = 150;
    int pair_samples_per_case = 120;
    double shift_range_mm = 8.0;  // R
    double lambda = 0.4;
    double search_mm = 3.0;
    int upsample = 2;
    double n_sd = 2.0;
    int mgmm_k_scar = 2;
    int mgmm_k_normal = 3;
    std::vector<std::string> methods = {"gt-echo", "2sd",    "otsu",   "mgmm",
                                        "mgmm-gc", "ms-cnn", "learngc"};
    std::vector<double> lambda_grid = {0.0, 0.2, 0.4, 0.8, 2.0};
    std::vector<double> shift_grid = {0.0, 4.0, 8.0};
    std::vector<int> scales_grid = {1, 2, 3};
    std::vector<std::array<int, 3>> patch_size_grid = {{7, 7, 11}, {13, 13, 17}};

    void validate() const {
        if (cohort.n_train <= 0 || cohort.n_test <= 0)
            throw ConfigError("cohort sizes must be positive");
        const uint64_t train_hi = cohort.train_seed0 + cohort.n_train;
        const uint64_t test_hi = cohort.test_seed0 + cohort.n_test;
        const bool disjoint =
            train_hi <= cohort.test_seed0 || test_hi <= cohort.train_seed0;
        if (!disjoint) throw ConfigError("train and test cohort seeds must be disjoint");
        if (lambda_grid.empty() || shift_grid.empty() || scales_grid.empty() ||
            patch_size_grid.empty())
            throw ConfigError("sweep grids must be non-empty");
        patch.validate();
        train.validate();
    }
};

// ---------------------------------------------------------------------------
// JSON (de)serialization; absent keys keep the built-in defaults.
// ---------------------------------------------------------------------------
namespace detail {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline void maybe_vec3(const json& j, const char* key, std::array<double, 3>& out) {
    if (j.contains(key)) {
        auto v = j.at(key).get<std::vector<double>>();
        if (v.size() != 3) throw ConfigError(std::string("expected 3 values for ") + key);
        out = {v[0], v[1], v[2]};
    }
}

inline void maybe_dims(const json& j, const char* key, std::array<int, 3>& out) {
    if (j.contains(key)) {
        auto v = j.at(key).get<std::vector<int>>();
        if (v.size() != 3) throw ConfigError(std::string("expected 3 values for ") + key);
        out = {v[0], v[1], v[2]};
    }
}

}  // namespace detail

inline PhantomSpec phantom_from_json(const json& j) {
    PhantomSpec s;
    detail::maybe_dims(j, "dims", s.dims);
    detail::maybe_vec3(j, "spacing_mm", s.spacing_mm);
    detail::maybe_vec3(j, "semi_axes_mm", s.semi_axes_mm);
    detail::maybe(j, "wall_mm", s.wall_mm);
    detail::maybe(j, "scar_count", s.scar_count);
    detail::maybe(j, "scar_angle_deg", s.scar_angle_deg);
    detail::maybe(j, "scar_boost", s.scar_boost);
    detail::maybe(j, "scar_boost_jitter", s.scar_boost_jitter);
    detail::maybe(j, "tube_count", s.tube_count);
    detail::maybe(j, "tube_radius_mm", s.tube_radius_mm);
    detail::maybe(j, "tube_intensity", s.tube_intensity);
    detail::maybe(j, "tube_length_mm", s.tube_length_mm);
    detail::maybe(j, "background_level", s.background_level);
    detail::maybe(j, "blood_level", s.blood_level);
    detail::maybe(j, "wall_level", s.wall_level);
    detail::maybe(j, "bias_amp", s.bias_amp);
    detail::maybe(j, "noise_sd", s.noise_sd);
    return s;
}

inline json phantom_to_json(const PhantomSpec& s) {
    return json{{"dims", s.dims},
                {"spacing_mm", s.spacing_mm},
                {"semi_axes_mm", s.semi_axes_mm},
                {"wall_mm", s.wall_mm},
                {"scar_count", s.scar_count},
                {"scar_angle_deg", s.scar_angle_deg},
                {"scar_boost", s.scar_boost},
                {"scar_boost_jitter", s.scar_boost_jitter},
                {"tube_count", s.tube_count},
                {"tube_radius_mm", s.tube_radius_mm},
                {"tube_intensity", s.tube_intensity},
                {"tube_length_mm", s.tube_length_mm},
                {"background_level", s.background_level},
                {"blood_level", s.blood_level},
                {"wall_level", s.wall_level},
                {"bias_amp", s.bias_amp},
                {"noise_sd", s.noise_sd}};
}

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("cohort")) {
        const auto& k = j.at("cohort");
        detail::maybe(k, "n_train", c.cohort.n_train);
        detail::maybe(k, "n_test", c.cohort.n_test);
        detail::maybe(k, "train_seed0", c.cohort.train_seed0);
        detail::maybe(k, "test_seed0", c.cohort.test_seed0);
        detail::maybe(k, "perturb_seed0", c.cohort.perturb_seed0);
        detail::maybe(k, "perturb_mm", c.cohort.perturb_mm);
        if (k.contains("phantom")) c.cohort.phantom = phantom_from_json(k.at("phantom"));
    }
    if (j.contains("patch")) {
        const auto& k = j.at("patch");
        detail::maybe_dims(k, "size", c.patch.size);
        detail::maybe(k, "base_spacing_mm", c.patch.base_spacing_mm);
        detail::maybe(k, "scales", c.patch.n_scales);
        detail::maybe(k, "multipliers", c.patch.multipliers);
    }
    if (j.contains("train")) {
        const auto& k = j.at("train");
        detail::maybe(k, "momentum", c.train.momentum);
        detail::maybe(k, "batch_size", c.train.batch_size);
        detail::maybe(k, "weight_decay", c.train.weight_decay);
        detail::maybe(k, "epochs", c.train.epochs);
        detail::maybe(k, "learning_rate", c.train.learning_rate);
        detail::maybe(k, "lr_decay", c.train.lr_decay);
        detail::maybe(k, "lr_step_iters", c.train.lr_step_iters);
        detail::maybe(k, "seed", c.train.seed);
    }
    detail::maybe(j, "node_samples_per_case", c.node_samples_per_case);
    detail::maybe(j, "pair_samples_per_case", c.pair_samples_per_case);
    detail::maybe(j, "shift_range_mm", c.shift_range_mm);
    detail::maybe(j, "lambda", c.lambda);
    detail::maybe(j, "search_mm", c.search_mm);
    detail::maybe(j, "upsample", c.upsample);
    detail::maybe(j, "n_sd", c.n_sd);
    detail::maybe(j, "mgmm_k_scar", c.mgmm_k_scar);
    detail::maybe(j, "mgmm_k_normal", c.mgmm_k_normal);
    detail::maybe(j, "methods", c.methods);
    detail::maybe(j, "lambda_grid", c.lambda_grid);
    detail::maybe(j, "shift_grid", c.shift_grid);
    detail::maybe(j, "scales_grid", c.scales_grid);
    if (j.contains("patch_size_grid")) {
        c.patch_size_grid.clear();
        for (const auto& e : j.at("patch_size_grid")) {
            auto v = e.get<std::vector<int>>();
            if (v.size() != 3) throw ConfigError("patch_size_grid entries need 3 values");
            c.patch_size_grid.push_back({v[0], v[1], v[2]});
        }
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse failure: ") + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Cohort manifest
// ---------------------------------------------------------------------------
struct CaseEntry {
    std::string name;       // train_000, test_003, ...
    bool is_test = false;
    uint64_t phantom_seed = 0;
    uint64_t perturb_seed = 0;
};

struct Manifest {
    std::vector<CaseEntry> cases;
    json config_echo;
};

inline json manifest_to_json(const Manifest& m) {
    json cases = json::array();
    for (const auto& c : m.cases)
        cases.push_back(json{{"name", c.name},
                             {"role", c.is_test ? "test" : "train"},
                             {"phantom_seed", c.phantom_seed},
                             {"perturb_seed", c.perturb_seed}});
    return json{{"cases", cases}, {"config", m.config_echo}};
}

inline Manifest manifest_from_json(const json& j) {
    Manifest m;
    for (const auto& e : j.at("cases")) {
        CaseEntry c;
        c.name = e.at("name").get<std::string>();
        c.is_test = e.at("role").get<std::string>() == "test";
        c.phantom_seed = e.at("phantom_seed").get<uint64_t>();
        c.perturb_seed = e.at("perturb_seed").get<uint64_t>();
        m.cases.push_back(c);
    }
    m.config_echo = j.at("config");
    return m;
}

inline Manifest build_manifest(const ExperimentConfig& cfg) {
    Manifest m;
    char buf[32];
    for (int i = 0; i < cfg.cohort.n_train; ++i) {
        std::snprintf(buf, sizeof(buf), "train_%03d", i);
        m.cases.push_back({buf, false, cfg.cohort.train_seed0 + i,
                           cfg.cohort.perturb_seed0 + static_cast<uint64_t>(i)});
    }
    for (int i = 0; i < cfg.cohort.n_test; ++i) {
        std::snprintf(buf, sizeof(buf), "test_%03d", i);
        m.cases.push_back({buf, true, cfg.cohort.test_seed0 + i,
                           cfg.cohort.perturb_seed0 + 100000 + static_cast<uint64_t>(i)});
    }
    m.config_echo = json{{"cohort",
                          {{"n_train", cfg.cohort.n_train},
                           {"n_test", cfg.cohort.n_test},
                           {"train_seed0", cfg.cohort.train_seed0},
                           {"test_seed0", cfg.cohort.test_seed0},
                           {"perturb_seed0", cfg.cohort.perturb_seed0},
                           {"perturb_mm", cfg.cohort.perturb_mm},
                           {"phantom", phantom_to_json(cfg.cohort.phantom)}}}};
    return m;
}

inline Manifest load_manifest(const ExperimentConfig& cfg) {
    const auto path = cfg.out_dir / "manifest.json";
    std::ifstream f(path);
    if (!f) throw StateError("missing manifest; run the phantom stage first: " +
                             path.string());
    json j;
    f >> j;
    return manifest_from_json(j);
}

/// Generates the cohort on disk. Idempotent: an existing identical manifest
/// short-circuits; a conflicting one is an error.
inline void run_phantom(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto manifest = build_manifest(cfg);
    const std::string want = manifest_to_json(manifest).dump(2) + "\n";

    const auto mpath = cfg.out_dir / "manifest.json";
    if (fs::exists(mpath)) {
        std::ifstream f(mpath);
        const std::string have(std::istreambuf_iterator<char>(f),
                               std::istreambuf_iterator<char>{});
        if (have == want) return;  // already generated with this exact config
        throw StateError("existing manifest does not match this config: " +
                         mpath.string());
    }

    fs::create_directories(cfg.out_dir / "cases");
    for (const auto& c : manifest.cases) {
        PhantomSpec spec = cfg.cohort.phantom;
        spec.seed = c.phantom_seed;
        const auto ph = generate_phantom(spec);
        const auto base = cfg.out_dir / "cases" / c.name;
        save_volume(ph.intensity, base.string() + ".intensity.mhd");
        save_volume(ph.cavity, base.string() + ".cavity.mhd");
        save_volume(ph.scar, base.string() + ".scar.mhd");
    }
    std::ofstream f(mpath);
    f << want;
}

// ---------------------------------------------------------------------------
// Case loading and meshing
// ---------------------------------------------------------------------------
struct LoadedCase {
    CaseEntry entry;
    Volume3D intensity;
    LabelVolume cavity;
    LabelVolume scar;
};

inline LoadedCase load_case(const ExperimentConfig& cfg, const CaseEntry& entry) {
    const auto base = cfg.out_dir / "cases" / entry.name;
    if (!fs::exists(base.string() + ".intensity.mhd"))
        throw StateError("missing case volumes for " + entry.name +
                         "; run the phantom stage first");
    return {entry, load_volume_f32(base.string() + ".intensity.mhd"),
            load_label_volume(base.string() + ".cavity.mhd"),
            load_label_volume(base.string() + ".scar.mhd")};
}

struct MeshedCase {
    LoadedCase data;
    SurfaceMesh mesh;
    VertexLabels gt;
    std::vector<double> vertex_values;
};

/// Meshes a case from either the exact cavity mask (the manual-delineation
/// analogue) or its perturbed counterpart (the automatic-segmentation
/// analogue), then projects the scar ground truth onto that surface.
inline MeshedCase mesh_case(const ExperimentConfig& cfg, LoadedCase data,
                            bool perturbed_init) {
    MeshedCase out{std::move(data), {}, {}, {}};
    LabelVolume init = out.data.cavity;
    if (perturbed_init && cfg.cohort.perturb_mm > 0.0)
        init = perturb_segmentation(out.data.cavity, cfg.cohort.perturb_mm,
                                    out.data.entry.perturb_seed);
    out.mesh = marching_cubes(init, cfg.upsample);
    out.gt = project_labels(out.mesh, out.data.scar, cfg.search_mm,
                            perturbed_init ? LabelSource::GroundTruthAuto
                                           : LabelSource::GroundTruthManual);
    out.vertex_values.reserve(out.mesh.vertices.size());
    for (const auto& v : out.mesh.vertices)
        out.vertex_values.push_back(sample_trilinear(out.data.intensity, v));
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------
namespace detail {

inline std::string fmt_num(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

inline std::string ckpt_stem(const PatchGeometry& geom, double shift_range) {
    return "R" + fmt_num(shift_range) + "_Ns" + std::to_string(geom.n_scales) + "_P" +
           std::to_string(geom.size[0]) + "x" + std::to_string(geom.size[1]) + "x" +
           std::to_string(geom.size[2]);
}

}  // namespace detail

struct TrainedModels {
    fs::path tnet_path;
    fs::path nnet_path;
    std::vector<double> tnet_loss;
    std::vector<double> nnet_loss;
};

/// Trains T-NET and N-NET on the training cohort with per-epoch resampling:
/// every epoch materializes fresh node/pair samples (fresh random shifts),
/// so the shift augmentation covers the configured range densely.
inline TrainedModels train_models(const ExperimentConfig& cfg,
                                  const std::vector<MeshedCase>& train_cases,
                                  const PatchGeometry& geom, double shift_range,
                                  bool want_nnet) {
    double d_scale = 0.0;
    for (const auto& c : train_cases) d_scale += c.mesh.mean_edge_length();
    d_scale /= static_cast<double>(train_cases.size());

    TNet<float> tnet(geom, cfg.train.seed);
    NNet<float> nnet(geom, cfg.train.seed + 1, d_scale);
    TNetTrainer<float> tnet_trainer(tnet, cfg.train);
    NNetTrainer<float> nnet_trainer(nnet, cfg.train);

    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        std::vector<TrainingSample> nodes;
        std::vector<PairSample> pairs;
        for (size_t ci = 0; ci < train_cases.size(); ++ci) {
            const auto& c = train_cases[ci];
            const uint64_t seed =
                Rng::mix(cfg.train.seed ^ Rng::mix(ci * 1000003 + epoch));
            auto sets = build_training_sets(c.mesh, c.gt, c.data.intensity, geom,
                                            shift_range, cfg.node_samples_per_case,
                                            want_nnet ? cfg.pair_samples_per_case : 0,
                                            seed);
            std::move(sets.nodes.begin(), sets.nodes.end(), std::back_inserter(nodes));
            std::move(sets.pairs.begin(), sets.pairs.end(), std::back_inserter(pairs));
        }
        tnet_trainer.run_epoch(nodes);
        if (want_nnet) {
            nnet_trainer.run_epoch(pairs);
            std::fprintf(stderr, "  epoch %d/%d  tnet_loss=%.4f  nnet_loss=%.4f\n",
                         epoch + 1, cfg.train.epochs, tnet_trainer.loss_trace().back(),
                         nnet_trainer.loss_trace().back());
        } else {
            std::fprintf(stderr, "  epoch %d/%d  tnet_loss=%.4f\n", epoch + 1,
                         cfg.train.epochs, tnet_trainer.loss_trace().back());
        }
    }

    fs::create_directories(cfg.out_dir / "checkpoints");
    TrainedModels out;
    const auto stem = detail::ckpt_stem(geom, shift_range);
    out.tnet_path = cfg.out_dir / "checkpoints" / ("tnet_" + stem + ".ckpt");
    save_tnet(tnet, out.tnet_path);
    out.tnet_loss = tnet_trainer.loss_trace();
    if (want_nnet) {
        out.nnet_path = cfg.out_dir / "checkpoints" / ("nnet_" + stem + ".ckpt");
        save_nnet(nnet, out.nnet_path);
        out.nnet_loss = nnet_trainer.loss_trace();
    }
    return out;
}

inline bool needs_r0_checkpoint(const std::vector<std::string>& methods) {
    for (const auto& m : methods)
        if (m == "ms-cnn0" || m == "ms-cnn0-gt") return true;
    return false;
}

/// Trains every checkpoint the configured methods need and records the loss
/// traces. Training initializes from the exact cavity surfaces; the random
/// shift range R is what simulates the misalignment that the perturbed test
/// initializations carry.
inline void run_train(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto manifest = load_manifest(cfg);

    std::vector<MeshedCase> train_cases;
    for (const auto& entry : manifest.cases)
        if (!entry.is_test)
            train_cases.push_back(mesh_case(cfg, load_case(cfg, entry), false));
    if (train_cases.empty()) throw StateError("manifest contains no training cases");

    json log;
    std::fprintf(stderr, "training R=%s checkpoints on %zu cases\n",
                 detail::fmt_num(cfg.shift_range_mm).c_str(), train_cases.size());
    const auto main_models =
        train_models(cfg, train_cases, cfg.patch, cfg.shift_range_mm, true);
    log["tnet_" + detail::ckpt_stem(cfg.patch, cfg.shift_range_mm)] =
        main_models.tnet_loss;
    log["nnet_" + detail::ckpt_stem(cfg.patch, cfg.shift_range_mm)] =
        main_models.nnet_loss;

    if (needs_r0_checkpoint(cfg.methods) && cfg.shift_range_mm != 0.0) {
        std::fprintf(stderr, "training R=0 checkpoint\n");
        const auto r0 = train_models(cfg, train_cases, cfg.patch, 0.0, false);
        log["tnet_" + detail::ckpt_stem(cfg.patch, 0.0)] = r0.tnet_loss;
    }

    std::ofstream f(cfg.out_dir / "checkpoints" / "train_log.json");
    f << log.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------
namespace detail {

struct MethodTraits {
    bool perturbed_init = false;  // automatic-analogue initialization
    bool needs_tnet = false;
    bool needs_nnet = false;
    double tnet_shift_range = 0.0;  // which checkpoint the method loads
};

inline MethodTraits method_traits(const ExperimentConfig& cfg, const std::string& m) {
    if (m == "gt-echo" || m == "2sd" || m == "otsu" || m == "mgmm" || m == "mgmm-gc")
        return {false, false, false, 0.0};
    if (m == "ms-cnn0-gt") return {false, true, false, 0.0};
    if (m == "ms-cnn0") return {true, true, false, 0.0};
    if (m == "ms-cnn") return {true, true, false, cfg.shift_range_mm};
    if (m == "learngc") return {true, true, true, cfg.shift_range_mm};
    throw ConfigError("unknown method: " + m);
}

}  // namespace detail

struct CaseSegmentation {
    std::vector<uint8_t> pred;
    std::vector<double> prob_scar;  // regional score used by the method
};

/// Per-vertex (p_scar, p_normal) from the T-NET at zero shift.
inline std::vector<std::array<double, 2>> tnet_node_probs(TNet<float>& tnet,
                                                          const MeshedCase& mc,
                                                          const PatchGeometry& geom) {
    std::vector<std::array<double, 2>> probs(mc.mesh.vertices.size());
    for (size_t v = 0; v < mc.mesh.vertices.size(); ++v) {
        const auto msp = extract_msp(mc.data.intensity, mc.mesh.vertices[v],
                                     mc.mesh.normals[v], geom, 0.0);
        const auto p = tnet.forward(msp);
        probs[v] = {p[0], p[1]};
    }
    return probs;
}

/// Per-edge predicted label similarity from the N-NET, with the per-vertex
/// feature pass cached.
inline std::vector<double> nnet_edge_sims(NNet<float>& nnet, const MeshedCase& mc,
                                          const PatchGeometry& geom) {
    std::vector<std::vector<float>> feats(mc.mesh.vertices.size());
    for (size_t v = 0; v < mc.mesh.vertices.size(); ++v) {
        const auto msp = extract_msp(mc.data.intensity, mc.mesh.vertices[v],
                                     mc.mesh.normals[v], geom, 0.0);
        feats[v] = nnet.features(msp).f;
    }
    std::vector<double> sims(mc.mesh.edges.size());
    for (size_t e = 0; e < mc.mesh.edges.size(); ++e) {
        const auto& ed = mc.mesh.edges[e];
        sims[e] = nnet.head(feats[ed.a], feats[ed.b], ed.length);
    }
    return sims;
}

inline CaseSegmentation segment_case(const ExperimentConfig& cfg, const std::string& method,
                                     const MeshedCase& mc, TNet<float>* tnet,
                                     NNet<float>* nnet) {
    const size_t n = mc.mesh.vertices.size();
    CaseSegmentation out;
    out.pred.assign(n, 0);
    out.prob_scar.assign(n, 0.0);

    if (method == "gt-echo") {
        out.pred = mc.gt.labels;
        for (size_t i = 0; i < n; ++i) out.prob_scar[i] = mc.gt.labels[i];
        return out;
    }
    if (method == "2sd" || method == "otsu") {
        const double thr = method == "2sd" ? threshold_nsd(mc.vertex_values, cfg.n_sd)
                                           : otsu_threshold(mc.vertex_values);
        for (size_t i = 0; i < n; ++i) {
            out.pred[i] = mc.vertex_values[i] > thr ? 1 : 0;
            out.prob_scar[i] = out.pred[i];
        }
        return out;
    }
    if (method == "mgmm" || method == "mgmm-gc") {
        const auto fit = fit_mgmm(mc.vertex_values, cfg.mgmm_k_scar, cfg.mgmm_k_normal,
                                  Rng::mix(mc.data.entry.phantom_seed));
        out.prob_scar = fit.posterior_scar;
        if (method == "mgmm") {
            for (size_t i = 0; i < n; ++i) out.pred[i] = fit.posterior_scar[i] >= 0.5;
        } else {
            const auto stats = mean_sd(mc.vertex_values);
            const double sigma = stats.sd > 1e-9 ? stats.sd : 1.0;
            out.pred = mgmm_graphcut(fit.posterior_scar, mc.vertex_values, mc.mesh,
                                     cfg.lambda, sigma)
                           .labels;
        }
        return out;
    }
    if (method == "ms-cnn0" || method == "ms-cnn0-gt" || method == "ms-cnn" ||
        method == "learngc") {
        if (!tnet) throw StateError("method " + method + " needs a T-NET checkpoint");
        const auto probs = tnet_node_probs(*tnet, mc, cfg.patch);
        for (size_t i = 0; i < n; ++i) out.prob_scar[i] = probs[i][0];
        if (method == "learngc") {
            if (!nnet) throw StateError("learngc needs an N-NET checkpoint");
            const auto sims = nnet_edge_sims(*nnet, mc, cfg.patch);
            out.pred = min_cut(build_graph(mc.mesh, probs, sims, cfg.lambda)).labels;
        } else {
            for (size_t i = 0; i < n; ++i) out.pred[i] = probs[i][0] >= 0.5 ? 1 : 0;
        }
        return out;
    }
    throw ConfigError("unknown method: " + method);
}

inline void write_case_result(const fs::path& dir, const std::string& case_name,
                              const MeshedCase& mc, const CaseSegmentation& seg) {
    fs::create_directories(dir);
    json j{{"case", case_name},
           {"n_vertices", mc.mesh.vertices.size()},
           {"gt_source", mc.gt.source == LabelSource::GroundTruthAuto ? "GT_auto" : "GT_M"},
           {"gt", mc.gt.labels},
           {"pred", seg.pred},
           {"prob_scar", seg.prob_scar}};
    std::ofstream f(dir / (case_name + ".json"));
    f << j.dump() << "\n";
    write_ply(mc.mesh, seg.pred, seg.prob_scar, (dir / (case_name + ".ply")).string());
}

/// Runs one method (or every configured method) across the test cohort.
inline void run_segment(const ExperimentConfig& cfg, const std::string& only_method = "") {
    cfg.validate();
    const auto manifest = load_manifest(cfg);

    std::vector<std::string> methods;
    if (only_method.empty())
        methods = cfg.methods;
    else
        methods.push_back(only_method);

    // Load checkpoints on demand, once.
    std::map<std::string, TNet<float>> tnets;
    std::map<std::string, NNet<float>> nnets;
    auto get_tnet = [&](double r) -> TNet<float>* {
        const auto stem = detail::ckpt_stem(cfg.patch, r);
        auto it = tnets.find(stem);
        if (it == tnets.end()) {
            const auto path = cfg.out_dir / "checkpoints" / ("tnet_" + stem + ".ckpt");
            if (!fs::exists(path))
                throw StateError("missing checkpoint " + path.string() +
                                 "; run the train stage first");
            it = tnets.emplace(stem, load_tnet(path, &cfg.patch)).first;
        }
        return &it->second;
    };
    auto get_nnet = [&](double r) -> NNet<float>* {
        const auto stem = detail::ckpt_stem(cfg.patch, r);
        auto it = nnets.find(stem);
        if (it == nnets.end()) {
            const auto path = cfg.out_dir / "checkpoints" / ("nnet_" + stem + ".ckpt");
            if (!fs::exists(path))
                throw StateError("missing checkpoint " + path.string() +
                                 "; run the train stage first");
            it = nnets.emplace(stem, load_nnet(path, &cfg.patch)).first;
        }
        return &it->second;
    };

    for (const auto& entry : manifest.cases) {
        if (!entry.is_test) continue;
        const auto loaded = load_case(cfg, entry);
        // The two initializations are shared across methods per case.
        std::optional<MeshedCase> gt_init, auto_init;
        for (const auto& method : methods) {
            const auto traits = detail::method_traits(cfg, method);
            auto& mc = traits.perturbed_init ? auto_init : gt_init;
            if (!mc) mc = mesh_case(cfg, loaded, traits.perturbed_init);
            TNet<float>* tnet =
                traits.needs_tnet ? get_tnet(traits.tnet_shift_range) : nullptr;
            NNet<float>* nnet =
                traits.needs_nnet ? get_nnet(traits.tnet_shift_range) : nullptr;
            const auto seg = segment_case(cfg, method, *mc, tnet, nnet);
            write_case_result(cfg.out_dir / "segmentations" / method, entry.name, *mc,
                              seg);
            std::fprintf(stderr, "segmented %s with %s (%zu vertices)\n",
                         entry.name.c_str(), method.c_str(), mc->mesh.vertices.size());
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------
struct MethodReport {
    std::string method;
    MeanSd accuracy, sensitivity, specificity, dice_scar, gdice;
    std::vector<double> per_case_dice;
};

inline MethodReport evaluate_method(const ExperimentConfig& cfg,
                                    const std::string& method,
                                    const std::vector<std::string>& case_names) {
    std::vector<double> acc, sens, spec, dices, gdices;
    MethodReport out;
    out.method = method;
    for (const auto& name : case_names) {
        const auto path = cfg.out_dir / "segmentations" / method / (name + ".json");
        std::ifstream f(path);
        if (!f)
            throw StateError("missing segmentation " + path.string() +
                             "; run the segment stage first");
        json j;
        f >> j;
        const auto pred = j.at("pred").get<std::vector<uint8_t>>();
        const auto gt = j.at("gt").get<std::vector<uint8_t>>();
        const auto r = confusion_stats(pred, gt);
        acc.push_back(r.accuracy);
        if (r.sensitivity) sens.push_back(*r.sensitivity);
        if (r.specificity) spec.push_back(*r.specificity);
        dices.push_back(r.dice_scar);
        gdices.push_back(r.gdice);
    }
    out.accuracy = mean_sd(acc);
    out.sensitivity = mean_sd(sens);
    out.specificity = mean_sd(spec);
    out.dice_scar = mean_sd(dices);
    out.gdice = mean_sd(gdices);
    out.per_case_dice = dices;
    return out;
}

/// Emits the per-method metric table (text + JSON).
inline std::vector<MethodReport> run_evaluate(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto manifest = load_manifest(cfg);
    std::vector<std::string> case_names;
    for (const auto& e : manifest.cases)
        if (e.is_test) case_names.push_back(e.name);

    std::vector<MethodReport> reports;
    for (const auto& method : cfg.methods)
        reports.push_back(evaluate_method(cfg, method, case_names));

    json jr = json::array();
    std::string table = "method      accuracy        sensitivity     specificity     "
                        "dice_scar       gdice\n";
    char line[256];
    for (const auto& r : reports) {
        std::snprintf(line, sizeof(line),
                      "%-11s %.3f +- %.3f  %.3f +- %.3f  %.3f +- %.3f  %.3f +- %.3f  "
                      "%.3f +- %.3f\n",
                      r.method.c_str(), r.accuracy.mean, r.accuracy.sd,
                      r.sensitivity.mean, r.sensitivity.sd, r.specificity.mean,
                      r.specificity.sd, r.dice_scar.mean, r.dice_scar.sd, r.gdice.mean,
                      r.gdice.sd);
        table += line;
        jr.push_back(json{{"method", r.method},
                          {"accuracy", {{"mean", r.accuracy.mean}, {"sd", r.accuracy.sd}}},
                          {"sensitivity",
                           {{"mean", r.sensitivity.mean}, {"sd", r.sensitivity.sd}}},
                          {"specificity",
                           {{"mean", r.specificity.mean}, {"sd", r.specificity.sd}}},
                          {"dice_scar",
                           {{"mean", r.dice_scar.mean}, {"sd", r.dice_scar.sd}}},
                          {"gdice", {{"mean", r.gdice.mean}, {"sd", r.gdice.sd}}},
                          {"per_case_dice", r.per_case_dice}});
    }
    std::ofstream(cfg.out_dir / "report.txt") << table;
    std::ofstream(cfg.out_dir / "report.json") << jr.dump(2) << "\n";
    return reports;
}

// ---------------------------------------------------------------------------
// Parameter sweeps
// ---------------------------------------------------------------------------
namespace detail {

inline double mean_learngc_dice(const ExperimentConfig& cfg,
                                const std::vector<MeshedCase>& test_cases,
                                TNet<float>& tnet, NNet<float>& nnet,
                                const PatchGeometry& geom, double lambda) {
    std::vector<double> dices;
    for (const auto& mc : test_cases) {
        const auto probs = tnet_node_probs(tnet, mc, geom);
        const auto sims = nnet_edge_sims(nnet, mc, geom);
        const auto pred = min_cut(build_graph(mc.mesh, probs, sims, lambda)).labels;
        dices.push_back(dice(pred, mc.gt.labels, 1));
    }
    return mean_sd(dices).mean;
}

inline void write_sweep(const ExperimentConfig& cfg, const std::string& axis,
                        const json& points) {
    std::ofstream(cfg.out_dir / ("sweep_" + axis + ".json")) << points.dump(2) << "\n";
    std::string table = axis + "\tmean_dice_scar\n";
    for (const auto& p : points)
        table += p.at("value").dump() + "\t" + p.at("mean_dice_scar").dump() + "\n";
    std::ofstream(cfg.out_dir / ("sweep_" + axis + ".txt")) << table;
}

}  // namespace detail

/// Parameter studies. `axis` selects which knob to sweep; each grid point
/// reports the cohort-mean Dice of the learned graph-cut method. The lambda
/// sweep reuses the trained checkpoints; the other axes retrain per point.
inline json run_sweep(const ExperimentConfig& cfg, const std::string& axis) {
    cfg.validate();
    const auto manifest = load_manifest(cfg);

    std::vector<MeshedCase> train_cases, test_cases;
    auto ensure_loaded = [&](const PatchGeometry&) {
        if (!train_cases.empty()) return;
        for (const auto& e : manifest.cases) {
            if (e.is_test)
                test_cases.push_back(mesh_case(cfg, load_case(cfg, e), true));
            else
                train_cases.push_back(mesh_case(cfg, load_case(cfg, e), false));
        }
    };

    // Reuses checkpoints left by earlier sweeps in the same output directory
    // (identical stems imply identical training inputs under one manifest).
    auto train_or_load = [&](const PatchGeometry& geom, double shift_range) {
        const auto stem = detail::ckpt_stem(geom, shift_range);
        const auto tpath = cfg.out_dir / "checkpoints" / ("tnet_" + stem + ".ckpt");
        const auto npath = cfg.out_dir / "checkpoints" / ("nnet_" + stem + ".ckpt");
        if (fs::exists(tpath) && fs::exists(npath))
            return std::make_pair(load_tnet(tpath, &geom), load_nnet(npath, &geom));
        const auto models = train_models(cfg, train_cases, geom, shift_range, true);
        return std::make_pair(load_tnet(models.tnet_path, &geom),
                              load_nnet(models.nnet_path, &geom));
    };

    json points = json::array();
    if (axis == "lambda") {
        ensure_loaded(cfg.patch);
        auto tnet = load_tnet(cfg.out_dir / "checkpoints" /
                                  ("tnet_" + detail::ckpt_stem(cfg.patch, cfg.shift_range_mm) +
                                   ".ckpt"),
                              &cfg.patch);
        auto nnet = load_nnet(cfg.out_dir / "checkpoints" /
                                  ("nnet_" + detail::ckpt_stem(cfg.patch, cfg.shift_range_mm) +
                                   ".ckpt"),
                              &cfg.patch);
        // One probs/sims pass per case, reused across the grid.
        std::vector<std::vector<std::array<double, 2>>> all_probs;
        std::vector<std::vector<double>> all_sims;
        for (const auto& mc : test_cases) {
            all_probs.push_back(tnet_node_probs(tnet, mc, cfg.patch));
            all_sims.push_back(nnet_edge_sims(nnet, mc, cfg.patch));
        }
        for (double lambda : cfg.lambda_grid) {
            std::vector<double> dices;
            for (size_t c = 0; c < test_cases.size(); ++c) {
                const auto pred =
                    min_cut(build_graph(test_cases[c].mesh, all_probs[c], all_sims[c],
                                        lambda))
                        .labels;
                dices.push_back(dice(pred, test_cases[c].gt.labels, 1));
            }
            points.push_back(
                json{{"value", lambda}, {"mean_dice_scar", mean_sd(dices).mean}});
            std::fprintf(stderr, "sweep lambda=%g dice=%g\n", lambda,
                         points.back()["mean_dice_scar"].get<double>());
        }
    } else if (axis == "R") {
        ensure_loaded(cfg.patch);
        for (double r : cfg.shift_grid) {
            auto [tnet, nnet] = train_or_load(cfg.patch, r);
            const double d =
                detail::mean_learngc_dice(cfg, test_cases, tnet, nnet, cfg.patch, cfg.lambda);
            points.push_back(json{{"value", r}, {"mean_dice_scar", d}});
            std::fprintf(stderr, "sweep R=%g dice=%g\n", r, d);
        }
    } else if (axis == "scales") {
        ensure_loaded(cfg.patch);
        for (int ns : cfg.scales_grid) {
            PatchGeometry geom = cfg.patch;
            geom.n_scales = ns;
            if (!geom.multipliers.empty()) geom.multipliers.resize(ns);
            auto [tnet, nnet] = train_or_load(geom, cfg.shift_range_mm);
            const double d =
                detail::mean_learngc_dice(cfg, test_cases, tnet, nnet, geom, cfg.lambda);
            points.push_back(json{{"value", ns}, {"mean_dice_scar", d}});
            std::fprintf(stderr, "sweep scales=%d dice=%g\n", ns, d);
        }
    } else if (axis == "patch_size") {
        ensure_loaded(cfg.patch);
        for (const auto& size : cfg.patch_size_grid) {
            PatchGeometry geom = cfg.patch;
            geom.size = size;
            geom.n_scales = 1;  // single-scale study
            geom.multipliers.clear();
            auto [tnet, nnet] = train_or_load(geom, cfg.shift_range_mm);
            const double d =
                detail::mean_learngc_dice(cfg, test_cases, tnet, nnet, geom, cfg.lambda);
            points.push_back(json{{"value", size}, {"mean_dice_scar", d}});
            std::fprintf(stderr, "sweep patch=%dx%dx%d dice=%g\n", size[0], size[1],
                         size[2], d);
        }
    } else {
        throw ConfigError("unknown sweep axis: " + axis +
                          " (expected patch_size|lambda|R|scales)");
    }
    detail::write_sweep(cfg, axis, points);
    return points;
}

}  // namespace lascar
