#include "core/pipeline.hpp"

#include "core/error.hpp"
#include "core/json_util.hpp"
#include "core/log.hpp"
#include "core/neighborhood.hpp"
#include "core/renderer.hpp"

#include <chrono>
#include <set>

namespace arapgs {

using detail::json;

namespace {

[[noreturn]] void config_error(const std::string& ptr, const std::string& why) {
    throw Error(ErrorCode::Config, (ptr.empty() ? std::string("/") : ptr) + ": " + why);
}

void check_keys(const json& obj, const std::string& ptr, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) config_error(ptr, "expected object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : obj.items()) {
        if (!ok.count(key)) config_error(ptr + "/" + key, "unknown configuration key");
    }
}

std::size_t get_count(const json& v, const std::string& ptr) {
    if (!v.is_number_integer() || v.get<long long>() < 0) config_error(ptr, "expected non-negative integer");
    return static_cast<std::size_t>(v.get<long long>());
}

double get_number(const json& v, const std::string& ptr) {
    if (!v.is_number() || !std::isfinite(v.get<double>())) config_error(ptr, "expected finite number");
    return v.get<double>();
}

std::filesystem::path get_path(const json& v, const std::string& ptr, const std::filesystem::path& base) {
    if (!v.is_string()) config_error(ptr, "expected path string");
    std::filesystem::path p = v.get<std::string>();
    return p.is_relative() && !base.empty() ? base / p : p;
}

WeightMode get_weight_mode(const json& v, const std::string& ptr) {
    if (v == "uniform") return WeightMode::Uniform;
    if (v == "gaussian") return WeightMode::GaussianKernel;
    config_error(ptr, "expected 'uniform' or 'gaussian'");
}

const char* weight_mode_name(WeightMode m) { return m == WeightMode::Uniform ? "uniform" : "gaussian"; }

const char* enhancer_name(EnhancerKind k) {
    switch (k) {
    case EnhancerKind::Identity: return "identity";
    case EnhancerKind::Sharpen: return "sharpen";
    case EnhancerKind::External: return "external";
    }
    return "identity";
}

class StageClock {
public:
    explicit StageClock(std::vector<std::pair<std::string, double>>& sink) : sink_(sink) {}
    void lap(const char* name) {
        const auto now = std::chrono::steady_clock::now();
        sink_.emplace_back(name, std::chrono::duration<double, std::milli>(now - last_).count());
        last_ = now;
    }

private:
    std::vector<std::pair<std::string, double>>& sink_;
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

std::vector<Vec3d> forced_points(const DragSpec& drag) {
    std::vector<Vec3d> pts;
    for (const auto& h : drag.handles) pts.push_back(h.source);
    for (const auto& a : drag.anchors) pts.push_back(a);
    return pts;
}

std::vector<Vec3d> subset_positions(const GaussianScene& scene, const std::vector<std::size_t>& subset) {
    std::vector<Vec3d> pos;
    pos.reserve(subset.size());
    for (std::size_t g : subset) pos.push_back(scene.centers[g].cast<double>());
    return pos;
}

} // namespace

void RunManifest::validate() const {
    if (sampling.n_sub < 2) config_error("/sampling/n_sub", "must be at least 2");
    if (graph.k < 1) config_error("/graph/k", "must be at least 1");
    if (arap.max_iters < 1) config_error("/arap/max_iters", "must be at least 1");
    if (!(arap.rel_energy_tol >= 0)) config_error("/arap/rel_energy_tol", "must be non-negative");
    if (propagation.k < 1) config_error("/propagation/k", "must be at least 1");
    if (propagation.temperature && !(*propagation.temperature > 0)) {
        config_error("/propagation/temperature", "must be positive");
    }
    for (int g : eval.gammas) {
        if (g < 0) config_error("/eval/gammas", "gammas must be non-negative");
    }
    if (eval.gammas.empty()) config_error("/eval/gammas", "at least one gamma is required");
    if (eval.views < 1) config_error("/eval/views", "must be at least 1");
    refine.validate();
}

RunManifest parse_manifest(std::string_view text, const RunManifest& base, const std::filesystem::path& base_dir) {
    json root;
    try {
        root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Config, std::string("invalid configuration JSON: ") + e.what());
    }
    RunManifest m = base;
    check_keys(root, "", {"scene", "drag", "cameras", "out", "seed", "sampling", "graph", "arap", "propagation",
                          "refine", "eval"});
    for (const char* key : {"scene", "drag", "cameras", "out"}) {
        if (auto it = root.find(key); it != root.end() && !it->is_null()) {
            auto p = get_path(*it, std::string("/") + key, base_dir);
            if (std::string(key) == "scene") m.scene = p;
            else if (std::string(key) == "drag") m.drag = p;
            else if (std::string(key) == "cameras") m.cameras = p;
            else m.out = p;
        }
    }
    if (auto it = root.find("seed"); it != root.end()) {
        if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0)) {
            config_error("/seed", "expected non-negative integer");
        }
        m.seed = it->get<std::uint64_t>();
    }
    if (auto it = root.find("sampling"); it != root.end()) {
        check_keys(*it, "/sampling", {"n_sub"});
        if (auto v = it->find("n_sub"); v != it->end()) m.sampling.n_sub = get_count(*v, "/sampling/n_sub");
    }
    if (auto it = root.find("graph"); it != root.end()) {
        check_keys(*it, "/graph", {"k", "weight_mode"});
        if (auto v = it->find("k"); v != it->end()) m.graph.k = get_count(*v, "/graph/k");
        if (auto v = it->find("weight_mode"); v != it->end()) {
            m.graph.weight_mode = get_weight_mode(*v, "/graph/weight_mode");
        }
    }
    if (auto it = root.find("arap"); it != root.end()) {
        check_keys(*it, "/arap", {"max_iters", "rel_energy_tol", "weight_mode"});
        if (auto v = it->find("max_iters"); v != it->end()) m.arap.max_iters = get_count(*v, "/arap/max_iters");
        if (auto v = it->find("rel_energy_tol"); v != it->end()) {
            m.arap.rel_energy_tol = get_number(*v, "/arap/rel_energy_tol");
        }
        if (auto v = it->find("weight_mode"); v != it->end()) {
            m.graph.weight_mode = get_weight_mode(*v, "/arap/weight_mode");
        }
    }
    m.arap.weight_mode = m.graph.weight_mode;
    if (auto it = root.find("propagation"); it != root.end()) {
        check_keys(*it, "/propagation", {"k", "temperature"});
        if (auto v = it->find("k"); v != it->end()) m.propagation.k = get_count(*v, "/propagation/k");
        if (auto v = it->find("temperature"); v != it->end()) {
            if (v->is_null()) {
                m.propagation.temperature.reset();
            } else {
                m.propagation.temperature = get_number(*v, "/propagation/temperature");
            }
        }
    }
    if (auto it = root.find("refine"); it != root.end()) {
        check_keys(*it, "/refine", {"update_period", "views_per_update", "total_iters", "displacement_threshold",
                                    "mask_dilation", "learning_rate", "enhancer", "enhancer_command", "background"});
        RefineConfig& r = m.refine;
        if (auto v = it->find("update_period"); v != it->end()) r.update_period = get_count(*v, "/refine/update_period");
        if (auto v = it->find("views_per_update"); v != it->end()) {
            r.views_per_update = get_count(*v, "/refine/views_per_update");
        }
        if (auto v = it->find("total_iters"); v != it->end()) {
            if (v->is_null()) {
                r.total_iters.reset();
            } else {
                r.total_iters = get_count(*v, "/refine/total_iters");
            }
        }
        if (auto v = it->find("displacement_threshold"); v != it->end()) {
            r.displacement_threshold = get_number(*v, "/refine/displacement_threshold");
        }
        if (auto v = it->find("mask_dilation"); v != it->end()) {
            r.mask_dilation = static_cast<int>(get_count(*v, "/refine/mask_dilation"));
        }
        if (auto v = it->find("learning_rate"); v != it->end()) {
            r.learning_rate = get_number(*v, "/refine/learning_rate");
        }
        if (auto v = it->find("enhancer"); v != it->end()) {
            if (*v == "identity") r.enhancer.kind = EnhancerKind::Identity;
            else if (*v == "sharpen") r.enhancer.kind = EnhancerKind::Sharpen;
            else if (*v == "external") r.enhancer.kind = EnhancerKind::External;
            else config_error("/refine/enhancer", "expected 'identity', 'sharpen' or 'external'");
        }
        if (auto v = it->find("enhancer_command"); v != it->end() && !v->is_null()) {
            if (!v->is_string()) config_error("/refine/enhancer_command", "expected string");
            r.enhancer.command = v->get<std::string>();
        }
        if (auto v = it->find("background"); v != it->end()) {
            if (!v->is_array() || v->size() != 3) config_error("/refine/background", "expected [r, g, b]");
            for (int c = 0; c < 3; ++c) {
                r.background[c] = get_number((*v)[c], "/refine/background/" + std::to_string(c));
            }
        }
    }
    if (auto it = root.find("eval"); it != root.end()) {
        check_keys(*it, "/eval", {"gammas", "views"});
        if (auto v = it->find("gammas"); v != it->end()) {
            if (!v->is_array()) config_error("/eval/gammas", "expected array of integers");
            m.eval.gammas.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                m.eval.gammas.push_back(static_cast<int>(get_count((*v)[i], "/eval/gammas/" + std::to_string(i))));
            }
        }
        if (auto v = it->find("views"); v != it->end()) m.eval.views = get_count(*v, "/eval/views");
    }
    m.validate();
    return m;
}

std::string manifest_to_json(const RunManifest& m) {
    auto opt_path = [](const std::optional<std::filesystem::path>& p) { return p ? json(p->string()) : json(nullptr); };
    const RefineConfig& r = m.refine;
    json root = {
        {"scene", opt_path(m.scene)},
        {"drag", opt_path(m.drag)},
        {"cameras", opt_path(m.cameras)},
        {"out", opt_path(m.out)},
        {"seed", m.seed},
        {"sampling", {{"n_sub", m.sampling.n_sub}}},
        {"graph", {{"k", m.graph.k}, {"weight_mode", weight_mode_name(m.graph.weight_mode)}}},
        {"arap", {{"max_iters", m.arap.max_iters}, {"rel_energy_tol", m.arap.rel_energy_tol}}},
        {"propagation",
         {{"k", m.propagation.k},
          {"temperature", m.propagation.temperature ? json(*m.propagation.temperature) : json(nullptr)}}},
        {"refine",
         {{"update_period", r.update_period},
          {"views_per_update", r.views_per_update},
          {"total_iters", r.total_iters ? json(*r.total_iters) : json(nullptr)},
          {"displacement_threshold", r.displacement_threshold},
          {"mask_dilation", r.mask_dilation},
          {"learning_rate", r.learning_rate},
          {"enhancer", enhancer_name(r.enhancer.kind)},
          {"enhancer_command", r.enhancer.command},
          {"background", detail::to_json(r.background)}}},
        {"eval", {{"gammas", m.eval.gammas}, {"views", m.eval.views}}},
    };
    return root.dump(2);
}

std::string report_to_json(const DeformReport& r) {
    json snaps = json::array();
    for (const auto& s : r.snaps) {
        snaps.push_back({{"kind", s.kind}, {"index", s.index}, {"gaussian", s.gaussian}, {"distance", s.distance}});
    }
    json timings = json::object();
    for (const auto& [name, ms] : r.timings_ms) timings[name] = ms;
    json root = {
        {"seed", r.seed},
        {"counts",
         {{"gaussians", r.gaussians},
          {"active", r.active},
          {"subset", r.subset},
          {"directed_edges", r.directed_edges},
          {"graph_k", r.graph_k}}},
        {"constraints",
         {{"handles", r.constraints.handles},
          {"anchors", r.constraints.anchors},
          {"auto_anchors", r.constraints.auto_anchors},
          {"component_anchors", r.constraints.component_anchors}}},
        {"snaps", snaps},
        {"energy_trace", r.energy_trace},
        {"iterations", r.iterations},
        {"converged", r.converged},
        {"interpolation_temperature", r.interpolation_temperature},
        {"antipodal_fallbacks", r.antipodal_fallbacks},
        {"timings_ms", timings},
        {"warnings", r.warnings},
    };
    return root.dump(2);
}

void check_drag(const GaussianScene& scene, const DragSpec& drag, const RunManifest& manifest) {
    drag.validate();
    const auto forced = forced_points(drag);
    const SubsetSample sample = sample_subset(scene, drag.region, manifest.sampling.n_sub, manifest.seed, forced);
    handle_constraints(subset_positions(scene, sample.indices), drag, sample.snaps);
}

DeformResult deform_scene(const GaussianScene& scene, const DragSpec& drag, const RunManifest& manifest,
                          const StageProgress& progress) {
    manifest.validate();
    drag.validate();
    scene.validate();
    auto report_progress = [&](double f) {
        if (progress) progress(f);
    };

    DeformResult result;
    DeformReport& rep = result.report;
    rep.seed = manifest.seed;
    rep.gaussians = scene.size();
    StageClock clock(rep.timings_ms);

    const auto forced = forced_points(drag);
    const SubsetSample sample = sample_subset(scene, drag.region, manifest.sampling.n_sub, manifest.seed, forced);
    rep.active = active_indices(scene, drag.region).size();
    rep.subset = sample.indices.size();
    for (std::size_t i = 0; i < sample.snaps.size(); ++i) {
        const bool is_handle = i < drag.handles.size();
        rep.snaps.push_back(SnapReport{is_handle ? "handle" : "anchor",
                                       is_handle ? i : i - drag.handles.size(), sample.snaps[i].gaussian,
                                       sample.snaps[i].distance});
    }
    clock.lap("sample");
    report_progress(0.05);

    if (sample.indices.size() < 2) {
        throw Error(ErrorCode::EmptySelection, "fewer than two Gaussians available for the deformation graph");
    }
    std::size_t k = manifest.graph.k;
    if (k >= sample.indices.size()) {
        k = sample.indices.size() - 1;
        const std::string msg = "graph k reduced to " + std::to_string(k) + " for a subset of " +
                                std::to_string(sample.indices.size());
        log::warn(msg);
        rep.warnings.push_back(msg);
    }
    rep.graph_k = k;
    const auto positions = subset_positions(scene, sample.indices);
    DeformGraph graph = build_graph(positions, k, manifest.graph.weight_mode);
    graph.subset = sample.indices;
    rep.directed_edges = graph.directed_edge_count();
    clock.lap("graph");
    report_progress(0.15);

    rep.constraints = assign_constraints(graph, drag, sample.snaps, &rep.warnings);
    clock.lap("constraints");
    report_progress(0.2);

    ArapConfig arap = manifest.arap;
    arap.weight_mode = manifest.graph.weight_mode;
    const ArapState state = arap_solve(graph, arap, [&](std::size_t it, double) {
        report_progress(0.2 + 0.6 * static_cast<double>(it) / static_cast<double>(arap.max_iters));
    });
    rep.energy_trace = state.energy_trace;
    rep.iterations = state.iteration;
    rep.converged = state.converged;
    clock.lap("arap");
    report_progress(0.8);

    PropagationStats stats;
    result.scene = propagate(scene, drag.region, make_subset_transform(graph, state), manifest.propagation, &stats);
    rep.interpolation_temperature = stats.temperature;
    rep.antipodal_fallbacks = stats.antipodal_fallbacks;
    clock.lap("propagate");
    report_progress(1.0);
    return result;
}

RefineOutcome refine_scene(const GaussianScene& original, const GaussianScene& deformed, const CameraSet& cameras,
                           const RunManifest& manifest, const StageProgress& progress) {
    manifest.validate();
    if (original.size() != deformed.size()) {
        throw Error(ErrorCode::ShapeMismatch, "original and deformed scenes differ in Gaussian count");
    }
    RefineConfig config = manifest.refine;
    config.enhancer = resolve_enhancer(config.enhancer);
    ViewDataset views = build_view_dataset(original, deformed, cameras, config);
    const double tau_abs = config.displacement_threshold * bounds(original).diagonal();
    const auto trainable = moved_gaussians(original, deformed, tau_abs);

    RefineOutcome out;
    out.trainable = trainable.size();
    RefineResult r = refine(deformed, views, trainable, config, [&](std::size_t step, std::size_t total) {
        if (progress) progress(static_cast<double>(step) / static_cast<double>(total));
    });
    out.scene = std::move(r.scene);
    out.trace = std::move(r.trace);
    out.enhancer_failures = r.enhancer_failures;
    out.warnings = std::move(r.warnings);
    return out;
}

std::string view_filename(std::size_t index) { return "view_" + std::to_string(index) + ".png"; }

std::vector<std::filesystem::path> render_views(const GaussianScene& scene, const CameraSet& cameras,
                                                const std::filesystem::path& out_dir, const Vec3d& background) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create '" + out_dir.string() + "': " + ec.message());
    std::vector<std::filesystem::path> written;
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        const auto path = out_dir / view_filename(i);
        write_png(render(scene, cameras[i], background), path);
        written.push_back(path);
    }
    return written;
}

EvalOutcome evaluate_renders(const std::filesystem::path& original_dir, const std::filesystem::path& edited_dir,
                             const DragSpec& drag, const CameraSet& cameras, const RunManifest& manifest) {
    manifest.validate();
    EvalOutcome out;
    const auto chosen = select_views(cameras.size(), manifest.eval.views, manifest.seed);
    CameraSet subset;
    for (std::size_t v : chosen) subset.push_back(cameras[v]);
    const auto projected = project_handles(drag.handles, subset, &out.warnings);
    if (projected.empty()) throw Error(ErrorCode::Config, "no view sees every handle in front of the camera");

    std::vector<ImageBuffer> originals, edited;
    originals.reserve(projected.size());
    edited.reserve(projected.size());
    std::vector<DaiView> views;
    for (const auto& vh : projected) {
        const std::size_t cam = chosen[vh.view];
        out.views.push_back(cam);
        originals.push_back(read_png(original_dir / view_filename(cam)));
        edited.push_back(read_png(edited_dir / view_filename(cam)));
        if (!originals.back().same_shape(edited.back())) {
            throw Error(ErrorCode::ShapeMismatch, "renders for view " + std::to_string(cam) + " differ in size");
        }
    }
    for (std::size_t i = 0; i < projected.size(); ++i) {
        views.push_back(DaiView{&originals[i], &edited[i], projected[i].pairs});
    }
    out.result = dai(views, manifest.eval.gammas);
    return out;
}

std::string eval_to_json(const EvalOutcome& outcome) {
    json per_gamma = json::object();
    for (const auto& [g, v] : outcome.result.per_gamma) per_gamma[std::to_string(g)] = v;
    json per_view = json::array();
    for (std::size_t i = 0; i < outcome.views.size(); ++i) {
        per_view.push_back({{"view", outcome.views[i]}, {"dai", outcome.result.per_view[i]}});
    }
    json root = {{"dai", outcome.result.dai},
                 {"per_gamma", per_gamma},
                 {"per_view", per_view},
                 {"warnings", outcome.warnings}};
    return root.dump(2);
}

} // namespace arapgs
