#include "desknav/config.hpp"

#include "desknav/errors.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <utility>

namespace desknav {

using nlohmann::json;

namespace {

std::string where(const std::string& ptr) { return ptr.empty() ? std::string("/") : ptr; }

void parse(const json& v, const std::string& at, double& out) {
    if (!v.is_number()) throw ConfigError(at, "expected a number");
    out = v.get<double>();
}

void parse(const json& v, const std::string& at, int& out) {
    if (!v.is_number_integer()) throw ConfigError(at, "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        throw ConfigError(at, "integer out of range");
    }
    out = static_cast<int>(x);
}

void parse(const json& v, const std::string& at, std::uint64_t& out) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        throw ConfigError(at, "expected a non-negative integer");
    }
    out = v.get<std::uint64_t>();
}

void parse(const json& v, const std::string& at, bool& out) {
    if (!v.is_boolean()) throw ConfigError(at, "expected true or false");
    out = v.get<bool>();
}

void parse(const json& v, const std::string& at, std::string& out) {
    if (!v.is_string()) throw ConfigError(at, "expected a string");
    out = v.get<std::string>();
}

template <int N>
void parse(const json& v, const std::string& at, Eigen::Matrix<double, N, 1>& out) {
    if (!v.is_array() || v.size() != static_cast<std::size_t>(N)) {
        throw ConfigError(at, "expected an array of " + std::to_string(N) + " numbers");
    }
    for (int i = 0; i < N; ++i) parse(v[static_cast<std::size_t>(i)], at + "/" + std::to_string(i), out[i]);
}

template <typename E>
using EnumTable = std::initializer_list<std::pair<const char*, E>>;

template <typename E>
E parse_enum(const json& v, const std::string& at, EnumTable<E> table) {
    std::string name;
    parse(v, at, name);
    std::string options;
    for (const auto& [key, value] : table) {
        if (name == key) return value;
        options += options.empty() ? key : std::string(", ") + key;
    }
    throw ConfigError(at, "unknown value '" + name + "' (expected one of " + options + ")");
}

template <typename E>
const char* enum_name(E value, EnumTable<E> table) {
    for (const auto& [key, v] : table) {
        if (v == value) return key;
    }
    return "";
}

const EnumTable<LambdaForm> kLambdaForms = {{"l1_weight", LambdaForm::l1_weight},
                                            {"data_weight", LambdaForm::data_weight}};
const EnumTable<PlaneExtraction> kExtractions = {{"tls", PlaneExtraction::tls},
                                                 {"three_point", PlaneExtraction::three_point}};
const EnumTable<VarianceMode> kVarianceModes = {{"known", VarianceMode::known},
                                                {"estimated", VarianceMode::estimated}};
const EnumTable<ControllerMode> kModes = {{"adaptive", ControllerMode::adaptive},
                                          {"fixed", ControllerMode::fixed},
                                          {"apf", ControllerMode::potential_field},
                                          {"fixed-weights", ControllerMode::fixed},
                                          {"potential-field", ControllerMode::potential_field}};

/// A JSON object whose keys are checked off as they are read.
class Section {
public:
    Section(const json& node, std::string ptr) : node_(node), ptr_(std::move(ptr)) {
        if (!node_.is_object()) throw ConfigError(where(ptr_), "expected an object");
    }

    const std::string& ptr() const { return ptr_; }
    std::string child(const std::string& key) const { return ptr_ + "/" + key; }

    bool has(const std::string& key) const { return node_.contains(key); }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = node_.find(key);
        return it == node_.end() ? nullptr : &*it;
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (const json* v = find(key)) parse(*v, child(key), out);
    }

    template <typename E>
    void read_enum(const std::string& key, E& out, EnumTable<E> table) {
        if (const json* v = find(key)) out = parse_enum(*v, child(key), table);
    }

    const json& require(const std::string& key) {
        const json* v = find(key);
        if (v == nullptr) throw ConfigError(child(key), "missing required key");
        return *v;
    }

    void finish() const {
        for (const auto& item : node_.items()) {
            if (!seen_.contains(item.key())) throw ConfigError(child(item.key()), "unknown key");
        }
    }

private:
    const json& node_;
    std::string ptr_;
    std::set<std::string> seen_;
};

template <typename F>
void checked(const std::string& ptr, F&& validate) {
    try {
        validate();
    } catch (const InvalidArgumentError& e) {
        throw ConfigError(where(ptr), e.what());
    }
}

json vec(const Eigen::Ref<const Eigen::VectorXd>& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

// --- sections --------------------------------------------------------------

void read_clustering(Section& s, ClusteringConfig& c) {
    s.read("kappa1", c.kappa1);
    s.read("kappa2", c.kappa2);
    s.read("lambda", c.lambda);
    s.read_enum("lambda_form", c.lambda_form, kLambdaForms);
    s.read("n_cluster", c.n_cluster);
    s.read("rank", c.rank);
    s.read("seed", c.seed);
    s.read("kmeans_restarts", c.kmeans_restarts);
    s.read("kmeans_max_iters", c.kmeans_max_iters);
    s.read("lasso_tol", c.lasso_tol);
    s.read("lasso_max_iters", c.lasso_max_iters);
    s.read_enum("extraction", c.extraction, kExtractions);
    s.read("degree_floor", c.degree_floor);
    s.read("merge_angle_deg", c.merge_angle_deg);
    s.read("merge_offset", c.merge_offset);
    s.read("trim_refit", c.trim_refit);
    s.read("max_plane_rms", c.max_plane_rms);
    s.read("support_band", c.support_band);
    s.read("min_plane_spread", c.min_plane_spread);
    s.read("max_see_through", c.max_see_through);
    s.read("normalize_rows", c.normalize_rows);
    s.finish();
    checked(s.ptr(), [&] { c.validate(); });
}

void read_lidar(Section& s, LidarConfig& c) {
    s.read("channels", c.channels);
    s.read("min_elevation_deg", c.min_elevation_deg);
    s.read("max_elevation_deg", c.max_elevation_deg);
    s.read("azimuth_resolution_deg", c.azimuth_resolution_deg);
    s.read("max_range", c.max_range);
    s.read("range_noise", c.range_noise);
    s.finish();
    checked(s.ptr(), [&] { c.validate(); });
}

void read_noise(Section& s, NoiseConfig& c) {
    s.read("position_std", c.position_std);
    s.read("velocity_std", c.velocity_std);
    s.read("activation_time", c.activation_time);
    s.read_enum("variance_mode", c.variance_mode, kVarianceModes);
    s.finish();
    checked(s.ptr(), [&] { c.validate(); });
}

void read_model(Section& s, ModelParams& c) {
    s.read("g", c.g);
    s.read("tau_phi", c.tau_phi);
    s.read("tau_theta", c.tau_theta);
    s.read("k_phi", c.k_phi);
    s.read("k_theta", c.k_theta);
    s.read("drag", c.drag);
    s.read("ts", c.ts);
    s.finish();
    checked(s.ptr(), [&] { c.validate(); });
}

void read_nmpc(Section& s, NmpcConfig& c) {
    s.read("horizon", c.horizon);
    s.read("ts", c.ts);
    s.read("q_u", c.q_u);
    s.read("q_du", c.q_du);
    s.read("q_attitude", c.q_attitude);
    s.read("u_min", c.u_min);
    s.read("u_max", c.u_max);
    s.read("d_s", c.d_s);
    s.read("dphi_max", c.dphi_max);
    s.read("dtheta_max", c.dtheta_max);
    s.read("n_max", c.n_max);
    s.read("solver_tol", c.solver_tol);
    s.read("penalty_init", c.penalty_init);
    s.read("penalty_factor", c.penalty_factor);
    s.read("penalty_max", c.penalty_max);
    s.read("constraint_tol", c.constraint_tol);
    s.read("max_inner_iters", c.max_inner_iters);
    s.read("lbfgs_memory", c.lbfgs_memory);
    s.finish();
    checked(s.ptr(), [&] { c.validate(); });
}

void read_potential_field(Section& s, PotentialFieldGains& c) {
    s.read("attraction", c.attraction);
    s.read("damping", c.damping);
    s.read("repulsion", c.repulsion);
    s.read("influence", c.influence);
    s.finish();
    if (!(c.attraction >= 0.0) || !(c.damping >= 0.0) || !(c.repulsion >= 0.0) || !(c.influence > 0.0)) {
        throw ConfigError(s.ptr(), "gains must be non-negative and the influence radius positive");
    }
}

void read_sim(Section& s, SimConfig& c) {
    s.read("time_limit", c.time_limit);
    s.read("min_duration", c.min_duration);
    s.read("segmentation_rate", c.segmentation_rate);
    s.read("goal_tolerance", c.goal_tolerance);
    s.read("collision_distance", c.collision_distance);
    s.finish();
}

Panel read_panel(const json& v, const std::string& at) {
    Section s(v, at);
    Panel p;
    parse(s.require("min"), s.child("min"), p.min);
    parse(s.require("max"), s.child("max"), p.max);
    s.finish();
    if (p.normal_axis() < 0) {
        throw ConfigError(at, "panel must be an axis-aligned rectangle (min and max equal in exactly one axis)");
    }
    return p;
}

Waypoint read_waypoint(const json& v, const std::string& at) {
    Section s(v, at);
    Waypoint w;
    parse(s.require("position"), s.child("position"), w.position);
    s.read("speed", w.speed);
    s.finish();
    if (!(w.speed > 0.0)) throw ConfigError(s.child("speed"), "speed must be positive");
    return w;
}

Environment read_environment(Section& s) {
    Environment env;
    env.name = "custom";
    std::string preset;
    s.read("preset", preset);
    if (preset == "corridor") {
        env = corridor_environment();
    } else if (preset == "confined_room") {
        env = confined_room_environment();
    } else if (preset == "empty") {
        env.name = "empty";
    } else if (!preset.empty()) {
        throw ConfigError(s.child("preset"), "unknown preset '" + preset +
                                                 "' (expected one of corridor, confined_room, empty)");
    }
    s.read("name", env.name);
    if (const json* panels = s.find("panels")) {
        if (!panels->is_array()) throw ConfigError(s.child("panels"), "expected an array");
        env.panels.clear();
        for (std::size_t i = 0; i < panels->size(); ++i) {
            env.panels.push_back(read_panel((*panels)[i], s.child("panels") + "/" + std::to_string(i)));
        }
    }
    s.read("spawn", env.spawn);
    if (const json* wps = s.find("waypoints")) {
        if (!wps->is_array()) throw ConfigError(s.child("waypoints"), "expected an array");
        env.waypoints.clear();
        for (std::size_t i = 0; i < wps->size(); ++i) {
            env.waypoints.push_back(read_waypoint((*wps)[i], s.child("waypoints") + "/" + std::to_string(i)));
        }
    }
    if (const json* speed = s.find("waypoint_speed")) {
        double v = 0.0;
        parse(*speed, s.child("waypoint_speed"), v);
        if (!(v > 0.0)) throw ConfigError(s.child("waypoint_speed"), "speed must be positive");
        for (auto& w : env.waypoints) w.speed = v;
    }
    s.finish();
    return env;
}

template <typename F>
void optional_section(Section& root, const std::string& key, F&& read) {
    if (const json* v = root.find(key)) {
        Section s(*v, root.child(key));
        read(s);
    }
}

}  // namespace

ControllerMode parse_controller_mode(const std::string& name) {
    return parse_enum(json(name), "/mode", kModes);
}

std::string to_string(ControllerMode mode) { return enum_name(mode, kModes); }

ScenarioConfig scenario_from_json(const json& doc) {
    Section root(doc, "");
    ScenarioConfig c;
    std::string description;
    root.read("description", description);
    root.read("seed", c.seed);
    root.read_enum("mode", c.mode, kModes);
    optional_section(root, "lidar", [&](Section& s) { read_lidar(s, c.lidar); });
    optional_section(root, "noise", [&](Section& s) { read_noise(s, c.noise); });
    optional_section(root, "model", [&](Section& s) { read_model(s, c.model); });
    optional_section(root, "clustering", [&](Section& s) { read_clustering(s, c.clustering); });
    optional_section(root, "nmpc", [&](Section& s) { read_nmpc(s, c.nmpc); });
    optional_section(root, "potential_field", [&](Section& s) { read_potential_field(s, c.potential_field); });
    optional_section(root, "sim", [&](Section& s) { read_sim(s, c.sim); });
    {
        Section env(root.require("environment"), "/environment");
        c.environment = read_environment(env);
    }
    root.finish();

    checked("/environment", [&] { c.environment.validate(c.nmpc.d_s); });
    checked("/", [&] { c.validate(); });
    return c;
}

json scenario_to_json(const ScenarioConfig& c) {
    json doc;
    doc["seed"] = c.seed;
    doc["mode"] = to_string(c.mode);

    json env;
    env["name"] = c.environment.name;
    env["spawn"] = vec(c.environment.spawn);
    env["panels"] = json::array();
    for (const auto& p : c.environment.panels) env["panels"].push_back({{"min", vec(p.min)}, {"max", vec(p.max)}});
    env["waypoints"] = json::array();
    for (const auto& w : c.environment.waypoints) {
        env["waypoints"].push_back({{"position", vec(w.position)}, {"speed", w.speed}});
    }
    doc["environment"] = env;

    doc["lidar"] = {{"channels", c.lidar.channels},
                    {"min_elevation_deg", c.lidar.min_elevation_deg},
                    {"max_elevation_deg", c.lidar.max_elevation_deg},
                    {"azimuth_resolution_deg", c.lidar.azimuth_resolution_deg},
                    {"max_range", c.lidar.max_range},
                    {"range_noise", c.lidar.range_noise}};
    doc["noise"] = {{"position_std", c.noise.position_std},
                    {"velocity_std", c.noise.velocity_std},
                    {"activation_time", c.noise.activation_time},
                    {"variance_mode", enum_name(c.noise.variance_mode, kVarianceModes)}};
    doc["model"] = {{"g", c.model.g},           {"tau_phi", c.model.tau_phi}, {"tau_theta", c.model.tau_theta},
                    {"k_phi", c.model.k_phi},   {"k_theta", c.model.k_theta}, {"drag", vec(c.model.drag)},
                    {"ts", c.model.ts}};
    doc["clustering"] = clustering_to_json(c.clustering);
    const NmpcConfig& n = c.nmpc;
    doc["nmpc"] = {{"horizon", n.horizon},
                   {"ts", n.ts},
                   {"q_u", vec(n.q_u)},
                   {"q_du", vec(n.q_du)},
                   {"q_attitude", vec(n.q_attitude)},
                   {"u_min", vec(n.u_min)},
                   {"u_max", vec(n.u_max)},
                   {"d_s", n.d_s},
                   {"dphi_max", n.dphi_max},
                   {"dtheta_max", n.dtheta_max},
                   {"n_max", n.n_max},
                   {"solver_tol", n.solver_tol},
                   {"penalty_init", n.penalty_init},
                   {"penalty_factor", n.penalty_factor},
                   {"penalty_max", n.penalty_max},
                   {"constraint_tol", n.constraint_tol},
                   {"max_inner_iters", n.max_inner_iters},
                   {"lbfgs_memory", n.lbfgs_memory}};
    doc["potential_field"] = {{"attraction", c.potential_field.attraction},
                              {"damping", c.potential_field.damping},
                              {"repulsion", c.potential_field.repulsion},
                              {"influence", c.potential_field.influence}};
    doc["sim"] = {{"time_limit", c.sim.time_limit},
                  {"min_duration", c.sim.min_duration},
                  {"segmentation_rate", c.sim.segmentation_rate},
                  {"goal_tolerance", c.sim.goal_tolerance},
                  {"collision_distance", c.sim.collision_distance}};
    return doc;
}

json clustering_to_json(const ClusteringConfig& c) {
    return {{"kappa1", c.kappa1},
            {"kappa2", c.kappa2},
            {"lambda", c.lambda},
            {"lambda_form", enum_name(c.lambda_form, kLambdaForms)},
            {"n_cluster", c.n_cluster},
            {"rank", c.rank},
            {"seed", c.seed},
            {"kmeans_restarts", c.kmeans_restarts},
            {"kmeans_max_iters", c.kmeans_max_iters},
            {"lasso_tol", c.lasso_tol},
            {"lasso_max_iters", c.lasso_max_iters},
            {"extraction", enum_name(c.extraction, kExtractions)},
            {"degree_floor", c.degree_floor},
            {"merge_angle_deg", c.merge_angle_deg},
            {"merge_offset", c.merge_offset},
            {"trim_refit", c.trim_refit},
            {"max_plane_rms", c.max_plane_rms},
            {"support_band", c.support_band},
            {"min_plane_spread", c.min_plane_spread},
            {"max_see_through", c.max_see_through},
            {"normalize_rows", c.normalize_rows}};
}

ClusteringConfig clustering_from_json(const json& doc) {
    if (doc.is_object() && (doc.contains("environment") || doc.contains("clustering"))) {
        if (!doc.contains("environment")) {
            // Only a clustering section; nothing else may sit beside it.
            Section root(doc, "");
            ClusteringConfig c;
            optional_section(root, "clustering", [&](Section& s) { read_clustering(s, c); });
            root.finish();
            return c;
        }
        return scenario_from_json(doc).clustering;
    }
    Section s(doc, "");
    ClusteringConfig c;
    read_clustering(s, c);
    return c;
}

json parse_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("", "'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

ScenarioConfig load_scenario(const std::filesystem::path& path) { return scenario_from_json(parse_json_file(path)); }

ClusteringConfig load_clustering_config(const std::filesystem::path& path) {
    return clustering_from_json(parse_json_file(path));
}

}  // namespace desknav
