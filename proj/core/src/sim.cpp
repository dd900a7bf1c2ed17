#include "vismpc/sim.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace vismpc::sim {

namespace {

double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a <= -M_PI) a += 2.0 * M_PI;
    return a;
}

double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// finger bar endpoints in the world plane
void gripper_segment(const GripperState& g, double halfspan, Vec2* s0, Vec2* s1) {
    const double c = std::cos(g.theta), s = std::sin(g.theta);
    *s0 = {g.x - halfspan * c, g.y - halfspan * s};
    *s1 = {g.x + halfspan * c, g.y + halfspan * s};
}

std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

double poly_poly_distance(const Polygon& a, const Polygon& b) {
    if (polygons_intersect(a, b)) return 0.0;
    double best = std::numeric_limits<double>::max();
    const size_t na = a.v.size(), nb = b.v.size();
    for (size_t i = 0; i < na; ++i)
        for (size_t j = 0; j < nb; ++j)
            best = std::min(best, segment_segment_distance(a.v[i], a.v[(i + 1) % na], b.v[j],
                                                           b.v[(j + 1) % nb]));
    return best;
}

constexpr double kContactGap = 5e-4;   // resolved shapes end up this far apart
constexpr double kScanStep = 1e-3;     // coarse scan step for separation search
constexpr double kScanMax = 0.25;

// Smallest translation of `poly` along `dir` for which `blocked` is false.
// Coarse scan then bisection; deterministic.
template <typename Blocked>
double separation_translation(const Blocked& blocked) {
    if (!blocked(0.0)) return 0.0;
    double hi = kScanStep;
    while (hi <= kScanMax && blocked(hi)) hi += kScanStep;
    if (hi > kScanMax) return kScanMax;  // wedged; caller clamps
    double lo = hi - kScanStep;
    for (int i = 0; i < 40; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (blocked(mid)) lo = mid; else hi = mid;
    }
    return hi;
}

} // namespace

KvFile SimConfig::to_kv() const {
    KvFile kv;
    kv.set_double("workspace", workspace);
    kv.set_double("z_max", z_max);
    kv.set_double("z_reflex", z_reflex);
    kv.set_double("z_release", z_release);
    kv.set_double("release_dz", release_dz);
    kv.set_double("grasp_radius", grasp_radius);
    kv.set_double("push_z", push_z);
    kv.set_double("action_xy_max", action_xy_max);
    kv.set_double("action_z_max", action_z_max);
    kv.set_double("action_theta_max", action_theta_max);
    kv.set_double("finger_halfspan", finger_halfspan);
    kv.set_double("finger_radius", finger_radius);
    kv.set_double("marker_z_gain", marker_z_gain);
    kv.set_double("leg_min", leg_min);
    kv.set_double("leg_max", leg_max);
    kv.set_double("width_min", width_min);
    kv.set_double("width_max", width_max);
    kv.set_double("place_margin", place_margin);
    kv.set_double("clearance", clearance);
    kv.set_double("gripper_clearance", gripper_clearance);
    kv.set_int("max_place_retries", max_place_retries);
    kv.set_int("reflex_enabled", reflex_enabled ? 1 : 0);
    return kv;
}

SimConfig SimConfig::from_kv(const KvFile& kv) {
    SimConfig c;
    c.workspace = kv.get_double_or("workspace", c.workspace);
    c.z_max = kv.get_double_or("z_max", c.z_max);
    c.z_reflex = kv.get_double_or("z_reflex", c.z_reflex);
    c.z_release = kv.get_double_or("z_release", c.z_release);
    c.release_dz = kv.get_double_or("release_dz", c.release_dz);
    c.grasp_radius = kv.get_double_or("grasp_radius", c.grasp_radius);
    c.push_z = kv.get_double_or("push_z", c.push_z);
    c.action_xy_max = kv.get_double_or("action_xy_max", c.action_xy_max);
    c.action_z_max = kv.get_double_or("action_z_max", c.action_z_max);
    c.action_theta_max = kv.get_double_or("action_theta_max", c.action_theta_max);
    c.finger_halfspan = kv.get_double_or("finger_halfspan", c.finger_halfspan);
    c.finger_radius = kv.get_double_or("finger_radius", c.finger_radius);
    c.marker_z_gain = kv.get_double_or("marker_z_gain", c.marker_z_gain);
    c.leg_min = kv.get_double_or("leg_min", c.leg_min);
    c.leg_max = kv.get_double_or("leg_max", c.leg_max);
    c.width_min = kv.get_double_or("width_min", c.width_min);
    c.width_max = kv.get_double_or("width_max", c.width_max);
    c.place_margin = kv.get_double_or("place_margin", c.place_margin);
    c.clearance = kv.get_double_or("clearance", c.clearance);
    c.gripper_clearance = kv.get_double_or("gripper_clearance", c.gripper_clearance);
    c.max_place_retries = static_cast<int>(kv.get_int_or("max_place_retries", c.max_place_retries));
    c.reflex_enabled = kv.get_int_or("reflex_enabled", c.reflex_enabled ? 1 : 0) != 0;
    return c;
}

KvFile CameraConfig::to_kv() const {
    KvFile kv;
    kv.set_int("id", id);
    kv.set("name", name);
    kv.set_doubles("row_map", {r0, rx, ry, rz});
    kv.set_doubles("col_map", {c0, cx, cy, cz});
    return kv;
}

CameraConfig top_camera(const SimConfig& cfg) {
    CameraConfig cam;
    cam.id = 0;
    cam.name = "top";
    cam.r0 = 0.0;
    cam.ry = kFrameH / cfg.workspace;  // 120 px/m at defaults
    cam.c0 = 0.0;
    cam.cx = kFrameW / cfg.workspace;  // 160 px/m
    return cam;
}

CameraConfig oblique_camera(const SimConfig& cfg) {
    // 30-degree front view: columns track x, rows mix y and z so that lifting
    // an object visibly moves it up the frame.
    CameraConfig cam;
    cam.id = 1;
    cam.name = "oblique";
    cam.ry = 0.5 * kFrameH / cfg.workspace;
    cam.rz = -std::sqrt(3.0) / 2.0 * (kFrameH / cfg.workspace);
    cam.r0 = kFrameH / 2.0 - (cfg.workspace / 2.0) * cam.ry;
    cam.c0 = 0.0;
    cam.cx = kFrameW / cfg.workspace;
    return cam;
}

std::vector<CameraConfig> default_cameras(const SimConfig& cfg) {
    return {top_camera(cfg), oblique_camera(cfg)};
}

ObjectState random_object(const SimConfig& cfg, Rng& rng) {
    ObjectState obj;
    const double l1 = rng.uniform(cfg.leg_min, cfg.leg_max);
    const double l2 = rng.uniform(cfg.leg_min, cfg.leg_max);
    const double w1 = rng.uniform(cfg.width_min, cfg.width_max);
    const double w2 = rng.uniform(cfg.width_min, cfg.width_max);
    Polygon p;
    p.v = {{0, 0}, {l1, 0}, {l1, w1}, {w2, w1}, {w2, l2}, {0, l2}};
    const Vec2 c = polygon_centroid(p);
    for (Vec2& v : p.v) v = v - c;
    obj.shape = p;
    obj.color = hsv_to_rgb(rng.uniform(0.0, 1.0), rng.uniform(0.6, 0.95), rng.uniform(0.55, 0.95));
    obj.angle = rng.uniform(0.0, 2.0 * M_PI);
    return obj;
}

WorldState TabletopSim::reset(uint64_t seed, int num_objects) const {
    if (num_objects < 1) throw std::invalid_argument("reset: num_objects must be >= 1");
    Rng rng(seed);
    WorldState s;
    s.gripper.x = cfg_.workspace / 2.0;
    s.gripper.y = 0.06;
    s.gripper.z = 0.12;
    s.gripper.theta = 0.0;
    const double lo = cfg_.place_margin, hi = cfg_.workspace - cfg_.place_margin;
    for (int i = 0; i < num_objects; ++i) {
        ObjectState obj = random_object(cfg_, rng);
        bool placed = false;
        for (int attempt = 0; attempt < cfg_.max_place_retries; ++attempt) {
            obj.pos = {rng.uniform(lo, hi), rng.uniform(lo, hi)};
            obj.angle = rng.uniform(0.0, 2.0 * M_PI);
            const Polygon world = transformed(obj.shape, obj.pos, obj.angle);
            bool ok = point_polygon_distance({s.gripper.x, s.gripper.y}, world) >
                      cfg_.gripper_clearance;
            for (const ObjectState& other : s.objects) {
                if (!ok) break;
                const Polygon ow = transformed(other.shape, other.pos, other.angle);
                if (poly_poly_distance(world, ow) < cfg_.clearance) ok = false;
            }
            if (ok) {
                placed = true;
                break;
            }
        }
        if (!placed) throw std::runtime_error("reset: cannot place objects without overlap");
        s.objects.push_back(obj);
    }
    return s;
}

Action TabletopSim::clamp_action(const Action& a) const {
    Action c;
    c.dx = clampd(a.dx, -cfg_.action_xy_max, cfg_.action_xy_max);
    c.dy = clampd(a.dy, -cfg_.action_xy_max, cfg_.action_xy_max);
    c.dz = clampd(a.dz, -cfg_.action_z_max, cfg_.action_z_max);
    c.dtheta = clampd(a.dtheta, -cfg_.action_theta_max, cfg_.action_theta_max);
    return c;
}

namespace {

// Push object `idx` along `dir` until it clears `blocked`; center clamped to
// the workspace. Returns true if the object moved.
bool push_object(ObjectState& obj, const Vec2& dir, double workspace,
                 const std::function<bool(const Polygon&)>& blocked) {
    const Polygon world = transformed(obj.shape, obj.pos, obj.angle);
    auto blocked_at = [&](double t) {
        Polygon moved = world;
        for (Vec2& v : moved.v) v = v + dir * t;
        return blocked(moved);
    };
    const double t = separation_translation(blocked_at);
    if (t <= 0.0) return false;
    Vec2 np = obj.pos + dir * t;
    np.x = clampd(np.x, 0.0, workspace);
    np.y = clampd(np.y, 0.0, workspace);
    const bool moved = (np - obj.pos).norm() > 1e-12;
    obj.pos = np;
    return moved;
}

} // namespace

WorldState TabletopSim::step(const WorldState& state, const Action& action) const {
    const Action a = clamp_action(action);
    WorldState out = state;
    GripperState& g = out.gripper;
    const double old_x = g.x, old_y = g.y;
    double dx = clampd(old_x + a.dx, 0.0, cfg_.workspace) - old_x;
    double dy = clampd(old_y + a.dy, 0.0, cfg_.workspace) - old_y;
    if (g.held >= 0) {
        // the wall blocks the held object, which blocks the gripper; one
        // shared translation keeps the hold offset constant
        const Vec2 hp = out.objects[static_cast<size_t>(g.held)].pos;
        dx = clampd(dx, -hp.x, cfg_.workspace - hp.x);
        dy = clampd(dy, -hp.y, cfg_.workspace - hp.y);
    }
    g.x = old_x + dx;
    g.y = old_y + dy;
    g.z = clampd(g.z + a.dz, 0.0, cfg_.z_max);
    g.theta = wrap_angle(g.theta + a.dtheta);
    const Vec2 delta{dx, dy};

    // held object rides with the gripper; orientation tracks the azimuth
    if (g.held >= 0) {
        ObjectState& held = out.objects[static_cast<size_t>(g.held)];
        held.pos = held.pos + delta;
        held.angle = wrap_angle(held.angle + a.dtheta);
        if (a.dz > cfg_.release_dz && g.z > cfg_.z_release) {
            g.held = -1;
            g.closed = false;
        }
    }

    // quasi-static contact resolution
    const double push_norm = delta.norm();
    const Vec2 push_dir = push_norm > 1e-12 ? delta * (1.0 / push_norm) : Vec2{0.0, 0.0};
    const bool gripper_low = g.z < cfg_.push_z;
    Vec2 s0, s1;
    gripper_segment(g, cfg_.finger_halfspan, &s0, &s1);

    const int n = static_cast<int>(out.objects.size());
    for (int iter = 0; iter < 16; ++iter) {
        bool moved = false;
        // gripper footprint vs free objects
        if (gripper_low) {
            for (int i = 0; i < n; ++i) {
                if (i == g.held) continue;
                ObjectState& obj = out.objects[static_cast<size_t>(i)];
                const Polygon world = transformed(obj.shape, obj.pos, obj.angle);
                if (segment_polygon_distance(s0, s1, world) >= cfg_.finger_radius + kContactGap)
                    continue;
                Vec2 dir = push_dir;
                if (dir.norm() < 0.5) {
                    const Vec2 away = obj.pos - Vec2{g.x, g.y};
                    dir = away.norm() > 1e-9 ? away * (1.0 / away.norm()) : Vec2{1.0, 0.0};
                }
                auto blocked = [&](const Polygon& p) {
                    return segment_polygon_distance(s0, s1, p) < cfg_.finger_radius + kContactGap;
                };
                moved |= push_object(obj, dir, cfg_.workspace, blocked);
            }
        }
        // a free object shoved into the held one backs off instead
        if (g.held >= 0) {
            const int h = g.held;
            const Polygon ph = transformed(out.objects[static_cast<size_t>(h)].shape,
                                           out.objects[static_cast<size_t>(h)].pos,
                                           out.objects[static_cast<size_t>(h)].angle);
            for (int i = 0; i < n; ++i) {
                if (i == h) continue;
                ObjectState& obj = out.objects[static_cast<size_t>(i)];
                if (poly_poly_distance(ph, transformed(obj.shape, obj.pos, obj.angle)) >= kContactGap)
                    continue;
                const Vec2 away = obj.pos - out.objects[static_cast<size_t>(h)].pos;
                const Vec2 dir = away.norm() > 1e-9 ? away * (1.0 / away.norm()) : Vec2{1.0, 0.0};
                auto blocked = [&](const Polygon& p) {
                    return poly_poly_distance(ph, p) < kContactGap;
                };
                moved |= push_object(obj, dir, cfg_.workspace, blocked);
            }
        }
        // held object and free objects push other free objects
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (i == j || j == g.held) continue;
                const Polygon pi = transformed(out.objects[static_cast<size_t>(i)].shape,
                                               out.objects[static_cast<size_t>(i)].pos,
                                               out.objects[static_cast<size_t>(i)].angle);
                ObjectState& obj = out.objects[static_cast<size_t>(j)];
                const Polygon pj = transformed(obj.shape, obj.pos, obj.angle);
                if (poly_poly_distance(pi, pj) >= kContactGap) continue;
                Vec2 dir = push_dir;
                if (dir.norm() < 0.5) {
                    const Vec2 away = obj.pos - out.objects[static_cast<size_t>(i)].pos;
                    dir = away.norm() > 1e-9 ? away * (1.0 / away.norm()) : Vec2{1.0, 0.0};
                }
                auto blocked = [&](const Polygon& p) {
                    return poly_poly_distance(pi, p) < kContactGap;
                };
                if (!push_object(obj, dir, cfg_.workspace, blocked)) {
                    // wedged against a wall: separate along the centroid axis
                    const Vec2 away = obj.pos - out.objects[static_cast<size_t>(i)].pos;
                    const Vec2 alt = away.norm() > 1e-9 ? away * (1.0 / away.norm()) : Vec2{0.0, 1.0};
                    moved |= push_object(obj, alt, cfg_.workspace, blocked);
                } else {
                    moved = true;
                }
            }
        }
        if (!moved) break;
    }

    return grasp_reflex(out);
}

WorldState TabletopSim::grasp_reflex(const WorldState& state) const {
    WorldState out = state;
    if (!cfg_.reflex_enabled) return out;
    GripperState& g = out.gripper;
    if (g.z >= cfg_.z_reflex) return out;
    g.closed = true;
    if (g.held < 0) {
        int best = -1;
        double best_d = cfg_.grasp_radius;
        for (size_t i = 0; i < out.objects.size(); ++i) {
            const ObjectState& obj = out.objects[i];
            const Polygon world = transformed(obj.shape, obj.pos, obj.angle);
            const double d = point_polygon_distance({g.x, g.y}, world);
            if (d <= best_d) {
                best_d = d;
                best = static_cast<int>(i);
            }
        }
        if (best >= 0) g.held = best;
    }
    return out;
}

double TabletopSim::object_height(const WorldState& state, int object_id) const {
    if (object_id < 0 || object_id >= static_cast<int>(state.objects.size()))
        throw std::invalid_argument("object_height: unknown object id");
    return state.gripper.held == object_id ? state.gripper.z : 0.0;
}

PixelF TabletopSim::object_pixel_position(const WorldState& state, const CameraConfig& cam,
                                          int object_id) const {
    if (object_id < 0 || object_id >= static_cast<int>(state.objects.size()))
        throw std::invalid_argument("object_pixel_position: unknown object id");
    const ObjectState& obj = state.objects[static_cast<size_t>(object_id)];
    return cam.project(obj.pos.x, obj.pos.y, object_height(state, object_id));
}

Frame TabletopSim::render(const WorldState& state, const CameraConfig& cam) const {
    Frame frame({kFrameH, kFrameW, 3});
    const float bg[3] = {0.82f, 0.80f, 0.78f};
    const float grip_color[3] = {0.12f, 0.13f, 0.32f};

    // project object polygons into pixel space
    std::vector<Polygon> pixel_polys;
    pixel_polys.reserve(state.objects.size());
    for (size_t i = 0; i < state.objects.size(); ++i) {
        const ObjectState& obj = state.objects[i];
        const double z = object_height(state, static_cast<int>(i));
        const Polygon world = transformed(obj.shape, obj.pos, obj.angle);
        Polygon px;
        px.v.reserve(world.v.size());
        for (const Vec2& v : world.v) {
            const PixelF p = cam.project(v.x, v.y, z);
            px.v.push_back({p.col, p.row});
        }
        pixel_polys.push_back(std::move(px));
    }

    // gripper capsule in pixel space; apparent size encodes height
    const GripperState& g = state.gripper;
    const double render_halfspan = cfg_.finger_halfspan + cfg_.marker_z_gain * g.z;
    const double render_radius = cfg_.finger_radius + cfg_.marker_z_gain * g.z;
    Vec2 w0, w1;
    gripper_segment(g, render_halfspan, &w0, &w1);
    const PixelF p0 = cam.project(w0.x, w0.y, g.z);
    const PixelF p1 = cam.project(w1.x, w1.y, g.z);
    const Vec2 g0{p0.col, p0.row}, g1{p1.col, p1.row};
    const double px_scale = 0.5 * (std::abs(cam.cx) + std::abs(cam.ry) +
                                   std::abs(cam.cy) + std::abs(cam.rx));
    const double grip_r_px = render_radius * px_scale;

    // 2x2 supersampling keeps edges sub-pixel smooth, which the photometric
    // losses need
    for (int r = 0; r < kFrameH; ++r) {
        for (int c = 0; c < kFrameW; ++c) {
            float acc[3] = {0, 0, 0};
            for (int sr = 0; sr < 2; ++sr) {
                for (int sc = 0; sc < 2; ++sc) {
                    const Vec2 p{c - 0.25 + 0.5 * sc, r - 0.25 + 0.5 * sr};
                    const float* color = bg;
                    for (size_t i = 0; i < pixel_polys.size(); ++i)
                        if (point_in_polygon(p, pixel_polys[i]))
                            color = state.objects[i].color.data();
                    if (point_segment_distance(p, g0, g1) <= grip_r_px) color = grip_color;
                    acc[0] += color[0];
                    acc[1] += color[1];
                    acc[2] += color[2];
                }
            }
            for (int k = 0; k < 3; ++k) frame.at(r, c, k) = acc[k] / 4.0f;
        }
    }
    return frame;
}

void TabletopSim::state_to_kv(const WorldState& s, KvFile& kv, const std::string& prefix) const {
    kv.set_doubles(prefix + "gripper",
                   {s.gripper.x, s.gripper.y, s.gripper.z, s.gripper.theta});
    kv.set_int(prefix + "grasp_closed", s.gripper.closed ? 1 : 0);
    kv.set_int(prefix + "held", s.gripper.held);
    kv.set_int(prefix + "num_objects", static_cast<long long>(s.objects.size()));
    for (size_t i = 0; i < s.objects.size(); ++i) {
        const ObjectState& o = s.objects[i];
        const std::string op = prefix + "object" + std::to_string(i) + "_";
        std::vector<double> verts;
        for (const Vec2& v : o.shape.v) {
            verts.push_back(v.x);
            verts.push_back(v.y);
        }
        kv.set_doubles(op + "vertices", verts);
        kv.set_doubles(op + "pose", {o.pos.x, o.pos.y, o.angle});
        kv.set_doubles(op + "color", {o.color[0], o.color[1], o.color[2]});
    }
}

WorldState TabletopSim::state_from_kv(const KvFile& kv, const std::string& prefix) const {
    WorldState s;
    const auto gp = kv.get_doubles(prefix + "gripper");
    s.gripper.x = gp.at(0);
    s.gripper.y = gp.at(1);
    s.gripper.z = gp.at(2);
    s.gripper.theta = gp.at(3);
    s.gripper.closed = kv.get_int(prefix + "grasp_closed") != 0;
    s.gripper.held = static_cast<int>(kv.get_int(prefix + "held"));
    const long long n = kv.get_int(prefix + "num_objects");
    for (long long i = 0; i < n; ++i) {
        const std::string op = prefix + "object" + std::to_string(i) + "_";
        ObjectState o;
        const auto verts = kv.get_doubles(op + "vertices");
        for (size_t j = 0; j + 1 < verts.size(); j += 2) o.shape.v.push_back({verts[j], verts[j + 1]});
        const auto pose = kv.get_doubles(op + "pose");
        o.pos = {pose.at(0), pose.at(1)};
        o.angle = pose.at(2);
        const auto col = kv.get_doubles(op + "color");
        o.color = {static_cast<float>(col.at(0)), static_cast<float>(col.at(1)),
                   static_cast<float>(col.at(2))};
        s.objects.push_back(std::move(o));
    }
    return s;
}

} // namespace vismpc::sim
