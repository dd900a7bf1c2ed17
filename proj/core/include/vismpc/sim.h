#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "vismpc/geometry.h"
#include "vismpc/image_io.h"
#include "vismpc/kv.h"
#include "vismpc/rng.h"
#include "vismpc/tensor.h"

// Deterministic 2D tabletop manipulation: a 4-DoF gripper pushes and grasps
// L-shaped objects on a square workspace, rendered to 48x64 frames from a
// top-down and an oblique camera. Physics is quasi-static: penetrations are
// resolved by the minimal translation along the push direction, so ground
// truth is exact and every (seed, action sequence) replays bit-identically.
namespace vismpc::sim {

struct SimConfig {
    double workspace = 0.40;  // square side, m
    double z_max = 0.15;
    double z_reflex = 0.03;    // reflex close height
    double z_release = 0.10;   // release allowed above this height
    double release_dz = 0.03;  // commanded climb that triggers release
    double grasp_radius = 0.065;
    double push_z = 0.04;  // footprint contacts objects below this height
    double action_xy_max = 0.05;
    double action_z_max = 0.05;
    double action_theta_max = 0.26;
    double finger_halfspan = 0.016;  // half length of the finger bar
    double finger_radius = 0.010;
    double marker_z_gain = 0.14;  // apparent gripper size growth with z
    double leg_min = 0.045, leg_max = 0.075;
    double width_min = 0.016, width_max = 0.026;
    double place_margin = 0.08;     // object centers stay this far from walls
    double clearance = 0.012;       // min distance between placed objects
    double gripper_clearance = 0.06;
    int max_place_retries = 200;
    bool reflex_enabled = true;

    KvFile to_kv() const;
    static SimConfig from_kv(const KvFile& kv);
};

struct ObjectState {
    Polygon shape;  // local frame, centroid at the origin
    Vec2 pos;       // world position of the centroid
    double angle = 0.0;
    std::array<float, 3> color{};
    bool operator==(const ObjectState&) const = default;
};

struct GripperState {
    double x = 0.0, y = 0.0, z = 0.0, theta = 0.0;
    bool closed = false;
    int held = -1;  // object id or -1
    bool operator==(const GripperState&) const = default;
};

struct WorldState {
    GripperState gripper;
    std::vector<ObjectState> objects;
    bool operator==(const WorldState&) const = default;
};

struct Action {
    double dx = 0.0, dy = 0.0, dz = 0.0, dtheta = 0.0;
};

// Affine world -> pixel map for one 48x64 view:
//   row = r0 + rx*x + ry*y + rz*z,  col = c0 + cx*x + cy*y + cz*z
struct CameraConfig {
    int id = 0;
    std::string name;
    double r0 = 0, rx = 0, ry = 0, rz = 0;
    double c0 = 0, cx = 0, cy = 0, cz = 0;

    PixelF project(double x, double y, double z) const {
        return {r0 + rx * x + ry * y + rz * z, c0 + cx * x + cy * y + cz * z};
    }
    KvFile to_kv() const;
};

// Canonical views: top-down (id 0) and a 30-degree oblique front view (id 1)
// that disambiguates height.
CameraConfig top_camera(const SimConfig& cfg);
CameraConfig oblique_camera(const SimConfig& cfg);
std::vector<CameraConfig> default_cameras(const SimConfig& cfg);

class TabletopSim {
public:
    explicit TabletopSim(SimConfig cfg = {}) : cfg_(cfg) {}

    const SimConfig& config() const { return cfg_; }

    // Seeded scene: raised gripper, non-overlapping random L-shapes.
    WorldState reset(uint64_t seed, int num_objects) const;

    // One control step: clamp action, integrate the gripper, resolve pushing,
    // carry a held object, then apply the grasp reflex.
    WorldState step(const WorldState& state, const Action& action) const;

    // Reflex rule alone (applied by step; exposed for direct use).
    WorldState grasp_reflex(const WorldState& state) const;

    Frame render(const WorldState& state, const CameraConfig& cam) const;

    // Projected object-centroid pixel; the oracle tracker and the
    // evaluation measurement. Held objects ride at the gripper height.
    PixelF object_pixel_position(const WorldState& state, const CameraConfig& cam,
                                 int object_id) const;

    double object_height(const WorldState& state, int object_id) const;

    Action clamp_action(const Action& a) const;

    // Serialization of full world state into key-value entries (prefix'd).
    void state_to_kv(const WorldState& s, KvFile& kv, const std::string& prefix) const;
    WorldState state_from_kv(const KvFile& kv, const std::string& prefix) const;

private:
    SimConfig cfg_;
};

// Random L-shape in its local frame (centroid at origin) plus a color.
ObjectState random_object(const SimConfig& cfg, Rng& rng);

} // namespace vismpc::sim
