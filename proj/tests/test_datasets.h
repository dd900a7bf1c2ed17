#pragma once

// Shared test fixtures: synthetic-shift records (frame t shows the object
// displaced exactly t pixels along a fixed direction in the top view) and
// small collected datasets.

#include <filesystem>
#include <string>

#include "vismpc/sim.h"
#include "vismpc/trajstore.h"

namespace testkit {

using namespace vismpc;

// Record with frames 0..max_shift; the object moves one top-view pixel per
// frame along a seeded direction. Actions are zeros (unused by registration
// training). The gripper is parked high in a corner.
inline data::TrajectoryRecord shift_record(const sim::TabletopSim& tsim,
                                           const std::vector<sim::CameraConfig>& cameras,
                                           uint64_t seed, int max_shift = 8) {
    Rng rng(seed ^ 0xD1B54A32D192ED03ull);
    sim::WorldState state = tsim.reset(seed, 1);
    state.gripper.x = 0.02;
    state.gripper.y = 0.02;
    state.gripper.z = 0.14;
    // center the start so the full shift stays inside the workspace
    state.objects[0].pos = {0.20 + rng.uniform(-0.05, 0.05), 0.20 + rng.uniform(-0.05, 0.05)};

    const sim::CameraConfig& top = cameras[0];
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    // one pixel per frame along phi in the top view
    const Vec2 world_step{std::cos(phi) / top.cx, std::sin(phi) / top.ry};

    data::TrajectoryRecord r;
    r.views = static_cast<int>(cameras.size());
    r.num_objects = 1;
    r.has_ground_truth = true;
    for (int t = 0; t <= max_shift; ++t) {
        std::vector<Frame> views;
        std::vector<PixelF> pixels;
        for (const auto& cam : cameras) {
            views.push_back(data::quantize01(tsim.render(state, cam)));
            pixels.push_back(tsim.object_pixel_position(state, cam, 0));
        }
        r.frames.push_back(std::move(views));
        r.gt_pixels.push_back(std::move(pixels));
        r.gt_object_pose.push_back(
            {{state.objects[0].pos.x, state.objects[0].pos.y, state.objects[0].angle, 0.0}});
        r.gt_held.push_back(-1);
        r.gripper_pose.push_back(
            {state.gripper.x, state.gripper.y, state.gripper.z, state.gripper.theta});
        r.grasp_closed.push_back(0);
        if (t < max_shift) r.actions.push_back({});
        state.objects[0].pos = state.objects[0].pos + world_step;
    }
    return r;
}

inline data::DatasetIndex make_shift_dataset(const sim::TabletopSim& tsim,
                                             const std::vector<sim::CameraConfig>& cameras,
                                             const std::string& dir, int n_records,
                                             uint64_t seed, int max_shift = 8) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    data::DatasetIndex idx;
    idx.dir = dir;
    for (int i = 0; i < n_records; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "traj_%06d.bin", i);
        data::write_record(dir + "/" + std::string(name),
                           shift_record(tsim, cameras, seed + static_cast<uint64_t>(i), max_shift));
        if ((i + 1) % 10 == 0)
            idx.heldout.push_back(name);
        else
            idx.train.push_back(name);
    }
    idx.save();
    return idx;
}

} // namespace testkit
