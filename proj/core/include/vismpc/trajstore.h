#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "vismpc/image_io.h"
#include "vismpc/kv.h"
#include "vismpc/rng.h"
#include "vismpc/sim.h"

// Autonomous data collection and the on-disk trajectory dataset. One binary
// file per episode: a trainer section (frames, actions, gripper state) and a
// trailing ground-truth section that only the evaluation reader touches —
// trainers cannot consume oracle annotations by construction.
namespace vismpc::data {

struct TrajectoryRecord {
    int views = 0;
    int num_objects = 0;
    // indexed [frame][view]; frames are quantized to 8-bit levels at
    // collection time so disk and memory agree bit-exactly
    std::vector<std::vector<Frame>> frames;
    std::vector<sim::Action> actions;                 // frame_count() - 1
    std::vector<std::array<double, 4>> gripper_pose;  // per frame: x, y, z, theta
    std::vector<uint8_t> grasp_closed;                // per frame

    // evaluation-only ground truth (absent on the trainer read path)
    bool has_ground_truth = false;
    std::vector<std::vector<PixelF>> gt_pixels;  // [frame][view * num_objects]
    std::vector<std::vector<std::array<double, 4>>> gt_object_pose;  // [frame][obj]: x, y, angle, z
    std::vector<int> gt_held;                    // per frame: object id or -1

    int frame_count() const { return static_cast<int>(frames.size()); }
    const PixelF& gt_pixel(int frame, int view, int object) const {
        return gt_pixels[static_cast<size_t>(frame)][static_cast<size_t>(view) * num_objects + object];
    }
};

void write_record(const std::string& path, const TrajectoryRecord& record);
// trainer reader: stops before the ground-truth byte range
TrajectoryRecord read_record_for_training(const std::string& path);
// evaluation reader: full record
TrajectoryRecord read_record(const std::string& path);

struct DatasetIndex {
    std::string dir;
    std::vector<std::string> train;    // file names relative to dir
    std::vector<std::string> heldout;
    uint64_t config_hash = 0;

    void save() const;
    static DatasetIndex load(const std::string& dir);
    std::string train_path(size_t i) const { return dir + "/" + train[i]; }
    std::string heldout_path(size_t i) const { return dir + "/" + heldout[i]; }
};

struct CollectConfig {
    int n_trajectories = 100;
    int episode_steps = 15;  // actions per episode; frames = steps + 1
    int num_objects = 1;
    bool reflex = true;
    uint64_t seed = 0;
    double smoothing = 0.7;  // first-order action smoothing factor
    int heldout_every = 10;  // every k-th trajectory goes to the held-out split
    int workers = 0;         // 0 = hardware concurrency

    KvFile to_kv() const;
};

// Temporally smoothed uniform random policy used for collection.
class RandomPolicy {
public:
    explicit RandomPolicy(uint64_t seed) : rng_(seed) {}
    sim::Action next(const sim::SimConfig& cfg, double smoothing);

private:
    Rng rng_;
    sim::Action prev_;
};

// Roll one seeded episode and return the full record (with ground truth).
TrajectoryRecord roll_episode(const sim::TabletopSim& sim,
                              const std::vector<sim::CameraConfig>& cameras,
                              const CollectConfig& cfg, uint64_t episode_seed);

DatasetIndex collect(const sim::TabletopSim& sim, const std::vector<sim::CameraConfig>& cameras,
                     const CollectConfig& cfg, const std::string& out_dir);

// Uniformly random frame pair (I_t, I_{t+h}) of one view.
struct FramePair {
    int t = 0;
    Frame a, b;
};
FramePair sample_pair(const TrajectoryRecord& record, int h, int view, Rng& rng);

// Contiguous window: one context frame, `horizon` target frames and actions.
struct Subsequence {
    int start = 0;
    std::vector<Frame> frames;  // horizon + 1 entries
    std::vector<sim::Action> actions;
};
Subsequence sample_subsequence(const TrajectoryRecord& record, int horizon, int view, Rng& rng);

// Relocation task: seeded scene, start/goal states, rendered goal frames and
// annotated pixels per view for the designated object.
struct BenchmarkTask {
    std::string name;
    uint64_t scene_seed = 0;
    std::string category;  // short | long | grasp_lift
    sim::WorldState start_state;
    sim::WorldState goal_state;
    std::vector<Frame> goal_frames;  // per view
    std::vector<Pixel> d0;           // designated pixel per view (start frame)
    std::vector<Pixel> dg;           // goal pixel per view
    int object_id = 0;
    uint64_t config_hash = 0;
};

void save_task(const std::string& dir, const BenchmarkTask& task, const sim::TabletopSim& sim);
BenchmarkTask load_task(const std::string& kv_path, const sim::TabletopSim& sim);

Frame quantize01(const Frame& f);

} // namespace vismpc::data
