#include "vismpc/trajstore.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "vismpc/parallel.h"

namespace fs = std::filesystem;

namespace vismpc::data {

namespace {

constexpr char kTrajMagic[8] = {'V', 'M', 'P', 'C', 'T', 'R', 'J', '1'};

void write_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
uint32_t read_u32(std::ifstream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

std::vector<uint8_t> frame_to_u8(const Frame& frame) {
    std::vector<uint8_t> out(frame.numel());
    for (size_t i = 0; i < frame.numel(); ++i) {
        const float c = std::min(std::max(frame[i], 0.0f), 1.0f);
        out[i] = static_cast<uint8_t>(c * 255.0f + 0.5f);
    }
    return out;
}

Frame frame_from_u8(const std::vector<uint8_t>& bytes, int h, int w) {
    Frame f({h, w, 3});
    for (size_t i = 0; i < f.numel(); ++i) f[i] = static_cast<float>(bytes[i]) / 255.0f;
    return f;
}

} // namespace

Frame quantize01(const Frame& f) {
    Frame out = f;
    for (size_t i = 0; i < out.numel(); ++i) {
        const float c = std::min(std::max(out[i], 0.0f), 1.0f);
        out[i] = std::round(c * 255.0f) / 255.0f;
    }
    return out;
}

void write_record(const std::string& path, const TrajectoryRecord& record) {
    if (record.frames.empty() || record.actions.size() + 1 != record.frames.size())
        throw std::invalid_argument("trajectory: frames/actions length mismatch");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("trajectory: cannot write " + path);
    const int n_frames = record.frame_count();
    const int h = record.frames[0][0].dim(0), w = record.frames[0][0].dim(1);
    f.write(kTrajMagic, sizeof(kTrajMagic));
    write_u32(f, 1);
    write_u32(f, static_cast<uint32_t>(n_frames));
    write_u32(f, static_cast<uint32_t>(record.views));
    write_u32(f, static_cast<uint32_t>(h));
    write_u32(f, static_cast<uint32_t>(w));
    write_u32(f, static_cast<uint32_t>(record.num_objects));

    // trainer section
    for (const auto& per_view : record.frames)
        for (const Frame& frame : per_view) {
            const auto bytes = frame_to_u8(frame);
            f.write(reinterpret_cast<const char*>(bytes.data()),
                    static_cast<std::streamsize>(bytes.size()));
        }
    for (const sim::Action& a : record.actions) {
        const float vals[4] = {static_cast<float>(a.dx), static_cast<float>(a.dy),
                               static_cast<float>(a.dz), static_cast<float>(a.dtheta)};
        f.write(reinterpret_cast<const char*>(vals), sizeof(vals));
    }
    for (const auto& pose : record.gripper_pose) {
        const float vals[4] = {static_cast<float>(pose[0]), static_cast<float>(pose[1]),
                               static_cast<float>(pose[2]), static_cast<float>(pose[3])};
        f.write(reinterpret_cast<const char*>(vals), sizeof(vals));
    }
    f.write(reinterpret_cast<const char*>(record.grasp_closed.data()),
            static_cast<std::streamsize>(record.grasp_closed.size()));

    // ground-truth section (never read by the trainer path)
    for (const auto& per_frame : record.gt_pixels)
        for (const PixelF& p : per_frame) {
            const float vals[2] = {static_cast<float>(p.row), static_cast<float>(p.col)};
            f.write(reinterpret_cast<const char*>(vals), sizeof(vals));
        }
    for (const auto& per_frame : record.gt_object_pose)
        for (const auto& pose : per_frame) {
            const float vals[4] = {static_cast<float>(pose[0]), static_cast<float>(pose[1]),
                                   static_cast<float>(pose[2]), static_cast<float>(pose[3])};
            f.write(reinterpret_cast<const char*>(vals), sizeof(vals));
        }
    for (int held : record.gt_held) {
        const int32_t v = held;
        f.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    if (!f) throw std::runtime_error("trajectory: write failed " + path);
}

namespace {

TrajectoryRecord read_record_impl(const std::string& path, bool with_gt) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("trajectory: cannot open " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kTrajMagic, sizeof(kTrajMagic)) != 0)
        throw std::runtime_error("trajectory: bad magic in " + path);
    if (read_u32(f) != 1) throw std::runtime_error("trajectory: unsupported version");
    const int n_frames = static_cast<int>(read_u32(f));
    TrajectoryRecord r;
    r.views = static_cast<int>(read_u32(f));
    const int h = static_cast<int>(read_u32(f));
    const int w = static_cast<int>(read_u32(f));
    r.num_objects = static_cast<int>(read_u32(f));

    std::vector<uint8_t> bytes(static_cast<size_t>(h) * w * 3);
    r.frames.resize(static_cast<size_t>(n_frames));
    for (int t = 0; t < n_frames; ++t) {
        r.frames[static_cast<size_t>(t)].reserve(static_cast<size_t>(r.views));
        for (int v = 0; v < r.views; ++v) {
            f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
            r.frames[static_cast<size_t>(t)].push_back(frame_from_u8(bytes, h, w));
        }
    }
    r.actions.resize(static_cast<size_t>(n_frames - 1));
    for (auto& a : r.actions) {
        float vals[4];
        f.read(reinterpret_cast<char*>(vals), sizeof(vals));
        a = {vals[0], vals[1], vals[2], vals[3]};
    }
    r.gripper_pose.resize(static_cast<size_t>(n_frames));
    for (auto& pose : r.gripper_pose) {
        float vals[4];
        f.read(reinterpret_cast<char*>(vals), sizeof(vals));
        pose = {vals[0], vals[1], vals[2], vals[3]};
    }
    r.grasp_closed.resize(static_cast<size_t>(n_frames));
    f.read(reinterpret_cast<char*>(r.grasp_closed.data()), n_frames);
    if (!f) throw std::runtime_error("trajectory: truncated trainer section in " + path);
    if (!with_gt) return r;

    r.has_ground_truth = true;
    r.gt_pixels.assign(static_cast<size_t>(n_frames),
                       std::vector<PixelF>(static_cast<size_t>(r.views) * r.num_objects));
    for (auto& per_frame : r.gt_pixels)
        for (PixelF& p : per_frame) {
            float vals[2];
            f.read(reinterpret_cast<char*>(vals), sizeof(vals));
            p = {vals[0], vals[1]};
        }
    r.gt_object_pose.assign(static_cast<size_t>(n_frames),
                            std::vector<std::array<double, 4>>(static_cast<size_t>(r.num_objects)));
    for (auto& per_frame : r.gt_object_pose)
        for (auto& pose : per_frame) {
            float vals[4];
            f.read(reinterpret_cast<char*>(vals), sizeof(vals));
            pose = {vals[0], vals[1], vals[2], vals[3]};
        }
    r.gt_held.resize(static_cast<size_t>(n_frames));
    for (int& held : r.gt_held) {
        int32_t v;
        f.read(reinterpret_cast<char*>(&v), sizeof(v));
        held = v;
    }
    if (!f) throw std::runtime_error("trajectory: truncated ground-truth section in " + path);
    return r;
}

} // namespace

TrajectoryRecord read_record_for_training(const std::string& path) {
    return read_record_impl(path, false);
}
TrajectoryRecord read_record(const std::string& path) { return read_record_impl(path, true); }

void DatasetIndex::save() const {
    std::ofstream f(dir + "/index", std::ios::trunc);
    if (!f) throw std::runtime_error("index: cannot write " + dir + "/index");
    f << "config_hash = " << hash_hex(config_hash) << "\n";
    for (const auto& name : train) f << "train " << name << "\n";
    for (const auto& name : heldout) f << "heldout " << name << "\n";
}

DatasetIndex DatasetIndex::load(const std::string& dir) {
    std::ifstream f(dir + "/index");
    if (!f) throw std::runtime_error("index: cannot open " + dir + "/index");
    DatasetIndex idx;
    idx.dir = dir;
    std::string line;
    while (std::getline(f, line)) {
        if (line.rfind("config_hash", 0) == 0) {
            idx.config_hash = std::stoull(line.substr(line.find('=') + 1), nullptr, 16);
        } else if (line.rfind("train ", 0) == 0) {
            idx.train.push_back(line.substr(6));
        } else if (line.rfind("heldout ", 0) == 0) {
            idx.heldout.push_back(line.substr(8));
        }
    }
    return idx;
}

KvFile CollectConfig::to_kv() const {
    KvFile kv;
    kv.set_int("n_trajectories", n_trajectories);
    kv.set_int("episode_steps", episode_steps);
    kv.set_int("num_objects", num_objects);
    kv.set_int("reflex", reflex ? 1 : 0);
    kv.set_int("seed", static_cast<long long>(seed));
    kv.set_double("smoothing", smoothing);
    kv.set_int("heldout_every", heldout_every);
    return kv;
}

sim::Action RandomPolicy::next(const sim::SimConfig& cfg, double smoothing) {
    sim::Action u;
    u.dx = rng_.uniform(-cfg.action_xy_max, cfg.action_xy_max);
    u.dy = rng_.uniform(-cfg.action_xy_max, cfg.action_xy_max);
    u.dz = rng_.uniform(-cfg.action_z_max, cfg.action_z_max);
    u.dtheta = rng_.uniform(-cfg.action_theta_max, cfg.action_theta_max);
    sim::Action a;
    a.dx = std::clamp(smoothing * prev_.dx + u.dx, -cfg.action_xy_max, cfg.action_xy_max);
    a.dy = std::clamp(smoothing * prev_.dy + u.dy, -cfg.action_xy_max, cfg.action_xy_max);
    a.dz = std::clamp(smoothing * prev_.dz + u.dz, -cfg.action_z_max, cfg.action_z_max);
    a.dtheta = std::clamp(smoothing * prev_.dtheta + u.dtheta, -cfg.action_theta_max,
                          cfg.action_theta_max);
    prev_ = a;
    return a;
}

TrajectoryRecord roll_episode(const sim::TabletopSim& sim,
                              const std::vector<sim::CameraConfig>& cameras,
                              const CollectConfig& cfg, uint64_t episode_seed) {
    TrajectoryRecord r;
    r.views = static_cast<int>(cameras.size());
    r.num_objects = cfg.num_objects;
    r.has_ground_truth = true;
    sim::WorldState state = sim.reset(episode_seed, cfg.num_objects);
    RandomPolicy policy(episode_seed ^ 0x9E3779B97F4A7C15ull);

    auto snapshot = [&](const sim::WorldState& s) {
        std::vector<Frame> views;
        std::vector<PixelF> pixels;
        for (const auto& cam : cameras) {
            views.push_back(quantize01(sim.render(s, cam)));
            for (int obj = 0; obj < cfg.num_objects; ++obj)
                pixels.push_back(sim.object_pixel_position(s, cam, obj));
        }
        r.frames.push_back(std::move(views));
        r.gt_pixels.push_back(std::move(pixels));
        std::vector<std::array<double, 4>> poses;
        for (int obj = 0; obj < cfg.num_objects; ++obj) {
            const auto& o = s.objects[static_cast<size_t>(obj)];
            poses.push_back({o.pos.x, o.pos.y, o.angle, sim.object_height(s, obj)});
        }
        r.gt_object_pose.push_back(std::move(poses));
        r.gt_held.push_back(s.gripper.held);
        r.gripper_pose.push_back({s.gripper.x, s.gripper.y, s.gripper.z, s.gripper.theta});
        r.grasp_closed.push_back(s.gripper.closed ? 1 : 0);
    };

    snapshot(state);
    for (int t = 0; t < cfg.episode_steps; ++t) {
        const sim::Action a = policy.next(sim.config(), cfg.smoothing);
        r.actions.push_back(a);
        state = sim.step(state, a);
        snapshot(state);
    }
    return r;
}

DatasetIndex collect(const sim::TabletopSim& sim, const std::vector<sim::CameraConfig>& cameras,
                     const CollectConfig& cfg, const std::string& out_dir) {
    if (cfg.reflex != sim.config().reflex_enabled)
        throw std::invalid_argument("collect: reflex flag disagrees with the simulator config");
    fs::create_directories(out_dir);
    DatasetIndex idx;
    idx.dir = out_dir;
    KvFile kv = cfg.to_kv();
    const KvFile sim_kv = sim.config().to_kv();
    for (const auto& [k, v] : sim_kv.entries()) kv.set("sim_" + k, v);
    idx.config_hash = kv.hash();

    std::vector<std::string> names(static_cast<size_t>(cfg.n_trajectories));
    try {
        parallel_for(static_cast<size_t>(cfg.n_trajectories), cfg.workers, [&](size_t i) {
            char name[32];
            std::snprintf(name, sizeof(name), "traj_%06zu.bin", i);
            const TrajectoryRecord record =
                roll_episode(sim, cameras, cfg, cfg.seed * 1000003ull + i);
            write_record(out_dir + "/" + name, record);
            names[i] = name;
        });
    } catch (...) {
        // abort without leaving a half-written dataset behind
        for (const auto& name : names)
            if (!name.empty()) fs::remove(out_dir + "/" + name);
        throw;
    }
    for (int i = 0; i < cfg.n_trajectories; ++i) {
        if (cfg.heldout_every > 0 && (i + 1) % cfg.heldout_every == 0)
            idx.heldout.push_back(names[static_cast<size_t>(i)]);
        else
            idx.train.push_back(names[static_cast<size_t>(i)]);
    }
    idx.save();
    KvFile snapshot = kv;
    snapshot.save(out_dir + "/collect_config");
    return idx;
}

FramePair sample_pair(const TrajectoryRecord& record, int h, int view, Rng& rng) {
    const int frames = record.frame_count();
    if (h < 0 || h >= frames) throw std::invalid_argument("sample_pair: gap exceeds episode length");
    FramePair out;
    out.t = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(frames - h)));
    out.a = record.frames[static_cast<size_t>(out.t)][static_cast<size_t>(view)];
    out.b = record.frames[static_cast<size_t>(out.t + h)][static_cast<size_t>(view)];
    return out;
}

Subsequence sample_subsequence(const TrajectoryRecord& record, int horizon, int view, Rng& rng) {
    const int frames = record.frame_count();
    if (horizon < 1 || horizon >= frames)
        throw std::invalid_argument("sample_subsequence: window exceeds episode length");
    Subsequence out;
    out.start = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(frames - horizon)));
    for (int t = 0; t <= horizon; ++t)
        out.frames.push_back(record.frames[static_cast<size_t>(out.start + t)][static_cast<size_t>(view)]);
    for (int t = 0; t < horizon; ++t)
        out.actions.push_back(record.actions[static_cast<size_t>(out.start + t)]);
    return out;
}

void save_task(const std::string& dir, const BenchmarkTask& task, const sim::TabletopSim& sim) {
    fs::create_directories(dir);
    KvFile kv;
    kv.set("name", task.name);
    kv.set_int("scene_seed", static_cast<long long>(task.scene_seed));
    kv.set("category", task.category);
    kv.set_int("object_id", task.object_id);
    kv.set_int("views", static_cast<long long>(task.goal_frames.size()));
    sim.state_to_kv(task.start_state, kv, "start_");
    sim.state_to_kv(task.goal_state, kv, "goal_");
    for (size_t v = 0; v < task.goal_frames.size(); ++v) {
        const std::string frame_name = task.name + "_goal_v" + std::to_string(v) + ".bin";
        write_frame(dir + "/" + frame_name, task.goal_frames[v]);
        kv.set("goal_frame" + std::to_string(v), frame_name);
        kv.set_doubles("d0_view" + std::to_string(v),
                       {static_cast<double>(task.d0[v].row), static_cast<double>(task.d0[v].col)});
        kv.set_doubles("dg_view" + std::to_string(v),
                       {static_cast<double>(task.dg[v].row), static_cast<double>(task.dg[v].col)});
    }
    kv.set("config_hash", hash_hex(task.config_hash));
    kv.save(dir + "/" + task.name + ".task");
}

BenchmarkTask load_task(const std::string& kv_path, const sim::TabletopSim& sim) {
    const KvFile kv = KvFile::load(kv_path);
    BenchmarkTask task;
    task.name = kv.get("name");
    task.scene_seed = static_cast<uint64_t>(kv.get_int("scene_seed"));
    task.category = kv.get("category");
    task.object_id = static_cast<int>(kv.get_int("object_id"));
    task.start_state = sim.state_from_kv(kv, "start_");
    task.goal_state = sim.state_from_kv(kv, "goal_");
    task.config_hash = std::stoull(kv.get("config_hash"), nullptr, 16);
    const int views = static_cast<int>(kv.get_int("views"));
    const std::string dir = fs::path(kv_path).parent_path().string();
    for (int v = 0; v < views; ++v) {
        task.goal_frames.push_back(read_frame(dir + "/" + kv.get("goal_frame" + std::to_string(v))));
        const auto d0 = kv.get_doubles("d0_view" + std::to_string(v));
        const auto dg = kv.get_doubles("dg_view" + std::to_string(v));
        task.d0.push_back({static_cast<int>(d0.at(0)), static_cast<int>(d0.at(1))});
        task.dg.push_back({static_cast<int>(dg.at(0)), static_cast<int>(dg.at(1))});
    }
    // the annotated pixels must actually lie on the object
    const auto cameras = sim::default_cameras(sim.config());
    for (int v = 0; v < views && v < static_cast<int>(cameras.size()); ++v) {
        const PixelF p0 = sim.object_pixel_position(task.start_state, cameras[static_cast<size_t>(v)],
                                                    task.object_id);
        const PixelF pg = sim.object_pixel_position(task.goal_state, cameras[static_cast<size_t>(v)],
                                                    task.object_id);
        if (pixel_distance(p0, PixelF{static_cast<double>(task.d0[static_cast<size_t>(v)].row),
                                      static_cast<double>(task.d0[static_cast<size_t>(v)].col)}) > 2.0 ||
            pixel_distance(pg, PixelF{static_cast<double>(task.dg[static_cast<size_t>(v)].row),
                                      static_cast<double>(task.dg[static_cast<size_t>(v)].col)}) > 2.0)
            throw std::runtime_error("task: annotated pixels do not lie on the object: " + kv_path);
    }
    return task;
}

} // namespace vismpc::data
