#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "test_datasets.h"
#include "vismpc/regnet.h"

using namespace vismpc;
using namespace vismpc::reg;

TEST_CASE("curriculum: monotone ramp that hits the end gap exactly") {
    CurriculumSchedule s;
    s.h_start = 1;
    s.h_end = 8;
    s.ramp_steps = 2000;
    s.total_steps = 6000;
    CHECK(s.gap_at(0) == 1);
    CHECK(s.gap_at(2000) == 8);
    CHECK(s.gap_at(5999) == 8);
    int prev = 0;
    for (long t = 0; t < 6000; t += 25) {
        const int h = s.gap_at(t);
        CHECK(h >= prev);
        CHECK(h >= 1);
        CHECK(h <= 8);
        prev = h;
    }
    // paper-scale shape: ramp 20k of 60k total keeps the same 1:3 ratio
    CurriculumSchedule paper;
    paper.ramp_steps = 20000;
    paper.total_steps = 60000;
    CHECK(paper.gap_at(20000) == 8);
    CHECK(paper.gap_at(59999) == 8);
}

TEST_CASE("transport_point: constant flow adds the displacement") {
    Tensor flow({32, 32, 2});
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) {
            flow.at(r, c, 0) = 3.0f;   // dx: +3 columns
            flow.at(r, c, 1) = -2.0f;  // dy: -2 rows
        }
    const Pixel out = transport_point(flow, {10, 10}, 5);
    CHECK(out.row == 8);
    CHECK(out.col == 13);
}

TEST_CASE("transport_point: zero flow is the identity on any in-bounds pixel") {
    Tensor flow({16, 24, 2});
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Pixel d{static_cast<int>(rng.uniform_index(16)), static_cast<int>(rng.uniform_index(24))};
        CHECK(transport_point(flow, d, 5) == d);
    }
}

TEST_CASE("transport_point: median ignores outliers") {
    // window x-components {1,1,2,2,2,3,3,9,9} -> median 2
    Tensor flow({9, 9, 2});
    const float xs[9] = {1, 1, 2, 2, 2, 3, 3, 9, 9};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) flow.at(3 + r, 3 + c, 0) = xs[r * 3 + c];
    const Pixel out = transport_point(flow, {4, 4}, 3);
    CHECK(out.col == 4 + 2);
    CHECK(out.row == 4);

    // sort-based oracle
    std::vector<float> sorted(xs, xs + 9);
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted[4] == 2.0f);
}

TEST_CASE("transport_point: robust to corrupting less than half the window") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor flow({15, 15, 2});
        for (size_t i = 0; i < flow.numel(); ++i) flow[i] = 2.0f;  // true displacement (2, 2)
        // corrupt up to 12 of 25 window cells around (7, 7)
        const int corrupt = 1 + static_cast<int>(rng.uniform_index(12));
        std::vector<int> cells(25);
        for (int i = 0; i < 25; ++i) cells[static_cast<size_t>(i)] = i;
        for (int i = 0; i < corrupt; ++i) {
            const int pick = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(25 - i))) + i;
            std::swap(cells[static_cast<size_t>(i)], cells[static_cast<size_t>(pick)]);
            const int cell = cells[static_cast<size_t>(i)];
            const int r = 5 + cell / 5, c = 5 + cell % 5;
            flow.at(r, c, 0) = static_cast<float>(rng.uniform(-30.0, 30.0));
            flow.at(r, c, 1) = static_cast<float>(rng.uniform(-30.0, 30.0));
        }
        const Pixel out = transport_point(flow, {7, 7}, 5);
        CHECK(out.row == 9);
        CHECK(out.col == 9);
    }
}

TEST_CASE("transport_point: corners clamp the window and the result") {
    Tensor flow({12, 12, 2});
    for (size_t i = 0; i < flow.numel(); ++i) flow[i] = -25.0f;
    const Pixel out = transport_point(flow, {0, 0}, 5);
    CHECK(out.row == 0);
    CHECK(out.col == 0);
    const Pixel far = transport_point(flow, {11, 11}, 5);
    CHECK(far.row == 0);
    CHECK(far.col == 0);
}

TEST_CASE("point photometric error: exact small cases and the 3-term oracle") {
    Frame a({4, 4, 3}), b({4, 4, 3});
    CHECK(point_photometric_error(a, b, {1, 1}) == doctest::Approx(0.0));
    a.at(2, 2, 0) = 1.0f;
    CHECK(point_photometric_error(a, b, {2, 2}) == doctest::Approx(1.0));

    Rng rng(5);
    Frame x({6, 6, 3}), y({6, 6, 3});
    x.fill_uniform(rng, 0.0, 1.0);
    y.fill_uniform(rng, 0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Pixel d{static_cast<int>(rng.uniform_index(6)), static_cast<int>(rng.uniform_index(6))};
        double acc = 0.0;
        for (int k = 0; k < 3; ++k) {
            const double diff = static_cast<double>(x.at(d.row, d.col, k)) - y.at(d.row, d.col, k);
            acc += diff * diff;
        }
        CHECK(point_photometric_error(x, y, d) == doctest::Approx(std::sqrt(acc)).epsilon(1e-9));
    }
}

TEST_CASE("untrained registration: finite flow of the right shape") {
    Registration model = Registration::create(RegConfig{}, 9);
    sim::TabletopSim tsim;
    const auto cams = sim::default_cameras(tsim.config());
    const Frame a = data::quantize01(tsim.render(tsim.reset(1, 1), cams[0]));
    const Frame b = data::quantize01(tsim.render(tsim.reset(2, 1), cams[0]));
    const Tensor flow = model.flow_to(a, b);
    CHECK(flow.shape == std::vector<int>{kFrameH, kFrameW, 2});
    CHECK(flow.all_finite());
}

TEST_CASE("training: synthetic shifts are registered and transported accurately") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "vismpc_shift_ds").string();
    fs::remove_all(dir);
    sim::TabletopSim tsim;
    const auto cams = sim::default_cameras(tsim.config());
    const auto idx = testkit::make_shift_dataset(tsim, cams, dir, 100, 400);

    RegTrainConfig cfg;
    cfg.schedule.ramp_steps = 500;
    cfg.schedule.total_steps = 1500;
    cfg.batch = 4;
    cfg.seed = 1;
    TrainStats stats;
    const Registration model = train_registration(idx, cfg, &stats);
    MESSAGE("final training loss (100-step window): ", stats.final_loss_window);

    // (a) known-shift transport on held-out records
    std::vector<double> errors;
    double zero_flow_loss = 0.0, trained_loss = 0.0;
    int loss_n = 0;
    for (const auto& name : idx.heldout) {
        const auto record = data::read_record(dir + "/" + name);
        for (int h = 2; h <= 8; h += 2) {
            const Frame& start = record.frames[0][0];
            const Frame& moved = record.frames[static_cast<size_t>(h)][0];
            const Tensor flow = model.flow_to(moved, start);  // evaluate at start pixels
            const PixelF gt0 = record.gt_pixel(0, 0, 0);
            const PixelF gth = record.gt_pixel(h, 0, 0);
            const Pixel d0{static_cast<int>(std::lround(gt0.row)),
                           static_cast<int>(std::lround(gt0.col))};
            const Pixel moved_px = transport_point(flow, d0, 5);
            errors.push_back(std::hypot(moved_px.row - gth.row, moved_px.col - gth.col));
            if (h == 8) {
                trained_loss += charbonnier_loss(model.warp_to(moved, flow), start).value;
                zero_flow_loss += charbonnier_loss(moved, start).value;
                ++loss_n;
            }
        }
    }
    std::sort(errors.begin(), errors.end());
    const double median = errors[errors.size() / 2];
    MESSAGE("median transported-point error (px): ", median);
    CHECK(median <= 1.5);

    // (b) trained warping beats the zero-flow baseline by at least 2x at h=8
    MESSAGE("h=8 photometric: trained ", trained_loss / loss_n, " zero-flow ",
            zero_flow_loss / loss_n);
    CHECK(trained_loss < 0.5 * zero_flow_loss);

    // (c) self-registration: near-zero flow at the object after training
    double trained_mag = 0.0, untrained_mag = 0.0;
    int mag_n = 0;
    const Registration untrained = Registration::create(RegConfig{}, 77);
    for (const auto& name : idx.heldout) {
        const auto record = data::read_record(dir + "/" + name);
        const Frame& frame = record.frames[0][0];
        const Tensor self_flow = model.flow_to(frame, frame);
        const Tensor raw_flow = untrained.flow_to(frame, frame);
        for (int r = 0; r < kFrameH; ++r)
            for (int c = 0; c < kFrameW; ++c) {
                trained_mag += std::hypot(self_flow.at(r, c, 0), self_flow.at(r, c, 1));
                untrained_mag += std::hypot(raw_flow.at(r, c, 0), raw_flow.at(r, c, 1));
                ++mag_n;
            }
    }
    trained_mag /= mag_n;
    untrained_mag /= mag_n;
    MESSAGE("mean self-registration flow: trained ", trained_mag, " untrained ", untrained_mag);
    CHECK(trained_mag < 0.5);
    CHECK(trained_mag < 0.75 * untrained_mag);

    fs::remove_all(dir);
}

TEST_CASE("training: seeded determinism") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "vismpc_shift_det").string();
    fs::remove_all(dir);
    sim::TabletopSim tsim;
    const auto cams = sim::default_cameras(tsim.config());
    const auto idx = testkit::make_shift_dataset(tsim, cams, dir, 12, 900);
    RegTrainConfig cfg;
    cfg.schedule.ramp_steps = 10;
    cfg.schedule.total_steps = 30;
    cfg.batch = 2;
    cfg.seed = 5;
    const Registration a = train_registration(idx, cfg);
    const Registration b = train_registration(idx, cfg);
    const auto na = a.net().named_parameters();
    const auto nb = b.net().named_parameters();
    REQUIRE(na.size() == nb.size());
    for (size_t i = 0; i < na.size(); ++i) CHECK(na[i].tensor.data == nb[i].tensor.data);
    fs::remove_all(dir);
}
