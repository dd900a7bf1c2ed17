#pragma once

#include <string>

#include "vismpc/tensor.h"

namespace vismpc {

// Frames are H x W x 3 tensors with channel values in [0, 1].
using Frame = Tensor;

constexpr int kFrameH = 48;
constexpr int kFrameW = 64;

// 8-bit RGB PNG for inspection (zlib-deflated, deterministic output).
void write_png(const std::string& path, const Frame& frame);

// Raw frame store used where bit-exact round trips matter:
//   magic "VMPCIMG1", u32 h, u32 w, u32 c, f32 data.
void write_frame(const std::string& path, const Frame& frame);
Frame read_frame(const std::string& path);

// Tile frames into one row-major grid image (for diagnostic strips).
Frame tile_frames(const std::vector<Frame>& frames, int cols, int pad = 2);

// Paint a small cross marker onto a frame (clamped to bounds).
void draw_cross(Frame& frame, int row, int col, float r, float g, float b);

} // namespace vismpc
