#ifndef EVFI_SIMULATOR_HPP
#define EVFI_SIMULATOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "evfi/events.hpp"
#include "evfi/flow.hpp"
#include "evfi/tensor.hpp"

namespace evfi {

struct SimulatorConfig {
    double c_pos = 0.15;     // positive contrast threshold, log-intensity units
    double c_neg = 0.15;     // magnitude of the negative threshold
    double log_eps = 1e-3;   // log(luma + log_eps)
    double noise_rate = 0.0; // spurious events per pixel per second
    uint64_t seed = 0;
};

struct FrameSequence {
    std::vector<Tensor> frames; // (3, H, W), values in [0,1]
    std::vector<double> timestamps;

    int height() const { return frames.empty() ? 0 : frames[0].dim(1); }
    int width() const { return frames.empty() ? 0 : frames[0].dim(2); }
};

// Rec.601 luma, the fixed convention for all log-intensity math here.
Tensor luminance(const Tensor& rgb);                      // (H, W)
Tensor log_luminance(const Tensor& rgb, double log_eps);  // (H, W)

// ESIM-style video-to-events: per pixel, log-luminance is interpolated
// linearly between frames and an event fires each time the signal crosses the
// next threshold level away from the pixel's reference level; the reference
// jumps to the crossed level. Crossing times are exact up to the time grid.
EventStream simulate(const FrameSequence& seq, const SimulatorConfig& cfg);

// Accumulates +-threshold steps from the first frame's log-luminance;
// round-trip oracle for noise-free simulation.
Tensor reconstruct_log(const Tensor& frame0, const EventStream& stream,
                       const SimulatorConfig& cfg);

// ---------------------------------------------------------------- scenes ----

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

struct Trajectory {
    enum class Kind { kLinear, kQuadratic, kSinusoidal };
    Kind kind = Kind::kLinear;
    Vec2 start;           // top-left corner at clip time 0, pixels
    Vec2 velocity;        // pixels per clip
    Vec2 accel;           // quadratic term, pixels per clip^2
    Vec2 amplitude;       // sinusoidal amplitude, pixels
    double frequency = 1; // oscillations per clip
    Vec2 phase;           // radians

    // u is normalized clip time in [0,1]
    Vec2 position(double u) const;
};

struct TextureSpec {
    enum class Kind { kChecker, kNoise, kGradient, kSolid };
    Kind kind = Kind::kChecker;
    int cell = 4;            // checker cell size
    double color_a[3] = {0.9, 0.85, 0.2};
    double color_b[3] = {0.1, 0.2, 0.7};
    double smooth = 1.0;     // noise blur radius
};

struct SceneObject {
    TextureSpec texture;
    int size = 16; // square side, pixels
    Trajectory trajectory;
};

struct BackgroundSpec {
    enum class Kind { kSolid, kGradient, kNoise };
    Kind kind = Kind::kGradient;
    double color[3] = {0.5, 0.5, 0.5};
    double smooth = 2.0;
};

struct SceneConfig {
    int width = 64;
    int height = 64;
    BackgroundSpec background;
    std::vector<SceneObject> objects;
    int n_frames = 4;
    double frame_rate = 10.0;
    uint64_t seed = 0;
};

// A rendered scene plus its analytic motion model. Frame i sits at normalized
// clip time i/(n_frames-1) and absolute time i/frame_rate.
class Scene {
  public:
    Scene(SceneConfig cfg, FrameSequence frames, std::vector<Tensor> textures, Tensor background);

    const SceneConfig& config() const { return cfg_; }
    const FrameSequence& frames() const { return frames_; }

    double clip_time(int frame_index) const;

    // Forward flow anchored at frame i: displacement of the content under each
    // pixel of frame i as it moves to frame j. Background pixels get zero.
    FlowField flow_between(int i, int j) const;
    // Same, between arbitrary normalized clip times (anchor at ua).
    FlowField flow_between_times(double ua, double ub) const;

    // 1 where any object covers the pixel at normalized clip time u; erode > 0
    // shrinks the footprint by that many pixels.
    Tensor object_mask(double u, int erode = 0) const;

    // Index of the topmost object at the pixel, -1 for background.
    int topmost_at(double u, int x, int y) const;

  private:
    SceneConfig cfg_;
    FrameSequence frames_;
    std::vector<Tensor> textures_;
    Tensor background_;
};

// Renders frames (bilinear sub-pixel object placement over a static
// background). Deterministic for a given config.
Scene generate_scene(const SceneConfig& cfg);

} // namespace evfi

#endif
