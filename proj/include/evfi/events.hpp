#ifndef EVFI_EVENTS_HPP
#define EVFI_EVENTS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "evfi/tensor.hpp"

namespace evfi {

// One brightness-change event. Polarity is +1 or -1.
struct Event {
    uint16_t x = 0;
    uint16_t y = 0;
    double t = 0.0; // seconds
    int8_t p = 1;
};

struct TimeWindow {
    double t_start = 0.0;
    double t_end = 1.0;
    double duration() const { return t_end - t_start; }
};

// Timestamps live on a dyadic grid of kTimeTick seconds. Mirroring a grid
// time around a grid window (event reversal) is then exact in doubles, which
// makes reverse(reverse(s)) == s hold bit-for-bit.
constexpr double kTimeTick = 0x1.0p-34; // ~5.8e-11 s
double quantize_time(double t);

// Time-sorted events over a window. The canonical convention is half-open
// [t_start, t_end); t == t_end occurs only through reversal and through the
// closed final slice and is accepted.
struct EventStream {
    std::vector<Event> events;
    TimeWindow window;
    int width = 0;
    int height = 0;

    size_t count() const { return events.size(); }
    // sum of polarities
    long long signed_sum() const;
};

enum class BoundsPolicy { kDrop, kError };

// Sorts, quantizes timestamps, and applies the bounds policy. Events with
// out-of-sensor coordinates or t outside [t_start, t_end) are dropped or
// raise OutOfBoundsEvent. Non-finite timestamps always raise.
EventStream validate_stream(std::vector<Event> raw, TimeWindow window, int width, int height,
                            BoundsPolicy policy = BoundsPolicy::kDrop);

struct VoxelGrid {
    Tensor data; // (B, H, W), signed
    TimeWindow window;
    int bins = 0;

    double total() const;
};

// Discretized event volume: per event, t* = (B-1)(t - t0)/(t1 - t0) and the
// polarity is split over the two adjacent bins with weights (1-frac, frac).
VoxelGrid voxelize(const EventStream& stream, int bins);

// (x, y, t, p) -> (x, y, t_start + t_end - t, -p), re-sorted, window kept.
EventStream reverse(const EventStream& stream);

// Partition at the given boundaries; intervals are [b_i, b_{i+1}) with the
// final interval closed at t_end.
std::vector<EventStream> slice(const EventStream& stream, const std::vector<double>& boundaries);

// Affine remap of the window to [0,1]; timestamps are re-quantized.
EventStream normalize_window(const EventStream& stream);

// Restrict to [a, b) of the parent window (b == window.t_end keeps the closed
// end). Convenience over slice() for sample assembly.
EventStream crop_window(const EventStream& stream, double a, double b);

// ---- binary event file: "EVT1" | u32 W | u32 H | u64 count | f64 t0 | f64 t1
//      then per record u16 x | u16 y | f64 t | i8 p, little-endian ----
void write_evt(const std::string& path, const EventStream& stream);
EventStream read_evt(const std::string& path);

// ---- plain-text fallback: header "x,y,t,p" then one event per line ----
void write_csv(const std::string& path, const EventStream& stream);
EventStream read_csv(const std::string& path, TimeWindow window, int width, int height);

} // namespace evfi

#endif
