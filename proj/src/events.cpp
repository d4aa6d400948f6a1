#include "evfi/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace evfi {

namespace {

bool event_order(const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.p < b.p;
}

void sort_events(std::vector<Event>& ev) { std::stable_sort(ev.begin(), ev.end(), event_order); }

// little-endian scalar I/O (the build targets are little-endian; memcpy keeps
// it alignment-safe)
template <typename T>
void put(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

} // namespace

double quantize_time(double t) { return std::round(t / kTimeTick) * kTimeTick; }

long long EventStream::signed_sum() const {
    long long s = 0;
    for (const auto& e : events) s += e.p;
    return s;
}

EventStream validate_stream(std::vector<Event> raw, TimeWindow window, int width, int height,
                            BoundsPolicy policy) {
    if (window.t_end <= window.t_start)
        throw Error("DegenerateWindow", "t_start must be < t_end");
    window.t_start = quantize_time(window.t_start);
    window.t_end = quantize_time(window.t_end);
    EventStream out;
    out.window = window;
    out.width = width;
    out.height = height;
    out.events.reserve(raw.size());
    for (Event e : raw) {
        if (!std::isfinite(e.t)) throw Error("NonFiniteTimestamp", "event timestamp not finite");
        if (e.p != 1 && e.p != -1) throw Error("OutOfBoundsEvent", "polarity must be +1 or -1");
        e.t = quantize_time(e.t);
        bool ok = e.x < width && e.y < height && e.t >= window.t_start && e.t < window.t_end;
        if (!ok) {
            if (policy == BoundsPolicy::kError)
                throw Error("OutOfBoundsEvent", "event outside sensor bounds or window");
            continue;
        }
        out.events.push_back(e);
    }
    sort_events(out.events);
    return out;
}

double VoxelGrid::total() const {
    double s = 0;
    for (size_t i = 0; i < data.size(); ++i) s += data[i];
    return s;
}

VoxelGrid voxelize(const EventStream& stream, int bins) {
    if (bins < 1) throw Error("InvalidConfig", "voxelize needs bins >= 1");
    if (stream.window.t_end <= stream.window.t_start)
        throw Error("DegenerateWindow", "voxelize window has non-positive duration");
    VoxelGrid grid;
    grid.bins = bins;
    grid.window = stream.window;
    grid.data = Tensor({bins, stream.height, stream.width});
    const double t0 = stream.window.t_start;
    const double inv = (bins - 1) / stream.window.duration();
    for (const auto& e : stream.events) {
        double tstar = bins == 1 ? 0.0 : (e.t - t0) * inv;
        int k = static_cast<int>(std::floor(tstar));
        if (k < 0) k = 0;
        if (k > bins - 1) k = bins - 1;
        double frac = tstar - k;
        if (frac < 0) frac = 0;
        if (frac > 1) frac = 1;
        grid.data.at(k, e.y, e.x) += e.p * (1.0 - frac);
        if (frac != 0.0 && k + 1 < bins) grid.data.at(k + 1, e.y, e.x) += e.p * frac;
    }
    return grid;
}

EventStream reverse(const EventStream& stream) {
    EventStream out = stream;
    const double s = stream.window.t_start + stream.window.t_end; // grid-exact
    for (auto& e : out.events) {
        e.t = s - e.t;
        e.p = static_cast<int8_t>(-e.p);
    }
    sort_events(out.events);
    return out;
}

std::vector<EventStream> slice(const EventStream& stream, const std::vector<double>& boundaries) {
    if (boundaries.size() < 2) throw Error("InvalidBoundaries", "need at least two boundaries");
    std::vector<double> b(boundaries);
    for (auto& v : b) v = quantize_time(v);
    for (size_t i = 1; i < b.size(); ++i)
        if (b[i] <= b[i - 1]) throw Error("InvalidBoundaries", "boundaries must strictly increase");
    if (b.front() > stream.window.t_start || b.back() < stream.window.t_end)
        throw Error("InvalidBoundaries", "boundaries must span the stream window");
    std::vector<EventStream> out(b.size() - 1);
    for (size_t i = 0; i + 1 < b.size(); ++i) {
        out[i].window = {b[i], b[i + 1]};
        out[i].width = stream.width;
        out[i].height = stream.height;
    }
    const size_t last = out.size() - 1;
    for (const auto& e : stream.events) {
        // [b_i, b_{i+1}) with the final interval closed
        size_t idx = static_cast<size_t>(std::upper_bound(b.begin(), b.end(), e.t) - b.begin());
        size_t si = idx == 0 ? 0 : idx - 1;
        if (si > last) si = last;
        out[si].events.push_back(e);
    }
    return out;
}

EventStream normalize_window(const EventStream& stream) {
    EventStream out;
    out.width = stream.width;
    out.height = stream.height;
    out.window = {0.0, 1.0};
    out.events.reserve(stream.events.size());
    const double t0 = stream.window.t_start;
    const double inv = 1.0 / stream.window.duration();
    for (Event e : stream.events) {
        e.t = quantize_time((e.t - t0) * inv);
        if (e.t < 0.0) e.t = 0.0;
        if (e.t > 1.0) e.t = 1.0;
        out.events.push_back(e);
    }
    sort_events(out.events);
    return out;
}

EventStream crop_window(const EventStream& stream, double a, double b) {
    a = quantize_time(a);
    b = quantize_time(b);
    if (b <= a) throw Error("InvalidBoundaries", "crop window empty");
    EventStream out;
    out.window = {a, b};
    out.width = stream.width;
    out.height = stream.height;
    const bool closed_end = b >= stream.window.t_end;
    for (const auto& e : stream.events) {
        if (e.t < a) continue;
        if (e.t > b || (e.t == b && !closed_end)) continue;
        out.events.push_back(e);
    }
    return out;
}

void write_evt(const std::string& path, const EventStream& stream) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("MissingFile", "cannot open for writing: " + path);
    os.write("EVT1", 4);
    put<uint32_t>(os, static_cast<uint32_t>(stream.width));
    put<uint32_t>(os, static_cast<uint32_t>(stream.height));
    put<uint64_t>(os, static_cast<uint64_t>(stream.events.size()));
    put<double>(os, stream.window.t_start);
    put<double>(os, stream.window.t_end);
    for (const auto& e : stream.events) {
        put<uint16_t>(os, e.x);
        put<uint16_t>(os, e.y);
        put<double>(os, e.t);
        put<int8_t>(os, e.p);
    }
    if (!os) throw Error("MissingFile", "short write: " + path);
}

EventStream read_evt(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("MissingFile", "cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "EVT1", 4) != 0)
        throw Error("CorruptEventFile", "bad magic in " + path);
    EventStream out;
    out.width = static_cast<int>(get<uint32_t>(is));
    out.height = static_cast<int>(get<uint32_t>(is));
    uint64_t count = get<uint64_t>(is);
    out.window.t_start = get<double>(is);
    out.window.t_end = get<double>(is);
    out.events.resize(count);
    for (auto& e : out.events) {
        e.x = get<uint16_t>(is);
        e.y = get<uint16_t>(is);
        e.t = get<double>(is);
        e.p = get<int8_t>(is);
    }
    if (!is) throw Error("CorruptEventFile", "event count does not match payload in " + path);
    is.peek();
    if (!is.eof()) throw Error("CorruptEventFile", "trailing bytes in " + path);
    return out;
}

void write_csv(const std::string& path, const EventStream& stream) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("MissingFile", "cannot open for writing: " + path);
    os << "x,y,t,p\n";
    char buf[64];
    for (const auto& e : stream.events) {
        std::snprintf(buf, sizeof(buf), "%u,%u,%.17g,%d\n", unsigned(e.x), unsigned(e.y), e.t,
                      int(e.p));
        os << buf;
    }
}

EventStream read_csv(const std::string& path, TimeWindow window, int width, int height) {
    std::ifstream is(path);
    if (!is) throw Error("MissingFile", "cannot open: " + path);
    std::string line;
    if (!std::getline(is, line) || line.rfind("x,y,t,p", 0) != 0)
        throw Error("CorruptEventFile", "missing csv header in " + path);
    std::vector<Event> raw;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        unsigned x, y;
        double t;
        int p;
        if (std::sscanf(line.c_str(), "%u,%u,%lf,%d", &x, &y, &t, &p) != 4)
            throw Error("CorruptEventFile", "bad csv row: " + line);
        raw.push_back({static_cast<uint16_t>(x), static_cast<uint16_t>(y), t,
                       static_cast<int8_t>(p)});
    }
    return validate_stream(std::move(raw), window, width, height, BoundsPolicy::kError);
}

} // namespace evfi
