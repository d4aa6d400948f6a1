#include "evfi/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "evfi/rng.hpp"

namespace evfi {

Tensor luminance(const Tensor& rgb) {
    int h = rgb.dim(1), w = rgb.dim(2);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at(y, x) = 0.299 * rgb.at(0, y, x) + 0.587 * rgb.at(1, y, x) +
                           0.114 * rgb.at(2, y, x);
    return out;
}

Tensor log_luminance(const Tensor& rgb, double log_eps) {
    Tensor out = luminance(rgb);
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i] + log_eps);
    return out;
}

namespace {

// Tolerate ~1e-9 relative shortfall when deciding whether a threshold level
// was reached, so that a ramp of exactly k*c fires k events despite the log /
// interpolation round-off.
constexpr double kCrossSlack = 1e-9;

void emit_pixel_segment(double t_a, double t_b, double l_a, double l_b, double& ref, int x, int y,
                        double c_pos, double c_neg, std::vector<Event>& out) {
    if (l_b == l_a) return;
    if (l_b > l_a) {
        double level = ref + c_pos;
        while (level <= l_b + kCrossSlack * c_pos) {
            double tc = t_a + (level - l_a) / (l_b - l_a) * (t_b - t_a);
            if (tc > t_b) tc = t_b;
            if (tc < t_a) tc = t_a;
            out.push_back({static_cast<uint16_t>(x), static_cast<uint16_t>(y), tc, +1});
            ref = level;
            level += c_pos;
        }
    } else {
        double level = ref - c_neg;
        while (level >= l_b - kCrossSlack * c_neg) {
            double tc = t_a + (level - l_a) / (l_b - l_a) * (t_b - t_a);
            if (tc > t_b) tc = t_b;
            if (tc < t_a) tc = t_a;
            out.push_back({static_cast<uint16_t>(x), static_cast<uint16_t>(y), tc, -1});
            ref = level;
            level -= c_neg;
        }
    }
}

} // namespace

EventStream simulate(const FrameSequence& seq, const SimulatorConfig& cfg) {
    if (seq.frames.size() < 2 || seq.frames.size() != seq.timestamps.size())
        throw Error("DegenerateTimestamps", "need >= 2 frames with matching timestamps");
    for (size_t i = 1; i < seq.timestamps.size(); ++i)
        if (!(seq.timestamps[i] > seq.timestamps[i - 1]))
            throw Error("DegenerateTimestamps", "timestamps must strictly increase");
    if (cfg.c_pos <= 0 || cfg.c_neg <= 0 || cfg.log_eps <= 0)
        throw Error("InvalidConfig", "contrast thresholds and log_eps must be positive");

    const int h = seq.height(), w = seq.width();
    std::vector<Event> raw;

    Tensor l_prev = log_luminance(seq.frames[0], cfg.log_eps);
    Tensor ref = l_prev;
    for (size_t j = 0; j + 1 < seq.frames.size(); ++j) {
        Tensor l_next = log_luminance(seq.frames[j + 1], cfg.log_eps);
        double t_a = seq.timestamps[j], t_b = seq.timestamps[j + 1];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                emit_pixel_segment(t_a, t_b, l_prev.at(y, x), l_next.at(y, x), ref.at(y, x), x, y,
                                   cfg.c_pos, cfg.c_neg, raw);
        l_prev = std::move(l_next);
    }

    const double t0 = seq.timestamps.front(), t1 = seq.timestamps.back();
    if (cfg.noise_rate > 0.0) {
        Rng rng(cfg.seed);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                Rng pix = rng.fork(static_cast<uint64_t>(y) * w + x + 1);
                double t = t0;
                for (;;) {
                    t += pix.exponential(cfg.noise_rate);
                    if (t >= t1) break;
                    int8_t p = pix.uniform() < 0.5 ? int8_t(1) : int8_t(-1);
                    raw.push_back({static_cast<uint16_t>(x), static_cast<uint16_t>(y), t, p});
                }
            }
    }

    EventStream out;
    out.width = w;
    out.height = h;
    out.window = {quantize_time(t0), quantize_time(t1)};
    out.events = std::move(raw);
    for (auto& e : out.events) e.t = quantize_time(e.t);
    std::stable_sort(out.events.begin(), out.events.end(), [](const Event& a, const Event& b) {
        if (a.t != b.t) return a.t < b.t;
        if (a.y != b.y) return a.y < b.y;
        if (a.x != b.x) return a.x < b.x;
        return a.p < b.p;
    });
    return out;
}

Tensor reconstruct_log(const Tensor& frame0, const EventStream& stream,
                       const SimulatorConfig& cfg) {
    Tensor out = log_luminance(frame0, cfg.log_eps);
    for (const auto& e : stream.events)
        out.at(e.y, e.x) += e.p > 0 ? cfg.c_pos : -cfg.c_neg;
    return out;
}

// ---------------------------------------------------------------- scenes ----

Vec2 Trajectory::position(double u) const {
    Vec2 p{start.x + velocity.x * u, start.y + velocity.y * u};
    switch (kind) {
        case Kind::kLinear:
            break;
        case Kind::kQuadratic:
            p.x += accel.x * u * u;
            p.y += accel.y * u * u;
            break;
        case Kind::kSinusoidal:
            p.x += amplitude.x * std::sin(2.0 * M_PI * frequency * u + phase.x);
            p.y += amplitude.y * std::sin(2.0 * M_PI * frequency * u + phase.y);
            break;
    }
    return p;
}

namespace {

Tensor render_texture(const TextureSpec& spec, int size, Rng& rng) {
    Tensor tex({3, size, size});
    switch (spec.kind) {
        case TextureSpec::Kind::kChecker:
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    bool a = ((x / spec.cell) + (y / spec.cell)) % 2 == 0;
                    for (int c = 0; c < 3; ++c)
                        tex.at(c, y, x) = a ? spec.color_a[c] : spec.color_b[c];
                }
            break;
        case TextureSpec::Kind::kNoise: {
            Tensor noise({3, size, size});
            for (size_t i = 0; i < noise.size(); ++i) noise[i] = rng.uniform(0.05, 0.95);
            int r = std::max(0, static_cast<int>(std::lround(spec.smooth)));
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x) {
                        double s = 0;
                        int n = 0;
                        for (int dy = -r; dy <= r; ++dy)
                            for (int dx = -r; dx <= r; ++dx) {
                                int yy = y + dy, xx = x + dx;
                                if (yy < 0 || yy >= size || xx < 0 || xx >= size) continue;
                                s += noise.at(c, yy, xx);
                                ++n;
                            }
                        tex.at(c, y, x) = s / n;
                    }
            break;
        }
        case TextureSpec::Kind::kGradient:
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    for (int c = 0; c < 3; ++c) {
                        double u = size > 1 ? static_cast<double>(x + y) / (2 * size - 2) : 0.0;
                        tex.at(c, y, x) = spec.color_a[c] * (1 - u) + spec.color_b[c] * u;
                    }
            break;
        case TextureSpec::Kind::kSolid:
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    for (int c = 0; c < 3; ++c) tex.at(c, y, x) = spec.color_a[c];
            break;
    }
    return tex;
}

Tensor render_background(const BackgroundSpec& spec, int w, int h, Rng& rng) {
    Tensor bg({3, h, w});
    switch (spec.kind) {
        case BackgroundSpec::Kind::kSolid:
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int c = 0; c < 3; ++c) bg.at(c, y, x) = spec.color[c];
            break;
        case BackgroundSpec::Kind::kGradient:
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double u = static_cast<double>(x) / std::max(1, w - 1);
                    double v = static_cast<double>(y) / std::max(1, h - 1);
                    bg.at(0, y, x) = 0.25 + 0.5 * u;
                    bg.at(1, y, x) = 0.25 + 0.5 * v;
                    bg.at(2, y, x) = 0.4 + 0.2 * (1 - u) * (1 - v);
                }
            break;
        case BackgroundSpec::Kind::kNoise: {
            TextureSpec ts;
            ts.kind = TextureSpec::Kind::kNoise;
            ts.smooth = spec.smooth;
            Tensor sq = render_texture(ts, std::max(w, h), rng);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int c = 0; c < 3; ++c) bg.at(c, y, x) = sq.at(c, y, x);
            break;
        }
    }
    return bg;
}

// bilinear texture sample with edge-clamped taps; (u,v) must be in
// [0, size-1] on both axes
double sample_texture(const Tensor& tex, int c, double u, double v) {
    int size_y = tex.dim(1), size_x = tex.dim(2);
    int x0 = static_cast<int>(std::floor(u)), y0 = static_cast<int>(std::floor(v));
    double fx = u - x0, fy = v - y0;
    int x1 = std::min(x0 + 1, size_x - 1), y1 = std::min(y0 + 1, size_y - 1);
    x0 = std::max(0, std::min(x0, size_x - 1));
    y0 = std::max(0, std::min(y0, size_y - 1));
    return (1 - fy) * ((1 - fx) * tex.at(c, y0, x0) + fx * tex.at(c, y0, x1)) +
           fy * ((1 - fx) * tex.at(c, y1, x0) + fx * tex.at(c, y1, x1));
}

Tensor render_frame(const SceneConfig& cfg, const Tensor& bg, const std::vector<Tensor>& textures,
                    double u) {
    Tensor frame = bg;
    for (size_t k = 0; k < cfg.objects.size(); ++k) {
        const auto& obj = cfg.objects[k];
        Vec2 p = obj.trajectory.position(u);
        int s = obj.size;
        int x_lo = std::max(0, static_cast<int>(std::ceil(p.x)));
        int x_hi = std::min(cfg.width - 1, static_cast<int>(std::floor(p.x + s - 1)));
        int y_lo = std::max(0, static_cast<int>(std::ceil(p.y)));
        int y_hi = std::min(cfg.height - 1, static_cast<int>(std::floor(p.y + s - 1)));
        for (int y = y_lo; y <= y_hi; ++y)
            for (int x = x_lo; x <= x_hi; ++x) {
                double tu = x - p.x, tv = y - p.y;
                for (int c = 0; c < 3; ++c) frame.at(c, y, x) = sample_texture(textures[k], c, tu, tv);
            }
    }
    return frame;
}

} // namespace

Scene::Scene(SceneConfig cfg, FrameSequence frames, std::vector<Tensor> textures, Tensor background)
    : cfg_(std::move(cfg)), frames_(std::move(frames)), textures_(std::move(textures)),
      background_(std::move(background)) {}

double Scene::clip_time(int frame_index) const {
    int n = static_cast<int>(frames_.frames.size());
    return n > 1 ? static_cast<double>(frame_index) / (n - 1) : 0.0;
}

int Scene::topmost_at(double u, int x, int y) const {
    for (int k = static_cast<int>(cfg_.objects.size()) - 1; k >= 0; --k) {
        const auto& obj = cfg_.objects[static_cast<size_t>(k)];
        Vec2 p = obj.trajectory.position(u);
        double tu = x - p.x, tv = y - p.y;
        if (tu >= 0.0 && tu <= obj.size - 1 && tv >= 0.0 && tv <= obj.size - 1) return k;
    }
    return -1;
}

FlowField Scene::flow_between_times(double ua, double ub) const {
    FlowField f = FlowField::zeros(cfg_.height, cfg_.width);
    f.src_time = ua;
    f.dst_time = ub;
    for (int y = 0; y < cfg_.height; ++y)
        for (int x = 0; x < cfg_.width; ++x) {
            int k = topmost_at(ua, x, y);
            if (k < 0) continue;
            const auto& traj = cfg_.objects[static_cast<size_t>(k)].trajectory;
            Vec2 pa = traj.position(ua), pb = traj.position(ub);
            f.data.at(0, y, x) = pb.x - pa.x;
            f.data.at(1, y, x) = pb.y - pa.y;
        }
    return f;
}

FlowField Scene::flow_between(int i, int j) const {
    return flow_between_times(clip_time(i), clip_time(j));
}

Tensor Scene::object_mask(double u, int erode) const {
    Tensor m({cfg_.height, cfg_.width});
    for (int y = 0; y < cfg_.height; ++y)
        for (int x = 0; x < cfg_.width; ++x) {
            for (const auto& obj : cfg_.objects) {
                Vec2 p = obj.trajectory.position(u);
                double tu = x - p.x, tv = y - p.y;
                double e = erode;
                if (tu >= e && tu <= obj.size - 1 - e && tv >= e && tv <= obj.size - 1 - e) {
                    m.at(y, x) = 1.0;
                    break;
                }
            }
        }
    return m;
}

Scene generate_scene(const SceneConfig& cfg) {
    if (cfg.objects.empty()) throw Error("EmptyScene", "scene has no objects");
    if (cfg.n_frames < 2 || cfg.width < 4 || cfg.height < 4 || cfg.frame_rate <= 0)
        throw Error("InvalidConfig", "scene needs n_frames >= 2 and a sane canvas");
    Rng rng(cfg.seed);
    std::vector<Tensor> textures;
    textures.reserve(cfg.objects.size());
    for (const auto& obj : cfg.objects) {
        Rng tex_rng = rng.fork(textures.size() + 101);
        textures.push_back(render_texture(obj.texture, obj.size, tex_rng));
    }
    Rng bg_rng = rng.fork(7);
    Tensor bg = render_background(cfg.background, cfg.width, cfg.height, bg_rng);

    FrameSequence seq;
    for (int i = 0; i < cfg.n_frames; ++i) {
        double u = cfg.n_frames > 1 ? static_cast<double>(i) / (cfg.n_frames - 1) : 0.0;
        seq.frames.push_back(render_frame(cfg, bg, textures, u));
        seq.timestamps.push_back(i / cfg.frame_rate);
    }
    return Scene(cfg, std::move(seq), std::move(textures), std::move(bg));
}

} // namespace evfi
