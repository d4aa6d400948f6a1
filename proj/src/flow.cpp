#include "evfi/flow.hpp"

#include <cstring>
#include <fstream>

#include "evfi/autodiff.hpp"

namespace evfi {

FlowField FlowField::constant(int h, int w, double dx, double dy) {
    FlowField f = zeros(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            f.data.at(0, y, x) = dx;
            f.data.at(1, y, x) = dy;
        }
    return f;
}

std::pair<FlowField, FlowField> fuse_initial_flow(const FlowField& f01, const FlowField& f10,
                                                  double t) {
    require_same_shape(f01.data, f10.data, "fuse_initial_flow");
    FlowField ft0{Tensor(f01.data.shape()), t, 0.0};
    FlowField ft1{Tensor(f01.data.shape()), t, 1.0};
    const double a0 = -(1.0 - t) * t, b0 = t * t;
    const double a1 = (1.0 - t) * (1.0 - t), b1 = -t * (1.0 - t);
    for (size_t i = 0; i < f01.data.size(); ++i) {
        ft0.data[i] = a0 * f01.data[i] + b0 * f10.data[i];
        ft1.data[i] = a1 * f01.data[i] + b1 * f10.data[i];
    }
    return {std::move(ft0), std::move(ft1)};
}

WarpResult backward_warp(const Tensor& src, const FlowField& flow) {
    if (src.rank() != 3 || flow.data.dim(1) != src.dim(1) || flow.data.dim(2) != src.dim(2))
        throw Error("ShapeMismatch", "backward_warp src/flow shapes disagree");
    WarpResult r;
    kernels::warp_forward(src, flow.data, r.image, &r.validity);
    return r;
}

FlowField compose_residual(const FlowField& base, const FlowField& delta) {
    require_same_shape(base.data, delta.data, "compose_residual");
    FlowField out = base;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += delta.data[i];
    return out;
}

void write_flo(const std::string& path, const FlowField& flow) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("MissingFile", "cannot open for writing: " + path);
    os.write("FLO2", 4);
    uint32_t w = static_cast<uint32_t>(flow.width()), h = static_cast<uint32_t>(flow.height());
    os.write(reinterpret_cast<const char*>(&w), 4);
    os.write(reinterpret_cast<const char*>(&h), 4);
    for (int y = 0; y < flow.height(); ++y)
        for (int x = 0; x < flow.width(); ++x) {
            float v[2] = {static_cast<float>(flow.data.at(0, y, x)),
                          static_cast<float>(flow.data.at(1, y, x))};
            os.write(reinterpret_cast<const char*>(v), sizeof(v));
        }
}

FlowField read_flo(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("MissingFile", "cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FLO2", 4) != 0)
        throw Error("CorruptEventFile", "bad flow magic in " + path);
    uint32_t w = 0, h = 0;
    is.read(reinterpret_cast<char*>(&w), 4);
    is.read(reinterpret_cast<char*>(&h), 4);
    FlowField f = FlowField::zeros(static_cast<int>(h), static_cast<int>(w));
    for (uint32_t y = 0; y < h; ++y)
        for (uint32_t x = 0; x < w; ++x) {
            float v[2];
            is.read(reinterpret_cast<char*>(v), sizeof(v));
            f.data.at(0, static_cast<int>(y), static_cast<int>(x)) = v[0];
            f.data.at(1, static_cast<int>(y), static_cast<int>(x)) = v[1];
        }
    if (!is) throw Error("CorruptEventFile", "truncated flow file " + path);
    return f;
}

} // namespace evfi
