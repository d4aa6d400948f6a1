#ifndef EVFI_TENSOR_HPP
#define EVFI_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace evfi {

// Error with a stable machine-readable code ("ShapeMismatch", ...) followed
// by a human message. Tests match on the code prefix.
class Error : public std::runtime_error {
  public:
    Error(std::string code, const std::string& msg)
        : std::runtime_error(code + ": " + msg), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

  private:
    std::string code_;
};

// Dense row-major double tensor. Rank-3 tensors follow the (C, H, W)
// channel-planar convention used throughout the pipeline.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        v_.assign(count(shape_), 0.0);
    }
    Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
        v_.assign(count(shape_), fill);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor({1}, v); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }

    double& operator[](size_t i) { return v_[i]; }
    double operator[](size_t i) const { return v_[i]; }

    // (C,H,W) accessors
    double& at(int c, int y, int x) {
        return v_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    const double& at(int c, int y, int x) const {
        return v_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    // (H,W) accessors
    double& at(int y, int x) { return v_[static_cast<size_t>(y) * shape_[1] + x]; }
    const double& at(int y, int x) const { return v_[static_cast<size_t>(y) * shape_[1] + x]; }

    int channels() const { return shape_[0]; }
    int height() const { return rank() == 3 ? shape_[1] : shape_[0]; }
    int width() const { return rank() == 3 ? shape_[2] : shape_[1]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(double v) { v_.assign(v_.size(), v); }

    static size_t count(const std::vector<int>& shape) {
        size_t n = 1;
        for (int d : shape) {
            if (d < 0) throw Error("InvalidConfig", "negative tensor dimension");
            n *= static_cast<size_t>(d);
        }
        return shape.empty() ? 0 : n;
    }

    static std::string shape_string(const std::vector<int>& shape) {
        std::string s = "(";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }

  private:
    std::vector<int> shape_;
    std::vector<double> v_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b)) {
        throw Error("ShapeMismatch", std::string(where) + ": " + Tensor::shape_string(a.shape()) +
                                         " vs " + Tensor::shape_string(b.shape()));
    }
}

} // namespace evfi

#endif
