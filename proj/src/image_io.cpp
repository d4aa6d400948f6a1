#include "evfi/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>

namespace evfi {

namespace {

uint8_t to_u8(double v) {
    double s = std::lround(std::min(1.0, std::max(0.0, v)) * 255.0);
    return static_cast<uint8_t>(s);
}

} // namespace

void save_png(const std::string& path, const Tensor& rgb) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) throw Error("ShapeMismatch", "save_png wants (3,H,W)");
    int h = rgb.dim(1), w = rgb.dim(2);
    cv::Mat img(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto& px = img.at<cv::Vec3b>(y, x); // BGR
            px[0] = to_u8(rgb.at(2, y, x));
            px[1] = to_u8(rgb.at(1, y, x));
            px[2] = to_u8(rgb.at(0, y, x));
        }
    if (!cv::imwrite(path, img)) throw Error("MissingFile", "cannot write " + path);
}

Tensor load_png(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
    if (img.empty()) throw Error("MissingFile", "cannot read " + path);
    Tensor t({3, img.rows, img.cols});
    for (int y = 0; y < img.rows; ++y)
        for (int x = 0; x < img.cols; ++x) {
            const auto& px = img.at<cv::Vec3b>(y, x);
            t.at(0, y, x) = px[2] / 255.0;
            t.at(1, y, x) = px[1] / 255.0;
            t.at(2, y, x) = px[0] / 255.0;
        }
    return t;
}

void save_gray_png(const std::string& path, const Tensor& gray) {
    int h = gray.rank() == 3 ? gray.dim(1) : gray.dim(0);
    int w = gray.rank() == 3 ? gray.dim(2) : gray.dim(1);
    const double* p = gray.data();
    cv::Mat img(h, w, CV_8UC1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.at<uint8_t>(y, x) = to_u8(p[static_cast<size_t>(y) * w + x]);
    if (!cv::imwrite(path, img)) throw Error("MissingFile", "cannot write " + path);
}

} // namespace evfi
