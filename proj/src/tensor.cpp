#include "freqguide/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "freqguide/errors.hpp"

namespace freqguide {

std::string Shape::str() const {
    std::ostringstream os;
    os << channels << "x" << height << "x" << width;
    return os.str();
}

ImageTensor::ImageTensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

ImageTensor::ImageTensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
        throw ShapeError("ImageTensor: data size " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
    }
}

std::span<double> ImageTensor::channel(std::size_t c) {
    return std::span<double>(data_).subspan(c * shape_.plane(), shape_.plane());
}

std::span<const double> ImageTensor::channel(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * shape_.plane(), shape_.plane());
}

ImageTensor& ImageTensor::operator+=(const ImageTensor& other) {
    require_same_shape(shape_, other.shape_, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

ImageTensor& ImageTensor::operator-=(const ImageTensor& other) {
    require_same_shape(shape_, other.shape_, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

ImageTensor& ImageTensor::operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
}

ImageTensor operator+(ImageTensor a, const ImageTensor& b) { return a += b; }
ImageTensor operator-(ImageTensor a, const ImageTensor& b) { return a -= b; }
ImageTensor operator*(ImageTensor a, double s) { return a *= s; }
ImageTensor operator*(double s, ImageTensor a) { return a *= s; }

bool all_finite(const ImageTensor& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

double dot(const ImageTensor& a, const ImageTensor& b) {
    require_same_shape(a.shape(), b.shape(), "dot");
    return std::inner_product(a.data().begin(), a.data().end(), b.data().begin(), 0.0);
}

double sum_squares(const ImageTensor& t) { return dot(t, t); }

double max_abs(const ImageTensor& t) {
    double m = 0.0;
    for (double v : t.data()) m = std::max(m, std::abs(v));
    return m;
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
    }
}

ImageTensor clamp(ImageTensor t, double lo, double hi) {
    for (auto& v : t.data()) v = std::clamp(v, lo, hi);
    return t;
}

}  // namespace freqguide
