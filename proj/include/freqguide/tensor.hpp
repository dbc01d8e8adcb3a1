#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace freqguide {

struct Shape {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    [[nodiscard]] std::size_t plane() const { return height * width; }
    [[nodiscard]] std::size_t size() const { return channels * height * width; }
    [[nodiscard]] std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Real-valued C x H x W array in channel-major order. Used for images,
/// latents, noise and gradients alike.
class ImageTensor {
public:
    ImageTensor() = default;
    explicit ImageTensor(Shape shape, double fill = 0.0);
    ImageTensor(Shape shape, std::vector<double> data);

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] std::span<double> data() { return data_; }
    [[nodiscard]] std::span<const double> data() const { return data_; }
    [[nodiscard]] const std::vector<double>& values() const { return data_; }

    [[nodiscard]] std::span<double> channel(std::size_t c);
    [[nodiscard]] std::span<const double> channel(std::size_t c) const;

    double& operator()(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * shape_.height + y) * shape_.width + x];
    }
    double operator()(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * shape_.height + y) * shape_.width + x];
    }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    ImageTensor& operator+=(const ImageTensor& other);
    ImageTensor& operator-=(const ImageTensor& other);
    ImageTensor& operator*=(double s);

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

private:
    Shape shape_{};
    std::vector<double> data_;
};

ImageTensor operator+(ImageTensor a, const ImageTensor& b);
ImageTensor operator-(ImageTensor a, const ImageTensor& b);
ImageTensor operator*(ImageTensor a, double s);
ImageTensor operator*(double s, ImageTensor a);

[[nodiscard]] bool all_finite(const ImageTensor& t);
[[nodiscard]] double dot(const ImageTensor& a, const ImageTensor& b);
[[nodiscard]] double sum_squares(const ImageTensor& t);
[[nodiscard]] double max_abs(const ImageTensor& t);

/// Throws ShapeError when the shapes differ; `what` names the operation.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

/// Element-wise clamp into [lo, hi].
[[nodiscard]] ImageTensor clamp(ImageTensor t, double lo, double hi);

}  // namespace freqguide
