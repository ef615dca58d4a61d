#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "pcic/errors.hpp"
#include "pcic/rng.hpp"

namespace pcic {

/// Dense double tensor with shared storage. Shapes are small vectors of
/// extents; layout is row-major over the shape (CHW for images/features,
/// {O,C,K,K} for conv weights). Storage is shared between copies; graph code
/// treats tensor contents as immutable once published.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(compute_numel(shape_), 0.0)) {}

    Tensor(std::vector<int> shape, std::vector<double> values)
        : shape_(std::move(shape)), data_(std::make_shared<std::vector<double>>(std::move(values))) {
        if (static_cast<std::size_t>(compute_numel(shape_)) != data_->size())
            throw ShapeError("tensor: value count does not match shape");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : *t.data_) x = v;
        return t;
    }

    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (auto& x : *t.data_) x = rng.normal() * stddev;
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    int ndim() const { return static_cast<int>(shape_.size()); }

    std::size_t numel() const { return data_ ? data_->size() : 0; }
    bool empty() const { return numel() == 0; }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }

    double& operator[](std::size_t i) { return (*data_)[i]; }
    double operator[](std::size_t i) const { return (*data_)[i]; }

    /// 3-d accessor for {C,H,W} tensors.
    double& at(int c, int h, int w) {
        return (*data_)[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
    }
    double at(int c, int h, int w) const {
        return (*data_)[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
    }

    /// Deep copy.
    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<double>>(*data_);
        return t;
    }

    /// Same storage, new shape (element count must match).
    Tensor reshaped(std::vector<int> shape) const {
        if (compute_numel(shape) != static_cast<long long>(numel()))
            throw ShapeError("reshape: element count mismatch");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    static long long compute_numel(const std::vector<int>& shape) {
        long long n = 1;
        for (int d : shape) {
            if (d < 0) throw ShapeError("negative extent");
            n *= d;
        }
        return n;
    }

    static std::string shape_str(const std::vector<int>& shape);

private:
    std::vector<int> shape_;
    std::shared_ptr<std::vector<double>> data_;
};

// Elementwise helpers used outside the graph (evaluation, tests).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor clamp01(const Tensor& a);
double mse(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& a);

/// Reflective (edge-inclusive) padding of a {C,H,W} tensor on the bottom and
/// right so H and W become multiples of `multiple`.
Tensor pad_to_multiple_reflect(const Tensor& x, int multiple);

/// Crop the top-left {C,h,w} region.
Tensor crop_top_left(const Tensor& x, int h, int w);

}  // namespace pcic
