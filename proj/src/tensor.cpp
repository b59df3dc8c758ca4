#include "vjump/tensor.hpp"

#include <cmath>
#include <string>

#include "vjump/error.hpp"

namespace vjump {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionError("Tensor2: data length " + std::to_string(data_.size()) +
                             " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

bool Tensor2::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace vjump
