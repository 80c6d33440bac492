#pragma once

#include <cstddef>
#include <vector>

namespace profl {

// Dense row-major matrix of doubles. Rows are samples, columns features.
struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor2() = default;
    Tensor2(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    static Tensor2 from_rows(std::size_t r, std::size_t c, std::vector<double> values);

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }
    std::size_t size() const { return data.size(); }
};

// C = A * B
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
// C = A^T * B, without materializing the transpose
Tensor2 matmul_at_b(const Tensor2& a, const Tensor2& b);
// C = A * B^T
Tensor2 matmul_a_bt(const Tensor2& a, const Tensor2& b);

// Gathers a subset of rows into a new tensor.
Tensor2 take_rows(const Tensor2& src, const std::vector<std::size_t>& idx);

bool all_finite(const Tensor2& t);

}  // namespace profl
