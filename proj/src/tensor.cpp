#include "profl/tensor.hpp"

#include <cmath>
#include <string>

#include "profl/errors.hpp"

namespace profl {

Tensor2 Tensor2::from_rows(std::size_t r, std::size_t c, std::vector<double> values) {
    if (values.size() != r * c) {
        throw ShapeError("Tensor2::from_rows: " + std::to_string(values.size()) +
                         " values for a " + std::to_string(r) + "x" + std::to_string(c) +
                         " tensor");
    }
    Tensor2 t;
    t.rows = r;
    t.cols = c;
    t.data = std::move(values);
    return t;
}

static void check_inner(std::size_t a, std::size_t b, const char* who) {
    if (a != b) {
        throw ShapeError(std::string(who) + ": inner dimensions " + std::to_string(a) +
                         " vs " + std::to_string(b));
    }
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    check_inner(a.cols, b.rows, "matmul");
    Tensor2 c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        double* crow = &c.data[i * c.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Tensor2 matmul_at_b(const Tensor2& a, const Tensor2& b) {
    check_inner(a.rows, b.rows, "matmul_at_b");
    Tensor2 c(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = &a.data[k * a.cols];
        const double* brow = &b.data[k * b.cols];
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* crow = &c.data[i * c.cols];
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

Tensor2 matmul_a_bt(const Tensor2& a, const Tensor2& b) {
    check_inner(a.cols, b.cols, "matmul_a_bt");
    Tensor2 c(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = &b.data[j * b.cols];
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            c.at(i, j) = s;
        }
    }
    return c;
}

Tensor2 take_rows(const Tensor2& src, const std::vector<std::size_t>& idx) {
    Tensor2 out(idx.size(), src.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= src.rows) {
            throw ValueError("take_rows: index " + std::to_string(idx[i]) +
                             " out of range for " + std::to_string(src.rows) + " rows");
        }
        const double* s = &src.data[idx[i] * src.cols];
        std::copy(s, s + src.cols, &out.data[i * out.cols]);
    }
    return out;
}

bool all_finite(const Tensor2& t) {
    for (double v : t.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace profl
