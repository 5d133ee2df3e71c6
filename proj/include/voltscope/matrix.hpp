#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace voltscope {

// Dense row-major matrix. Rows are traces, columns are samples or guesses.
template <typename T>
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    T &operator()(std::size_t r, std::size_t c) {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    const T &operator()(std::size_t r, std::size_t c) const {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }

    T *row(std::size_t r) {
        assert(r < rows_);
        return data_.data() + r * cols_;
    }
    const T *row(std::size_t r) const {
        assert(r < rows_);
        return data_.data() + r * cols_;
    }

    std::vector<T> &storage() { return data_; }
    const std::vector<T> &storage() const { return data_; }

    bool operator==(const Matrix &other) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

} // namespace voltscope
