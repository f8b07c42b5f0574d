#ifndef AFEM_SPARSE_HPP
#define AFEM_SPARSE_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace afem {

struct Triplet {
    int row, col;
    double val;
};

/// Square sparse matrix in compressed-row form, duplicate-summed and
/// column-sorted within each row.
class SparseMatrix {
public:
    int n = 0;
    std::vector<int> row_ptr; // size n+1
    std::vector<int> col;
    std::vector<double> val;

    SparseMatrix() = default;

    static SparseMatrix from_triplets(int n, std::vector<Triplet>& trip) {
        SparseMatrix m;
        m.n = n;
        std::sort(trip.begin(), trip.end(), [](const Triplet& a, const Triplet& b) {
            return (a.row != b.row) ? a.row < b.row : a.col < b.col;
        });
        m.row_ptr.assign(n + 1, 0);
        m.col.reserve(trip.size());
        m.val.reserve(trip.size());
        for (std::size_t i = 0; i < trip.size();) {
            std::size_t j = i;
            double s = 0.0;
            while (j < trip.size() && trip[j].row == trip[i].row && trip[j].col == trip[i].col)
                s += trip[j++].val;
            m.col.push_back(trip[i].col);
            m.val.push_back(s);
            ++m.row_ptr[trip[i].row + 1];
            i = j;
        }
        for (int r = 0; r < n; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
        return m;
    }

    int nnz() const { return static_cast<int>(col.size()); }

    void multiply(const std::vector<double>& x, std::vector<double>& y) const {
        y.assign(n, 0.0);
        for (int r = 0; r < n; ++r) {
            double s = 0.0;
            for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += val[k] * x[col[k]];
            y[r] = s;
        }
    }

    double quadratic_form(const std::vector<double>& x, const std::vector<double>& y) const {
        if (static_cast<int>(x.size()) != n || static_cast<int>(y.size()) != n)
            throw std::invalid_argument("quadratic_form: dimension mismatch");
        double s = 0.0;
        for (int r = 0; r < n; ++r) {
            double row = 0.0;
            for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) row += val[k] * y[col[k]];
            s += x[r] * row;
        }
        return s;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : val) m = std::max(m, std::abs(v));
        return m;
    }

    double diagonal(int i) const {
        for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
            if (col[k] == i) return val[k];
        return 0.0;
    }

    /// max |A - A^T| entrywise, for symmetry checks.
    double asymmetry() const {
        double m = 0.0;
        for (int r = 0; r < n; ++r)
            for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
                const int c = col[k];
                double vt = 0.0;
                for (int k2 = row_ptr[c]; k2 < row_ptr[c + 1]; ++k2)
                    if (col[k2] == r) {
                        vt = val[k2];
                        break;
                    }
                m = std::max(m, std::abs(val[k] - vt));
            }
        return m;
    }

    /// Coordinate text dump (`i j value` lines), used behind a debug flag.
    void dump_coordinate(std::ostream& os) const {
        char buf[80];
        for (int r = 0; r < n; ++r)
            for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
                std::snprintf(buf, sizeof(buf), "%d %d %.17g\n", r, col[k], val[k]);
                os << buf;
            }
    }
};

/// Linear operator and load vector over the free degrees of freedom.
struct SparseSystem {
    SparseMatrix matrix;
    std::vector<double> rhs;
};

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace afem

#endif
