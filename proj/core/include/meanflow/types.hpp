#ifndef MEANFLOW_TYPES_HPP
#define MEANFLOW_TYPES_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace meanflow {

/// Point / small vector in R^d, d <= 3. Stack allocated.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
/// d x d matrix, d <= 3.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

inline Vec make_vec(std::initializer_list<double> v) {
    Vec out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

class MeanflowError : public std::runtime_error {
public:
    explicit MeanflowError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace meanflow

#endif
