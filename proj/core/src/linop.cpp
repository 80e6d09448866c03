#include "ebsde/linop.hpp"

#include <unsupported/Eigen/MatrixFunctions>

namespace ebsde {

Eigen::MatrixXd LinearOperator::exponential(double t) const {
    if (kind == Kind::diagonal) {
        return (t * eigenvalues.array()).exp().matrix().asDiagonal();
    }
    Eigen::MatrixXd scaled = t * matrix;
    return scaled.exp();
}

Eigen::VectorXd LinearOperator::apply_semigroup(double t, const Eigen::VectorXd& x) const {
    if (kind == Kind::diagonal) {
        return ((t * eigenvalues.array()).exp() * x.array()).matrix();
    }
    return exponential(t) * x;
}

Eigen::VectorXd LinearOperator::apply_generator(const Eigen::VectorXd& x) const {
    if (kind == Kind::diagonal) {
        return (eigenvalues.array() * x.array()).matrix();
    }
    return matrix * x;
}

}  // namespace ebsde
