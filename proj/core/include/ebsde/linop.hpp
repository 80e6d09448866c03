#pragma once

#include <Eigen/Dense>

namespace ebsde {

// Generator A of the linear part. Diagonal operators apply the semigroup
// exactly mode by mode; dense operators go through a matrix exponential.
struct LinearOperator {
    enum class Kind { diagonal, dense };

    Kind kind = Kind::diagonal;
    Eigen::VectorXd eigenvalues;  // diagonal case
    Eigen::MatrixXd matrix;       // dense case

    static LinearOperator diagonal(const Eigen::VectorXd& eigs) {
        LinearOperator op;
        op.kind = Kind::diagonal;
        op.eigenvalues = eigs;
        return op;
    }
    static LinearOperator dense(const Eigen::MatrixXd& m) {
        LinearOperator op;
        op.kind = Kind::dense;
        op.matrix = m;
        return op;
    }

    int dim() const {
        return kind == Kind::diagonal ? static_cast<int>(eigenvalues.size())
                                      : static_cast<int>(matrix.rows());
    }
    bool exact_semigroup() const { return kind == Kind::diagonal; }

    // Materialized e^{tA}
    Eigen::MatrixXd exponential(double t) const;
    Eigen::VectorXd apply_semigroup(double t, const Eigen::VectorXd& x) const;
    Eigen::VectorXd apply_generator(const Eigen::VectorXd& x) const;
};

}  // namespace ebsde
