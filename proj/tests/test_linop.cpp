#include <cmath>

#include "doctest.h"
#include "ebsde/linop.hpp"
#include "oracles.hpp"

using namespace ebsde;

TEST_CASE("diagonal exponential applies mode by mode") {
    Eigen::VectorXd eigs(3);
    eigs << -1.0, -4.0, 0.5;
    LinearOperator op = LinearOperator::diagonal(eigs);
    CHECK(op.exact_semigroup());
    Eigen::MatrixXd e = op.exponential(0.7);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double expect = i == j ? std::exp(0.7 * eigs[i]) : 0.0;
            CHECK(e(i, j) == doctest::Approx(expect).epsilon(1e-14));
        }
    }
    Eigen::VectorXd x(3);
    x << 1.0, -2.0, 0.5;
    Eigen::VectorXd y = op.apply_semigroup(0.7, x);
    for (int i = 0; i < 3; ++i)
        CHECK(y[i] == doctest::Approx(std::exp(0.7 * eigs[i]) * x[i]).epsilon(1e-14));
    Eigen::VectorXd g = op.apply_generator(x);
    for (int i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx(eigs[i] * x[i]).epsilon(1e-14));
}

TEST_CASE("dense exponential matches an independent scaling-and-squaring") {
    Eigen::MatrixXd a(4, 4);
    a << -2.0, 0.3, 0.0, 0.1,
          0.4, -1.0, 0.2, 0.0,
          0.0, 0.5, -3.0, 0.3,
          0.2, 0.0, 0.1, -0.5;
    LinearOperator op = LinearOperator::dense(a);
    CHECK_FALSE(op.exact_semigroup());
    for (double t : {0.05, 0.4, 1.3}) {
        Eigen::MatrixXd got = op.exponential(t);
        Eigen::MatrixXd expect = oracle::expm((t * a).eval());
        CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-11);
    }
    Eigen::VectorXd x(4);
    x << 0.3, -1.0, 2.0, 0.7;
    CHECK((op.apply_semigroup(0.4, x) - oracle::expm((0.4 * a).eval()) * x).norm() < 1e-11);
    CHECK((op.apply_generator(x) - a * x).norm() < 1e-14);
}

TEST_CASE("semigroup law holds for the dense path") {
    Eigen::MatrixXd a(2, 2);
    a << -1.0, 0.8, 0.0, -2.0;
    LinearOperator op = LinearOperator::dense(a);
    Eigen::MatrixXd lhs = op.exponential(0.9);
    Eigen::MatrixXd rhs = op.exponential(0.5) * op.exponential(0.4);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}
