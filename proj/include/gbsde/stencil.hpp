#pragma once

#include <Eigen/Dense>

namespace gbsde {

/// Central second difference; zero at the two edge nodes.
template <typename Derived>
Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, 1>
second_difference(const Eigen::ArrayBase<Derived>& u, typename Derived::Scalar dx)
{
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = u.size();
    Eigen::Array<Scalar, Eigen::Dynamic, 1> out = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(n);
    if (n >= 3) {
        out.segment(1, n - 2) = (u.head(n - 2) - Scalar(2) * u.segment(1, n - 2) + u.tail(n - 2)) / (dx * dx);
    }
    return out;
}

/// Central first difference in the interior, one-sided at the edges.
template <typename Derived>
Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, 1>
first_difference(const Eigen::ArrayBase<Derived>& u, typename Derived::Scalar dx)
{
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = u.size();
    Eigen::Array<Scalar, Eigen::Dynamic, 1> out(n);
    if (n >= 3) {
        out.segment(1, n - 2) = (u.tail(n - 2) - u.head(n - 2)) / (Scalar(2) * dx);
    }
    out(0) = (u(1) - u(0)) / dx;
    out(n - 1) = (u(n - 1) - u(n - 2)) / dx;
    return out;
}

} // namespace gbsde
