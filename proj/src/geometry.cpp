#include "desknav/geometry.hpp"

#include "desknav/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <cmath>

namespace desknav {

namespace {

constexpr double kCollinearTol = 1e-9;

}  // namespace

Plane Plane::normalized() const {
    const double norm = normal().norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw InvalidPlaneError("plane normal is zero or non-finite");
    }
    Plane out{alpha / norm, beta / norm, gamma / norm, zeta / norm};
    // Canonical sign: zeta <= 0; for planes through the origin the
    // largest-magnitude normal component is positive.
    bool flip = false;
    if (std::abs(out.zeta) > 1e-12) {
        flip = out.zeta > 0.0;
    } else {
        Eigen::Vector3d n = out.normal();
        Eigen::Index idx = 0;
        n.cwiseAbs().maxCoeff(&idx);
        flip = n[idx] < 0.0;
    }
    if (flip) {
        out = Plane{-out.alpha, -out.beta, -out.gamma, -out.zeta};
    }
    if (out.zeta == 0.0) out.zeta = 0.0;  // no negative zero
    return out;
}

Plane Plane::from_normal_offset(const Eigen::Vector3d& normal, double offset) {
    return Plane{normal.x(), normal.y(), normal.z(), offset}.normalized();
}

double point_plane_distance(const Plane& plane, const Point3& p) {
    const double norm = plane.normal().norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw InvalidPlaneError("plane normal is zero or non-finite");
    }
    return std::abs(plane.evaluate(p)) / norm;
}

Plane fit_plane_three_points(const Point3& p1, const Point3& p2, const Point3& p3) {
    const Eigen::Vector3d n = (p2 - p1).cross(p3 - p1);
    if (n.norm() < kCollinearTol) {
        throw DegenerateGeometryError("three points are collinear or coincident");
    }
    const Eigen::Vector3d unit = n.normalized();
    return Plane::from_normal_offset(unit, -unit.dot(p1));
}

PlaneFit fit_plane_tls(std::span<const Point3> points) {
    if (points.size() < 3) {
        throw DegenerateGeometryError("plane fit needs at least 3 points");
    }
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& p : points) centroid += p;
    centroid /= static_cast<double>(points.size());

    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (const auto& p : points) {
        const Eigen::Vector3d d = p - centroid;
        scatter.noalias() += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
    const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
    // Collinear input leaves a rank-1 scatter: the middle eigenvalue vanishes.
    const double scale = std::max(evals[2], 1e-300);
    if (evals[2] <= 0.0 || evals[1] <= 1e-12 * scale) {
        throw DegenerateGeometryError("points are collinear; scatter matrix is rank deficient");
    }
    const Eigen::Vector3d normal = eig.eigenvectors().col(0);
    PlaneFit fit;
    fit.plane = Plane::from_normal_offset(normal, -normal.dot(centroid));
    fit.rms_residual = std::sqrt(std::max(evals[0], 0.0) / static_cast<double>(points.size()));
    fit.in_plane_spread = std::sqrt(evals[1] / static_cast<double>(points.size()));
    return fit;
}

double normal_angle(const Plane& a, const Plane& b) {
    const Eigen::Vector3d na = a.normal().normalized();
    const Eigen::Vector3d nb = b.normal().normalized();
    const double c = std::abs(na.dot(nb));
    return std::atan2(na.cross(nb).norm(), c);
}

bool same_plane(const Plane& a, const Plane& b, double angle_tol, double offset_tol) {
    const Plane na = a.normalized();
    Plane nb = b.normalized();
    if (normal_angle(na, nb) > angle_tol) return false;
    if (na.normal().dot(nb.normal()) < 0.0) {
        nb = Plane{-nb.alpha, -nb.beta, -nb.gamma, -nb.zeta};
    }
    return std::abs(na.zeta - nb.zeta) <= offset_tol;
}

Plane transform_plane(const Plane& plane, const Eigen::Matrix3d& rotation,
                      const Eigen::Vector3d& translation) {
    // n.q + z = 0 with q = R^T (q' - t)  =>  (R n).q' + (z - (R n).t) = 0
    const Eigen::Vector3d n = rotation * plane.normal();
    return Plane{n.x(), n.y(), n.z(), plane.zeta - n.dot(translation)}.normalized();
}

}  // namespace desknav
