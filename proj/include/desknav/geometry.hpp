#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

namespace desknav {

using Point3 = Eigen::Vector3d;

enum class Frame { body, world };

struct PointCloud {
    std::vector<Point3> points;
    Frame frame = Frame::body;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }
};

/// Plane alpha*x + beta*y + gamma*z + zeta = 0.
///
/// Planes produced by the library are unit-normalized with a canonical sign
/// (zeta <= 0, i.e. the normal points away from the origin). Planes built
/// directly through the aggregate may be unnormalized; distance() handles both.
struct Plane {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double zeta = 0.0;

    Eigen::Vector3d normal() const { return {alpha, beta, gamma}; }

    /// Signed value of the plane equation at p (not divided by the norm).
    double evaluate(const Point3& p) const {
        return alpha * p.x() + beta * p.y() + gamma * p.z() + zeta;
    }

    /// Unit normal, canonical sign. Throws InvalidPlaneError on a zero normal.
    Plane normalized() const;

    static Plane from_normal_offset(const Eigen::Vector3d& normal, double offset);
};

/// |alpha x + beta y + gamma z + zeta| / |(alpha, beta, gamma)|.
double point_plane_distance(const Plane& plane, const Point3& p);

/// Exact plane through three points. Throws DegenerateGeometryError when the
/// cross product of the edge vectors has norm below 1e-9.
Plane fit_plane_three_points(const Point3& p1, const Point3& p2, const Point3& p3);

struct PlaneFit {
    Plane plane;
    double rms_residual = 0.0;
    /// Standard deviation along the narrower in-plane principal axis; small
    /// values mean the points are close to a line and the fit is unreliable.
    double in_plane_spread = 0.0;
};

/// Total-least-squares plane: normal is the smallest-eigenvalue eigenvector
/// of the centered scatter matrix. Throws DegenerateGeometryError on fewer
/// than 3 points or collinear input.
PlaneFit fit_plane_tls(std::span<const Point3> points);
inline PlaneFit fit_plane_tls(const PointCloud& cloud) { return fit_plane_tls(cloud.points); }

/// Angle in radians between two plane normals, ignoring orientation.
double normal_angle(const Plane& a, const Plane& b);

/// True when the two planes describe the same surface within the given
/// normal-angle (rad) and offset (m) tolerances, regardless of sign.
bool same_plane(const Plane& a, const Plane& b, double angle_tol, double offset_tol);

/// Rigid transform of a plane: q' = rotation * q + translation.
Plane transform_plane(const Plane& plane, const Eigen::Matrix3d& rotation,
                      const Eigen::Vector3d& translation);

}  // namespace desknav
