#pragma once

#include "surfpatch/mesh.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace surfpatch {

struct Box {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Ones();

    [[nodiscard]] bool contains(const Vec3& p) const {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }
    [[nodiscard]] double extent() const { return (hi - lo).norm(); }
};

enum class FieldKind { tornado, two_swirls, five_critical_points, custom };

std::string to_string(FieldKind kind);
/// Parses "tornado", "two_swirls", "five_critical_points"; throws
/// std::invalid_argument listing the known kinds otherwise.
FieldKind parse_field_kind(const std::string& name);

/// Compiled scalar expression over x, y, z.
class Expression {
public:
    explicit Expression(const std::string& source);
    [[nodiscard]] double operator()(const Vec3& p) const;

    struct Node;

private:
    std::shared_ptr<const Node> root_;
};

/// Steady analytic vector field on an axis-aligned domain. Immutable and
/// safe to share across threads.
class VectorField {
public:
    static VectorField tornado();
    static VectorField two_swirls();
    static VectorField five_critical_points();
    /// Component triple such as "(-y, x, 0)".
    static VectorField custom(const std::string& expression, const Box& domain = Box{Vec3(-2, -2, -2), Vec3(2, 2, 2)});
    static VectorField by_kind(FieldKind kind);

    [[nodiscard]] FieldKind kind() const { return kind_; }
    [[nodiscard]] const Box& domain() const { return domain_; }
    [[nodiscard]] const std::string& expression() const { return expression_; }

    struct Sample {
        Vec3 value = Vec3::Zero();
        bool inside = false;
    };

    /// Outside the domain the value is zero and `inside` is false.
    [[nodiscard]] Sample eval(const Vec3& p) const;

    /// Central-difference Jacobian with step 1e-4 of the domain extent.
    [[nodiscard]] Eigen::Matrix3d jacobian(const Vec3& p) const;

private:
    struct Grid;

    [[nodiscard]] Vec3 analytic(const Vec3& p) const;

    FieldKind kind_ = FieldKind::custom;
    Box domain_;
    std::string expression_;
    std::shared_ptr<const std::array<Expression, 3>> components_;
    std::shared_ptr<const Grid> grid_;
};

struct StreamlineParams {
    double h = 0.01;
    int max_steps = 1000;
};

enum class StopReason { max_steps, left_domain, stagnation };

struct Streamline {
    std::vector<Vec3> points;
    StopReason reason = StopReason::max_steps;
};

/// One classic RK4 step; empty if any stage leaves the domain.
std::optional<Vec3> rk4_step(const VectorField& field, const Vec3& x, double h);

/// Integrates until max_steps, domain exit, or speed < 1e-9.
Streamline rk4_streamline(const VectorField& field, const Vec3& seed, const StreamlineParams& params);

}  // namespace surfpatch
