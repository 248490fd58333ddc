#include "surfpatch/flow.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace surfpatch {

std::string to_string(FieldKind kind) {
    switch (kind) {
        case FieldKind::tornado: return "tornado";
        case FieldKind::two_swirls: return "two_swirls";
        case FieldKind::five_critical_points: return "five_critical_points";
        case FieldKind::custom: return "custom";
    }
    return "custom";
}

FieldKind parse_field_kind(const std::string& name) {
    if (name == "tornado") return FieldKind::tornado;
    if (name == "two_swirls") return FieldKind::two_swirls;
    if (name == "five_critical_points") return FieldKind::five_critical_points;
    throw std::invalid_argument("unknown field '" + name + "' (known: tornado, two_swirls, five_critical_points)");
}

// ---------------------------------------------------------------------------
// Expression

struct Expression::Node {
    enum class Op { number, var_x, var_y, var_z, neg, add, sub, mul, div, pow, call };
    Op op = Op::number;
    double value = 0.0;
    double (*fn)(double) = nullptr;
    std::shared_ptr<const Node> lhs;
    std::shared_ptr<const Node> rhs;

    double eval(const Vec3& p) const {
        switch (op) {
            case Op::number: return value;
            case Op::var_x: return p.x();
            case Op::var_y: return p.y();
            case Op::var_z: return p.z();
            case Op::neg: return -lhs->eval(p);
            case Op::add: return lhs->eval(p) + rhs->eval(p);
            case Op::sub: return lhs->eval(p) - rhs->eval(p);
            case Op::mul: return lhs->eval(p) * rhs->eval(p);
            case Op::div: return lhs->eval(p) / rhs->eval(p);
            case Op::pow: return std::pow(lhs->eval(p), rhs->eval(p));
            case Op::call: return fn(lhs->eval(p));
        }
        return 0.0;
    }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Op = Expression::Node::Op;

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodePtr parse() {
        auto n = expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return n;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw std::invalid_argument("expression '" + s_ + "': " + what + " at " + std::to_string(pos_));
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    static NodePtr make(Op op, NodePtr l = nullptr, NodePtr r = nullptr) {
        auto n = std::make_shared<Expression::Node>();
        n->op = op;
        n->lhs = std::move(l);
        n->rhs = std::move(r);
        return n;
    }
    NodePtr expr() {
        auto n = term();
        while (true) {
            if (eat('+')) n = make(Op::add, n, term());
            else if (eat('-')) n = make(Op::sub, n, term());
            else return n;
        }
    }
    NodePtr term() {
        auto n = unary();
        while (true) {
            if (eat('*')) n = make(Op::mul, n, unary());
            else if (eat('/')) n = make(Op::div, n, unary());
            else return n;
        }
    }
    NodePtr unary() {
        if (eat('-')) return make(Op::neg, unary());
        if (eat('+')) return unary();
        return power();
    }
    NodePtr power() {
        auto base = primary();
        if (eat('^')) return make(Op::pow, base, unary());
        return base;
    }
    NodePtr primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end");
        if (eat('(')) {
            auto n = expr();
            if (!eat(')')) fail("expected ')'");
            return n;
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            const double v = std::stod(s_.substr(pos_), &used);
            pos_ += used;
            auto n = std::make_shared<Expression::Node>();
            n->value = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::string id;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
                id += s_[pos_++];
            }
            if (id == "x") return make(Op::var_x);
            if (id == "y") return make(Op::var_y);
            if (id == "z") return make(Op::var_z);
            if (id == "pi") {
                auto n = std::make_shared<Expression::Node>();
                n->value = std::numbers::pi;
                return n;
            }
            double (*fn)(double) = nullptr;
            if (id == "sin") fn = [](double v) { return std::sin(v); };
            else if (id == "cos") fn = [](double v) { return std::cos(v); };
            else if (id == "tan") fn = [](double v) { return std::tan(v); };
            else if (id == "exp") fn = [](double v) { return std::exp(v); };
            else if (id == "log") fn = [](double v) { return std::log(v); };
            else if (id == "sqrt") fn = [](double v) { return std::sqrt(v); };
            else if (id == "abs") fn = [](double v) { return std::abs(v); };
            else fail("unknown identifier '" + id + "'");
            if (!eat('(')) fail("expected '(' after " + id);
            auto arg = expr();
            if (!eat(')')) fail("expected ')'");
            auto n = std::make_shared<Expression::Node>();
            n->op = Op::call;
            n->fn = fn;
            n->lhs = arg;
            return n;
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

}  // namespace

Expression::Expression(const std::string& source) : root_(Parser(source).parse()) {}

double Expression::operator()(const Vec3& p) const { return root_->eval(p); }

// ---------------------------------------------------------------------------
// Fields

struct VectorField::Grid {
    int res = 49;  // critical points at 1/4, 1/2, 3/4 fall on nodes
    std::vector<Vec3> values;  // res^3, x fastest

    Vec3 sample(const Vec3& p) const {
        Vec3 g = p * (res - 1);
        int i[3];
        double f[3];
        for (int k = 0; k < 3; ++k) {
            const double c = std::clamp(g[k], 0.0, static_cast<double>(res - 1));
            i[k] = std::min(static_cast<int>(c), res - 2);
            f[k] = c - i[k];
        }
        auto at = [&](int x, int y, int z) -> const Vec3& { return values[(z * res + y) * res + x]; };
        Vec3 out = Vec3::Zero();
        for (int dz = 0; dz < 2; ++dz) {
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    const double w = (dx ? f[0] : 1 - f[0]) * (dy ? f[1] : 1 - f[1]) * (dz ? f[2] : 1 - f[2]);
                    out += w * at(i[0] + dx, i[1] + dy, i[2] + dz);
                }
            }
        }
        return out;
    }
};

namespace {

// Five linear critical-point terms with Gaussian falloff, plus one constant
// offset per term chosen so every center is an exact zero.
Vec3 five_point_terms(const Vec3& p) {
    struct Term {
        Vec3 center;
        Eigen::Matrix3d linear;
        Vec3 offset = Vec3::Zero();
    };
    constexpr double sigma = 0.2;
    auto falloff = [](const Vec3& r) { return std::exp(-r.squaredNorm() / (2.0 * sigma * sigma)); };
    static const std::array<Term, 5> terms = [&] {
        std::array<Term, 5> t;
        Eigen::Matrix3d focus;
        focus << -0.1, -1.0, 0.0, 1.0, -0.1, 0.0, 0.0, 0.0, 0.3;
        Eigen::Matrix3d saddle_a;
        saddle_a << 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.5;
        Eigen::Matrix3d saddle_b;
        saddle_b << -0.5, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0;
        Eigen::Matrix3d focus_x;
        focus_x << 0.2, 0.0, 0.0, 0.0, -0.1, -1.0, 0.0, 1.0, -0.1;
        Eigen::Matrix3d focus_y;
        focus_y << -0.1, 0.0, 1.0, 0.0, 0.25, 0.0, -1.0, 0.0, -0.1;
        t[0] = {Vec3(0.5, 0.5, 0.5), focus};
        t[1] = {Vec3(0.25, 0.25, 0.25), saddle_a};
        t[2] = {Vec3(0.75, 0.75, 0.25), focus_x};
        t[3] = {Vec3(0.75, 0.25, 0.75), saddle_b};
        t[4] = {Vec3(0.25, 0.75, 0.75), focus_y};
        // G(j, i) = falloff of term i at center j; solve G B = -(linear tails).
        Eigen::Matrix<double, 5, 5> g;
        Eigen::Matrix<double, 5, 3> rhs;
        for (int j = 0; j < 5; ++j) {
            Vec3 tail = Vec3::Zero();
            for (int i = 0; i < 5; ++i) {
                const Vec3 r = t[j].center - t[i].center;
                g(j, i) = falloff(r);
                tail += t[i].linear * r * g(j, i);
            }
            rhs.row(j) = -tail.transpose();
        }
        const Eigen::Matrix<double, 5, 3> b = g.ldlt().solve(rhs);
        for (int i = 0; i < 5; ++i) t[i].offset = b.row(i).transpose();
        return t;
    }();
    Vec3 v = Vec3::Zero();
    for (const auto& t : terms) {
        const Vec3 r = p - t.center;
        v += (t.linear * r + t.offset) * falloff(r);
    }
    return v;
}

}  // namespace

VectorField VectorField::tornado() {
    VectorField f;
    f.kind_ = FieldKind::tornado;
    return f;
}

VectorField VectorField::two_swirls() {
    VectorField f;
    f.kind_ = FieldKind::two_swirls;
    return f;
}

VectorField VectorField::five_critical_points() {
    static const std::shared_ptr<const Grid> shared = [] {
        auto grid = std::make_shared<Grid>();
        const int res = grid->res;
        grid->values.resize(static_cast<std::size_t>(res) * res * res);
        for (int z = 0; z < res; ++z) {
            for (int y = 0; y < res; ++y) {
                for (int x = 0; x < res; ++x) {
                    grid->values[(z * res + y) * res + x] = five_point_terms(Vec3(x, y, z) / (res - 1));
                }
            }
        }
        return grid;
    }();
    VectorField f;
    f.kind_ = FieldKind::five_critical_points;
    f.grid_ = shared;
    return f;
}

VectorField VectorField::custom(const std::string& expression, const Box& domain) {
    std::string body = expression;
    const auto open = body.find('(');
    const auto close = body.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open) {
        throw std::invalid_argument("custom field must look like '(fx, fy, fz)'");
    }
    body = body.substr(open + 1, close - open - 1);
    std::vector<std::string> parts;
    int depth = 0;
    std::string cur;
    for (char c : body) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == ',' && depth == 0) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    if (parts.size() != 3) throw std::invalid_argument("custom field needs exactly three components");
    VectorField f;
    f.kind_ = FieldKind::custom;
    f.domain_ = domain;
    f.expression_ = expression;
    f.components_ = std::make_shared<const std::array<Expression, 3>>(
        std::array<Expression, 3>{Expression(parts[0]), Expression(parts[1]), Expression(parts[2])});
    return f;
}

VectorField VectorField::by_kind(FieldKind kind) {
    switch (kind) {
        case FieldKind::tornado: return tornado();
        case FieldKind::two_swirls: return two_swirls();
        case FieldKind::five_critical_points: return five_critical_points();
        case FieldKind::custom: break;
    }
    throw std::invalid_argument("custom fields need an expression");
}

Vec3 VectorField::analytic(const Vec3& p) const {
    switch (kind_) {
        case FieldKind::tornado: {
            const double xc = p.x() - 0.5;
            const double yc = p.y() - 0.5;
            const double r = 1.0 + 0.5 * p.z();
            constexpr double a = 0.1;
            return {-xc * a - yc * r, xc * r - yc * a, 0.2};
        }
        case FieldKind::two_swirls: {
            const double xc = p.x() - 0.5;
            const double yc = p.y() - 0.5;
            constexpr double sigma = 0.15;
            constexpr double omega = 1.5;
            Vec3 v(0.0, 0.0, 0.1);
            for (const auto& [center, sign] : {std::pair{-0.25, 1.0}, std::pair{0.25, -1.0}}) {
                const double dx = xc - center;
                const double fall = std::exp(-(dx * dx + yc * yc) / (2.0 * sigma * sigma));
                v.x() += sign * omega * -yc * fall;
                v.y() += sign * omega * dx * fall;
            }
            return v;
        }
        case FieldKind::five_critical_points: return grid_->sample(p);
        case FieldKind::custom: {
            const auto& c = *components_;
            return {c[0](p), c[1](p), c[2](p)};
        }
    }
    return Vec3::Zero();
}

VectorField::Sample VectorField::eval(const Vec3& p) const {
    if (!domain_.contains(p)) return {};
    return {analytic(p), true};
}

Eigen::Matrix3d VectorField::jacobian(const Vec3& p) const {
    const double step = 1e-4 * domain_.extent();
    Eigen::Matrix3d j;
    for (int k = 0; k < 3; ++k) {
        Vec3 e = Vec3::Zero();
        e[k] = step;
        j.col(k) = (analytic(p + e) - analytic(p - e)) / (2.0 * step);
    }
    return j;
}

// ---------------------------------------------------------------------------
// Integration

std::optional<Vec3> rk4_step(const VectorField& field, const Vec3& x, double h) {
    const auto k1 = field.eval(x);
    if (!k1.inside) return std::nullopt;
    const auto k2 = field.eval(x + 0.5 * h * k1.value);
    if (!k2.inside) return std::nullopt;
    const auto k3 = field.eval(x + 0.5 * h * k2.value);
    if (!k3.inside) return std::nullopt;
    const auto k4 = field.eval(x + h * k3.value);
    if (!k4.inside) return std::nullopt;
    const Vec3 next = x + h / 6.0 * (k1.value + 2.0 * k2.value + 2.0 * k3.value + k4.value);
    if (!field.domain().contains(next)) return std::nullopt;
    return next;
}

Streamline rk4_streamline(const VectorField& field, const Vec3& seed, const StreamlineParams& params) {
    if (!(params.h > 0.0)) throw std::invalid_argument("rk4_streamline: step must be positive");
    Streamline line;
    line.points.push_back(seed);
    if (!field.domain().contains(seed)) {
        line.reason = StopReason::left_domain;
        return line;
    }
    for (int step = 0; step < params.max_steps; ++step) {
        const Vec3& x = line.points.back();
        if (field.eval(x).value.norm() < 1e-9) {
            line.reason = StopReason::stagnation;
            return line;
        }
        auto next = rk4_step(field, x, params.h);
        if (!next) {
            line.reason = StopReason::left_domain;
            return line;
        }
        line.points.push_back(*next);
    }
    line.reason = StopReason::max_steps;
    return line;
}

}  // namespace surfpatch
