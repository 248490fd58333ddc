#include "surfpatch/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <set>
#include <stdexcept>
#include <tuple>

namespace surfpatch {

std::vector<std::vector<std::uint32_t>> Partition::members() const {
    std::vector<std::vector<std::uint32_t>> out(cluster_count);
    for (std::uint32_t i = 0; i < labels.size(); ++i) out[labels[i]].push_back(i);
    return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// (distance, lower id, higher id) ordering used for deterministic tie-breaks.
struct PairKey {
    double distance;
    std::uint32_t lo;
    std::uint32_t hi;

    bool operator<(const PairKey& o) const { return std::tie(distance, lo, hi) < std::tie(o.distance, o.lo, o.hi); }
    bool operator>(const PairKey& o) const { return o < *this; }
};

PairKey make_key(double d, std::uint32_t a, std::uint32_t b) { return {d, std::min(a, b), std::max(a, b)}; }

void record(LinkageTree& tree, std::uint32_t a, std::uint32_t b, double distance, std::uint32_t size) {
    const double floor = tree.merges.empty() ? 0.0 : tree.merges.back().distance;
    tree.merges.push_back({std::min(a, b), std::max(a, b), std::max(distance, floor), size});
}

LinkageTree ward_unconstrained(const RowMatrix& points) {
    const auto m = static_cast<std::size_t>(points.rows());
    LinkageTree tree;
    tree.leaf_count = m;
    if (m < 2) return tree;

    // Squared Ward dissimilarities between active slots.
    Eigen::MatrixXd d2(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        d2(i, i) = 0.0;
        for (std::size_t j = i + 1; j < m; ++j) {
            const double v = (points.row(i) - points.row(j)).squaredNorm();
            d2(i, j) = v;
            d2(j, i) = v;
        }
    }
    std::vector<std::uint32_t> id(m);
    std::iota(id.begin(), id.end(), 0u);
    std::vector<double> size(m, 1.0);
    std::vector<char> active(m, 1);
    std::vector<std::size_t> nn(m, 0);

    auto refresh = [&](std::size_t i) {
        PairKey best{kInf, 0, 0};
        std::size_t arg = i;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i || !active[j]) continue;
            const PairKey key = make_key(d2(i, j), id[i], id[j]);
            if (arg == i || key < best) {
                best = key;
                arg = j;
            }
        }
        nn[i] = arg;
    };
    for (std::size_t i = 0; i < m; ++i) refresh(i);

    for (std::size_t step = 0; step + 1 < m; ++step) {
        std::size_t a = m;
        PairKey best{kInf, 0, 0};
        for (std::size_t i = 0; i < m; ++i) {
            if (!active[i]) continue;
            const PairKey key = make_key(d2(i, nn[i]), id[i], id[nn[i]]);
            if (a == m || key < best) {
                best = key;
                a = i;
            }
        }
        std::size_t b = nn[a];
        if (b < a) std::swap(a, b);
        const double na = size[a];
        const double nb = size[b];
        const double dab = d2(a, b);
        record(tree, id[a], id[b], std::sqrt(dab), static_cast<std::uint32_t>(na + nb));

        // Lance-Williams update for Ward on squared distances; slot a holds the union.
        for (std::size_t k = 0; k < m; ++k) {
            if (!active[k] || k == a || k == b) continue;
            const double nk = size[k];
            const double v = ((na + nk) * d2(a, k) + (nb + nk) * d2(b, k) - nk * dab) / (na + nb + nk);
            d2(a, k) = v;
            d2(k, a) = v;
        }
        active[b] = 0;
        size[a] = na + nb;
        id[a] = static_cast<std::uint32_t>(m + step);

        for (std::size_t k = 0; k < m; ++k) {
            if (!active[k]) continue;
            if (k == a || nn[k] == a || nn[k] == b) {
                refresh(k);
            } else if (make_key(d2(k, a), id[k], id[a]) < make_key(d2(k, nn[k]), id[k], id[nn[k]])) {
                nn[k] = a;
            }
        }
    }
    return tree;
}

// Constrained variant. Ward distance between clusters A and B is evaluated in
// closed form, sqrt(2 |A||B| / (|A|+|B|)) * |c_A - c_B|, which is what the
// Lance-Williams recurrence produces for Euclidean input.
LinkageTree ward_constrained(const RowMatrix& points, const AdjacencyGraph& graph) {
    const auto m = static_cast<std::size_t>(points.rows());
    LinkageTree tree;
    tree.leaf_count = m;
    if (m < 2) return tree;

    const auto capacity = 2 * m - 1;
    std::vector<Eigen::RowVectorXd> centroid(capacity);
    std::vector<double> size(capacity, 0.0);
    std::vector<char> alive(capacity, 0);
    std::vector<std::set<std::uint32_t>> adj(capacity);
    for (std::size_t i = 0; i < m; ++i) {
        centroid[i] = points.row(static_cast<Eigen::Index>(i));
        size[i] = 1.0;
        alive[i] = 1;
        for (auto j : graph.neighbors[i]) adj[i].insert(j);
    }
    auto ward = [&](std::uint32_t a, std::uint32_t b) {
        const double na = size[a];
        const double nb = size[b];
        return std::sqrt(2.0 * na * nb / (na + nb)) * (centroid[a] - centroid[b]).norm();
    };

    std::priority_queue<PairKey, std::vector<PairKey>, std::greater<>> heap;
    for (const auto& [i, j] : graph.edges) heap.push(make_key(ward(i, j), i, j));

    auto next = static_cast<std::uint32_t>(m);
    while (!heap.empty()) {
        const PairKey top = heap.top();
        heap.pop();
        if (!alive[top.lo] || !alive[top.hi]) continue;
        const auto a = top.lo;
        const auto b = top.hi;
        const auto c = next++;
        size[c] = size[a] + size[b];
        centroid[c] = (size[a] * centroid[a] + size[b] * centroid[b]) / size[c];
        alive[a] = alive[b] = 0;
        alive[c] = 1;
        record(tree, a, b, top.distance, static_cast<std::uint32_t>(size[c]));
        for (auto src : {a, b}) {
            for (auto nb : adj[src]) {
                if (nb == a || nb == b || !alive[nb]) continue;
                adj[c].insert(nb);
            }
            adj[src].clear();
        }
        for (auto nb : adj[c]) {
            adj[nb].erase(a);
            adj[nb].erase(b);
            adj[nb].insert(c);
            heap.push(make_key(ward(c, nb), c, nb));
        }
    }
    return tree;
}

struct UnionFind {
    std::vector<std::uint32_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
    std::uint32_t find(std::uint32_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
};

Partition apply_merges(const LinkageTree& tree, std::size_t count) {
    const auto m = tree.leaf_count;
    // Cluster ids beyond the leaves map to a representative leaf.
    std::vector<std::uint32_t> leaf_of(m + tree.merges.size());
    std::iota(leaf_of.begin(), leaf_of.begin() + static_cast<std::ptrdiff_t>(m), 0u);
    UnionFind uf(m);
    for (std::size_t i = 0; i < tree.merges.size(); ++i) {
        const auto& mg = tree.merges[i];
        leaf_of[m + i] = leaf_of[mg.a];
        if (i < count) uf.parent[uf.find(leaf_of[mg.a])] = uf.find(leaf_of[mg.b]);
    }
    Partition p;
    p.labels.resize(m);
    std::vector<std::int64_t> label_of_root(m, -1);
    for (std::uint32_t i = 0; i < m; ++i) {
        const auto r = uf.find(i);
        if (label_of_root[r] < 0) label_of_root[r] = static_cast<std::int64_t>(p.cluster_count++);
        p.labels[i] = static_cast<std::uint32_t>(label_of_root[r]);
    }
    return p;
}

}  // namespace

LinkageTree ahc_ward(const RowMatrix& points, const AdjacencyGraph* constraints) {
    if (points.rows() < 1) throw std::invalid_argument("ahc_ward: no points");
    if (constraints) {
        if (constraints->vertex_count() != static_cast<std::size_t>(points.rows())) {
            throw std::invalid_argument("ahc_ward: constraint graph has " +
                                        std::to_string(constraints->vertex_count()) + " vertices, expected " +
                                        std::to_string(points.rows()));
        }
        return ward_constrained(points, *constraints);
    }
    return ward_unconstrained(points);
}

Partition cut_threshold(const LinkageTree& tree, double delta) {
    std::size_t count = 0;
    while (count < tree.merges.size() && tree.merges[count].distance <= delta) ++count;
    return apply_merges(tree, count);
}

Partition cut_count(const LinkageTree& tree, std::size_t k) {
    if (k < 1 || k > tree.leaf_count) {
        throw std::out_of_range("cut_count: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(tree.leaf_count) + "]");
    }
    return apply_merges(tree, std::min(tree.merges.size(), tree.leaf_count - k));
}

std::vector<std::uint32_t> representative(const RowMatrix& points, const Partition& partition) {
    if (static_cast<std::size_t>(points.rows()) != partition.labels.size()) {
        throw std::invalid_argument("representative: partition size mismatch");
    }
    std::vector<std::uint32_t> out;
    for (const auto& members : partition.members()) {
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(points.cols());
        for (auto i : members) mean += points.row(i);
        mean /= static_cast<double>(members.size());
        std::uint32_t best = members.front();
        double best_d = (points.row(best) - mean).squaredNorm();
        for (auto i : members) {
            const double d = (points.row(i) - mean).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        out.push_back(best);
    }
    return out;
}

double slider_to_distance(const LinkageTree& tree, double percent) {
    if (std::isinf(percent)) return percent;
    return percent / 100.0 * tree.top_distance();
}

}  // namespace surfpatch
