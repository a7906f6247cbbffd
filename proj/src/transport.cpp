#include "covers/transport.hpp"

#include "covers/kernels.hpp"
#include "covers/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace covers {

Eigen::MatrixXd cost_matrix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    if (x.cols() != y.cols())
        throw std::invalid_argument("cost_matrix: feature dimensions differ (" + std::to_string(x.cols()) + " vs " +
                                    std::to_string(y.cols()) + ")");
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const RowMat xr = x;
    const RowMat yr = y;
    RowMat d(x.rows(), y.rows());
    kernels::pairwise_distances(static_cast<int>(x.rows()), static_cast<int>(y.rows()), static_cast<int>(x.cols()),
                                {xr.data(), static_cast<std::size_t>(xr.size())},
                                {yr.data(), static_cast<std::size_t>(yr.size())},
                                {d.data(), static_cast<std::size_t>(d.size())});
    return d;
}

namespace {

struct Cell {
    int row;
    int col;
};

class TransportSimplex {
public:
    explicit TransportSimplex(const Eigen::MatrixXd& cost)
        : c_(cost), n_(static_cast<int>(cost.rows())), m_(static_cast<int>(cost.cols())),
          flow_(static_cast<std::size_t>(n_) * m_, 0), basic_(static_cast<std::size_t>(n_) * m_, 0) {}

    TransportPlan solve() {
        northwest_corner();
        const double tol = 1e-12 * std::max(1.0, c_.cwiseAbs().maxCoeff());
        int degenerate_run = 0;
        int pivots = 0;
        const long limit = 50L * (n_ + m_) * static_cast<long>(n_) * m_ + 1000;
        std::vector<double> u(static_cast<std::size_t>(n_)), v(static_cast<std::size_t>(m_));
        for (long iter = 0;; ++iter) {
            if (iter > limit) throw std::runtime_error("solve_transport: pivot limit exceeded");
            potentials(u, v);
            const bool bland = degenerate_run > n_ + m_;
            Cell enter{-1, -1};
            double best = -tol;
            for (int i = 0; i < n_ && !(bland && enter.row >= 0); ++i)
                for (int j = 0; j < m_; ++j) {
                    if (basic_[idx(i, j)]) continue;
                    const double r = c_(i, j) - u[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(j)];
                    if (r < best) {
                        best = bland ? -tol : r;
                        enter = {i, j};
                        if (bland) break;
                    }
                }
            if (enter.row < 0) break;
            degenerate_run = pivot(enter, bland) ? 0 : degenerate_run + 1;
            ++pivots;
        }
        TransportPlan out;
        out.plan.resize(n_, m_);
        const double scale = static_cast<double>(n_) * m_;
        double cost = 0.0;
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < m_; ++j) {
                const auto f = static_cast<double>(flow_[idx(i, j)]);
                out.plan(i, j) = f / scale;
                cost += f * c_(i, j);
            }
        out.cost = std::max(0.0, cost / scale);
        out.pivots = pivots;
        return out;
    }

private:
    std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * m_ + j; }

    void northwest_corner() {
        std::vector<long> supply(static_cast<std::size_t>(n_), m_), demand(static_cast<std::size_t>(m_), n_);
        int i = 0, j = 0;
        while (i < n_ && j < m_) {
            const long x = std::min(supply[static_cast<std::size_t>(i)], demand[static_cast<std::size_t>(j)]);
            flow_[idx(i, j)] = x;
            basic_[idx(i, j)] = 1;
            supply[static_cast<std::size_t>(i)] -= x;
            demand[static_cast<std::size_t>(j)] -= x;
            if (supply[static_cast<std::size_t>(i)] == 0 && i < n_ - 1)
                ++i;
            else
                ++j;
        }
    }

    // Tree adjacency over nodes 0..n-1 (rows) and n..n+m-1 (columns).
    std::vector<std::vector<int>> adjacency() const {
        std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_ + m_));
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < m_; ++j)
                if (basic_[idx(i, j)]) {
                    adj[static_cast<std::size_t>(i)].push_back(n_ + j);
                    adj[static_cast<std::size_t>(n_ + j)].push_back(i);
                }
        return adj;
    }

    void potentials(std::vector<double>& u, std::vector<double>& v) const {
        const auto adj = adjacency();
        std::vector<char> seen(static_cast<std::size_t>(n_ + m_), 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        u[0] = 0.0;
        while (!stack.empty()) {
            const int a = stack.back();
            stack.pop_back();
            for (int b : adj[static_cast<std::size_t>(a)]) {
                if (seen[static_cast<std::size_t>(b)]) continue;
                seen[static_cast<std::size_t>(b)] = 1;
                if (a < n_)
                    v[static_cast<std::size_t>(b - n_)] = c_(a, b - n_) - u[static_cast<std::size_t>(a)];
                else
                    u[static_cast<std::size_t>(b)] = c_(b, a - n_) - v[static_cast<std::size_t>(a - n_)];
                stack.push_back(b);
            }
        }
    }

    // Returns true when the pivot moved a positive amount of flow.
    bool pivot(Cell enter, bool bland) {
        // path in the tree from column node of `enter` back to its row node
        const auto adj = adjacency();
        const int src = n_ + enter.col;
        const int dst = enter.row;
        std::vector<int> parent(static_cast<std::size_t>(n_ + m_), -2);
        std::vector<int> queue{src};
        parent[static_cast<std::size_t>(src)] = -1;
        for (std::size_t q = 0; q < queue.size(); ++q) {
            const int a = queue[q];
            if (a == dst) break;
            for (int b : adj[static_cast<std::size_t>(a)])
                if (parent[static_cast<std::size_t>(b)] == -2) {
                    parent[static_cast<std::size_t>(b)] = a;
                    queue.push_back(b);
                }
        }
        if (parent[static_cast<std::size_t>(dst)] == -2) throw std::logic_error("solve_transport: basis is not a tree");
        // cycle: enter(+), then edges along the path alternating -, +, ...
        std::vector<Cell> cycle{enter};
        for (int a = dst; parent[static_cast<std::size_t>(a)] != -1; a = parent[static_cast<std::size_t>(a)]) {
            const int b = parent[static_cast<std::size_t>(a)];
            cycle.push_back(a < n_ ? Cell{a, b - n_} : Cell{b, a - n_});
        }
        long theta = std::numeric_limits<long>::max();
        std::size_t leave = 0;
        for (std::size_t k = 1; k < cycle.size(); k += 2) {
            const long f = flow_[idx(cycle[k].row, cycle[k].col)];
            const bool better = f < theta || (f == theta && bland && idx(cycle[k].row, cycle[k].col) <
                                                                       idx(cycle[leave].row, cycle[leave].col));
            if (better) {
                theta = f;
                leave = k;
            }
        }
        for (std::size_t k = 0; k < cycle.size(); ++k)
            flow_[idx(cycle[k].row, cycle[k].col)] += (k % 2 == 0) ? theta : -theta;
        basic_[idx(enter.row, enter.col)] = 1;
        basic_[idx(cycle[leave].row, cycle[leave].col)] = 0;
        return theta > 0;
    }

    const Eigen::MatrixXd& c_;
    int n_;
    int m_;
    std::vector<long> flow_;
    std::vector<char> basic_;
};

}  // namespace

TransportPlan solve_transport(const Eigen::MatrixXd& cost) {
    if (cost.rows() == 0 || cost.cols() == 0) throw std::invalid_argument("solve_transport: empty cloud");
    if (!cost.allFinite()) throw std::domain_error("solve_transport: non-finite cost");
    return TransportSimplex(cost).solve();
}

TransportPlan w1_distance(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    if (x.rows() == 0 || y.rows() == 0) throw std::invalid_argument("w1_distance: empty cloud");
    if (!x.allFinite() || !y.allFinite()) throw std::domain_error("w1_distance: non-finite features");
    return solve_transport(cost_matrix(x, y));
}

Eigen::MatrixXd feature_cloud(const FrameBuffer& frames, const PolicyBundle& bundle) {
    if (frames.empty()) throw std::invalid_argument("feature_cloud: empty frame buffer");
    std::vector<const Observation*> ptrs;
    for (const auto& f : frames.frames()) ptrs.push_back(&f);
    Eigen::MatrixXd out;
    constexpr std::size_t chunk = 128;
    for (std::size_t s = 0; s < ptrs.size(); s += chunk) {
        const std::size_t e = std::min(ptrs.size(), s + chunk);
        const Array f = bundle.invariant_features(make_batch(std::span<const Observation* const>(ptrs.data() + s, e - s)));
        const int d = f.shape[1];
        if (out.size() == 0) out.resize(static_cast<Eigen::Index>(ptrs.size()), d);
        for (std::size_t r = s; r < e; ++r)
            for (int c = 0; c < d; ++c) out(static_cast<Eigen::Index>(r), c) = f.data[(r - s) * d + static_cast<std::size_t>(c)];
    }
    return out;
}

double buffer_distance(const FrameBuffer& a, const FrameBuffer& b, const PolicyBundle& bundle) {
    if (a.empty() || b.empty()) throw std::invalid_argument("buffer_distance: empty buffer");
    return w1_distance(feature_cloud(a, bundle), feature_cloud(b, bundle)).cost;
}

}  // namespace covers
