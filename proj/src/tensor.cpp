#include "covers/tensor.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include "covers/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

namespace covers {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapRowC = Eigen::Map<const RowMat>;

Var make_result(Array value, const std::vector<Var>& parents, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
        n->requires_grad = true;
        for (const auto& p : parents) n->parents.push_back(p.shared());
        n->backward = std::move(bw);
    }
    return Var(std::move(n));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

void accumulate(Node* p, std::span<const double> g) {
    if (!p->requires_grad) return;
    auto& dst = p->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

// Splits shape into (outer, len, inner) around an axis.
std::tuple<std::size_t, int, std::size_t> split_axis(const Shape& s, int axis) {
    if (axis < 0 || axis >= static_cast<int>(s.size())) throw std::invalid_argument("axis out of range");
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= static_cast<std::size_t>(s[i]);
    return {outer, s[static_cast<std::size_t>(axis)], inner};
}

template <class F, class D>
Var unary(const Var& a, F f, D dfdx) {
    Array out(a.shape());
    const auto x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x[i]);
    return make_result(std::move(out), {a}, [dfdx](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(p->value.data[i], self.value.data[i]);
    });
}

}  // namespace

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d < 0) throw std::invalid_argument("negative dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

Array::Array(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_size(shape))
        throw std::invalid_argument("Array: " + std::to_string(data.size()) + " values for shape " + shape_str(shape));
}

const Array& Var::array() const {
    if (!node_) throw std::logic_error("Var: empty");
    return node_->value;
}
const Shape& Var::shape() const { return array().shape; }
std::span<const double> Var::value() const { return array().data; }
double Var::item() const {
    if (array().size() != 1) throw std::logic_error("Var::item on non-scalar " + shape_str(shape()));
    return array().data[0];
}
std::span<const double> Var::grad() const { return node_->grad; }
bool Var::has_grad() const { return node_ && !node_->grad.empty(); }
bool Var::requires_grad() const { return node_ && node_->requires_grad; }
const std::optional<Representation>& Var::rep_tag() const { return node_->rep_tag; }
Var& Var::tag(Representation rep) {
    node_->rep_tag = std::move(rep);
    return *this;
}
std::vector<double>& Var::mutable_value() { return node_->value.data; }
std::vector<double>& Var::mutable_grad() { return node_->ensure_grad(); }
void Var::zero_grad() { node_->grad.clear(); }

Var constant(Array a) {
    auto n = std::make_shared<Node>();
    n->value = std::move(a);
    return Var(std::move(n));
}
Var constant(Shape s, std::vector<double> values) { return constant(Array(std::move(s), std::move(values))); }
Var scalar(double v) { return constant(Array({}, std::vector<double>{v})); }
Var parameter(Array a) {
    auto n = std::make_shared<Node>();
    n->value = std::move(a);
    n->requires_grad = true;
    return Var(std::move(n));
}

void backward(const Var& root) {
    if (root.size() != 1) throw std::invalid_argument("backward: root must hold a single value");
    if (!root.requires_grad()) return;
    // Iterative post-order DFS for the topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root.node()->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

namespace ops {

Var affine(const Var& x, const Var& w, const Var& b) {
    if (x.shape().size() != 2 || w.shape().size() != 2 || x.shape()[1] != w.shape()[1])
        throw std::invalid_argument("affine: shapes " + shape_str(x.shape()) + " and " + shape_str(w.shape()));
    const int n = x.shape()[0];
    const int in = x.shape()[1];
    const int out = w.shape()[0];
    if (b && (b.shape().size() != 1 || b.shape()[0] != out))
        throw std::invalid_argument("affine: bias shape " + shape_str(b.shape()));
    Array y({n, out});
    kernels::affine_forward(n, in, out, x.value(), w.value(), b ? b.value() : std::span<const double>{}, y.data);
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return make_result(std::move(y), parents, [n, in, out](Node& self) {
        const MapRowC dy(self.grad.data(), n, out);
        Node* px = self.parents[0].get();
        Node* pw = self.parents[1].get();
        if (px->requires_grad)
            MapRow(px->ensure_grad().data(), n, in).noalias() += dy * MapRowC(pw->value.data.data(), out, in);
        if (pw->requires_grad)
            MapRow(pw->ensure_grad().data(), out, in).noalias() += dy.transpose() * MapRowC(px->value.data.data(), n, in);
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            auto& gb = self.parents[2]->ensure_grad();
            for (int r = 0; r < n; ++r)
                for (int o = 0; o < out; ++o) gb[static_cast<std::size_t>(o)] += self.grad[static_cast<std::size_t>(r) * out + o];
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw std::invalid_argument("matmul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const int m = a.shape()[0];
    const int k = a.shape()[1];
    const int n = b.shape()[1];
    Array c({m, n});
    MapRow(c.data.data(), m, n).noalias() = MapRowC(a.value().data(), m, k) * MapRowC(b.value().data(), k, n);
    return make_result(std::move(c), {a, b}, [m, k, n](Node& self) {
        const MapRowC dc(self.grad.data(), m, n);
        Node* pa = self.parents[0].get();
        Node* pb = self.parents[1].get();
        if (pa->requires_grad)
            MapRow(pa->ensure_grad().data(), m, k).noalias() += dc * MapRowC(pb->value.data.data(), k, n).transpose();
        if (pb->requires_grad)
            MapRow(pb->ensure_grad().data(), k, n).noalias() += MapRowC(pa->value.data.data(), m, k).transpose() * dc;
    });
}

Var conv2d(const Var& x, const Var& k, int stride, int pad) {
    if (x.shape().size() != 4 || k.shape().size() != 4 || x.shape()[1] != k.shape()[1])
        throw std::invalid_argument("conv2d: shapes " + shape_str(x.shape()) + " and " + shape_str(k.shape()));
    kernels::ConvGeometry geo{x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3],
                              k.shape()[0], k.shape()[2], k.shape()[3], stride, pad};
    if (!geo.valid()) throw std::invalid_argument("conv2d: kernel larger than padded input");
    Array y({geo.batch, geo.out_channels, geo.out_height(), geo.out_width()});
    kernels::conv2d_forward(geo, x.value(), k.value(), y.data);
    return make_result(std::move(y), {x, k}, [geo](Node& self) {
        Node* px = self.parents[0].get();
        Node* pk = self.parents[1].get();
        std::span<double> dx = px->requires_grad ? std::span<double>(px->ensure_grad()) : std::span<double>{};
        std::span<double> dk = pk->requires_grad ? std::span<double>(pk->ensure_grad()) : std::span<double>{};
        kernels::conv2d_backward(geo, px->value.data, pk->value.data, self.grad, dx, dk);
    });
}

Var add_channel_bias(const Var& x, const Var& b) {
    if (x.shape().size() < 2 || b.shape().size() != 1 || b.shape()[0] != x.shape()[1])
        throw std::invalid_argument("add_channel_bias: shapes " + shape_str(x.shape()) + " and " + shape_str(b.shape()));
    auto [outer, len, inner] = split_axis(x.shape(), 1);
    Array y = x.array();
    const auto bv = b.value();
    for (std::size_t o = 0; o < outer; ++o)
        for (int c = 0; c < len; ++c)
            for (std::size_t i = 0; i < inner; ++i) y.data[(o * len + c) * inner + i] += bv[static_cast<std::size_t>(c)];
    return make_result(std::move(y), {x, b}, [outer, len, inner](Node& self) {
        accumulate(self.parents[0].get(), self.grad);
        Node* pb = self.parents[1].get();
        if (!pb->requires_grad) return;
        auto& gb = pb->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
            for (int c = 0; c < len; ++c)
                for (std::size_t i = 0; i < inner; ++i) gb[static_cast<std::size_t>(c)] += self.grad[(o * len + c) * inner + i];
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Array y = a.array();
    const auto bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += bv[i];
    return make_result(std::move(y), {a, b}, [](Node& self) {
        accumulate(self.parents[0].get(), self.grad);
        accumulate(self.parents[1].get(), self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Array y = a.array();
    const auto bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] -= bv[i];
    return make_result(std::move(y), {a, b}, [](Node& self) {
        accumulate(self.parents[0].get(), self.grad);
        Node* pb = self.parents[1].get();
        if (!pb->requires_grad) return;
        auto& g = pb->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    Array y = a.array();
    const auto bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] *= bv[i];
    return make_result(std::move(y), {a, b}, [](Node& self) {
        Node* pa = self.parents[0].get();
        Node* pb = self.parents[1].get();
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value.data[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value.data[i];
        }
    });
}

Var scale(const Var& a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}
Var add_scalar(const Var& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}
Var neg(const Var& a) { return scale(a, -1.0); }
Var relu(const Var& a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}
Var tanh(const Var& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}
Var exp(const Var& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}
Var square(const Var& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}
Var clamp(const Var& a, double lo, double hi) {
    return unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var minimum(const Var& a, const Var& b) {
    require_same_shape(a, b, "minimum");
    Array y = a.array();
    const auto bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = std::min(y.data[i], bv[i]);
    return make_result(std::move(y), {a, b}, [](Node& self) {
        Node* pa = self.parents[0].get();
        Node* pb = self.parents[1].get();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const bool take_a = pa->value.data[i] <= pb->value.data[i];
            Node* p = take_a ? pa : pb;
            if (p->requires_grad) p->ensure_grad()[i] += self.grad[i];
        }
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value()) s += v;
    return make_result(Array({}, std::vector<double>{s}), {a}, [](Node& self) {
        Node* p = self.parents[0].get();
        auto& g = p->ensure_grad();
        for (double& v : g) v += self.grad[0];
    });
}

Var mean(const Var& a) {
    if (a.size() == 0) throw std::invalid_argument("mean: empty input");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var sum_last(const Var& a) {
    if (a.shape().empty()) throw std::invalid_argument("sum_last: scalar input");
    const int d = a.shape().back();
    if (d == 0) throw std::invalid_argument("sum_last: empty axis");
    Shape s(a.shape().begin(), a.shape().end() - 1);
    Array y(s);
    const auto x = a.value();
    for (std::size_t r = 0; r < y.size(); ++r)
        for (int j = 0; j < d; ++j) y.data[r] += x[r * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
    return make_result(std::move(y), {a}, [d](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < self.grad.size(); ++r)
            for (int j = 0; j < d; ++j) g[r * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] += self.grad[r];
    });
}

Var max_over_axis(const Var& a, int axis) {
    auto [outer, len, inner] = split_axis(a.shape(), axis);
    if (len == 0) throw std::invalid_argument("max_over_axis: empty reduction axis");
    Shape s = a.shape();
    s.erase(s.begin() + axis);
    Array y(s);
    auto arg = std::make_shared<std::vector<std::size_t>>(y.size());
    const auto x = a.value();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
            std::size_t best = o * len * inner + i;
            for (int l = 1; l < len; ++l) {
                const std::size_t idx = (o * len + l) * inner + i;
                if (x[idx] > x[best]) best = idx;
            }
            y.data[o * inner + i] = x[best];
            (*arg)[o * inner + i] = best;
        }
    return make_result(std::move(y), {a}, [arg](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[(*arg)[i]] += self.grad[i];
    });
}

Var reshape(const Var& a, Shape s) {
    if (shape_size(s) != a.size())
        throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " -> " + shape_str(s));
    Array y(std::move(s), std::vector<double>(a.value().begin(), a.value().end()));
    return make_result(std::move(y), {a}, [](Node& self) { accumulate(self.parents[0].get(), self.grad); });
}

Var concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    Shape s = parts.front().shape();
    int total = 0;
    for (const auto& p : parts) {
        const auto& ps = p.shape();
        if (ps.size() != s.size()) throw std::invalid_argument("concat: rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d)
            if (static_cast<int>(d) != axis && ps[d] != s[d]) throw std::invalid_argument("concat: shape mismatch");
        total += ps.at(static_cast<std::size_t>(axis));
    }
    s[static_cast<std::size_t>(axis)] = total;
    auto [outer, len, inner] = split_axis(s, axis);
    Array y(s);
    std::vector<int> offsets;
    int off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const int l = p.shape()[static_cast<std::size_t>(axis)];
        const auto x = p.value();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * l * inner), l * inner,
                        y.data.begin() + static_cast<std::ptrdiff_t>((o * len + off) * inner));
        off += l;
    }
    return make_result(std::move(y), parts, [outer, len, inner, offsets](Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            Node* p = self.parents[k].get();
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            const std::size_t l = g.size() / (outer * inner);
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t j = 0; j < l * inner; ++j)
                    g[o * l * inner + j] += self.grad[(o * len + offsets[k]) * inner + j];
        }
    });
}

Var slice(const Var& a, int axis, int begin, int end) {
    auto [outer, len, inner] = split_axis(a.shape(), axis);
    if (begin < 0 || end > len || begin > end) throw std::invalid_argument("slice: bad range");
    Shape s = a.shape();
    s[static_cast<std::size_t>(axis)] = end - begin;
    Array y(s);
    const std::size_t l = static_cast<std::size_t>(end - begin);
    const auto x = a.value();
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(x.begin() + static_cast<std::ptrdiff_t>((o * len + begin) * inner), l * inner,
                    y.data.begin() + static_cast<std::ptrdiff_t>(o * l * inner));
    return make_result(std::move(y), {a}, [outer, len, inner, begin, l](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < l * inner; ++j) g[(o * len + begin) * inner + j] += self.grad[o * l * inner + j];
    });
}

Var gather(const Var& a, std::shared_ptr<const std::vector<int>> index, Shape out_shape) {
    if (index->size() != shape_size(out_shape)) throw std::invalid_argument("gather: index size does not match shape");
    Array y(std::move(out_shape));
    const auto x = a.value();
    for (std::size_t i = 0; i < index->size(); ++i) {
        const int src = (*index)[i];
        if (src < 0 || static_cast<std::size_t>(src) >= x.size()) throw std::out_of_range("gather: index out of range");
        y.data[i] = x[static_cast<std::size_t>(src)];
    }
    return make_result(std::move(y), {a}, [index](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < index->size(); ++i) g[static_cast<std::size_t>((*index)[i])] += self.grad[i];
    });
}

Var gather_rows(const Var& a, std::shared_ptr<const std::vector<int>> index) {
    if (a.shape().size() != 2) throw std::invalid_argument("gather_rows: expects [N, K]");
    const int n = a.shape()[0];
    const int k = a.shape()[1];
    const int j = static_cast<int>(index->size());
    for (int src : *index)
        if (src < 0 || src >= k) throw std::out_of_range("gather_rows: index out of range");
    Array y({n, j});
    const auto x = a.value();
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < j; ++c)
            y.data[static_cast<std::size_t>(r) * j + c] = x[static_cast<std::size_t>(r) * k + (*index)[static_cast<std::size_t>(c)]];
    return make_result(std::move(y), {a}, [index, n, k, j](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < j; ++c)
                g[static_cast<std::size_t>(r) * k + (*index)[static_cast<std::size_t>(c)]] += self.grad[static_cast<std::size_t>(r) * j + c];
    });
}

Var broadcast_rows(const Var& v, int n) {
    if (v.shape().size() != 1) throw std::invalid_argument("broadcast_rows: expects a vector");
    const int d = v.shape()[0];
    Array y({n, d});
    for (int r = 0; r < n; ++r) std::copy(v.value().begin(), v.value().end(), y.data.begin() + static_cast<std::ptrdiff_t>(r) * d);
    return make_result(std::move(y), {v}, [n, d](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < d; ++c) g[static_cast<std::size_t>(c)] += self.grad[static_cast<std::size_t>(r) * d + c];
    });
}

Var gaussian_logprob(const Var& mean, const Var& log_std, const Array& action) {
    if (mean.shape().size() != 2 || log_std.shape().size() != 1 || mean.shape()[1] != log_std.shape()[0] ||
        action.shape != mean.shape())
        throw std::invalid_argument("gaussian_logprob: shapes " + shape_str(mean.shape()) + ", " +
                                    shape_str(log_std.shape()) + ", " + shape_str(action.shape));
    const auto finite = [](std::span<const double> s) {
        return std::all_of(s.begin(), s.end(), [](double v) { return std::isfinite(v); });
    };
    if (!finite(mean.value()) || !finite(log_std.value()) || !finite(action.data))
        throw std::domain_error("gaussian_logprob: non-finite input");
    const int n = mean.shape()[0];
    const int d = mean.shape()[1];
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    Array y({n});
    const auto mu = mean.value();
    const auto ls = log_std.value();
    for (int r = 0; r < n; ++r) {
        double acc = 0.0;
        for (int c = 0; c < d; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * d + c;
            const double z = (action.data[i] - mu[i]) * std::exp(-ls[static_cast<std::size_t>(c)]);
            acc += -0.5 * z * z - ls[static_cast<std::size_t>(c)] - half_log_2pi;
        }
        y.data[static_cast<std::size_t>(r)] = acc;
    }
    auto act = std::make_shared<const Array>(action);
    return make_result(std::move(y), {mean, log_std}, [act, n, d](Node& self) {
        Node* pm = self.parents[0].get();
        Node* ps = self.parents[1].get();
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < d; ++c) {
                const std::size_t i = static_cast<std::size_t>(r) * d + c;
                const double inv_var = std::exp(-2.0 * ps->value.data[static_cast<std::size_t>(c)]);
                const double diff = act->data[i] - pm->value.data[i];
                const double g = self.grad[static_cast<std::size_t>(r)];
                if (pm->requires_grad) pm->ensure_grad()[i] += g * diff * inv_var;
                if (ps->requires_grad) ps->ensure_grad()[static_cast<std::size_t>(c)] += g * (diff * diff * inv_var - 1.0);
            }
    });
}

}  // namespace ops

// ---------------------------------------------------------------------------

Var ParamStore::add(const std::string& name, Array init) {
    if (contains(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    Var v = parameter(std::move(init));
    entries_.emplace_back(name, v);
    return v;
}

Var ParamStore::add_uniform(const std::string& name, Shape shape, int fan_in, double gain) {
    Array a(std::move(shape));
    const double bound = gain / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : a.data) v = dist(rng_);
    return add(name, std::move(a));
}

Var ParamStore::add_constant(const std::string& name, Shape shape, double value) {
    return add(name, Array(std::move(shape), value));
}

const Var& ParamStore::get(const std::string& name) const {
    for (const auto& [n, v] : entries_)
        if (n == name) return v;
    throw std::out_of_range("ParamStore: no parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

std::size_t ParamStore::count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : entries_) n += v.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [name, v] : entries_) v.zero_grad();
}

double ParamStore::grad_norm() const {
    double s = 0.0;
    for (const auto& [name, v] : entries_)
        for (double g : v.grad()) s += g * g;
    return std::sqrt(s);
}

void ParamStore::scale_grads(double s) {
    for (auto& [name, v] : entries_)
        if (v.has_grad())
            for (double& g : v.mutable_grad()) g *= s;
}

ParamStore ParamStore::clone() const {
    ParamStore out(seed_);
    out.rng_ = rng_;
    for (const auto& [name, v] : entries_) out.add(name, v.array());
    return out;
}

bool ParamStore::bitwise_equal(const ParamStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].first != other.entries_[i].first) return false;
        const auto a = entries_[i].second.value();
        const auto b = other.entries_[i].second.value();
        if (a.size() != b.size()) return false;
        for (std::size_t j = 0; j < a.size(); ++j)
            if (std::bit_cast<std::uint64_t>(a[j]) != std::bit_cast<std::uint64_t>(b[j])) return false;
    }
    return true;
}

void ParamStore::copy_values_from(const ParamStore& other) {
    if (entries_.size() != other.entries_.size()) throw std::invalid_argument("ParamStore: layout mismatch");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].first != other.entries_[i].first || entries_[i].second.shape() != other.entries_[i].second.shape())
            throw std::invalid_argument("ParamStore: layout mismatch at '" + entries_[i].first + "'");
        const auto src = other.entries_[i].second.value();
        std::copy(src.begin(), src.end(), entries_[i].second.mutable_value().begin());
    }
}

double clip_grad_norm(ParamStore& store, double max_norm) {
    const double norm = store.grad_norm();
    if (norm > max_norm && norm > 0.0) store.scale_grads(max_norm / norm);
    return norm;
}

void Adam::step(ParamStore& store) {
    auto entries = store.entries();
    if (m_.empty()) {
        for (const auto& [name, v] : entries) {
            m_.emplace_back(v.size(), 0.0);
            v_.emplace_back(v.size(), 0.0);
        }
    }
    if (m_.size() != entries.size()) throw std::logic_error("Adam: parameter layout changed");
    for (const auto& [name, v] : entries)
        if (!v.has_grad()) throw std::logic_error("Adam: parameter '" + name + "' has no gradient");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < entries.size(); ++p) {
        Var& v = entries[p].second;
        auto& val = v.mutable_value();
        const auto g = v.grad();
        auto& m = m_[p];
        auto& s = v_[p];
        for (std::size_t i = 0; i < val.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            s[i] = cfg_.beta2 * s[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            val[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(s[i] / bc2) + cfg_.eps);
        }
    }
}

void adam_step(Adam& opt, ParamStore& store) { opt.step(store); }

void save_checkpoint(const ParamStore& store, const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, std::string>>& extra) {
    static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["seed"] = store.seed();
    manifest["format"] = "float64-le";
    manifest["tensors"] = nlohmann::json::array();
    std::ofstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("save_checkpoint: cannot write " + (dir / "params.bin").string());
    std::size_t offset = 0;
    for (const auto& [name, v] : store.entries()) {
        manifest["tensors"].push_back({{"name", name}, {"shape", v.shape()}, {"offset", offset}});
        bin.write(reinterpret_cast<const char*>(v.value().data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
        offset += v.size();
    }
    for (const auto& [k, val] : extra) manifest[k] = val;
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

void load_checkpoint(ParamStore& store, const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("load_checkpoint: missing manifest in " + dir.string());
    const auto manifest = nlohmann::json::parse(mf);
    std::ifstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("load_checkpoint: missing params.bin in " + dir.string());
    bin.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(bin.tellg());
    bin.seekg(0);
    std::vector<double> raw(bytes / sizeof(double), 0.0);
    bin.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    for (const auto& t : manifest.at("tensors")) {
        const auto name = t.at("name").get<std::string>();
        const auto shape = t.at("shape").get<Shape>();
        const auto offset = t.at("offset").get<std::size_t>();
        Var v = store.get(name);
        if (v.shape() != shape) throw std::runtime_error("load_checkpoint: shape mismatch for '" + name + "'");
        if (offset + v.size() > raw.size()) throw std::runtime_error("load_checkpoint: truncated params.bin");
        std::copy_n(raw.begin() + static_cast<std::ptrdiff_t>(offset), v.size(), v.mutable_value().begin());
    }
}

}  // namespace covers
