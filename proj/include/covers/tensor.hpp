#pragma once

#include "covers/group.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

// Minimal reverse-mode automatic differentiation over dense float64 arrays.
//
// A Var is a handle to a node on an implicit tape: every op records its
// parents and a backward closure, and backward(loss) walks the graph in
// reverse topological order. Graphs are single-use; parameters are leaf
// Vars that survive across graphs and accumulate gradients until cleared.

namespace covers {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

struct Array {
    Shape shape;
    std::vector<double> data;

    Array() = default;
    explicit Array(Shape s, double fill = 0.0) : shape(std::move(s)), data(shape_size(shape), fill) {}
    Array(Shape s, std::vector<double> values);

    std::size_t size() const { return data.size(); }
    int dim(int axis) const { return shape.at(static_cast<std::size_t>(axis)); }
    bool operator==(const Array&) const = default;
};

struct Node;

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    const Array& array() const;
    const Shape& shape() const;
    std::span<const double> value() const;
    double item() const;
    std::span<const double> grad() const;
    bool has_grad() const;
    bool requires_grad() const;
    std::size_t size() const { return array().size(); }

    const std::optional<Representation>& rep_tag() const;
    Var& tag(Representation rep);

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& shared() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

    // Parameter-only mutation (used by optimizers and checkpoint loading).
    std::vector<double>& mutable_value();
    std::vector<double>& mutable_grad();
    void zero_grad();

private:
    std::shared_ptr<Node> node_;
};

struct Node {
    Array value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    std::optional<Representation> rep_tag;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

Var constant(Array a);
Var constant(Shape s, std::vector<double> values);
Var scalar(double v);
Var parameter(Array a);

// Reverse sweep from a single-element root.
void backward(const Var& root);

namespace ops {

// y[N, out] = x[N, in] W[out, in]^T + b[out]; b may be empty Var.
Var affine(const Var& x, const Var& w, const Var& b);
// C[m, n] = A[m, k] B[k, n]
Var matmul(const Var& a, const Var& b);
// x: [N, C, H, W], k: [O, C, kh, kw]
Var conv2d(const Var& x, const Var& k, int stride, int pad);
// Adds b[C] over the channel axis of [N, C, ...].
Var add_channel_bias(const Var& x, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var relu(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var square(const Var& a);
Var clamp(const Var& a, double lo, double hi);
// Elementwise min; ties route the gradient to `a`.
Var minimum(const Var& a, const Var& b);

Var sum(const Var& a);
Var mean(const Var& a);
// Sum over the last axis: [..., D] -> [...]
Var sum_last(const Var& a);
// Max over one axis; gradient flows to the first arg-max on ties.
Var max_over_axis(const Var& a, int axis);
Var reshape(const Var& a, Shape s);
Var concat(const std::vector<Var>& parts, int axis);
Var slice(const Var& a, int axis, int begin, int end);
// out.flat[i] = a.flat[index[i]] (index into the whole array).
Var gather(const Var& a, std::shared_ptr<const std::vector<int>> index, Shape out_shape);
// out[r, j] = a.flat[index[j]] for every row r of a batch: a is [N, K], out is [N, J].
Var gather_rows(const Var& a, std::shared_ptr<const std::vector<int>> index);
// v[D] -> [N, D]
Var broadcast_rows(const Var& v, int n);

// Sum over the last axis of the diagonal-Gaussian log density:
// mean [N, D], log_std [D], action [N, D] (constant) -> [N].
Var gaussian_logprob(const Var& mean, const Var& log_std, const Array& action);

}  // namespace ops

/// Named trainable tensors with deterministic iteration order.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}

    std::uint64_t seed() const { return seed_; }

    // Uniform(-bound, bound) init with bound = gain / sqrt(fan_in).
    Var add_uniform(const std::string& name, Shape shape, int fan_in, double gain = 1.0);
    Var add_constant(const std::string& name, Shape shape, double value);
    Var add(const std::string& name, Array init);

    const Var& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
    std::size_t count() const;  // scalar parameter count

    void zero_grad();
    double grad_norm() const;
    void scale_grads(double s);

    // Values copied into a fresh, independent store (same names and seed).
    ParamStore clone() const;
    bool bitwise_equal(const ParamStore& other) const;
    void copy_values_from(const ParamStore& other);

private:
    std::uint64_t seed_;
    std::mt19937_64 rng_;
    std::vector<std::pair<std::string, Var>> entries_;
};

double clip_grad_norm(ParamStore& store, double max_norm);

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
    // Throws std::logic_error if any parameter has no gradient buffer.
    void step(ParamStore& store);
    void set_lr(double lr) { cfg_.lr = lr; }
    const AdamConfig& config() const { return cfg_; }
    long steps() const { return t_; }

private:
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

void adam_step(Adam& opt, ParamStore& store);

// Checkpoint: <dir>/params.bin holds raw little-endian float64 values of every
// tensor in store order; <dir>/manifest.json lists names, shapes, offsets, the
// seed, and any extra string fields.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, std::string>>& extra = {});
void load_checkpoint(ParamStore& store, const std::filesystem::path& dir);

}  // namespace covers
