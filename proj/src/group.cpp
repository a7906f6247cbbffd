#include "covers/group.hpp"

#include <stdexcept>

namespace covers {

IntMatrix IntMatrix::identity(int n) {
    IntMatrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1;
    return m;
}

IntMatrix IntMatrix::operator*(const IntMatrix& rhs) const {
    if (cols != rhs.rows) throw std::invalid_argument("IntMatrix: inner dimensions differ");
    IntMatrix out(rows, rhs.cols);
    for (int i = 0; i < rows; ++i)
        for (int k = 0; k < cols; ++k) {
            const int a = (*this)(i, k);
            if (a == 0) continue;
            for (int j = 0; j < rhs.cols; ++j) out(i, j) += a * rhs(k, j);
        }
    return out;
}

bool IntMatrix::is_permutation() const {
    if (rows != cols) return false;
    for (int i = 0; i < rows; ++i) {
        int row_ones = 0;
        int col_ones = 0;
        for (int j = 0; j < cols; ++j) {
            const int a = (*this)(i, j);
            const int b = (*this)(j, i);
            if ((a != 0 && a != 1) || (b != 0 && b != 1)) return false;
            row_ones += a;
            col_ones += b;
        }
        if (row_ones != 1 || col_ones != 1) return false;
    }
    return true;
}

GroupSpec::GroupSpec(GroupKind kind, int n) : kind_(kind), n_(n) {
    if (n < 1) throw std::invalid_argument("GroupSpec: order parameter must be positive");
    elems_.push_back({0, 0});
    if (kind == GroupKind::dihedral)
        for (int k = 0; k < n; ++k) elems_.push_back({k, 1});
    for (int k = 1; k < n; ++k) elems_.push_back({k, 0});

    const int sz = size();
    table_.resize(static_cast<std::size_t>(sz) * sz);
    for (int a = 0; a < sz; ++a)
        for (int b = 0; b < sz; ++b) {
            // r^k1 s^f1 r^k2 s^f2 = r^(k1 + (-1)^f1 k2) s^(f1 + f2)
            const auto [k1, f1] = elems_[a];
            const auto [k2, f2] = elems_[b];
            const int k = ((k1 + (f1 ? -k2 : k2)) % n + n) % n;
            const int f = (f1 + f2) % 2;
            table_[static_cast<std::size_t>(a) * sz + b] = index_of(k, f);
        }
}

int GroupSpec::index_of(int k, int f) const {
    for (int i = 0; i < size(); ++i)
        if (elems_[i].k == k && elems_[i].f == f) return i;
    throw std::logic_error("GroupSpec: element not found");
}

std::string GroupSpec::name() const {
    return (kind_ == GroupKind::cyclic ? "C" : "D") + std::to_string(n_);
}

void GroupSpec::check(GroupElement g) const {
    if (g.index < 0 || g.index >= size())
        throw std::out_of_range("GroupElement index " + std::to_string(g.index) + " not in " + name());
}

std::vector<GroupElement> GroupSpec::elements() const {
    std::vector<GroupElement> out;
    out.reserve(elems_.size());
    for (int i = 0; i < size(); ++i) out.push_back({i});
    return out;
}

GroupElement GroupSpec::compose(GroupElement g, GroupElement h) const {
    check(g);
    check(h);
    return {table_[static_cast<std::size_t>(g.index) * size() + h.index]};
}

GroupElement GroupSpec::inverse(GroupElement g) const {
    check(g);
    for (int i = 0; i < size(); ++i)
        if (compose(g, {i}).index == 0) return {i};
    throw std::logic_error("GroupSpec: no inverse");
}

IntMatrix GroupSpec::plane_matrix(GroupElement g) const {
    check(g);
    if (!has_integer_plane_action())
        throw std::invalid_argument("GroupSpec: " + name() + " has no exact integer plane action");
    const auto [k, f] = elems_[g.index];
    // rotation by k * 360/n degrees, as a multiple of 90 degrees
    const int quarter = (k * 4 / n_) % 4;
    static constexpr int cs[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};  // (cos, sin)
    const int c = cs[quarter][0];
    const int s = cs[quarter][1];
    IntMatrix rot(2, 2);
    rot(0, 0) = c;
    rot(0, 1) = -s;
    rot(1, 0) = s;
    rot(1, 1) = c;
    if (!f) return rot;
    IntMatrix refl = IntMatrix::identity(2);
    refl(1, 1) = -1;
    return rot * refl;
}

// ---------------------------------------------------------------------------

Representation Representation::trivial(const GroupSpec& g) {
    return {g, RepKind::trivial, "trivial", 1};
}

Representation Representation::irrep(const GroupSpec& g, std::string label) {
    if (label == "trivial") return trivial(g);
    if (label == "det" || label == "x" || label == "y" || label == "xy") {
        if (label != "det" && g.order_parameter() > 2)
            throw std::invalid_argument("Representation: character '" + label + "' is only defined for n <= 2");
        return {g, RepKind::irrep, std::move(label), 1};
    }
    if (label == "standard") {
        if (!g.has_integer_plane_action())
            throw std::invalid_argument("Representation: standard irrep needs n in {1, 2, 4}");
        return {g, RepKind::irrep, std::move(label), 2};
    }
    throw std::invalid_argument("Representation: unknown irrep label '" + label + "'");
}

Representation Representation::regular(const GroupSpec& g) {
    return {g, RepKind::regular, "regular", g.size()};
}

Representation Representation::direct_sum(std::vector<Representation> parts) {
    if (parts.empty()) throw std::invalid_argument("Representation: empty direct sum");
    int dim = 0;
    for (const auto& p : parts) {
        if (!(p.group() == parts.front().group()))
            throw std::invalid_argument("Representation: direct sum over different groups");
        dim += p.dimension();
    }
    Representation r(parts.front().group(), RepKind::direct_sum, "sum", dim);
    r.parts_ = std::move(parts);
    return r;
}

Representation Representation::copies(const Representation& rep, int n) {
    return direct_sum(std::vector<Representation>(static_cast<std::size_t>(n), rep));
}

std::string Representation::describe() const {
    if (kind_ != RepKind::direct_sum) return label_;
    std::string s = "(";
    for (std::size_t i = 0; i < parts_.size(); ++i) s += (i ? " + " : "") + parts_[i].describe();
    return s + ")";
}

int Representation::regular_multiplicity() const {
    if (kind_ == RepKind::regular) return 1;
    if (kind_ != RepKind::direct_sum) return 0;
    int n = 0;
    for (const auto& p : parts_) {
        const int m = p.regular_multiplicity();
        if (m == 0) return 0;
        n += m;
    }
    return n;
}

IntMatrix Representation::matrix(GroupElement g) const {
    group_.check(g);
    switch (kind_) {
        case RepKind::trivial:
            return IntMatrix::identity(1);
        case RepKind::regular: {
            const int n = group_.size();
            IntMatrix m(n, n);
            for (int h = 0; h < n; ++h) m(group_.compose(g, {h}).index, h) = 1;
            return m;
        }
        case RepKind::irrep: {
            if (label_ == "standard") return group_.plane_matrix(g);
            IntMatrix m(1, 1);
            if (label_ == "det") {
                m(0, 0) = group_.is_reflection(g) ? -1 : 1;
            } else {
                const IntMatrix p = group_.plane_matrix(g);
                const int sx = p(0, 0);
                const int sy = p(1, 1);
                m(0, 0) = label_ == "x" ? sx : label_ == "y" ? sy : sx * sy;
            }
            return m;
        }
        case RepKind::direct_sum: {
            IntMatrix m(dim_, dim_);
            int off = 0;
            for (const auto& p : parts_) {
                const IntMatrix b = p.matrix(g);
                for (int i = 0; i < b.rows; ++i)
                    for (int j = 0; j < b.cols; ++j) m(off + i, off + j) = b(i, j);
                off += b.rows;
            }
            return m;
        }
    }
    throw std::logic_error("Representation: bad kind");
}

IntMatrix rep_matrix(const Representation& rep, GroupElement g) { return rep.matrix(g); }

std::vector<double> act_typed_vector(const Representation& rep, GroupElement g, std::span<const double> v) {
    if (static_cast<int>(v.size()) != rep.dimension())
        throw std::invalid_argument("act_typed_vector: vector length " + std::to_string(v.size()) +
                                    " != representation dimension " + std::to_string(rep.dimension()));
    const IntMatrix m = rep.matrix(g);
    std::vector<double> out(v.size(), 0.0);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j)
            if (m(i, j) != 0) out[static_cast<std::size_t>(i)] += m(i, j) * v[static_cast<std::size_t>(j)];
    return out;
}

// ---------------------------------------------------------------------------

SpatialAction::SpatialAction(GroupSpec group, int height, int width) : group_(group), h_(height), w_(width) {
    if (height < 1 || width < 1) throw std::invalid_argument("SpatialAction: empty grid");
    for (auto g : group_.elements()) {
        const IntMatrix m = group_.plane_matrix(g);
        if ((m(0, 1) != 0 || m(1, 0) != 0) && height != width)
            throw std::invalid_argument("SpatialAction: quarter turns need a square grid");
        std::vector<int> map(static_cast<std::size_t>(h_) * w_);
        for (int i = 0; i < h_; ++i)
            for (int j = 0; j < w_; ++j) {
                // doubled centered coordinates keep everything integral
                const int x = 2 * j - (w_ - 1);
                const int y = 2 * i - (h_ - 1);
                const int xn = m(0, 0) * x + m(0, 1) * y;
                const int yn = m(1, 0) * x + m(1, 1) * y;
                const int jn = (xn + w_ - 1) / 2;
                const int in = (yn + h_ - 1) / 2;
                map[static_cast<std::size_t>(i) * w_ + j] = in * w_ + jn;
            }
        maps_.push_back(std::move(map));
    }
}

std::pair<int, int> SpatialAction::map_cell(GroupElement g, int row, int col) const {
    const int p = map_pixel(g, row * w_ + col);
    return {p / w_, p % w_};
}

Image SpatialAction::act(GroupElement g, const Image& image) const {
    group_.check(g);
    if (image.height != h_ || image.width != w_)
        throw std::invalid_argument("act_image: image is " + std::to_string(image.height) + "x" +
                                    std::to_string(image.width) + ", action grid is " + std::to_string(h_) + "x" +
                                    std::to_string(w_));
    Image out(image.channels, h_, w_);
    const auto& map = maps_[static_cast<std::size_t>(g.index)];
    const std::size_t plane = static_cast<std::size_t>(h_) * w_;
    for (int c = 0; c < image.channels; ++c) {
        const double* src = image.data.data() + c * plane;
        double* dst = out.data.data() + c * plane;
        for (std::size_t p = 0; p < plane; ++p) dst[map[p]] = src[p];
    }
    return out;
}

Image act_image(const SpatialAction& action, GroupElement g, const Image& image) { return action.act(g, image); }

}  // namespace covers
