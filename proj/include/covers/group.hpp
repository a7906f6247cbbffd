#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace covers {

// Small exact integer matrix, row-major.
struct IntMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<int> data;

    IntMatrix() = default;
    IntMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0) {}

    static IntMatrix identity(int n);

    int& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    int operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    IntMatrix operator*(const IntMatrix& rhs) const;
    bool operator==(const IntMatrix& rhs) const = default;

    bool is_permutation() const;
};

enum class GroupKind { cyclic, dihedral };

struct GroupElement {
    int index = 0;
    bool operator==(const GroupElement&) const = default;
};

/// Finite symmetry group of a regular polygon: C_n (rotations) or D_n
/// (rotations and reflections).
///
/// Canonical element order: identity first, then for D_n the reflections
/// r^k s (k = 0..n-1), then the non-trivial rotations r^k. For D2 this
/// gives {e, m_x, m_y, r180}, where s = m_x negates y and r is the
/// rotation by 2*pi/n.
class GroupSpec {
public:
    GroupSpec(GroupKind kind, int n);

    static GroupSpec d2() { return {GroupKind::dihedral, 2}; }
    static GroupSpec cyclic(int n) { return {GroupKind::cyclic, n}; }
    static GroupSpec dihedral(int n) { return {GroupKind::dihedral, n}; }

    GroupKind kind() const { return kind_; }
    int order_parameter() const { return n_; }
    int size() const { return static_cast<int>(elems_.size()); }
    std::string name() const;

    std::vector<GroupElement> elements() const;
    GroupElement identity() const { return {0}; }
    GroupElement compose(GroupElement g, GroupElement h) const;
    GroupElement inverse(GroupElement g) const;

    // Exact 2x2 action on the plane (x, y). Only available when the
    // rotation angle is a multiple of 90 degrees (n in {1, 2, 4}).
    IntMatrix plane_matrix(GroupElement g) const;
    bool has_integer_plane_action() const { return n_ == 1 || n_ == 2 || n_ == 4; }

    // Rotation power k and reflection flag f, with g = r^k s^f.
    int rotation_power(GroupElement g) const { return elems_.at(g.index).k; }
    bool is_reflection(GroupElement g) const { return elems_.at(g.index).f != 0; }

    bool operator==(const GroupSpec& o) const { return kind_ == o.kind_ && n_ == o.n_; }

    void check(GroupElement g) const;

private:
    struct KF {
        int k;
        int f;
    };
    int index_of(int k, int f) const;

    GroupKind kind_;
    int n_;
    std::vector<KF> elems_;
    std::vector<int> table_;  // size x size multiplication table
};

// D2 element names in canonical order.
namespace d2 {
inline constexpr GroupElement e{0};
inline constexpr GroupElement m_x{1};
inline constexpr GroupElement m_y{2};
inline constexpr GroupElement r180{3};
}  // namespace d2

enum class RepKind { trivial, irrep, regular, direct_sum };

/// Matrix representation of a GroupSpec.
///
/// Irrep labels: "trivial", "det" (sign of reflection), "x" and "y" (the
/// sign characters by which an element acts on the x and y axes; D_n with
/// n <= 2 only), "xy" (product of x and y), "standard" (the 2-d action on
/// the plane; integer only for n in {1, 2, 4}).
class Representation {
public:
    static Representation trivial(const GroupSpec& g);
    static Representation irrep(const GroupSpec& g, std::string label);
    static Representation regular(const GroupSpec& g);
    static Representation direct_sum(std::vector<Representation> parts);
    // n copies of rep
    static Representation copies(const Representation& rep, int n);

    RepKind kind() const { return kind_; }
    const std::string& label() const { return label_; }
    int dimension() const { return dim_; }
    const GroupSpec& group() const { return group_; }
    const std::vector<Representation>& parts() const { return parts_; }
    std::string describe() const;

    IntMatrix matrix(GroupElement g) const;

    // Number of regular blocks if this rep is a direct sum made only of
    // regular representations (0 otherwise).
    int regular_multiplicity() const;

private:
    Representation(GroupSpec g, RepKind k, std::string label, int dim)
        : group_(g), kind_(k), label_(std::move(label)), dim_(dim) {}

    GroupSpec group_;
    RepKind kind_;
    std::string label_;
    int dim_;
    std::vector<Representation> parts_;
};

IntMatrix rep_matrix(const Representation& rep, GroupElement g);

// rep_matrix(g) * v.
std::vector<double> act_typed_vector(const Representation& rep, GroupElement g,
                                     std::span<const double> v);

/// Channel-major image, C x H x W.
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Image() = default;
    Image(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0) {}

    double& at(int c, int i, int j) { return data[(static_cast<std::size_t>(c) * height + i) * width + j]; }
    double at(int c, int i, int j) const { return data[(static_cast<std::size_t>(c) * height + i) * width + j]; }
    bool operator==(const Image&) const = default;
};

/// Pixel permutations realizing a group's plane action on an H x W grid.
/// Rows index y, columns index x; reflections mirror indices (i -> H-1-i).
class SpatialAction {
public:
    SpatialAction(GroupSpec group, int height, int width);

    const GroupSpec& group() const { return group_; }
    int height() const { return h_; }
    int width() const { return w_; }

    // Flat destination pixel of source pixel p under g.
    int map_pixel(GroupElement g, int p) const { return maps_[static_cast<std::size_t>(g.index)][static_cast<std::size_t>(p)]; }
    std::pair<int, int> map_cell(GroupElement g, int row, int col) const;
    const std::vector<int>& pixel_map(GroupElement g) const { return maps_.at(static_cast<std::size_t>(g.index)); }

    Image act(GroupElement g, const Image& image) const;

private:
    GroupSpec group_;
    int h_;
    int w_;
    std::vector<std::vector<int>> maps_;
};

Image act_image(const SpatialAction& action, GroupElement g, const Image& image);

}  // namespace covers
