#pragma once

#include "covers/group.hpp"
#include "covers/observation.hpp"
#include "covers/tensor.hpp"

#include <Eigen/Core>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace covers {

// Stacked constraint matrix (rho_in(g)^T (x) I - I (x) rho_out(g)) over all
// group elements, acting on column-major vec(W) with W of shape out x in.
Eigen::MatrixXd equivariance_constraints(const Representation& rep_in, const Representation& rep_out);

/// Orthonormal (Frobenius) basis of {W : rho_out(g) W = W rho_in(g) for all g},
/// computed as the numerical nullspace of the stacked constraints. Singular
/// values below 1e-8 of the largest count as zero. May be empty.
std::vector<Eigen::MatrixXd> solve_equivariant_basis(const Representation& rep_in, const Representation& rep_out);

/// Linear map W = sum_i c_i B_i constrained to commute with the group action.
/// Direct sums are handled block by block, with one basis per pair of
/// summand types, so wide layers never build a dense constraint system.
class EquivariantLinear {
public:
    EquivariantLinear(ParamStore& store, const std::string& name, Representation rep_in, Representation rep_out,
                      bool bias = true, double gain = 1.0);

    // x: [N, dim(rep_in)] -> [N, dim(rep_out)]
    Var forward(const Var& x) const;
    Var weight() const;  // [out, in], differentiable in the coefficients
    Var bias() const;    // [out] or empty

    const Representation& rep_in() const { return rep_in_; }
    const Representation& rep_out() const { return rep_out_; }
    std::size_t coefficient_count() const;

private:
    struct Expansion {
        std::vector<Var> coeffs;    // one [pairs_t, k_t] per block type
        std::vector<Var> bases;     // matching constant [k_t, block_t]
        std::shared_ptr<const std::vector<int>> index;  // into concat(flattened blocks, 0)
        Shape shape;
        Var realize() const;
    };
    static Expansion build(ParamStore& store, const std::string& name, const Representation& in,
                           const Representation& out, int fan_in, double gain);

    Representation rep_in_;
    Representation rep_out_;
    Expansion w_;
    std::optional<Expansion> b_;
};

enum class FieldType { trivial, regular };

/// Group-steerable 2-d convolution with regular output fields.
///
/// Free parameters live on one representative per orbit; the full kernel is
/// produced by copying them to transformed positions so that
/// k(g x) = rho_out(g) k(x) rho_in(g^-1) holds exactly.
class EquivariantConv {
public:
    EquivariantConv(ParamStore& store, const std::string& name, const GroupSpec& group, FieldType in_type,
                    int in_fields, int out_fields, int kernel, int stride, int pad, double gain = 1.0);

    Var expand_kernel() const;  // [out_fields * |G|, in_channels, k, k]
    Var expand_bias() const;    // [out_fields * |G|]
    Var forward(const Var& x) const;

    int in_channels() const { return in_channels_; }
    int out_channels() const { return out_fields_ * group_.size(); }
    int kernel() const { return kernel_; }
    const GroupSpec& group() const { return group_; }
    const Var& free_kernel() const { return free_k_; }

private:
    GroupSpec group_;
    int in_channels_;
    int out_fields_;
    int kernel_;
    int stride_;
    int pad_;
    Var free_k_;
    Var free_b_;
    std::shared_ptr<const std::vector<int>> kernel_index_;
    std::shared_ptr<const std::vector<int>> bias_index_;
    Shape kernel_shape_;
};

// Max over each |G|-sized block of regular channels: [N, F*|G|] -> [N, F].
Var group_pool(const Var& features, int group_size);

// Transforms a regular-field feature map [C*|G|, H, W] by g: pixels move by
// the spatial action, each field's slots permute by the regular rep.
std::vector<double> act_regular_feature_map(const SpatialAction& act, GroupElement g, std::span<const double> fmap,
                                            int fields);

// Index map turning [F*|G|, S, S] regular feature maps into F*S*S regular
// vectors: out block (f, p), slot h reads channel (f, h) at pixel h.p.
std::vector<int> flatten_regular_index(const SpatialAction& act, int fields);

struct ExtractorConfig {
    int conv1_fields = 8;
    int conv2_fields = 16;
    int kernel = 4;
    int stride = 2;
    int pad = 1;
    int mlp_width = 8;
    double init_gain = 2.449489742783178;  // uniform bound gain / sqrt(fan_in); sqrt(6) is He init
};

struct Features {
    Var equi;  // [N, D] typed by feature_rep (equivariant extractors)
    Var inv;   // [N, F] invariant under the joint observation action
};

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual Features extract(const ObsBatch& batch) const = 0;
    virtual int feature_dim() const = 0;
    virtual int invariant_dim() const = 0;
    virtual bool is_equivariant() const = 0;
};

/// h_equi(s) = concat(h_eConv(image), h_eMLP(state, aux)); h_inv = group max pool.
class EquivariantExtractor final : public FeatureExtractor {
public:
    EquivariantExtractor(ParamStore& store, const GroupSpec& group, const ExtractorConfig& cfg);

    Features extract(const ObsBatch& batch) const override;
    int feature_dim() const override { return feature_rep_.dimension(); }
    int invariant_dim() const override { return feature_rep_.dimension() / group_.size(); }
    bool is_equivariant() const override { return true; }

    const Representation& feature_rep() const { return feature_rep_; }
    const GroupSpec& group() const { return group_; }
    const EquivariantConv& conv1() const { return conv1_; }
    const EquivariantConv& conv2() const { return conv2_; }
    const EquivariantLinear& mlp1() const { return mlp1_; }
    const EquivariantLinear& mlp2() const { return mlp2_; }

private:
    GroupSpec group_;
    SpatialAction final_grid_;
    EquivariantConv conv1_;
    EquivariantConv conv2_;
    EquivariantLinear mlp1_;
    EquivariantLinear mlp2_;
    std::shared_ptr<const std::vector<int>> flatten_index_;
    Representation feature_rep_;
};

/// Unconstrained conv + MLP with the same layout, sized to match the
/// equivariant extractor's trainable parameter count.
class CnnExtractor final : public FeatureExtractor {
public:
    CnnExtractor(ParamStore& store, int conv1_channels, int conv2_channels, int mlp_width, const ExtractorConfig& geo);

    Features extract(const ObsBatch& batch) const override;
    int feature_dim() const override { return feature_dim_; }
    int invariant_dim() const override { return feature_dim_; }
    bool is_equivariant() const override { return false; }

private:
    ExtractorConfig geo_;
    Var k1_, b1_, k2_, b2_;
    Var w1_, c1_, w2_, c2_;
    int feature_dim_;
};

// Parameter count of the equivariant extractor for a config (built in a scratch store).
std::size_t equivariant_extractor_params(const ExtractorConfig& cfg);
// Picks CNN channel widths whose parameter count is closest to the equivariant one.
struct CnnWidths {
    int conv1 = 0;
    int conv2 = 0;
    int mlp = 0;
};
CnnWidths matched_cnn_widths(const ExtractorConfig& cfg);

}  // namespace covers
