#include "covers/equivariant.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <map>
#include <stdexcept>

namespace covers {

namespace {

Eigen::MatrixXd to_eigen(const IntMatrix& m) {
    Eigen::MatrixXd out(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) out(i, j) = m(i, j);
    return out;
}

struct Atom {
    Representation rep;
    int offset;
};

void flatten_atoms(const Representation& rep, int& offset, std::vector<Atom>& out) {
    if (rep.kind() == RepKind::direct_sum) {
        for (const auto& p : rep.parts()) flatten_atoms(p, offset, out);
        return;
    }
    out.push_back({rep, offset});
    offset += rep.dimension();
}

std::vector<Atom> atoms_of(const Representation& rep) {
    std::vector<Atom> out;
    int offset = 0;
    flatten_atoms(rep, offset, out);
    return out;
}

}  // namespace

Eigen::MatrixXd equivariance_constraints(const Representation& rep_in, const Representation& rep_out) {
    if (!(rep_in.group() == rep_out.group())) throw std::invalid_argument("equivariance_constraints: different groups");
    const int din = rep_in.dimension();
    const int dout = rep_out.dimension();
    const int d = din * dout;
    const auto elements = rep_in.group().elements();
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(elements.size()) * d, d);
    const Eigen::MatrixXd eye_in = Eigen::MatrixXd::Identity(din, din);
    const Eigen::MatrixXd eye_out = Eigen::MatrixXd::Identity(dout, dout);
    for (std::size_t e = 0; e < elements.size(); ++e) {
        const Eigen::MatrixXd ri = to_eigen(rep_in.matrix(elements[e]));
        const Eigen::MatrixXd ro = to_eigen(rep_out.matrix(elements[e]));
        auto block = c.block(static_cast<Eigen::Index>(e) * d, 0, d, d);
        // (A kron B)[i*rB + k, j*cB + l] = A[i, j] B[k, l]
        for (int i = 0; i < din; ++i)
            for (int j = 0; j < din; ++j) {
                block.block(i * dout, j * dout, dout, dout) += ri(j, i) * eye_out;
                block.block(i * dout, j * dout, dout, dout) -= eye_in(i, j) * ro;
            }
    }
    return c;
}

std::vector<Eigen::MatrixXd> solve_equivariant_basis(const Representation& rep_in, const Representation& rep_out) {
    const int din = rep_in.dimension();
    const int dout = rep_out.dimension();
    const Eigen::MatrixXd c = equivariance_constraints(rep_in, rep_out);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? 1e-8 * sv(0) : 0.0;
    std::vector<Eigen::MatrixXd> basis;
    for (Eigen::Index k = 0; k < c.cols(); ++k) {
        const double s = k < sv.size() ? sv(k) : 0.0;
        if (s > cutoff && sv(0) > 0.0) continue;
        Eigen::VectorXd v = svd.matrixV().col(k);
        // sign convention: first clearly nonzero entry positive
        for (Eigen::Index i = 0; i < v.size(); ++i)
            if (std::abs(v(i)) > 1e-9) {
                if (v(i) < 0) v = -v;
                break;
            }
        basis.push_back(Eigen::Map<Eigen::MatrixXd>(v.data(), dout, din));  // column-major vec
    }
    return basis;
}

// ---------------------------------------------------------------------------

Var EquivariantLinear::Expansion::realize() const {
    std::vector<Var> flat;
    for (std::size_t t = 0; t < coeffs.size(); ++t) {
        Var blocks = ops::matmul(coeffs[t], bases[t]);
        flat.push_back(ops::reshape(blocks, {static_cast<int>(blocks.size())}));
    }
    flat.push_back(constant(Array({1})));
    return ops::gather(ops::concat(flat, 0), index, shape);
}

EquivariantLinear::Expansion EquivariantLinear::build(ParamStore& store, const std::string& name,
                                                      const Representation& in, const Representation& out, int fan_in,
                                                      double gain) {
    const auto ain = atoms_of(in);
    const auto aout = atoms_of(out);
    const int din = in.dimension();
    const int dout = out.dimension();

    struct TypeInfo {
        std::vector<Eigen::MatrixXd> basis;
        std::vector<std::pair<int, int>> pairs;  // (out atom, in atom)
    };
    std::map<std::pair<std::string, std::string>, int> type_of;
    std::vector<TypeInfo> types;
    for (int o = 0; o < static_cast<int>(aout.size()); ++o)
        for (int i = 0; i < static_cast<int>(ain.size()); ++i) {
            const auto key = std::pair{aout[static_cast<std::size_t>(o)].rep.describe(), ain[static_cast<std::size_t>(i)].rep.describe()};
            auto it = type_of.find(key);
            if (it == type_of.end()) {
                it = type_of.emplace(key, static_cast<int>(types.size())).first;
                types.push_back({solve_equivariant_basis(ain[static_cast<std::size_t>(i)].rep, aout[static_cast<std::size_t>(o)].rep), {}});
            }
            types[static_cast<std::size_t>(it->second)].pairs.emplace_back(o, i);
        }

    Expansion e;
    e.shape = {dout, din};
    std::vector<int> index(static_cast<std::size_t>(dout) * din, -1);
    int offset = 0;
    for (std::size_t t = 0; t < types.size(); ++t) {
        const auto& ti = types[t];
        if (ti.basis.empty()) continue;
        const int k = static_cast<int>(ti.basis.size());
        const int bo = static_cast<int>(ti.basis[0].rows());
        const int bi = static_cast<int>(ti.basis[0].cols());
        const int block = bo * bi;
        const int pairs = static_cast<int>(ti.pairs.size());
        const std::string pname = name + ".c" + std::to_string(e.coeffs.size());
        if (gain == 0.0)
            e.coeffs.push_back(store.add_constant(pname, {pairs, k}, 0.0));
        else
            e.coeffs.push_back(store.add_uniform(pname, {pairs, k}, fan_in, gain * std::sqrt(static_cast<double>(block) / k)));
        Array basis({k, block});
        for (int b = 0; b < k; ++b)
            for (int r = 0; r < bo; ++r)
                for (int c = 0; c < bi; ++c)
                    basis.data[static_cast<std::size_t>(b) * block + r * bi + c] = ti.basis[static_cast<std::size_t>(b)](r, c);
        e.bases.push_back(constant(std::move(basis)));
        for (int p = 0; p < pairs; ++p) {
            const auto [o, i] = ti.pairs[static_cast<std::size_t>(p)];
            const int ro = aout[static_cast<std::size_t>(o)].offset;
            const int co = ain[static_cast<std::size_t>(i)].offset;
            for (int r = 0; r < bo; ++r)
                for (int c = 0; c < bi; ++c)
                    index[static_cast<std::size_t>(ro + r) * din + co + c] = offset + p * block + r * bi + c;
        }
        offset += pairs * block;
    }
    for (int& v : index)
        if (v < 0) v = offset;  // the trailing zero slot
    e.index = std::make_shared<const std::vector<int>>(std::move(index));
    return e;
}

EquivariantLinear::EquivariantLinear(ParamStore& store, const std::string& name, Representation rep_in,
                                     Representation rep_out, bool bias, double gain)
    : rep_in_(std::move(rep_in)), rep_out_(std::move(rep_out)) {
    if (!(rep_in_.group() == rep_out_.group())) throw std::invalid_argument("EquivariantLinear: different groups");
    w_ = build(store, name + ".w", rep_in_, rep_out_, rep_in_.dimension(), gain);
    if (bias) {
        auto b = build(store, name + ".b", Representation::trivial(rep_in_.group()), rep_out_, 1, 0.0);
        if (!b.coeffs.empty()) {
            b.shape = {rep_out_.dimension()};
            b_ = std::move(b);
        }
    }
}

Var EquivariantLinear::weight() const { return w_.realize(); }
Var EquivariantLinear::bias() const { return b_ ? b_->realize() : Var{}; }
Var EquivariantLinear::forward(const Var& x) const {
    Var y = ops::affine(x, weight(), bias());
    y.tag(rep_out_);
    return y;
}

std::size_t EquivariantLinear::coefficient_count() const {
    std::size_t n = 0;
    for (const auto& c : w_.coeffs) n += c.size();
    if (b_)
        for (const auto& c : b_->coeffs) n += c.size();
    return n;
}

// ---------------------------------------------------------------------------

EquivariantConv::EquivariantConv(ParamStore& store, const std::string& name, const GroupSpec& group,
                                 FieldType in_type, int in_fields, int out_fields, int kernel, int stride, int pad,
                                 double gain)
    : group_(group),
      in_channels_(in_type == FieldType::regular ? in_fields * group.size() : in_fields),
      out_fields_(out_fields),
      kernel_(kernel),
      stride_(stride),
      pad_(pad) {
    const int gs = group.size();
    const int kk = kernel * kernel;
    const SpatialAction kgrid(group, kernel, kernel);
    const int fan_in = in_channels_ * kk;
    if (in_type == FieldType::trivial)
        free_k_ = store.add_uniform(name + ".k", {out_fields, in_fields, kernel, kernel}, fan_in, gain);
    else
        free_k_ = store.add_uniform(name + ".k", {out_fields, in_fields, gs, kernel, kernel}, fan_in, gain);
    free_b_ = store.add_constant(name + ".b", {out_fields}, 0.0);

    kernel_shape_ = {out_fields * gs, in_channels_, kernel, kernel};
    std::vector<int> index(shape_size(kernel_shape_));
    for (int o = 0; o < out_fields; ++o)
        for (int h = 0; h < gs; ++h) {
            const GroupElement hinv = group.inverse({h});
            for (int c = 0; c < in_channels_; ++c)
                for (int p = 0; p < kk; ++p) {
                    const int q = kgrid.map_pixel(hinv, p);
                    int src = 0;
                    if (in_type == FieldType::trivial) {
                        src = (o * in_fields + c) * kk + q;
                    } else {
                        const int cf = c / gs;
                        const int hp = c % gs;
                        const int rel = group.compose(hinv, {hp}).index;
                        src = ((o * in_fields + cf) * gs + rel) * kk + q;
                    }
                    index[(static_cast<std::size_t>(o * gs + h) * in_channels_ + c) * kk + p] = src;
                }
        }
    kernel_index_ = std::make_shared<const std::vector<int>>(std::move(index));
    std::vector<int> bidx(static_cast<std::size_t>(out_fields) * gs);
    for (int o = 0; o < out_fields; ++o)
        for (int h = 0; h < gs; ++h) bidx[static_cast<std::size_t>(o * gs + h)] = o;
    bias_index_ = std::make_shared<const std::vector<int>>(std::move(bidx));
}

Var EquivariantConv::expand_kernel() const { return ops::gather(free_k_, kernel_index_, kernel_shape_); }
Var EquivariantConv::expand_bias() const {
    return ops::gather(free_b_, bias_index_, {out_fields_ * group_.size()});
}
Var EquivariantConv::forward(const Var& x) const {
    return ops::add_channel_bias(ops::conv2d(x, expand_kernel(), stride_, pad_), expand_bias());
}

Var group_pool(const Var& features, int group_size) {
    if (features.shape().size() != 2) throw std::invalid_argument("group_pool: expects [N, C]");
    const int n = features.shape()[0];
    const int c = features.shape()[1];
    if (group_size <= 0 || c % group_size != 0)
        throw std::invalid_argument("group_pool: " + std::to_string(c) + " channels not divisible by |G| = " +
                                    std::to_string(group_size));
    return ops::max_over_axis(ops::reshape(features, {n, c / group_size, group_size}), 2);
}

std::vector<double> act_regular_feature_map(const SpatialAction& act, GroupElement g, std::span<const double> fmap,
                                            int fields) {
    const int gs = act.group().size();
    const std::size_t plane = static_cast<std::size_t>(act.height()) * act.width();
    if (fmap.size() != static_cast<std::size_t>(fields) * gs * plane)
        throw std::invalid_argument("act_regular_feature_map: size mismatch");
    std::vector<double> out(fmap.size());
    for (int f = 0; f < fields; ++f)
        for (int h = 0; h < gs; ++h) {
            const int gh = act.group().compose(g, {h}).index;
            const double* src = fmap.data() + static_cast<std::size_t>(f * gs + h) * plane;
            double* dst = out.data() + static_cast<std::size_t>(f * gs + gh) * plane;
            for (std::size_t p = 0; p < plane; ++p) dst[act.map_pixel(g, static_cast<int>(p))] = src[p];
        }
    return out;
}

std::vector<int> flatten_regular_index(const SpatialAction& act, int fields) {
    const int gs = act.group().size();
    const int plane = act.height() * act.width();
    std::vector<int> index(static_cast<std::size_t>(fields) * plane * gs);
    for (int f = 0; f < fields; ++f)
        for (int p = 0; p < plane; ++p)
            for (int h = 0; h < gs; ++h)
                index[(static_cast<std::size_t>(f) * plane + p) * gs + h] = (f * gs + h) * plane + act.map_pixel({h}, p);
    return index;
}

// ---------------------------------------------------------------------------

namespace {

int conv_out_size(int in, int kernel, int stride, int pad) {
    if ((in + 2 * pad - kernel) % stride != 0)
        throw std::invalid_argument("extractor: strided sampling grid is not mirror symmetric (size " +
                                    std::to_string(in) + ", kernel " + std::to_string(kernel) + ", stride " +
                                    std::to_string(stride) + ", pad " + std::to_string(pad) + ")");
    return (in + 2 * pad - kernel) / stride + 1;
}

int final_grid(const ExtractorConfig& cfg) {
    return conv_out_size(conv_out_size(kArenaSize, cfg.kernel, cfg.stride, cfg.pad), cfg.kernel, cfg.stride, cfg.pad);
}

Var image_var(const ObsBatch& b) { return constant(b.images); }
Var vector_var(const ObsBatch& b) { return constant(b.vectors); }

}  // namespace

EquivariantExtractor::EquivariantExtractor(ParamStore& store, const GroupSpec& group, const ExtractorConfig& cfg)
    : group_(group),
      final_grid_(group, final_grid(cfg), final_grid(cfg)),
      conv1_(store, "extractor.conv1", group, FieldType::trivial, kInputChannels, cfg.conv1_fields, cfg.kernel,
             cfg.stride, cfg.pad, cfg.init_gain),
      conv2_(store, "extractor.conv2", group, FieldType::regular, cfg.conv1_fields, cfg.conv2_fields, cfg.kernel,
             cfg.stride, cfg.pad, cfg.init_gain),
      mlp1_(store, "extractor.mlp1", vector_input_rep(group),
            Representation::copies(Representation::regular(group), cfg.mlp_width), true, cfg.init_gain),
      mlp2_(store, "extractor.mlp2", Representation::copies(Representation::regular(group), cfg.mlp_width),
            Representation::copies(Representation::regular(group), cfg.mlp_width), true, cfg.init_gain),
      flatten_index_(std::make_shared<const std::vector<int>>(flatten_regular_index(final_grid_, cfg.conv2_fields))),
      feature_rep_(Representation::copies(
          Representation::regular(group),
          cfg.conv2_fields * final_grid_.height() * final_grid_.width() + cfg.mlp_width)) {}

Features EquivariantExtractor::extract(const ObsBatch& batch) const {
    const int n = batch.size();
    if (batch.images.shape != Shape{n, kInputChannels, kArenaSize, kArenaSize} ||
        batch.vectors.shape != Shape{n, kVectorDim})
        throw std::invalid_argument("EquivariantExtractor: observation batch has the wrong modality shapes");
    Var x = ops::relu(conv1_.forward(image_var(batch)));
    x = ops::relu(conv2_.forward(x));
    x = ops::reshape(x, {n, static_cast<int>(x.size()) / std::max(n, 1)});
    Var img = ops::gather_rows(x, flatten_index_);
    Var vec = ops::relu(mlp1_.forward(vector_var(batch)));
    vec = ops::relu(mlp2_.forward(vec));
    Var equi = ops::concat({img, vec}, 1);
    equi.tag(feature_rep_);
    return {equi, group_pool(equi, group_.size())};
}

CnnExtractor::CnnExtractor(ParamStore& store, int c1, int c2, int m, const ExtractorConfig& geo) : geo_(geo) {
    const int k = geo.kernel;
    const double gain = geo.init_gain;
    k1_ = store.add_uniform("extractor.conv1.k", {c1, kInputChannels, k, k}, kInputChannels * k * k, gain);
    b1_ = store.add_constant("extractor.conv1.b", {c1}, 0.0);
    k2_ = store.add_uniform("extractor.conv2.k", {c2, c1, k, k}, c1 * k * k, gain);
    b2_ = store.add_constant("extractor.conv2.b", {c2}, 0.0);
    w1_ = store.add_uniform("extractor.mlp1.w", {m, kVectorDim}, kVectorDim, gain);
    c1_ = store.add_constant("extractor.mlp1.b", {m}, 0.0);
    w2_ = store.add_uniform("extractor.mlp2.w", {m, m}, m, gain);
    c2_ = store.add_constant("extractor.mlp2.b", {m}, 0.0);
    const int s = final_grid(geo);
    feature_dim_ = c2 * s * s + m;
}

Features CnnExtractor::extract(const ObsBatch& batch) const {
    const int n = batch.size();
    if (batch.images.shape != Shape{n, kInputChannels, kArenaSize, kArenaSize} ||
        batch.vectors.shape != Shape{n, kVectorDim})
        throw std::invalid_argument("CnnExtractor: observation batch has the wrong modality shapes");
    Var x = ops::relu(ops::add_channel_bias(ops::conv2d(image_var(batch), k1_, geo_.stride, geo_.pad), b1_));
    x = ops::relu(ops::add_channel_bias(ops::conv2d(x, k2_, geo_.stride, geo_.pad), b2_));
    x = ops::reshape(x, {n, static_cast<int>(x.size()) / std::max(n, 1)});
    Var v = ops::relu(ops::affine(vector_var(batch), w1_, c1_));
    v = ops::relu(ops::affine(v, w2_, c2_));
    Var f = ops::concat({x, v}, 1);
    return {f, f};
}

std::size_t equivariant_extractor_params(const ExtractorConfig& cfg) {
    ParamStore scratch(0);
    EquivariantExtractor ex(scratch, GroupSpec::d2(), cfg);
    return scratch.count();
}

CnnWidths matched_cnn_widths(const ExtractorConfig& cfg) {
    const double target = static_cast<double>(equivariant_extractor_params(cfg));
    const int m = cfg.mlp_width * GroupSpec::d2().size();
    const int k = cfg.kernel;
    CnnWidths best;
    double best_gap = 1e300;
    for (int c2 = 1; c2 <= 256; ++c2) {
        const int c1 = std::max(1, c2 / 2);
        const double count = c1 * kInputChannels * k * k + c1 + c2 * c1 * k * k + c2 + m * kVectorDim + m + m * m + m;
        const double gap = std::abs(count - target);
        if (gap < best_gap) {
            best_gap = gap;
            best = {c1, c2, m};
        }
    }
    return best;
}

}  // namespace covers
