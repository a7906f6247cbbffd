#include "covers/observation.hpp"

#include <algorithm>
#include <stdexcept>

namespace covers {

Representation state_rep(const GroupSpec& g) {
    return Representation::direct_sum({Representation::irrep(g, "x"), Representation::irrep(g, "y"),
                                       Representation::trivial(g), Representation::trivial(g)});
}

Representation aux_rep(const GroupSpec& g) {
    return Representation::direct_sum(
        {Representation::irrep(g, "x"), Representation::irrep(g, "y"), Representation::trivial(g)});
}

Representation vector_input_rep(const GroupSpec& g) { return Representation::direct_sum({state_rep(g), aux_rep(g)}); }

Representation action_rep(const GroupSpec& g) { return state_rep(g); }

Observation transform_observation(const SpatialAction& act, GroupElement g, const Observation& obs) {
    Observation out;
    out.image = act.act(g, obs.image);
    out.initial = act.act(g, obs.initial);
    const auto s = act_typed_vector(state_rep(act.group()), g, obs.state);
    const auto a = act_typed_vector(aux_rep(act.group()), g, obs.aux);
    std::copy(s.begin(), s.end(), out.state.begin());
    std::copy(a.begin(), a.end(), out.aux.begin());
    return out;
}

std::array<double, kActionDim> transform_action(const GroupSpec& group, GroupElement g, std::span<const double> action) {
    const auto v = act_typed_vector(action_rep(group), g, action);
    std::array<double, kActionDim> out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

ObsBatch make_batch(std::span<const Observation* const> obs) {
    const int n = static_cast<int>(obs.size());
    ObsBatch b{Array({n, kInputChannels, kArenaSize, kArenaSize}), Array({n, kVectorDim})};
    const std::size_t plane_block = static_cast<std::size_t>(kImagePlanes) * kArenaSize * kArenaSize;
    for (int i = 0; i < n; ++i) {
        const Observation& o = *obs[static_cast<std::size_t>(i)];
        if (o.image.data.size() != plane_block || o.initial.data.size() != plane_block)
            throw std::invalid_argument("make_batch: observation image has the wrong shape");
        double* dst = b.images.data.data() + static_cast<std::size_t>(i) * 2 * plane_block;
        std::copy(o.image.data.begin(), o.image.data.end(), dst);
        std::copy(o.initial.data.begin(), o.initial.data.end(), dst + plane_block);
        double* v = b.vectors.data.data() + static_cast<std::size_t>(i) * kVectorDim;
        std::copy(o.state.begin(), o.state.end(), v);
        std::copy(o.aux.begin(), o.aux.end(), v + kStateDim);
    }
    return b;
}

ObsBatch make_batch(std::span<const Observation> obs) {
    std::vector<const Observation*> ptrs;
    ptrs.reserve(obs.size());
    for (const auto& o : obs) ptrs.push_back(&o);
    return make_batch(std::span<const Observation* const>(ptrs));
}

}  // namespace covers
