#include "vlnav/ope.hpp"

namespace vlnav {

OpeBlock OpeBlock::init(std::size_t d, std::size_t heads, Rng& rng) {
    OpeBlock b;
    b.mha = MultiHeadAttention::init(d, heads, rng);
    b.gate = GateParams::init(d, rng);
    return b;
}

OpeResult ope_block_detailed(Var context, Var reference, const OpeBlock& p, GateMode mode) {
    if (reference.rows() == 0) {
        return {context, {}, {}};
    }
    if (reference.cols() != context.cols()) {
        throw ShapeError("ope_block: context and reference widths differ");
    }
    Var enhanced = attention(context, reference, p.mha);
    if (mode == GateMode::attention_only) {
        return {enhanced, enhanced, {}};
    }
    GateOutput g = sigmoid_gate(enhanced, context, p.gate);
    return {g.out, enhanced, g.omega};
}

Var topa(Var contextual, Var objects, Var actions, const OpeBlock& p, GateMode mode) {
    Var reference = objects;
    if (actions.rows() > 0) {
        if (objects.rows() > 0) {
            const Var parts[] = {objects, actions};
            reference = concat_rows(parts);
        } else {
            reference = actions;
        }
    }
    return ope_block(contextual, reference, p, mode);
}

Var iopa(Var fine_visual, Var integrated_objects, const OpeBlock& p, GateMode mode) {
    return ope_block(fine_visual, integrated_objects, p, mode);
}

}  // namespace vlnav
