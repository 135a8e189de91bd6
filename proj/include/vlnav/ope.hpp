#pragma once

#include <string>

#include "vlnav/layers.hpp"

namespace vlnav {

/// Object perception-enhancement: the context stream cross-attends to a
/// reference stream and a per-channel sigmoid gate blends the attended
/// features back into the context.
struct OpeBlock {
    MultiHeadAttention mha;
    GateParams gate;

    static OpeBlock init(std::size_t d, std::size_t heads, Rng& rng);

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        mha.visit(prefix + ".mha", fn);
        gate.visit(prefix + ".gate", fn);
    }
};

enum class GateMode {
    gated,
    /// Ablation: output is the attended stream, no gate.
    attention_only,
};

struct OpeResult {
    Var out;
    Var enhanced;  // invalid when the reference is empty
    Var omega;     // invalid when bypassed or ungated
};

/// An empty reference returns the context Var unchanged.
OpeResult ope_block_detailed(Var context, Var reference, const OpeBlock& p, GateMode mode = GateMode::gated);
inline Var ope_block(Var context, Var reference, const OpeBlock& p, GateMode mode = GateMode::gated) {
    return ope_block_detailed(context, reference, p, mode).out;
}

/// Text side: context = contextual instruction features, reference =
/// [object phrases; action phrases].
Var topa(Var contextual, Var objects, Var actions, const OpeBlock& p, GateMode mode = GateMode::gated);

/// Image side: context = fine cross-modal visual stream, reference = the
/// object-level cross-modal features.
Var iopa(Var fine_visual, Var integrated_objects, const OpeBlock& p, GateMode mode = GateMode::gated);

}  // namespace vlnav
