// Neural building blocks: deep-memory RGCN, residual multi-relational GCN,
// GRU time encoder, reset gate and control gate.
//
// All blocks operate on |E| x d entity matrices and take their weights as
// tape-bound Vars so they can be driven by the model or by tests directly.

#pragma once

#include <span>

#include "mtdm/ops.hpp"
#include "mtdm/sparse.hpp"

namespace mtdm {

/// Shared weights of the residual encoder (one set for every hop).
struct ResGcnWeights {
  Var w_loop;
  Var w_entity;
  Var w_relation;
};

/// w-hop residual aggregation over one snapshot:
///   loop     = e_in·W_loop
///   res(l+1) = mean over (r, o) of (e(l)_o·W_e + r·W_r)
///   e(l+1)   = f(loop + res(1) + ... + res(l+1))
/// Returns e(w).
Var res_gcn(Var e_in, Var relations, const SparseAdjacency& adj, const ResGcnWeights& w, std::size_t layers,
            Activation f);

struct RgcnLayerWeights {
  Var relation_weights;  // [num_relations, d*d]
  Var w_loop;            // [d, d]
};

/// Multi-layer RGCN over the deep-memory graph:
///   e(l+1)_s = f( mean over (r, o) of e(l)_o·W_r(l) + e(l)_s·W_loop(l) )
Var rgcn_encode(Var h_init, const SparseAdjacency& deep, std::span<const RgcnLayerWeights> layers, Activation f);

struct GruWeights {
  Var w_z, u_z, b_z;
  Var w_r, u_r, b_r;
  Var w_h, u_h, b_h;
};

/// z = sigmoid(x·W_z + h·U_z + b_z), r = sigmoid(x·W_r + h·U_r + b_r),
/// h~ = tanh(x·W_h + (r*h)·U_h + b_h), h' = (1 - z)*h + z*h~.
Var gru_cell(Var x, Var h, const GruWeights& w);

struct GateWeights {
  Var w;
  Var b;
};

struct GateResult {
  Var soft;     // sigmoid(x·W + b)
  Var applied;  // soft, or its {0,1} rounding in hard mode
  Var out;
};

/// V = sigmoid(h_gru·W_V + b_V); out = V*h_gru + (1 - V)*e_deep.
GateResult reset_gate(Var h_gru, Var e_deep, const GateWeights& w);

/// U = sigmoid(h_tln·W_U + b_U), rounded at 0.5 when `hard`;
/// out = U*h_tln + (1 - U)*h_tren.
GateResult control_gate(Var h_tln, Var h_tren, const GateWeights& w, bool hard);

}  // namespace mtdm
