#include "mtdm/encoders.hpp"

namespace mtdm {
namespace {

Var linear(Var x, Var w, Var b) { return add_row_bias(matmul(x, w), b); }

// g*a + (1 - g)*b
Var blend(Var g, Var a, Var b) { return add(mul(g, a), mul(one_minus(g), b)); }

void require_same(Var a, Var b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Var res_gcn(Var e_in, Var relations, const SparseAdjacency& adj, const ResGcnWeights& w, std::size_t layers,
            Activation f) {
  if (layers == 0) throw std::invalid_argument("res_gcn: needs at least one layer");
  const Var loop = matmul(e_in, w.w_loop);
  Var e = e_in;
  Var acc;
  for (std::size_t l = 0; l < layers; ++l) {
    const Var res = sparse_relational_aggregate(e, relations, adj, w.w_entity, w.w_relation);
    acc = acc.valid() ? add(acc, res) : res;
    e = activate(add(loop, acc), f);
  }
  return e;
}

Var rgcn_encode(Var h_init, const SparseAdjacency& deep, std::span<const RgcnLayerWeights> layers, Activation f) {
  if (layers.empty()) throw std::invalid_argument("rgcn_encode: needs at least one layer");
  Var e = h_init;
  for (const RgcnLayerWeights& layer : layers) {
    e = activate(add(relational_aggregate(e, layer.relation_weights, deep), matmul(e, layer.w_loop)), f);
  }
  return e;
}

Var gru_cell(Var x, Var h, const GruWeights& w) {
  if (x.shape().size() != 2 || h.shape().size() != 2 || x.shape()[0] != h.shape()[0]) {
    throw ShapeError("gru_cell: input " + shape_str(x.shape()) + " and state " + shape_str(h.shape()) +
                     " need matching row counts");
  }
  const Var z = sigmoid(add(linear(x, w.w_z, w.b_z), matmul(h, w.u_z)));
  const Var r = sigmoid(add(linear(x, w.w_r, w.b_r), matmul(h, w.u_r)));
  const Var cand = tanh(add(linear(x, w.w_h, w.b_h), matmul(mul(r, h), w.u_h)));
  return blend(z, cand, h);
}

GateResult reset_gate(Var h_gru, Var e_deep, const GateWeights& w) {
  require_same(h_gru, e_deep, "reset_gate");
  GateResult g;
  g.soft = sigmoid(linear(h_gru, w.w, w.b));
  g.applied = g.soft;
  g.out = blend(g.applied, h_gru, e_deep);
  return g;
}

GateResult control_gate(Var h_tln, Var h_tren, const GateWeights& w, bool hard) {
  require_same(h_tln, h_tren, "control_gate");
  GateResult g;
  g.soft = sigmoid(linear(h_tln, w.w, w.b));
  g.applied = hard ? hard_round(g.soft) : g.soft;
  g.out = blend(g.applied, h_tln, h_tren);
  return g;
}

}  // namespace mtdm
