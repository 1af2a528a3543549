#include "mtdm/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mtdm {
namespace {

constexpr char kMagic[8] = {'M', 'T', 'D', 'M', 'C', 'K', 'P', 'T'};
constexpr const char* kHardFlag = "control_gate.hard";

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Real& v : t.values()) v = Real(dist(rng));
  return t;
}

Tensor normal(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (Real& v : t.values()) v = Real(dist(rng));
  return t;
}

double xavier_bound(std::size_t fan_in, std::size_t fan_out) { return std::sqrt(6.0 / double(fan_in + fan_out)); }

std::string rgcn_name(std::size_t layer, const char* what) {
  return "rgcn.l" + std::to_string(layer) + "." + what;
}

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(char((std::make_unsigned_t<T>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get(std::istream& in) {
  std::make_unsigned_t<T> v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == EOF) throw CheckpointError("checkpoint truncated");
    v |= std::make_unsigned_t<T>(std::uint8_t(c)) << (8 * i);
  }
  return T(v);
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (dim == 0) fail("dim must be positive");
  if (layers == 0) fail("layers (Res-GCN hops) must be >= 1");
  if (rgcn_layers == 0) fail("rgcn_layers must be >= 1");
  if (rgcn_bases == 0) fail("rgcn_bases must be >= 1");
  if (history_len == 0) fail("history_len must be >= 1");
  if (tln_window == 0) fail("tln_window must be >= 1");
  if (channels == 0) fail("channels must be >= 1");
  if (kernel_width % 2 == 0) fail("kernel_width must be odd");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (no_tren && tren_mode == TrenMode::kRecurrent) fail("--no-tren cannot be combined with --recurrent-mode");
  if (no_tren && no_tln) fail("--no-tren and --no-tln together leave no evolutional or transient encoder");
}

Model::Model(const ModelConfig& cfg, std::size_t num_entities, std::size_t relation_space, std::uint64_t seed)
    : cfg_(cfg), num_entities_(num_entities), relation_space_(relation_space) {
  cfg_.validate();
  if (num_entities == 0 || relation_space == 0) throw std::invalid_argument("model needs entities and relations");
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg_.dim;
  const double dd = xavier_bound(d, d);

  params_.add("entity.embedding", normal({num_entities, d}, std::sqrt(2.0 / double(num_entities + d)), rng));
  params_.add("relation.embedding", normal({relation_space, d}, std::sqrt(2.0 / double(relation_space + d)), rng));

  params_.add("resgcn.w_loop", uniform({d, d}, dd, rng));
  params_.add("resgcn.w_entity", uniform({d, d}, dd, rng));
  params_.add("resgcn.w_relation", uniform({d, d}, dd, rng));

  const std::size_t bases = num_bases();
  for (std::size_t l = 0; l < cfg_.rgcn_layers; ++l) {
    params_.add(rgcn_name(l, "coeff"), uniform({relation_space, bases}, xavier_bound(relation_space, bases), rng));
    // Scaled so that sum over bases keeps the combined matrix at xavier scale.
    params_.add(rgcn_name(l, "bases"), uniform({bases, d * d}, dd / std::sqrt(double(bases) / 3.0 + 1.0), rng));
    params_.add(rgcn_name(l, "w_loop"), uniform({d, d}, dd, rng));
  }

  const double gb = 1.0 / std::sqrt(double(d));
  for (const char* g : {"z", "r", "h"}) {
    params_.add(std::string("gru.w_") + g, uniform({d, d}, gb, rng));
    params_.add(std::string("gru.u_") + g, uniform({d, d}, gb, rng));
    params_.add(std::string("gru.b_") + g, uniform({d}, gb, rng));
  }

  params_.add("reset_gate.w", uniform({d, d}, dd, rng));
  params_.add("reset_gate.b", Tensor({d}));
  params_.add("control_gate.w", uniform({d, d}, dd, rng));
  params_.add("control_gate.b", Tensor({d}));
  params_.add(kHardFlag, Tensor({1})).trainable = false;

  const std::size_t c = cfg_.channels;
  const std::size_t k = cfg_.kernel_width;
  auto head = [&](const std::string& prefix, std::size_t in_rows, std::size_t width, std::size_t out_dim) {
    const double kb = 1.0 / std::sqrt(double(in_rows * k));
    params_.add(prefix + ".kernel", uniform({c, in_rows * k}, kb, rng));
    params_.add(prefix + ".bias", uniform({c}, kb, rng));
    const double fb = 1.0 / std::sqrt(double(c * width));
    params_.add(prefix + ".fc", uniform({c * width, out_dim}, fb, rng));
    params_.add(prefix + ".fc_bias", uniform({out_dim}, fb, rng));
  };
  head("decoder.entity", 3, d, 2 * d);
  head("decoder.relation", 2, 2 * d, d);
}

std::size_t Model::num_bases() const { return std::min(cfg_.rgcn_bases, relation_space_); }

bool Model::gate_hard() const { return (*params_.get(kHardFlag).value)[0] != Real(0); }

void Model::harden_gate() {
  (*params_.get(kHardFlag).value)[0] = Real(1);
  params_.get("control_gate.w").trainable = false;
  params_.get("control_gate.b").trainable = false;
}

Var deep_memory(Forward& fw, const SparseAdjacency& deep) {
  const ModelConfig& cfg = fw.model.config();
  std::vector<RgcnLayerWeights> layers;
  for (std::size_t l = 0; l < cfg.rgcn_layers; ++l) {
    layers.push_back({matmul(fw.bind(rgcn_name(l, "coeff")), fw.bind(rgcn_name(l, "bases"))),
                      fw.bind(rgcn_name(l, "w_loop"))});
  }
  return rgcn_encode(fw.bind("entity.embedding"), deep, layers, cfg.activation);
}

namespace {

ResGcnWeights resgcn_weights(Forward& fw) {
  return {fw.bind("resgcn.w_loop"), fw.bind("resgcn.w_entity"), fw.bind("resgcn.w_relation")};
}

GruWeights gru_weights(Forward& fw) {
  return {fw.bind("gru.w_z"), fw.bind("gru.u_z"), fw.bind("gru.b_z"), fw.bind("gru.w_r"), fw.bind("gru.u_r"),
          fw.bind("gru.b_r"), fw.bind("gru.w_h"), fw.bind("gru.u_h"), fw.bind("gru.b_h")};
}

}  // namespace

void tren_forward(Forward& fw, std::span<const Snapshot* const> window, HiddenStates& hs) {
  const ModelConfig& cfg = fw.model.config();
  const ResGcnWeights rw = resgcn_weights(fw);
  const GruWeights gw = gru_weights(fw);
  const GateWeights reset{fw.bind("reset_gate.w"), fw.bind("reset_gate.b")};
  Var h = hs.h_deep;
  for (const Snapshot* snap : window) {
    const Var input = cfg.tren_mode == TrenMode::kRecurrent ? h : hs.h_deep;
    hs.resgcn_inputs.push_back(input);
    const Var structural = res_gcn(input, hs.relations, snap->adjacency, rw, cfg.layers, cfg.activation);
    Var next = gru_cell(structural, h, gw);
    if (!cfg.no_reset_gate) next = reset_gate(next, hs.h_deep, reset).out;
    hs.tren_steps.push_back(next);
    h = next;
  }
  hs.tren_final = h;
}

void tln_forward(Forward& fw, const SparseAdjacency& transient, HiddenStates& hs) {
  const ModelConfig& cfg = fw.model.config();
  hs.tln_struct = res_gcn(hs.h_init, hs.relations, transient, resgcn_weights(fw), cfg.layers, cfg.activation);
  hs.control = control_gate(hs.tln_struct, hs.tren_final,
                            GateWeights{fw.bind("control_gate.w"), fw.bind("control_gate.b")}, fw.model.gate_hard());
  hs.tln_fused = hs.control.out;
}

HiddenStates encode_history(Forward& fw, std::span<const Snapshot* const> history) {
  const Model& model = fw.model;
  const ModelConfig& cfg = model.config();
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i]->t <= history[i - 1]->t) throw std::invalid_argument("history snapshots must be ordered by t");
  }
  HiddenStates hs;
  hs.h_init = fw.bind("entity.embedding");
  hs.relations = fw.bind("relation.embedding");

  const std::size_t n = std::min(cfg.history_len, history.size());
  const auto window = history.subspan(history.size() - n);
  hs.window_size = window.size();

  std::vector<Fact> deep;
  if (!cfg.no_dm && !window.empty()) deep = deep_memory_facts(history, window.front()->t);
  hs.deep_fact_count = deep.size();
  hs.deep_adjacency =
      std::make_shared<SparseAdjacency>(make_adjacency(deep, model.num_entities(), model.relation_space()));
  hs.h_deep = deep_memory(fw, *hs.deep_adjacency);

  if (cfg.no_tren) {
    hs.tren_final = hs.h_deep;
  } else {
    tren_forward(fw, window, hs);
  }

  if (cfg.no_tln) {
    hs.tln_fused = hs.tren_final;
    return hs;
  }
  std::vector<Fact> transient;
  const std::size_t k = std::min(cfg.tln_window, history.size());
  for (const Snapshot* snap : history.subspan(history.size() - k)) {
    transient.insert(transient.end(), snap->facts.begin(), snap->facts.end());
  }
  hs.tln_adjacency =
      std::make_shared<SparseAdjacency>(make_adjacency(transient, model.num_entities(), model.relation_space()));
  tln_forward(fw, *hs.tln_adjacency, hs);
  return hs;
}

namespace {

// Shared ConvTransE body: stacked rows -> conv -> f -> FC -> f.
Var conv_trans_e(Forward& fw, const std::string& prefix, Var stacked, std::size_t in_rows, std::size_t width) {
  const ModelConfig& cfg = fw.model.config();
  const Real p = Real(fw.dropout());
  Var x = fw.rng ? dropout(stacked, p, *fw.rng) : stacked;
  x = conv1d_rows(x, fw.bind(prefix + ".kernel"), fw.bind(prefix + ".bias"), in_rows, width);
  x = activate(x, cfg.activation);
  if (fw.rng) x = dropout(x, p, *fw.rng);
  x = add_row_bias(matmul(x, fw.bind(prefix + ".fc")), fw.bind(prefix + ".fc_bias"));
  if (fw.rng) x = dropout(x, p, *fw.rng);
  return activate(x, cfg.activation);
}

void check_ids(std::int64_t id, std::size_t bound, const char* what) {
  if (id < 0 || std::size_t(id) >= bound) {
    throw std::out_of_range(std::string(what) + " id " + std::to_string(id) + " outside [0, " +
                            std::to_string(bound) + ")");
  }
}

}  // namespace

Var entity_logits(Forward& fw, const HiddenStates& hs, std::span<const EntityQuery> queries) {
  std::vector<std::int64_t> subj, rel;
  for (const EntityQuery& q : queries) {
    check_ids(q.s, fw.model.num_entities(), "entity");
    check_ids(q.r, fw.model.relation_space(), "relation");
    subj.push_back(q.s);
    rel.push_back(q.r);
  }
  const std::size_t d = fw.model.config().dim;
  const Var stacked =
      concat_cols({gather_rows(hs.tren_final, subj), gather_rows(hs.tln_fused, subj), gather_rows(hs.relations, rel)});
  const Var p = conv_trans_e(fw, "decoder.entity", stacked, 3, d);
  return matmul_nt(p, concat_cols({hs.tren_final, hs.tln_fused}));
}

Var decode_entities(Forward& fw, const HiddenStates& hs, std::span<const EntityQuery> queries) {
  return sigmoid(entity_logits(fw, hs, queries));
}

Var relation_logits(Forward& fw, const HiddenStates& hs, std::span<const PairQuery> pairs) {
  std::vector<std::int64_t> subj, obj;
  for (const PairQuery& q : pairs) {
    check_ids(q.s, fw.model.num_entities(), "entity");
    check_ids(q.o, fw.model.num_entities(), "entity");
    subj.push_back(q.s);
    obj.push_back(q.o);
  }
  const std::size_t d = fw.model.config().dim;
  const Var candidates = concat_cols({hs.tren_final, hs.tln_fused});
  const Var stacked = concat_cols({gather_rows(candidates, subj), gather_rows(candidates, obj)});
  const Var p = conv_trans_e(fw, "decoder.relation", stacked, 2, 2 * d);
  return matmul_nt(p, hs.relations);
}

Var decode_relations(Forward& fw, const HiddenStates& hs, std::span<const PairQuery> pairs) {
  return sigmoid(relation_logits(fw, hs, pairs));
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, std::uint32_t(model.config().dim));
  put<std::uint32_t>(out, std::uint32_t(model.num_entities()));
  put<std::uint32_t>(out, std::uint32_t(model.relation_space()));
  put<std::uint32_t>(out, std::uint32_t(model.params().size()));
  for (const Parameter& p : model.params().all()) {
    put<std::uint32_t>(out, std::uint32_t(p.name.size()));
    out.write(p.name.data(), std::streamsize(p.name.size()));
    put<std::uint32_t>(out, std::uint32_t(p.value->rank()));
    for (std::size_t dim : p.value->shape()) put<std::uint64_t>(out, std::uint64_t(dim));
    for (Real v : p.value->values()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(double(v)));
  }
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

void load_checkpoint(Model& model, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(path.string() + " is not an MTDM checkpoint");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint format version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const auto d = get<std::uint32_t>(in);
  const auto e = get<std::uint32_t>(in);
  const auto r = get<std::uint32_t>(in);
  if (d != model.config().dim || e != model.num_entities() || r != model.relation_space()) {
    throw CheckpointError("checkpoint dims (d=" + std::to_string(d) + ", |E|=" + std::to_string(e) +
                          ", |R'|=" + std::to_string(r) + ") do not match the configured model");
  }
  const auto count = get<std::uint32_t>(in);
  if (count != model.params().size()) throw CheckpointError("checkpoint parameter count mismatch");
  std::vector<Tensor> loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), std::streamsize(len));
    const Parameter& expected = model.params().all()[i];
    if (!in || name != expected.name) {
      throw CheckpointError("checkpoint parameter #" + std::to_string(i) + " is '" + name + "', expected '" +
                            expected.name + "'");
    }
    const auto rank = get<std::uint32_t>(in);
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(std::size_t(get<std::uint64_t>(in)));
    if (shape != expected.value->shape()) {
      throw CheckpointError("parameter '" + name + "' has shape " + shape_str(shape) + ", expected " +
                            shape_str(expected.value->shape()));
    }
    Tensor t(shape);
    for (Real& v : t.values()) v = Real(std::bit_cast<double>(get<std::uint64_t>(in)));
    loaded.push_back(std::move(t));
  }
  for (std::uint32_t i = 0; i < count; ++i) *model.params().all()[i].value = std::move(loaded[i]);
  if (model.gate_hard()) model.harden_gate();
}

}  // namespace mtdm
