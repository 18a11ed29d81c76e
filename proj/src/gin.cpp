#include "imold/gin.hpp"

#include <cmath>

namespace imold {

void GinConfig::validate() const {
  if (num_layers < 1) throw ContractError("GinConfig: num_layers must be >= 1");
  if (hidden_dim < 1) throw ContractError("GinConfig: hidden_dim must be >= 1");
  if (node_type_count < 1) throw ContractError("GinConfig: node_type_count must be >= 1");
  if (mlp_hidden < 0) throw ContractError("GinConfig: mlp_hidden must be >= 0");
}

Matrix glorot_uniform(Index rows, Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

GinParams GinParams::init(const GinConfig& config, std::mt19937_64& rng) {
  config.validate();
  const Index d = config.hidden_dim;
  const Index w = config.mlp_width();
  GinParams p;
  p.embedding = glorot_uniform(config.node_type_count, d, rng);
  for (int l = 0; l < config.num_layers; ++l) {
    GinLayer layer;
    layer.w1 = glorot_uniform(d, w, rng);
    layer.b1 = Matrix::Zero(1, w);
    layer.w2 = glorot_uniform(w, d, rng);
    layer.b2 = Matrix::Zero(1, d);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

void GinParams::for_each(const std::string& prefix,
                         const std::function<void(const std::string&, Matrix&)>& fn) {
  fn(prefix + ".embedding", embedding);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    fn(base + ".w1", layers[l].w1);
    fn(base + ".b1", layers[l].b1);
    fn(base + ".w2", layers[l].w2);
    fn(base + ".b2", layers[l].b2);
  }
}

void GinParams::for_each(const std::string& prefix,
                         const std::function<void(const std::string&, const Matrix&)>& fn) const {
  const_cast<GinParams*>(this)->for_each(
      prefix, std::function<void(const std::string&, Matrix&)>(
                  [&fn](const std::string& name, Matrix& m) { fn(name, m); }));
}

ad::Tensor gin_aggregate(const ad::Tensor& h, const GraphBatch& batch) {
  return ad::add(h, ad::spmm(batch.adjacency, h));
}

namespace {

ad::Tensor message_passing(const GinParams& params, const GraphBatch& batch,
                           ad::ParamBinder& bind) {
  std::vector<Index> types(batch.node_types.begin(), batch.node_types.end());
  ad::Tensor h = ad::gather_rows(bind(params.embedding), types);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const GinLayer& layer = params.layers[l];
    ad::Tensor agg = gin_aggregate(h, batch);
    ad::Tensor hidden = ad::relu(ad::add_row(ad::matmul(agg, bind(layer.w1)), bind(layer.b1)));
    h = ad::add_row(ad::matmul(hidden, bind(layer.w2)), bind(layer.b2));
    if (l + 1 < params.layers.size()) h = ad::relu(h);
  }
  return h;
}

}  // namespace

ad::Tensor encode(const GinParams& params, const GraphBatch& batch, ad::ParamBinder& bind) {
  return message_passing(params, batch, bind);
}

ad::Tensor readout(const ad::Tensor& nodes, std::span<const Index> offsets) {
  return ad::segment_mean(nodes, offsets);
}

ad::Tensor score(const GinParams& params, const GraphBatch& batch, ad::ParamBinder& bind) {
  return ad::sigmoid(message_passing(params, batch, bind));
}

}  // namespace imold
