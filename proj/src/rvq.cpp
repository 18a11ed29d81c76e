#include "imold/rvq.hpp"

namespace imold {

Codebook Codebook::create(Index size, Index dim, double eta) {
  if (size < 1) throw ContractError("Codebook: size must be >= 1");
  if (dim < 1) throw ContractError("Codebook: dim must be >= 1");
  if (!(eta > 0.0 && eta < 1.0)) throw ContractError("Codebook: eta must lie in (0, 1)");
  Codebook b;
  b.codes = Matrix::Zero(size, dim);
  b.counts = Vector::Zero(size);
  b.sums = Matrix::Zero(size, dim);
  b.eta = eta;
  b.usage.assign(static_cast<std::size_t>(size), 0);
  return b;
}

void Codebook::init_from(const Matrix& rows) {
  if (rows.rows() == 0) throw ContractError("Codebook::init_from: no rows");
  if (rows.cols() != dim()) {
    throw DimensionError("Codebook::init_from: row width " + std::to_string(rows.cols()) +
                         " vs code width " + std::to_string(dim()));
  }
  for (Index k = 0; k < size(); ++k) codes.row(k) = rows.row(k % rows.rows());
  counts.setOnes();
  sums = codes;
  initialized = true;
}

QuantizeResult quantize(const Codebook& book, const ad::Tensor& nodes, VqMode mode) {
  ad::Tape& tape = *nodes.tape();
  QuantizeResult r;
  if (mode == VqMode::no_vq) {
    r.output = nodes;
    r.commitment = tape.constant(Matrix::Zero(1, 1));
    return r;
  }
  if (book.size() == 0) throw ContractError("quantize: empty codebook");
  r.assignments = nearest_codes(nodes.value(), book.codes);
  r.quantized.resize(nodes.rows(), nodes.cols());
  for (Index v = 0; v < nodes.rows(); ++v) {
    r.quantized.row(v) = book.codes.row(r.assignments[static_cast<std::size_t>(v)]);
  }
  ad::Tensor q = tape.constant(r.quantized);
  r.output = mode == VqMode::full ? ad::add(q, nodes) : ad::straight_through(nodes, r.quantized);
  r.commitment = ad::squared_error(nodes, q);
  return r;
}

void ema_update(Codebook& book, const Matrix& nodes, std::span<const Index> assignments) {
  if (static_cast<Index>(assignments.size()) != nodes.rows()) {
    throw ContractError("ema_update: one assignment per node row required");
  }
  if (nodes.cols() != book.dim()) {
    throw DimensionError("ema_update: row width " + std::to_string(nodes.cols()) +
                         " vs code width " + std::to_string(book.dim()));
  }
  Vector hits = Vector::Zero(book.size());
  Matrix totals = Matrix::Zero(book.size(), book.dim());
  for (Index v = 0; v < nodes.rows(); ++v) {
    const Index k = assignments[static_cast<std::size_t>(v)];
    if (k < 0 || k >= book.size()) throw ContractError("ema_update: assignment out of range");
    hits(k) += 1.0;
    totals.row(k) += nodes.row(v);
  }
  const double eta = book.eta;
  book.counts = book.counts * eta + hits * (1.0 - eta);
  book.sums = book.sums * eta + totals * (1.0 - eta);
  for (Index k = 0; k < book.size(); ++k) {
    book.codes.row(k) = book.sums.row(k) / std::max(book.counts(k), kEmaDenominatorFloor);
    book.usage[static_cast<std::size_t>(k)] += static_cast<std::int64_t>(hits(k));
  }
}

}  // namespace imold
