#include "prism/linattn/favor.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "prism/numerics/errors.hpp"
#include "prism/numerics/rng.hpp"

namespace prism::linattn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

ConstMap view(const num::Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
Map view(num::Tensor& t) {
  return Map(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

void require_matrix(const char* what, const num::Tensor& t) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + " must be a matrix, got " + num::shape_string(t.shape()));
}

// Shift applied to key features, recorded for the backward pass.
struct KeyShift {
  Eigen::Index row = 0;
  Eigen::Index col = 0;
};

}  // namespace

FeatureMap FeatureMap::draw(std::size_t head_dim, std::size_t features, std::uint64_t seed, bool scale_logits) {
  if (head_dim == 0 || features == 0) throw DomainError("feature map needs head_dim >= 1 and features >= 1");
  FeatureMap fm;
  fm.weights_ = num::Tensor(num::Shape{head_dim, features});
  fm.scale_logits_ = scale_logits;
  fm.variance_ = scale_logits ? 1.0 / std::sqrt(static_cast<double>(head_dim)) : 1.0;
  fm.reseed(seed);
  return fm;
}

FeatureMap FeatureMap::from_weights(num::Tensor weights, double weight_variance) {
  require_matrix("feature weights", weights);
  if (weights.dim(1) == 0) throw DomainError("feature map needs at least one feature");
  FeatureMap fm;
  fm.weights_ = std::move(weights);
  fm.variance_ = weight_variance;
  fm.scale_logits_ = weight_variance != 1.0;
  return fm;
}

void FeatureMap::reseed(std::uint64_t seed) {
  seed_ = seed;
  num::Rng rng(seed);
  rng.fill_normal(weights_.data(), 0.0, std::sqrt(variance_));
}

void AttentionConfig::validate(std::size_t width) const {
  if (heads == 0 || width % heads != 0) {
    throw DomainError("attention width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (features == 0) throw DomainError("attention needs at least one random feature");
  if (!(denom_floor > 0.0)) throw DomainError("attention denominator floor must be positive");
}

num::Tensor stabilized_features(const num::Tensor& x, const FeatureMap& fm) {
  require_matrix("feature input", x);
  if (x.cols() != fm.head_dim()) {
    throw DimensionError("feature input " + num::shape_string(x.shape()) + " vs projection " +
                         num::shape_string(fm.weights().shape()));
  }
  num::Tensor out(num::Shape{x.rows(), fm.features()});
  auto u = view(out);
  u.noalias() = view(x) * view(fm.weights());
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(fm.features()));
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    const double mx = u.row(r).maxCoeff();
    u.row(r) = ((u.row(r).array() - mx).exp() * inv_sqrt_m).matrix();
  }
  return out;
}

num::Tensor linear_attention(const num::Tensor& q, const num::Tensor& k, const num::Tensor& v, const FeatureMap& fm,
                             double denom_floor, KeyStabilization stabilization, AuxMemory* aux) {
  require_matrix("queries", q);
  require_matrix("keys", k);
  require_matrix("values", v);
  if (q.cols() != fm.head_dim() || k.cols() != fm.head_dim()) {
    throw DimensionError("attention inputs " + num::shape_string(q.shape()) + ", " + num::shape_string(k.shape()) +
                         " vs feature map " + num::shape_string(fm.weights().shape()));
  }
  if (k.rows() != v.rows()) {
    throw DimensionError("keys " + num::shape_string(k.shape()) + " and values " + num::shape_string(v.shape()) +
                         " disagree on length");
  }
  if (!(denom_floor > 0.0)) throw DomainError("denominator floor must be positive");

  const Eigen::Index m = static_cast<Eigen::Index>(fm.features());
  const Eigen::Index dv = static_cast<Eigen::Index>(v.cols());
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  const double half_var = 0.5 * fm.weight_variance();
  auto w = view(fm.weights());
  auto kk = view(k);
  auto vv = view(v);
  auto qq = view(q);

  RowMatrix summary = RowMatrix::Zero(m, dv);
  Vector normalizer = Vector::Zero(m);
  RowVector u(m);
  double running_max = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < kk.rows(); ++r) {
    u.noalias() = kk.row(r) * w;
    double shift;
    if (stabilization == KeyStabilization::kUnbiased) {
      u.array() -= half_var * kk.row(r).squaredNorm();
      const double row_max = u.maxCoeff();
      if (row_max > running_max) {
        if (r > 0) {
          const double rescale = std::exp(running_max - row_max);
          summary *= rescale;
          normalizer *= rescale;
        }
        running_max = row_max;
      }
      shift = running_max;
    } else {
      shift = u.maxCoeff();
    }
    u = ((u.array() - shift).exp() * inv_sqrt_m).matrix();
    summary.noalias() += u.transpose() * vv.row(r);
    normalizer += u.transpose();
  }

  num::Tensor out(num::Shape{q.rows(), v.cols()});
  auto o = view(out);
  for (Eigen::Index r = 0; r < qq.rows(); ++r) {
    u.noalias() = qq.row(r) * w;
    const double mx = u.maxCoeff();
    u = ((u.array() - mx).exp() * inv_sqrt_m).matrix();
    const double denom = u.dot(normalizer) + denom_floor;
    o.row(r).noalias() = (u * summary) / denom;
  }
  if (aux) {
    // summary + normalizer + one feature row.
    aux->peak_bytes = sizeof(double) * static_cast<std::size_t>(m * dv + m + m);
  }
  if (!out.all_finite()) throw NumericError("non-finite output from linear_attention");
  return out;
}

num::Tensor exact_attention(const num::Tensor& q, const num::Tensor& k, const num::Tensor& v, bool scale_logits) {
  require_matrix("queries", q);
  require_matrix("keys", k);
  require_matrix("values", v);
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw DimensionError("exact_attention shapes " + num::shape_string(q.shape()) + ", " +
                         num::shape_string(k.shape()) + ", " + num::shape_string(v.shape()));
  }
  const double scale = scale_logits ? 1.0 / std::sqrt(static_cast<double>(q.cols())) : 1.0;
  RowMatrix logits = (view(q) * view(k).transpose()) * scale;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - mx).exp().matrix();
    logits.row(r) /= logits.row(r).sum();
  }
  num::Tensor out(num::Shape{q.rows(), v.cols()});
  view(out).noalias() = logits * view(v);
  return out;
}

namespace {

// Forward state kept for the backward pass of one (head, key-sequence) pair.
struct GroupCache {
  RowMatrix phi_k;              // key_len x m
  RowMatrix summary;            // m x d_h
  Vector normalizer;            // m
  std::vector<KeyShift> shifts; // one per sequence (unbiased) or per row (row max)
};

// One (head, query-sequence) pair.
struct QueryCache {
  RowMatrix phi_q;                     // query_len x m
  Vector denom;                        // query_len
  std::vector<Eigen::Index> argmax;    // per row
};

struct AttentionCache {
  std::vector<GroupCache> groups;   // [head * n_groups + g]
  std::vector<QueryCache> queries;  // [head * n_query_seqs + s]
};

}  // namespace

num::Var multihead_linear_attention(const num::Var& q, const num::Var& k, const num::Var& v,
                                    std::span<const FeatureMap> heads, const SequenceLayout& layout,
                                    double denom_floor, KeyStabilization stabilization) {
  const num::Tensor& qv = q.value();
  const num::Tensor& kv = k.value();
  const num::Tensor& vv = v.value();
  if (heads.empty()) throw DomainError("attention needs at least one head");
  const std::size_t dh = heads.front().head_dim();
  const std::size_t width = dh * heads.size();
  if (qv.cols() != width || kv.cols() != width || vv.cols() != width) {
    throw DimensionError("multi-head attention expects width " + std::to_string(width) + ", got q " +
                         num::shape_string(qv.shape()) + ", k " + num::shape_string(kv.shape()) + ", v " +
                         num::shape_string(vv.shape()));
  }
  if (kv.rows() != vv.rows()) {
    throw DimensionError("keys " + num::shape_string(kv.shape()) + " and values " + num::shape_string(vv.shape()) +
                         " disagree on rows");
  }
  if (layout.query_len == 0 || layout.key_len == 0 || layout.queries_per_key == 0 ||
      qv.rows() % layout.query_len != 0 || kv.rows() % layout.key_len != 0) {
    throw DimensionError("sequence layout does not tile the query/key rows");
  }
  const std::size_t n_groups = kv.rows() / layout.key_len;
  const std::size_t n_seqs = qv.rows() / layout.query_len;
  if (n_seqs != n_groups * layout.queries_per_key) {
    throw DimensionError("query sequences (" + std::to_string(n_seqs) + ") != key sequences (" +
                         std::to_string(n_groups) + ") x queries_per_key (" +
                         std::to_string(layout.queries_per_key) + ")");
  }
  if (!(denom_floor > 0.0)) throw DomainError("denominator floor must be positive");

  const auto lq = static_cast<Eigen::Index>(layout.query_len);
  const auto lk = static_cast<Eigen::Index>(layout.key_len);
  const auto edh = static_cast<Eigen::Index>(dh);
  auto Q = view(qv);
  auto K = view(kv);
  auto V = view(vv);

  auto cache = std::make_shared<AttentionCache>();
  cache->groups.resize(heads.size() * n_groups);
  cache->queries.resize(heads.size() * n_seqs);
  std::vector<FeatureMap> maps(heads.begin(), heads.end());

  num::Tensor out(num::Shape{qv.rows(), width});
  auto O = view(out);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const FeatureMap& fm = maps[h];
    if (fm.head_dim() != dh) throw DimensionError("feature maps disagree on head_dim");
    auto W = view(fm.weights());
    const auto m = static_cast<Eigen::Index>(fm.features());
    const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
    const double half_var = 0.5 * fm.weight_variance();
    const auto col0 = static_cast<Eigen::Index>(h * dh);
    for (std::size_t g = 0; g < n_groups; ++g) {
      GroupCache& gc = cache->groups[h * n_groups + g];
      const auto row0 = static_cast<Eigen::Index>(g * layout.key_len);
      auto Kg = K.block(row0, col0, lk, edh);
      auto Vg = V.block(row0, col0, lk, edh);
      RowMatrix U = Kg * W;
      if (stabilization == KeyStabilization::kUnbiased) {
        U.colwise() -= (half_var * Kg.rowwise().squaredNorm()).eval();
        KeyShift s;
        const double mx = U.maxCoeff(&s.row, &s.col);
        gc.shifts.push_back(s);
        U.array() -= mx;
      } else {
        for (Eigen::Index r = 0; r < lk; ++r) {
          KeyShift s;
          s.row = r;
          const double mx = U.row(r).maxCoeff(&s.col);
          gc.shifts.push_back(s);
          U.row(r).array() -= mx;
        }
      }
      gc.phi_k = (U.array().exp() * inv_sqrt_m).matrix();
      gc.summary.noalias() = gc.phi_k.transpose() * Vg;
      gc.normalizer = gc.phi_k.colwise().sum().transpose();

      for (std::size_t j = 0; j < layout.queries_per_key; ++j) {
        const std::size_t s = g * layout.queries_per_key + j;
        QueryCache& qc = cache->queries[h * n_seqs + s];
        const auto qrow0 = static_cast<Eigen::Index>(s * layout.query_len);
        RowMatrix Uq = Q.block(qrow0, col0, lq, edh) * W;
        qc.argmax.resize(static_cast<std::size_t>(lq));
        for (Eigen::Index r = 0; r < lq; ++r) {
          const double mx = Uq.row(r).maxCoeff(&qc.argmax[static_cast<std::size_t>(r)]);
          Uq.row(r).array() -= mx;
        }
        qc.phi_q = (Uq.array().exp() * inv_sqrt_m).matrix();
        qc.denom = (qc.phi_q * gc.normalizer).array() + denom_floor;
        O.block(qrow0, col0, lq, edh) = ((qc.phi_q * gc.summary).array().colwise() / qc.denom.array()).matrix();
      }
    }
  }

  return q.tape().record(
      "linear_attention", std::move(out), {q, k, v},
      [cache, maps = std::move(maps), layout, n_groups, n_seqs, dh, width, stabilization](num::BackwardContext& ctx) {
        const auto lq = static_cast<Eigen::Index>(layout.query_len);
        const auto lk = static_cast<Eigen::Index>(layout.key_len);
        const auto edh = static_cast<Eigen::Index>(dh);
        auto G = view(ctx.grad_output());
        auto Oall = view(ctx.output());
        auto K = view(ctx.input(1));
        auto V = view(ctx.input(2));
        num::Tensor* gq = ctx.grad_input(0);
        num::Tensor* gk = ctx.grad_input(1);
        num::Tensor* gv = ctx.grad_input(2);
        const std::size_t q_rows = ctx.input(0).rows();
        const std::size_t k_rows = ctx.input(1).rows();
        std::unique_ptr<Map> GQ, GK, GV;
        if (gq) GQ = std::make_unique<Map>(gq->data().data(), static_cast<Eigen::Index>(q_rows), static_cast<Eigen::Index>(width));
        if (gk) GK = std::make_unique<Map>(gk->data().data(), static_cast<Eigen::Index>(k_rows), static_cast<Eigen::Index>(width));
        if (gv) GV = std::make_unique<Map>(gv->data().data(), static_cast<Eigen::Index>(k_rows), static_cast<Eigen::Index>(width));

        for (std::size_t h = 0; h < maps.size(); ++h) {
          const FeatureMap& fm = maps[h];
          auto W = view(fm.weights());
          const double var = fm.weight_variance();
          const auto col0 = static_cast<Eigen::Index>(h * dh);
          for (std::size_t g = 0; g < n_groups; ++g) {
            const GroupCache& gc = cache->groups[h * n_groups + g];
            RowMatrix d_summary = RowMatrix::Zero(gc.summary.rows(), gc.summary.cols());
            Vector d_normalizer = Vector::Zero(gc.normalizer.size());
            for (std::size_t j = 0; j < layout.queries_per_key; ++j) {
              const std::size_t s = g * layout.queries_per_key + j;
              const QueryCache& qc = cache->queries[h * n_seqs + s];
              const auto qrow0 = static_cast<Eigen::Index>(s * layout.query_len);
              auto Gs = G.block(qrow0, col0, lq, edh);
              auto Os = Oall.block(qrow0, col0, lq, edh);
              // out = num / den: d_num = G / den, d_den = -sum(G .* out) / den.
              RowMatrix d_num = (Gs.array().colwise() / qc.denom.array()).matrix();
              Vector d_den = -((Gs.array() * Os.array()).rowwise().sum() / qc.denom.array()).matrix();
              d_summary.noalias() += qc.phi_q.transpose() * d_num;
              d_normalizer.noalias() += qc.phi_q.transpose() * d_den;
              if (GQ) {
                RowMatrix d_phi = d_num * gc.summary.transpose();
                d_phi.noalias() += d_den * gc.normalizer.transpose();
                RowMatrix dU = (d_phi.array() * qc.phi_q.array()).matrix();
                for (Eigen::Index r = 0; r < lq; ++r) {
                  const double total = dU.row(r).sum();
                  dU(r, qc.argmax[static_cast<std::size_t>(r)]) -= total;
                }
                GQ->block(qrow0, col0, lq, edh).noalias() += dU * W.transpose();
              }
            }
            const auto row0 = static_cast<Eigen::Index>(g * layout.key_len);
            if (GV) GV->block(row0, col0, lk, edh).noalias() += gc.phi_k * d_summary;
            if (GK) {
              auto Vg = V.block(row0, col0, lk, edh);
              RowMatrix d_phi = Vg * d_summary.transpose();
              d_phi.rowwise() += d_normalizer.transpose();
              RowMatrix dU = (d_phi.array() * gc.phi_k.array()).matrix();
              if (stabilization == KeyStabilization::kUnbiased) {
                const double total = dU.sum();
                dU(gc.shifts.front().row, gc.shifts.front().col) -= total;
              } else {
                for (const KeyShift& s : gc.shifts) {
                  const double total = dU.row(s.row).sum();
                  dU(s.row, s.col) -= total;
                }
              }
              auto Kg = K.block(row0, col0, lk, edh);
              RowMatrix dK = dU * W.transpose();
              if (stabilization == KeyStabilization::kUnbiased) {
                dK -= (var * (Kg.array().colwise() * dU.rowwise().sum().array())).matrix();
              }
              GK->block(row0, col0, lk, edh) += dK;
            }
          }
        }
      });
}

}  // namespace prism::linattn
