#include "unic/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace unic::ad {

ParamId ParameterStore::add(std::string name, Matrix value) {
  if (find(name)) throw std::logic_error("duplicate parameter name '" + name + "'");
  params_.push_back({std::move(name), std::move(value)});
  return params_.size() - 1;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::optional<ParamId> ParameterStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

void add_into(Gradients& acc, const Gradients& g) {
  if (acc.size() < g.size()) acc.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i].size() == 0) continue;
    if (acc[i].size() == 0) acc[i] = g[i];
    else acc[i] += g[i];
  }
}

const Matrix& Var::value() const { return tape->value(id); }

Tape::Tape(const ParameterStore& params, bool record)
    : params_(&params), record_(record), param_nodes_(params.size(), -1) {
  nodes_.reserve(256);
}

Var Tape::parameter(ParamId id) {
  int& slot = param_nodes_.at(id);
  if (slot < 0) {
    Node n;
    n.value = (*params_)[id].value;
    n.requires_grad = record_;
    nodes_.push_back(std::move(n));
    slot = static_cast<int>(nodes_.size()) - 1;
  }
  return {this, slot};
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, Backward fn) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::push(Matrix value, std::span<const Var> inputs, Backward fn) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const auto& in : inputs) {
      assert(in.tape == this);
      if (nodes_[static_cast<std::size_t>(in.id)].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

Matrix* Tape::grad_target(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return &n.grad;
}

void Tape::backward(Var out) {
  if (!record_) throw std::logic_error("backward on a non-recording tape");
  if (out.value().size() != 1) throw std::logic_error("backward needs a scalar output");
  for (auto& n : nodes_) {
    n.has_grad = false;
  }
  Node& root = nodes_[static_cast<std::size_t>(out.id)];
  root.grad = Matrix::Ones(1, 1);
  root.has_grad = true;
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.has_grad && n.backward) n.backward(*this);
  }
}

void Tape::accumulate(Gradients& into) const {
  if (into.size() < params_->size()) into.resize(params_->size());
  for (std::size_t p = 0; p < param_nodes_.size(); ++p) {
    const int id = param_nodes_[p];
    if (id < 0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) continue;
    if (into[p].size() == 0) into[p] = n.grad;
    else into[p] += n.grad;
  }
}

// ---- operations ------------------------------------------------------------

namespace {

Tape& tape_of(Var a) { return *a.tape; }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  Matrix out = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), {a, b}, [ia, ib, self = static_cast<int>(t.size())](Tape& t) {
    const Matrix& g = t.grad(self);
    if (Matrix* ga = t.grad_target(ia)) ga->noalias() += g * t.value(ib).transpose();
    if (Matrix* gb = t.grad_target(ib)) gb->noalias() += t.value(ia).transpose() * g;
  });
}

Var linear(Var x, Var w, Var b) {
  Tape& t = tape_of(x);
  Matrix out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  const int ix = x.id, iw = w.id, ib = b.id;
  return t.push(std::move(out), {x, w, b}, [ix, iw, ib, self = static_cast<int>(t.size())](Tape& t) {
    const Matrix& g = t.grad(self);
    if (Matrix* gx = t.grad_target(ix)) gx->noalias() += g * t.value(iw).transpose();
    if (Matrix* gw = t.grad_target(iw)) gw->noalias() += t.value(ix).transpose() * g;
    if (Matrix* gb = t.grad_target(ib)) *gb += g.colwise().sum();
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  const int ia = a.id, ib = b.id;
  return t.push(a.value() + b.value(), {a, b}, [ia, ib, self = static_cast<int>(t.size())](Tape& t) {
    const Matrix& g = t.grad(self);
    if (Matrix* ga = t.grad_target(ia)) *ga += g;
    if (Matrix* gb = t.grad_target(ib)) *gb += g;
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  const int ia = a.id, ib = b.id;
  return t.push(a.value() - b.value(), {a, b}, [ia, ib, self = static_cast<int>(t.size())](Tape& t) {
    const Matrix& g = t.grad(self);
    if (Matrix* ga = t.grad_target(ia)) *ga += g;
    if (Matrix* gb = t.grad_target(ib)) *gb -= g;
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a);
  const int ia = a.id, ib = b.id;
  return t.push(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib, self = static_cast<int>(t.size())](Tape& t) {
    const Matrix& g = t.grad(self);
    if (Matrix* ga = t.grad_target(ia)) *ga += g.cwiseProduct(t.value(ib));
    if (Matrix* gb = t.grad_target(ib)) *gb += g.cwiseProduct(t.value(ia));
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  return t.push(a.value() * s, {a}, [ia, s, self = static_cast<int>(t.size())](Tape& t) {
    if (Matrix* ga = t.grad_target(ia)) *ga += s * t.grad(self);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  const int ia = a.id, ir = row.id;
  return t.push(std::move(out), {a, row}, [ia, ir, self = static_cast<int>(t.size())](Tape& t) {
    const Matrix& g = t.grad(self);
    if (Matrix* ga = t.grad_target(ia)) *ga += g;
    if (Matrix* gr = t.grad_target(ir)) *gr += g.colwise().sum();
  });
}

Var sub_row(Var a, Var row) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  out.rowwise() -= row.value().row(0);
  const int ia = a.id, ir = row.id;
  return t.push(std::move(out), {a, row}, [ia, ir, self = static_cast<int>(t.size())](Tape& t) {
    const Matrix& g = t.grad(self);
    if (Matrix* ga = t.grad_target(ia)) *ga += g;
    if (Matrix* gr = t.grad_target(ir)) *gr -= g.colwise().sum();
  });
}

Var gelu(Var a) {
  // tanh approximation; smooth with a bounded derivative.
  static constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double k = 0.044715;
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix th = (c * (x.array() + k * x.array().cube())).tanh().matrix();
  Matrix out = (0.5 * x.array() * (1.0 + th.array())).matrix();
  const int ia = a.id;
  return t.push(std::move(out), {a}, [ia, th = std::move(th), self = static_cast<int>(t.size())](Tape& t) {
    if (Matrix* ga = t.grad_target(ia)) {
      const auto x = t.value(ia).array();
      const auto d = 0.5 * (1.0 + th.array()) +
                     0.5 * x * (1.0 - th.array().square()) * c * (1.0 + 3.0 * k * x.square());
      *ga += (t.grad(self).array() * d).matrix();
    }
  });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  const int self = static_cast<int>(t.size());
  return t.push(a.value().array().tanh().matrix(), {a}, [ia, self](Tape& t) {
    if (Matrix* ga = t.grad_target(ia)) {
      *ga += (t.grad(self).array() * (1.0 - t.value(self).array().square())).matrix();
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.rows(), d = xv.cols();
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std[r];
  }
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return t.push(std::move(out), {x, gain, bias},
                [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std),
                 self = static_cast<int>(t.size())](Tape& t) {
                  const Matrix& g = t.grad(self);
                  if (Matrix* gg = t.grad_target(ig)) *gg += g.cwiseProduct(xhat).colwise().sum();
                  if (Matrix* gb = t.grad_target(ib)) *gb += g.colwise().sum();
                  if (Matrix* gx = t.grad_target(ix)) {
                    const Matrix dxhat = g.array().rowwise() * t.value(ig).row(0).array();
                    for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                      const double m1 = dxhat.row(r).mean();
                      const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                      gx->row(r).array() += inv_std[r] * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                    }
                  }
                });
}

Var attention(Var q, Var k, Var v, int heads) {
  Tape& t = tape_of(q);
  const Eigen::Index n = q.rows(), d = q.cols();
  if (heads < 1 || d % heads != 0) throw std::logic_error("attention width must divide into heads");
  const Eigen::Index dh = d / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix out(n, d);
  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto qh = q.value().middleCols(h * dh, dh);
    const auto kh = k.value().middleCols(h * dh, dh);
    Matrix scores = s * (qh * kh.transpose());
    for (Eigen::Index r = 0; r < n; ++r) {
      scores.row(r).array() -= scores.row(r).maxCoeff();
      scores.row(r) = scores.row(r).array().exp().matrix();
      scores.row(r) /= scores.row(r).sum();
    }
    out.middleCols(h * dh, dh).noalias() = scores * v.value().middleCols(h * dh, dh);
    probs[static_cast<std::size_t>(h)] = std::move(scores);
  }
  const int iq = q.id, ik = k.id, iv = v.id;
  return t.push(std::move(out), {q, k, v},
                [iq, ik, iv, heads, dh, s, probs = std::move(probs), self = static_cast<int>(t.size())](Tape& t) {
                  const Matrix& g = t.grad(self);
                  Matrix* gq = t.grad_target(iq);
                  Matrix* gk = t.grad_target(ik);
                  Matrix* gv = t.grad_target(iv);
                  for (int h = 0; h < heads; ++h) {
                    const Matrix& p = probs[static_cast<std::size_t>(h)];
                    const auto gh = g.middleCols(h * dh, dh);
                    if (gv) gv->middleCols(h * dh, dh).noalias() += p.transpose() * gh;
                    if (!gq && !gk) continue;
                    const Matrix dp = gh * t.value(iv).middleCols(h * dh, dh).transpose();
                    Matrix ds = p.cwiseProduct(dp);
                    const Eigen::VectorXd rowdot = ds.rowwise().sum();
                    ds -= (p.array().colwise() * rowdot.array()).matrix();
                    ds *= s;
                    if (gq) gq->middleCols(h * dh, dh).noalias() += ds * t.value(ik).middleCols(h * dh, dh);
                    if (gk) gk->middleCols(h * dh, dh).noalias() += ds.transpose() * t.value(iq).middleCols(h * dh, dh);
                  }
                });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  return t.push(a.value().middleRows(start, count), {a}, [ia, start, count, self = static_cast<int>(t.size())](Tape& t) {
    if (Matrix* ga = t.grad_target(ia)) ga->middleRows(start, count) += t.grad(self);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  return t.push(a.value().middleCols(start, count), {a}, [ia, start, count, self = static_cast<int>(t.size())](Tape& t) {
    if (Matrix* ga = t.grad_target(ia)) ga->middleCols(start, count) += t.grad(self);
  });
}

Var concat_rows(std::span<const Var> parts) {
  Tape& t = tape_of(parts.front());
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::logic_error("concat_rows width mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    ids.push_back(p.id);
    offsets.push_back(at);
    at += p.rows();
  }
  return t.push(std::move(out), parts, [ids, offsets, self = static_cast<int>(t.size())](Tape& t) {
    const Matrix& g = t.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (Matrix* gp = t.grad_target(ids[i])) *gp += g.middleRows(offsets[i], gp->rows());
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  Tape& t = tape_of(parts.front());
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::logic_error("concat_cols height mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    ids.push_back(p.id);
    offsets.push_back(at);
    at += p.cols();
  }
  return t.push(std::move(out), parts, [ids, offsets, self = static_cast<int>(t.size())](Tape& t) {
    const Matrix& g = t.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (Matrix* gp = t.grad_target(ids[i])) *gp += g.middleCols(offsets[i], gp->cols());
    }
  });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  Tape& t = tape_of(a);
  if (rows * cols != a.value().size()) throw std::logic_error("reshape size mismatch");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const int ia = a.id;
  return t.push(std::move(out), {a}, [ia, self = static_cast<int>(t.size())](Tape& t) {
    if (Matrix* ga = t.grad_target(ia)) {
      const Matrix& g = t.grad(self);
      Eigen::Map<Matrix>(ga->data(), ga->rows(), ga->cols()) += Eigen::Map<const Matrix>(g.data(), ga->rows(), ga->cols());
    }
  });
}

Var remap(Var a, Eigen::Index rows, Eigen::Index cols, std::vector<int> index) {
  Tape& t = tape_of(a);
  if (static_cast<Eigen::Index>(index.size()) != rows * cols) throw std::logic_error("remap index size mismatch");
  Matrix out(rows, cols);
  const double* src = a.value().data();
  for (std::size_t k = 0; k < index.size(); ++k) out.data()[k] = index[k] >= 0 ? src[index[k]] : 0.0;
  const int ia = a.id;
  return t.push(std::move(out), {a}, [ia, index = std::move(index), self = static_cast<int>(t.size())](Tape& t) {
    if (Matrix* ga = t.grad_target(ia)) {
      const double* g = t.grad(self).data();
      for (std::size_t k = 0; k < index.size(); ++k) {
        if (index[k] >= 0) ga->data()[index[k]] += g[k];
      }
    }
  });
}

Var gather_rows(Var a, std::vector<int> rows) {
  Tape& t = tape_of(a);
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  const int ia = a.id;
  return t.push(std::move(out), {a}, [ia, rows = std::move(rows), self = static_cast<int>(t.size())](Tape& t) {
    if (Matrix* ga = t.grad_target(ia)) {
      const Matrix& g = t.grad(self);
      for (std::size_t i = 0; i < rows.size(); ++i) ga->row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var mean_rows(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  const double inv = 1.0 / static_cast<double>(a.rows());
  return t.push(a.value().colwise().mean(), {a}, [ia, inv, self = static_cast<int>(t.size())](Tape& t) {
    if (Matrix* ga = t.grad_target(ia)) ga->rowwise() += inv * t.grad(self).row(0);
  });
}

Var segment_mean(Var a, std::vector<std::vector<int>> segments) {
  Tape& t = tape_of(a);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(segments.size()), a.cols());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (segments[s].empty()) throw std::logic_error("empty pooling segment");
    for (int r : segments[s]) out.row(static_cast<Eigen::Index>(s)) += a.value().row(r);
    out.row(static_cast<Eigen::Index>(s)) /= static_cast<double>(segments[s].size());
  }
  const int ia = a.id;
  return t.push(std::move(out), {a}, [ia, segments = std::move(segments), self = static_cast<int>(t.size())](Tape& t) {
    if (Matrix* ga = t.grad_target(ia)) {
      const Matrix& g = t.grad(self);
      for (std::size_t s = 0; s < segments.size(); ++s) {
        const double inv = 1.0 / static_cast<double>(segments[s].size());
        for (int r : segments[s]) ga->row(r) += inv * g.row(static_cast<Eigen::Index>(s));
      }
    }
  });
}

Var replace_rows(Var a, Var row, std::vector<int> rows) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (int r : rows) out.row(r) = row.value().row(0);
  const int ia = a.id, ir = row.id;
  return t.push(std::move(out), {a, row}, [ia, ir, rows = std::move(rows), self = static_cast<int>(t.size())](Tape& t) {
    const Matrix& g = t.grad(self);
    if (Matrix* ga = t.grad_target(ia)) {
      Matrix pass = g;
      for (int r : rows) pass.row(r).setZero();
      *ga += pass;
    }
    if (Matrix* gr = t.grad_target(ir)) {
      for (int r : rows) *gr += g.row(r);
    }
  });
}

Var broadcast_rows(Var row, Eigen::Index n) {
  Tape& t = tape_of(row);
  Matrix out = row.value().row(0).replicate(n, 1);
  const int ir = row.id;
  return t.push(std::move(out), {row}, [ir, self = static_cast<int>(t.size())](Tape& t) {
    if (Matrix* gr = t.grad_target(ir)) *gr += t.grad(self).colwise().sum();
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id;
  return t.push(std::move(out), {a}, [ia, self = static_cast<int>(t.size())](Tape& t) {
    if (Matrix* ga = t.grad_target(ia)) ga->array() += t.grad(self)(0, 0);
  });
}

Var mse(Var pred, const Matrix& target) {
  Tape& t = tape_of(pred);
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw std::logic_error("mse shape mismatch");
  Matrix diff = pred.value() - target;
  const double n = static_cast<double>(diff.size());
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  const int ip = pred.id;
  return t.push(std::move(out), {pred}, [ip, diff = std::move(diff), n, self = static_cast<int>(t.size())](Tape& t) {
    if (Matrix* gp = t.grad_target(ip)) *gp += (2.0 * t.grad(self)(0, 0) / n) * diff;
  });
}

}  // namespace unic::ad
