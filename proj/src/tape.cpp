#include "ssnt/tape.hpp"

#include <cmath>
#include <string>

#include "ssnt/errors.hpp"

namespace ssnt {

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::check_var(Var v) const {
  if (v.index >= nodes_.size()) throw UsageError("variable not on this tape");
}

Var Tape::constant(Vec value) {
  Node n{.op = Op::constant};
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::lookup(ParamId table, std::size_t row) {
  const Tensor& t = (*params_)[table].value;
  if (row >= t.rows()) {
    throw InputError("lookup row " + std::to_string(row) + " out of range for " +
                     (*params_)[table].name);
  }
  auto r = t.row(row);
  Node n{.op = Op::lookup, .param = table, .aux = row};
  n.value.assign(r.begin(), r.end());
  return push(std::move(n));
}

Var Tape::linear(ParamId weight, Var x, std::size_t col_offset) {
  check_var(x);
  const Tensor& w = (*params_)[weight].value;
  const Vec& xv = nodes_[x.index].value;
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  if (col_offset + xv.size() > cols) {
    throw ConfigError("linear: input of size " + std::to_string(xv.size()) +
                      " does not fit " + (*params_)[weight].name);
  }
  Node n{.op = Op::linear, .a = x, .param = weight, .aux = col_offset};
  n.value.assign(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w.data().data() + r * cols + col_offset;
    n.value[r] = dot(wr, xv.data(), xv.size());
  }
  return push(std::move(n));
}

Var Tape::add_bias(Var a, ParamId bias) {
  check_var(a);
  const Tensor& b = (*params_)[bias].value;
  const Vec& av = nodes_[a.index].value;
  if (b.size() != av.size()) {
    throw ConfigError("bias size mismatch for " + (*params_)[bias].name);
  }
  Node n{.op = Op::add_bias, .a = a, .param = bias};
  n.value = av;
  for (std::size_t k = 0; k < av.size(); ++k) n.value[k] += b[k];
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_var(a);
  check_var(b);
  const Vec& av = nodes_[a.index].value;
  const Vec& bv = nodes_[b.index].value;
  if (av.size() != bv.size()) throw ConfigError("add: size mismatch");
  Node n{.op = Op::add, .a = a, .b = b};
  n.value = av;
  for (std::size_t k = 0; k < av.size(); ++k) n.value[k] += bv[k];
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check_var(a);
  check_var(b);
  const Vec& av = nodes_[a.index].value;
  const Vec& bv = nodes_[b.index].value;
  if (av.size() != bv.size()) throw ConfigError("mul: size mismatch");
  Node n{.op = Op::mul, .a = a, .b = b};
  n.value = av;
  for (std::size_t k = 0; k < av.size(); ++k) n.value[k] *= bv[k];
  return push(std::move(n));
}

Var Tape::scale(Var a, Vec factors) {
  check_var(a);
  const Vec& av = nodes_[a.index].value;
  if (av.size() != factors.size()) throw ConfigError("scale: size mismatch");
  Node n{.op = Op::scale, .a = a};
  n.value = av;
  for (std::size_t k = 0; k < av.size(); ++k) n.value[k] *= factors[k];
  n.cache = std::move(factors);
  return push(std::move(n));
}

Var Tape::negate(Var a) {
  check_var(a);
  Node n{.op = Op::negate, .a = a};
  n.value = nodes_[a.index].value;
  for (double& v : n.value) v = -v;
  return push(std::move(n));
}

Var Tape::activate(Activation kind, Var a) {
  check_var(a);
  Op op = Op::sigmoid;
  if (kind == Activation::tanh) op = Op::tanh;
  if (kind == Activation::relu) op = Op::relu;
  Node n{.op = op, .a = a};
  n.value = nodes_[a.index].value;
  for (double& v : n.value) v = apply_activation(kind, v);
  return push(std::move(n));
}

Var Tape::log_sigmoid(Var a) {
  check_var(a);
  Node n{.op = Op::log_sigmoid, .a = a};
  n.value = nodes_[a.index].value;
  for (double& v : n.value) v = ssnt::log_sigmoid(v);
  return push(std::move(n));
}

Var Tape::concat(Var a, Var b) {
  check_var(a);
  check_var(b);
  const Vec& av = nodes_[a.index].value;
  const Vec& bv = nodes_[b.index].value;
  Node n{.op = Op::concat, .a = a, .b = b, .aux = av.size()};
  n.value.reserve(av.size() + bv.size());
  n.value.insert(n.value.end(), av.begin(), av.end());
  n.value.insert(n.value.end(), bv.begin(), bv.end());
  return push(std::move(n));
}

Var Tape::log_softmax_pick(Var a, std::size_t index) {
  check_var(a);
  const Vec& av = nodes_[a.index].value;
  if (index >= av.size()) throw InputError("log_softmax_pick: index out of range");
  Node n{.op = Op::log_softmax_pick, .a = a, .aux = index};
  const Vec logp = log_softmax(av);
  n.value = {logp[index]};
  n.cache.resize(logp.size());
  for (std::size_t k = 0; k < logp.size(); ++k) n.cache[k] = std::exp(logp[k]);
  return push(std::move(n));
}

void Tape::backward_scalars(std::span<const std::pair<Var, double>> seeds,
                            GradientBuffer& grads) {
  std::vector<Seed> full;
  full.reserve(seeds.size());
  for (const auto& [v, g] : seeds) {
    check_var(v);
    full.push_back(Seed{v, Vec(nodes_[v.index].value.size(), g)});
  }
  backward(full, grads);
}

void Tape::backward(std::span<const Seed> seeds, GradientBuffer& grads) {
  if (backward_done_) {
    throw UsageError("backward called twice on one tape without reset");
  }
  backward_done_ = true;
  std::vector<Vec> adj(nodes_.size());
  auto adj_of = [&](Var v) -> Vec& {
    Vec& g = adj[v.index];
    if (g.empty()) g.assign(nodes_[v.index].value.size(), 0.0);
    return g;
  };
  for (const Seed& s : seeds) {
    check_var(s.var);
    Vec& g = adj_of(s.var);
    if (s.grad.size() != g.size()) throw UsageError("seed size mismatch");
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += s.grad[k];
  }

  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    if (adj[idx].empty()) continue;
    const Node& n = nodes_[idx];
    const Vec& g = adj[idx];
    switch (n.op) {
      case Op::constant:
        break;
      case Op::lookup: {
        Tensor& dt = grads[n.param];
        auto row = dt.row(n.aux);
        for (std::size_t k = 0; k < g.size(); ++k) row[k] += g[k];
        break;
      }
      case Op::linear: {
        const Tensor& w = (*params_)[n.param].value;
        Tensor& dw = grads[n.param];
        const std::size_t cols = w.cols();
        const Vec& xv = nodes_[n.a.index].value;
        Vec& dx = adj_of(n.a);
        for (std::size_t r = 0; r < g.size(); ++r) {
          const double gr = g[r];
          if (gr == 0.0) continue;
          const std::size_t base = r * cols + n.aux;
          const double* wr = w.data().data() + base;
          double* dwr = dw.data().data() + base;
          for (std::size_t c = 0; c < xv.size(); ++c) {
            dwr[c] += gr * xv[c];
            dx[c] += wr[c] * gr;
          }
        }
        break;
      }
      case Op::add_bias: {
        Tensor& db = grads[n.param];
        Vec& da = adj_of(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) {
          db[k] += g[k];
          da[k] += g[k];
        }
        break;
      }
      case Op::add: {
        Vec& da = adj_of(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) da[k] += g[k];
        Vec& db = adj_of(n.b);
        for (std::size_t k = 0; k < g.size(); ++k) db[k] += g[k];
        break;
      }
      case Op::mul: {
        const Vec& av = nodes_[n.a.index].value;
        const Vec& bv = nodes_[n.b.index].value;
        Vec& da = adj_of(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) da[k] += g[k] * bv[k];
        Vec& db = adj_of(n.b);
        for (std::size_t k = 0; k < g.size(); ++k) db[k] += g[k] * av[k];
        break;
      }
      case Op::scale: {
        Vec& da = adj_of(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) da[k] += g[k] * n.cache[k];
        break;
      }
      case Op::negate: {
        Vec& da = adj_of(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) da[k] -= g[k];
        break;
      }
      case Op::sigmoid: {
        Vec& da = adj_of(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) {
          const double y = n.value[k];
          da[k] += g[k] * y * (1.0 - y);
        }
        break;
      }
      case Op::tanh: {
        Vec& da = adj_of(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) {
          const double y = n.value[k];
          da[k] += g[k] * (1.0 - y * y);
        }
        break;
      }
      case Op::relu: {
        const Vec& av = nodes_[n.a.index].value;
        Vec& da = adj_of(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (av[k] > 0.0) da[k] += g[k];
        }
        break;
      }
      case Op::log_sigmoid: {
        const Vec& av = nodes_[n.a.index].value;
        Vec& da = adj_of(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) da[k] += g[k] * sigmoid(-av[k]);
        break;
      }
      case Op::concat: {
        Vec& da = adj_of(n.a);
        for (std::size_t k = 0; k < n.aux; ++k) da[k] += g[k];
        Vec& db = adj_of(n.b);
        for (std::size_t k = n.aux; k < g.size(); ++k) db[k - n.aux] += g[k];
        break;
      }
      case Op::log_softmax_pick: {
        Vec& da = adj_of(n.a);
        const double gs = g[0];
        for (std::size_t k = 0; k < da.size(); ++k) da[k] -= gs * n.cache[k];
        da[n.aux] += gs;
        break;
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

}  // namespace ssnt
