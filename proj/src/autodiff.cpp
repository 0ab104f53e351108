#include "prilora/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "prilora/errors.hpp"

namespace prilora::ad {

Var Graph::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Graph::parameter(Tensor value) { return push(std::move(value), true, nullptr); }

Var Graph::push(Tensor value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(backward)});
    return Var{nodes_.size() - 1};
}

Tensor Graph::grad(Var v) const {
    const auto& n = nodes_[v.id];
    if (n.grad.empty()) return Tensor::zeros(n.value.shape());
    return n.grad;
}

Tensor& Graph::grad_buffer(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

void Graph::backward(Var out) {
    if (nodes_[out.id].value.numel() != 1) {
        throw DimensionError("backward: output must hold a single element, got " +
                             shape_string(nodes_[out.id].value.shape()));
    }
    grad_buffer(out.id)[0] += 1.0;
    for (std::size_t i = out.id + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (n.backward && n.requires_grad && !n.grad.empty()) n.backward(*this, i);
    }
}

namespace {

std::size_t dim(const Tensor& t, std::size_t axis) { return t.shape()[axis]; }

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(what) + ": expected a matrix, got " + shape_string(t.shape()));
    }
}

}  // namespace

Var matmul_nt(Graph& g, Var a, Var b) {
    Tensor out = prilora::matmul_nt(g.value(a), g.value(b));
    const bool rg = g.requires_grad(a) || g.requires_grad(b);
    return g.push(std::move(out), rg, [a, b](Graph& gr, std::size_t self) {
        const Tensor& dout = gr.grad_at(self);
        if (gr.needs_grad_at(a.id)) axpy(1.0, prilora::matmul(dout, gr.value_at(b.id)), gr.grad_buffer(a.id));
        if (gr.needs_grad_at(b.id)) axpy(1.0, prilora::matmul_tn(dout, gr.value_at(a.id)), gr.grad_buffer(b.id));
    });
}

Var add(Graph& g, Var a, Var b) {
    Tensor out = prilora::add(g.value(a), g.value(b));
    const bool rg = g.requires_grad(a) || g.requires_grad(b);
    return g.push(std::move(out), rg, [a, b](Graph& gr, std::size_t self) {
        const Tensor& dout = gr.grad_at(self);
        if (gr.needs_grad_at(a.id)) axpy(1.0, dout, gr.grad_buffer(a.id));
        if (gr.needs_grad_at(b.id)) axpy(1.0, dout, gr.grad_buffer(b.id));
    });
}

Var add_bias(Graph& g, Var x, Var bias) {
    const Tensor& xv = g.value(x);
    const Tensor& bv = g.value(bias);
    require_matrix(xv, "add_bias");
    if (bv.rank() != 1 || dim(bv, 0) != xv.cols()) {
        throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " does not match " +
                             shape_string(xv.shape()));
    }
    Tensor out = xv;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += bv[j];
    }
    const bool rg = g.requires_grad(x) || g.requires_grad(bias);
    return g.push(std::move(out), rg, [x, bias](Graph& gr, std::size_t self) {
        const Tensor& dout = gr.grad_at(self);
        if (gr.needs_grad_at(x.id)) axpy(1.0, dout, gr.grad_buffer(x.id));
        if (gr.needs_grad_at(bias.id)) {
            Tensor& db = gr.grad_buffer(bias.id);
            for (std::size_t i = 0; i < dout.rows(); ++i) {
                auto r = dout.row(i);
                for (std::size_t j = 0; j < r.size(); ++j) db[j] += r[j];
            }
        }
    });
}

Var scale(Graph& g, Var a, double c) {
    Tensor out = prilora::scaled(g.value(a), c);
    return g.push(std::move(out), g.requires_grad(a), [a, c](Graph& gr, std::size_t self) {
        axpy(c, gr.grad_at(self), gr.grad_buffer(a.id));
    });
}

Var mul(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    if (av.shape() != bv.shape()) {
        throw DimensionError("mul: shape mismatch " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    }
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    const bool rg = g.requires_grad(a) || g.requires_grad(b);
    return g.push(std::move(out), rg, [a, b](Graph& gr, std::size_t self) {
        const Tensor& dout = gr.grad_at(self);
        if (gr.needs_grad_at(a.id)) {
            Tensor& da = gr.grad_buffer(a.id);
            const Tensor& bv2 = gr.value_at(b.id);
            for (std::size_t i = 0; i < da.numel(); ++i) da[i] += dout[i] * bv2[i];
        }
        if (gr.needs_grad_at(b.id)) {
            Tensor& db = gr.grad_buffer(b.id);
            const Tensor& av2 = gr.value_at(a.id);
            for (std::size_t i = 0; i < db.numel(); ++i) db[i] += dout[i] * av2[i];
        }
    });
}

Var relu(Graph& g, Var a) {
    Tensor out = g.value(a);
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return g.push(std::move(out), g.requires_grad(a), [a](Graph& gr, std::size_t self) {
        const Tensor& dout = gr.grad_at(self);
        const Tensor& in = gr.value_at(a.id);
        Tensor& da = gr.grad_buffer(a.id);
        for (std::size_t i = 0; i < da.numel(); ++i) {
            if (in[i] > 0.0) da[i] += dout[i];
        }
    });
}

Var layer_norm(Graph& g, Var a, double eps) {
    const Tensor& in = g.value(a);
    require_matrix(in, "layer_norm");
    const std::size_t m = in.rows(), d = in.cols();
    Tensor out({m, d});
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        auto r = in.row(i);
        double mean = 0.0;
        for (double v : r) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : r) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        auto o = out.row(i);
        for (std::size_t j = 0; j < d; ++j) o[j] = (r[j] - mean) * inv_std[i];
    }
    return g.push(std::move(out), g.requires_grad(a),
                  [a, inv_std = std::move(inv_std)](Graph& gr, std::size_t self) {
                      const Tensor& dy = gr.grad_at(self);
                      const Tensor& y = gr.value_at(self);
                      Tensor& dx = gr.grad_buffer(a.id);
                      const std::size_t rows = y.rows(), cols = y.cols();
                      for (std::size_t i = 0; i < rows; ++i) {
                          auto dyr = dy.row(i);
                          auto yr = y.row(i);
                          double mean_dy = 0.0, mean_dyy = 0.0;
                          for (std::size_t j = 0; j < cols; ++j) {
                              mean_dy += dyr[j];
                              mean_dyy += dyr[j] * yr[j];
                          }
                          mean_dy /= static_cast<double>(cols);
                          mean_dyy /= static_cast<double>(cols);
                          auto dxr = dx.row(i);
                          for (std::size_t j = 0; j < cols; ++j) {
                              dxr[j] += inv_std[i] * (dyr[j] - mean_dy - yr[j] * mean_dyy);
                          }
                      }
                  });
}

Var attention(Graph& g, Var q, Var k, Var v, std::size_t batch, std::size_t seq, std::size_t heads) {
    const Tensor& Q = g.value(q);
    const Tensor& K = g.value(k);
    const Tensor& V = g.value(v);
    require_matrix(Q, "attention");
    if (K.shape() != Q.shape() || V.shape() != Q.shape()) {
        throw DimensionError("attention: q/k/v shapes differ");
    }
    if (Q.rows() != batch * seq) {
        throw DimensionError("attention: " + std::to_string(Q.rows()) + " rows is not batch*seq = " +
                             std::to_string(batch * seq));
    }
    const std::size_t d = Q.cols();
    if (heads == 0 || d % heads != 0) {
        throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " +
                             std::to_string(heads) + " heads");
    }
    const std::size_t dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    // probs[(b*heads + h)*seq*seq + i*seq + j]
    std::vector<double> probs(batch * heads * seq * seq);
    Tensor out({batch * seq, d});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            double* P = probs.data() + (b * heads + h) * seq * seq;
            const std::size_t c0 = h * dh;
            for (std::size_t i = 0; i < seq; ++i) {
                auto qi = Q.row(b * seq + i).subspan(c0, dh);
                double mx = -INFINITY;
                for (std::size_t j = 0; j < seq; ++j) {
                    auto kj = K.row(b * seq + j).subspan(c0, dh);
                    double s = 0.0;
                    for (std::size_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
                    P[i * seq + j] = s * inv_sqrt;
                    mx = std::max(mx, P[i * seq + j]);
                }
                double z = 0.0;
                for (std::size_t j = 0; j < seq; ++j) {
                    P[i * seq + j] = std::exp(P[i * seq + j] - mx);
                    z += P[i * seq + j];
                }
                auto o = out.row(b * seq + i).subspan(c0, dh);
                for (std::size_t j = 0; j < seq; ++j) {
                    P[i * seq + j] /= z;
                    auto vj = V.row(b * seq + j).subspan(c0, dh);
                    for (std::size_t t = 0; t < dh; ++t) o[t] += P[i * seq + j] * vj[t];
                }
            }
        }
    }

    const bool rg = g.requires_grad(q) || g.requires_grad(k) || g.requires_grad(v);
    return g.push(std::move(out), rg,
                  [q, k, v, batch, seq, heads, dh, inv_sqrt, probs = std::move(probs)](Graph& gr, std::size_t self) {
                      const Tensor& dO = gr.grad_at(self);
                      const Tensor& Qv = gr.value_at(q.id);
                      const Tensor& Kv = gr.value_at(k.id);
                      const Tensor& Vv = gr.value_at(v.id);
                      const std::size_t width = Qv.cols();
                      Tensor dQ({batch * seq, width}), dK({batch * seq, width}), dV({batch * seq, width});
                      std::vector<double> dS(seq * seq);
                      for (std::size_t b = 0; b < batch; ++b) {
                          for (std::size_t h = 0; h < heads; ++h) {
                              const double* P = probs.data() + (b * heads + h) * seq * seq;
                              const std::size_t c0 = h * dh;
                              for (std::size_t i = 0; i < seq; ++i) {
                                  auto doi = dO.row(b * seq + i).subspan(c0, dh);
                                  double dot = 0.0;
                                  for (std::size_t j = 0; j < seq; ++j) {
                                      auto vj = Vv.row(b * seq + j).subspan(c0, dh);
                                      auto dvj = dV.row(b * seq + j).subspan(c0, dh);
                                      double dp = 0.0;
                                      for (std::size_t t = 0; t < dh; ++t) {
                                          dp += doi[t] * vj[t];
                                          dvj[t] += P[i * seq + j] * doi[t];
                                      }
                                      dS[i * seq + j] = dp;
                                      dot += dp * P[i * seq + j];
                                  }
                                  for (std::size_t j = 0; j < seq; ++j) {
                                      dS[i * seq + j] = P[i * seq + j] * (dS[i * seq + j] - dot) * inv_sqrt;
                                  }
                              }
                              for (std::size_t i = 0; i < seq; ++i) {
                                  auto qi = Qv.row(b * seq + i).subspan(c0, dh);
                                  auto dqi = dQ.row(b * seq + i).subspan(c0, dh);
                                  for (std::size_t j = 0; j < seq; ++j) {
                                      const double s = dS[i * seq + j];
                                      auto kj = Kv.row(b * seq + j).subspan(c0, dh);
                                      auto dkj = dK.row(b * seq + j).subspan(c0, dh);
                                      for (std::size_t t = 0; t < dh; ++t) {
                                          dqi[t] += s * kj[t];
                                          dkj[t] += s * qi[t];
                                      }
                                  }
                              }
                          }
                      }
                      if (gr.needs_grad_at(q.id)) axpy(1.0, dQ, gr.grad_buffer(q.id));
                      if (gr.needs_grad_at(k.id)) axpy(1.0, dK, gr.grad_buffer(k.id));
                      if (gr.needs_grad_at(v.id)) axpy(1.0, dV, gr.grad_buffer(v.id));
                  });
}

Var mean_pool(Graph& g, Var x, std::size_t batch, std::size_t seq) {
    const Tensor& in = g.value(x);
    require_matrix(in, "mean_pool");
    if (in.rows() != batch * seq) throw DimensionError("mean_pool: row count is not batch*seq");
    const std::size_t d = in.cols();
    Tensor out({batch, d});
    const double w = 1.0 / static_cast<double>(seq);
    for (std::size_t b = 0; b < batch; ++b) {
        auto o = out.row(b);
        for (std::size_t i = 0; i < seq; ++i) {
            auto r = in.row(b * seq + i);
            for (std::size_t j = 0; j < d; ++j) o[j] += r[j];
        }
        for (auto& v : o) v *= w;
    }
    return g.push(std::move(out), g.requires_grad(x), [x, batch, seq, w](Graph& gr, std::size_t self) {
        const Tensor& dout = gr.grad_at(self);
        Tensor& dx = gr.grad_buffer(x.id);
        for (std::size_t b = 0; b < batch; ++b) {
            auto dr = dout.row(b);
            for (std::size_t i = 0; i < seq; ++i) {
                auto xr = dx.row(b * seq + i);
                for (std::size_t j = 0; j < dr.size(); ++j) xr[j] += w * dr[j];
            }
        }
    });
}

Var sum(Graph& g, Var a) {
    double s = 0.0;
    for (double v : g.value(a).data()) s += v;
    return g.push(Tensor({1}, {s}), g.requires_grad(a), [a](Graph& gr, std::size_t self) {
        const double d = gr.grad_at(self)[0];
        for (auto& v : gr.grad_buffer(a.id).data()) v += d;
    });
}

Tensor softmax_rows(const Tensor& logits) {
    require_matrix(logits, "softmax_rows");
    Tensor p = logits;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        auto r = p.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double z = 0.0;
        for (auto& v : r) {
            v = std::exp(v - mx);
            z += v;
        }
        for (auto& v : r) v /= z;
    }
    return p;
}

Var softmax_cross_entropy(Graph& g, Var logits, std::span<const int> labels) {
    const Tensor& z = g.value(logits);
    require_matrix(z, "softmax_cross_entropy");
    if (labels.size() != z.rows()) throw DimensionError("softmax_cross_entropy: label count != batch");
    const std::size_t n = z.rows(), c = z.cols();
    Tensor probs = softmax_rows(z);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c) throw ParameterError("softmax_cross_entropy: label out of range");
        // log-sum-exp form avoids log(0) when a probability underflows.
        auto r = z.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double s = 0.0;
        for (double v : r) s += std::exp(v - mx);
        loss += (mx + std::log(s)) - r[static_cast<std::size_t>(y)];
    }
    loss /= static_cast<double>(n);
    std::vector<int> ys(labels.begin(), labels.end());
    return g.push(Tensor({1}, {loss}), g.requires_grad(logits),
                  [logits, probs = std::move(probs), ys = std::move(ys)](Graph& gr, std::size_t self) {
                      const double d = gr.grad_at(self)[0] / static_cast<double>(ys.size());
                      Tensor& dz = gr.grad_buffer(logits.id);
                      for (std::size_t i = 0; i < ys.size(); ++i) {
                          auto pr = probs.row(i);
                          auto dr = dz.row(i);
                          for (std::size_t j = 0; j < pr.size(); ++j) {
                              dr[j] += d * (pr[j] - (static_cast<int>(j) == ys[i] ? 1.0 : 0.0));
                          }
                      }
                  });
}

Var mean_squared_error(Graph& g, Var pred, std::span<const double> targets) {
    const Tensor& p = g.value(pred);
    if (p.numel() != targets.size()) throw DimensionError("mean_squared_error: target count != predictions");
    double loss = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) loss += (p[i] - targets[i]) * (p[i] - targets[i]);
    loss /= static_cast<double>(targets.size());
    std::vector<double> ts(targets.begin(), targets.end());
    return g.push(Tensor({1}, {loss}), g.requires_grad(pred), [pred, ts = std::move(ts)](Graph& gr, std::size_t self) {
        const double d = gr.grad_at(self)[0] * 2.0 / static_cast<double>(ts.size());
        const Tensor& pv = gr.value_at(pred.id);
        Tensor& dp = gr.grad_buffer(pred.id);
        for (std::size_t i = 0; i < ts.size(); ++i) dp[i] += d * (pv[i] - ts[i]);
    });
}

}  // namespace prilora::ad
