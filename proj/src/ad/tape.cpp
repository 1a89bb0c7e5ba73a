#include "hedge/ad/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hedge::ad {

NodeId Tape::push(Matrix value, bool needs_grad, std::function<void(Tape&, NodeId)> back) {
    Node node;
    node.value = std::move(value);
    node.needs_grad = needs_grad;
    if (needs_grad) node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

Matrix& Tape::grad_buffer(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols(), 0.0);
    return n.grad;
}

NodeId Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

NodeId Tape::variable(Matrix value) { return push(std::move(value), true, nullptr); }

NodeId Tape::affine(NodeId x, NodeId w, NodeId b) {
    const Matrix& xv = value(x);
    const Matrix& wv = value(w);
    const Matrix& bv = value(b);
    if (xv.cols() != wv.cols()) {
        throw std::invalid_argument("affine: input width " + std::to_string(xv.cols()) + " does not match weight width " +
                                    std::to_string(wv.cols()));
    }
    if (bv.rows() != 1 || bv.cols() != wv.rows()) throw std::invalid_argument("affine: bias shape mismatch");
    const std::size_t n = xv.rows();
    const std::size_t in = xv.cols();
    const std::size_t out = wv.rows();
    Matrix y(n, out);
    for (std::size_t r = 0; r < n; ++r) {
        const double* xr = xv.data() + r * in;
        for (std::size_t o = 0; o < out; ++o) {
            const double* wo = wv.data() + o * in;
            double acc = bv[o];
            for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wo[i];
            y(r, o) = acc;
        }
    }
    const bool ng = needs_grad(x) || needs_grad(w) || needs_grad(b);
    return push(std::move(y), ng, [x, w, b, n, in, out](Tape& t, NodeId self) {
        const Matrix& dy = t.nodes_[self].grad;
        if (t.needs_grad(x)) {
            const Matrix& wv = t.value(w);
            Matrix& dx = t.grad_buffer(x);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t o = 0; o < out; ++o) {
                    const double g = dy(r, o);
                    const double* wo = wv.data() + o * in;
                    for (std::size_t i = 0; i < in; ++i) dx(r, i) += g * wo[i];
                }
            }
        }
        if (t.needs_grad(w)) {
            const Matrix& xv = t.value(x);
            Matrix& dw = t.grad_buffer(w);
            for (std::size_t r = 0; r < n; ++r) {
                const double* xr = xv.data() + r * in;
                for (std::size_t o = 0; o < out; ++o) {
                    const double g = dy(r, o);
                    for (std::size_t i = 0; i < in; ++i) dw(o, i) += g * xr[i];
                }
            }
        }
        if (t.needs_grad(b)) {
            Matrix& db = t.grad_buffer(b);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t o = 0; o < out; ++o) db[o] += dy(r, o);
            }
        }
    });
}

NodeId Tape::relu(NodeId x) {
    const Matrix& xv = value(x);
    Matrix y(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    return push(std::move(y), needs_grad(x), [x](Tape& t, NodeId self) {
        const Matrix& dy = t.nodes_[self].grad;
        const Matrix& xv = t.value(x);
        Matrix& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < dy.size(); ++i) {
            if (xv[i] > 0.0) dx[i] += dy[i];
        }
    });
}

NodeId Tape::batchnorm_train(NodeId x, NodeId scale, NodeId shift, double eps, BatchStats* stats) {
    const Matrix& xv = value(x);
    const std::size_t n = xv.rows();
    const std::size_t d = xv.cols();
    if (n < 2) throw std::invalid_argument("batchnorm in train mode needs at least 2 rows");
    if (value(scale).rows() != 1 || value(scale).cols() != d || !value(shift).same_shape(value(scale))) {
        throw std::invalid_argument("batchnorm: scale/shift shape mismatch");
    }
    Matrix mean(1, d, 0.0);
    Matrix var(1, d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) mean[c] += xv(r, c);
    }
    for (std::size_t c = 0; c < d; ++c) mean[c] /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            const double e = xv(r, c) - mean[c];
            var[c] += e * e;
        }
    }
    for (std::size_t c = 0; c < d; ++c) var[c] /= static_cast<double>(n);

    Matrix inv_std(1, d);
    for (std::size_t c = 0; c < d; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    Matrix xhat(n, d);
    Matrix y(n, d);
    const Matrix& sv = value(scale);
    const Matrix& bv = value(shift);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            xhat(r, c) = (xv(r, c) - mean[c]) * inv_std[c];
            y(r, c) = sv[c] * xhat(r, c) + bv[c];
        }
    }
    if (stats != nullptr) {
        stats->mean = mean;
        stats->var = var;
    }
    const bool ng = needs_grad(x) || needs_grad(scale) || needs_grad(shift);
    return push(std::move(y), ng,
                [x, scale, shift, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, NodeId self) {
                    const Matrix& dy = t.nodes_[self].grad;
                    if (t.needs_grad(scale)) {
                        Matrix& ds = t.grad_buffer(scale);
                        for (std::size_t r = 0; r < n; ++r) {
                            for (std::size_t c = 0; c < d; ++c) ds[c] += dy(r, c) * xhat(r, c);
                        }
                    }
                    if (t.needs_grad(shift)) {
                        Matrix& db = t.grad_buffer(shift);
                        for (std::size_t r = 0; r < n; ++r) {
                            for (std::size_t c = 0; c < d; ++c) db[c] += dy(r, c);
                        }
                    }
                    if (t.needs_grad(x)) {
                        const Matrix& sv = t.value(scale);
                        Matrix& dx = t.grad_buffer(x);
                        const double nn = static_cast<double>(n);
                        for (std::size_t c = 0; c < d; ++c) {
                            double sum_g = 0.0;
                            double sum_gx = 0.0;
                            for (std::size_t r = 0; r < n; ++r) {
                                const double g = dy(r, c) * sv[c];
                                sum_g += g;
                                sum_gx += g * xhat(r, c);
                            }
                            for (std::size_t r = 0; r < n; ++r) {
                                const double g = dy(r, c) * sv[c];
                                dx(r, c) += inv_std[c] * (g - sum_g / nn - xhat(r, c) * sum_gx / nn);
                            }
                        }
                    }
                });
}

NodeId Tape::batchnorm_eval(NodeId x, NodeId scale, NodeId shift, const Matrix& mean, const Matrix& var, double eps) {
    const Matrix& xv = value(x);
    const std::size_t n = xv.rows();
    const std::size_t d = xv.cols();
    if (mean.cols() != d || var.cols() != d || value(scale).cols() != d || value(shift).cols() != d) {
        throw std::invalid_argument("batchnorm: statistics shape mismatch");
    }
    Matrix inv_std(1, d);
    for (std::size_t c = 0; c < d; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    Matrix xhat(n, d);
    Matrix y(n, d);
    const Matrix& sv = value(scale);
    const Matrix& bv = value(shift);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            xhat(r, c) = (xv(r, c) - mean[c]) * inv_std[c];
            y(r, c) = sv[c] * xhat(r, c) + bv[c];
        }
    }
    const bool ng = needs_grad(x) || needs_grad(scale) || needs_grad(shift);
    return push(std::move(y), ng,
                [x, scale, shift, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, NodeId self) {
                    const Matrix& dy = t.nodes_[self].grad;
                    const Matrix& sv = t.value(scale);
                    for (std::size_t r = 0; r < n; ++r) {
                        for (std::size_t c = 0; c < d; ++c) {
                            const double g = dy(r, c);
                            if (t.needs_grad(scale)) t.grad_buffer(scale)[c] += g * xhat(r, c);
                            if (t.needs_grad(shift)) t.grad_buffer(shift)[c] += g;
                            if (t.needs_grad(x)) t.grad_buffer(x)(r, c) += g * sv[c] * inv_std[c];
                        }
                    }
                });
}

NodeId Tape::add(NodeId a, NodeId b) {
    require_same_shape(value(a), value(b), "add");
    Matrix y = value(a);
    y += value(b);
    return push(std::move(y), needs_grad(a) || needs_grad(b), [a, b](Tape& t, NodeId self) {
        const Matrix& dy = t.nodes_[self].grad;
        if (t.needs_grad(a)) t.grad_buffer(a) += dy;
        if (t.needs_grad(b)) t.grad_buffer(b) += dy;
    });
}

NodeId Tape::sub(NodeId a, NodeId b) {
    require_same_shape(value(a), value(b), "sub");
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    Matrix y(av.rows(), av.cols());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
    return push(std::move(y), needs_grad(a) || needs_grad(b), [a, b](Tape& t, NodeId self) {
        const Matrix& dy = t.nodes_[self].grad;
        if (t.needs_grad(a)) t.grad_buffer(a) += dy;
        if (t.needs_grad(b)) {
            Matrix& db = t.grad_buffer(b);
            for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
        }
    });
}

NodeId Tape::mul(NodeId a, NodeId b) {
    require_same_shape(value(a), value(b), "mul");
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    Matrix y(av.rows(), av.cols());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    return push(std::move(y), needs_grad(a) || needs_grad(b), [a, b](Tape& t, NodeId self) {
        const Matrix& dy = t.nodes_[self].grad;
        if (t.needs_grad(a)) {
            const Matrix& bv = t.value(b);
            Matrix& da = t.grad_buffer(a);
            for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
        }
        if (t.needs_grad(b)) {
            const Matrix& av = t.value(a);
            Matrix& db = t.grad_buffer(b);
            for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
        }
    });
}

NodeId Tape::scale(NodeId a, double c) {
    Matrix y = value(a);
    y *= c;
    return push(std::move(y), needs_grad(a), [a, c](Tape& t, NodeId self) {
        const Matrix& dy = t.nodes_[self].grad;
        Matrix& da = t.grad_buffer(a);
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += c * dy[i];
    });
}

NodeId Tape::add_scalar(NodeId a, double c) {
    Matrix y = value(a);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += c;
    return push(std::move(y), needs_grad(a), [a](Tape& t, NodeId self) { t.grad_buffer(a) += t.nodes_[self].grad; });
}

NodeId Tape::square(NodeId a) {
    const Matrix& av = value(a);
    Matrix y(av.rows(), av.cols());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * av[i];
    return push(std::move(y), needs_grad(a), [a](Tape& t, NodeId self) {
        const Matrix& dy = t.nodes_[self].grad;
        const Matrix& av = t.value(a);
        Matrix& da = t.grad_buffer(a);
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += 2.0 * av[i] * dy[i];
    });
}

NodeId Tape::map(NodeId a, Scalar f, Scalar df) {
    const Matrix& av = value(a);
    Matrix y(av.rows(), av.cols());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(av[i]);
    return push(std::move(y), needs_grad(a), [a, df = std::move(df)](Tape& t, NodeId self) {
        const Matrix& dy = t.nodes_[self].grad;
        const Matrix& av = t.value(a);
        Matrix& da = t.grad_buffer(a);
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += df(av[i]) * dy[i];
    });
}

NodeId Tape::hcat(NodeId a, NodeId b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (av.rows() != bv.rows()) throw std::invalid_argument("hcat: row counts differ");
    const std::size_t n = av.rows();
    const std::size_t ca = av.cols();
    const std::size_t cb = bv.cols();
    Matrix y(n, ca + cb);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < ca; ++c) y(r, c) = av(r, c);
        for (std::size_t c = 0; c < cb; ++c) y(r, ca + c) = bv(r, c);
    }
    return push(std::move(y), needs_grad(a) || needs_grad(b), [a, b, n, ca, cb](Tape& t, NodeId self) {
        const Matrix& dy = t.nodes_[self].grad;
        if (t.needs_grad(a)) {
            Matrix& da = t.grad_buffer(a);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < ca; ++c) da(r, c) += dy(r, c);
            }
        }
        if (t.needs_grad(b)) {
            Matrix& db = t.grad_buffer(b);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < cb; ++c) db(r, c) += dy(r, ca + c);
            }
        }
    });
}

NodeId Tape::broadcast_rows(NodeId a, std::size_t n) {
    const Matrix& av = value(a);
    if (av.rows() != 1) throw std::invalid_argument("broadcast_rows expects a single row");
    const std::size_t d = av.cols();
    Matrix y(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) y(r, c) = av[c];
    }
    return push(std::move(y), needs_grad(a), [a, n, d](Tape& t, NodeId self) {
        const Matrix& dy = t.nodes_[self].grad;
        Matrix& da = t.grad_buffer(a);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) da[c] += dy(r, c);
        }
    });
}

NodeId Tape::sum(NodeId a) {
    const Matrix& av = value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i];
    return push(Matrix(1, 1, s), needs_grad(a), [a](Tape& t, NodeId self) {
        const double g = t.nodes_[self].grad[0];
        Matrix& da = t.grad_buffer(a);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += g;
    });
}

NodeId Tape::mean(NodeId a) {
    const Matrix& av = value(a);
    if (av.empty()) throw std::invalid_argument("mean of an empty matrix");
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i];
    const double inv = 1.0 / static_cast<double>(av.size());
    return push(Matrix(1, 1, s * inv), needs_grad(a), [a, inv](Tape& t, NodeId self) {
        const double g = t.nodes_[self].grad[0] * inv;
        Matrix& da = t.grad_buffer(a);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += g;
    });
}

void Tape::backward(NodeId root) {
    if (value(root).size() != 1) throw std::invalid_argument("backward without a seed needs a 1x1 root");
    backward(root, Matrix(1, 1, 1.0));
}

void Tape::backward(NodeId root, const Matrix& seed) {
    if (root >= nodes_.size()) throw std::out_of_range("backward: unknown node");
    require_same_shape(value(root), seed, "backward seed");
    zero_grad();
    nodes_[root].grad = seed;
    for (NodeId id = root + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.needs_grad || n.grad.empty() || !n.back) continue;
        n.back(*this, id);
    }
}

void Tape::zero_grad() {
    for (auto& n : nodes_) n.grad = Matrix();
}

}  // namespace hedge::ad
