#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "mmict/tensor.hpp"

namespace mmict {

// Named trainable tensor. Frozen parameters accumulate no gradient and
// receive no optimizer updates.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool frozen = false;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}

    void zero_grad() { grad.zero(); }
};

class Node;
using Var = std::shared_ptr<Node>;

// One vertex in the dynamic computation graph built per forward pass.
class Node {
  public:
    Tensor value;
    Tensor grad;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;  // pushes this->grad into parents' grads
    Parameter* param = nullptr;

    explicit Node(Tensor v) : value(std::move(v)), grad(value.rows, value.cols) {}
};

inline Var constant(Tensor v) { return std::make_shared<Node>(std::move(v)); }

inline Var leaf(Parameter& p) {
    auto n = std::make_shared<Node>(p.value);
    n->param = &p;
    return n;
}

namespace detail {
inline void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}
}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
    detail::require(a->value.cols == b->value.rows,
                    "matmul: shape mismatch " + a->value.shape_str() + " * " +
                        b->value.shape_str());
    auto n = std::make_shared<Node>(matmul_values(a->value, b->value));
    n->parents = {a, b};
    n->backprop = [](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        // dA += dY * B^T ; dB += A^T * dY
        a.grad.add_scaled(matmul_values(self.grad, transpose_values(b.value)), 1.0);
        b.grad.add_scaled(matmul_values(transpose_values(a.value), self.grad), 1.0);
    };
    return n;
}

inline Var add(const Var& a, const Var& b) {
    detail::require(a->value.same_shape(b->value),
                    "add: shape mismatch " + a->value.shape_str() + " + " + b->value.shape_str());
    Tensor out = a->value;
    out.add_scaled(b->value, 1.0);
    auto n = std::make_shared<Node>(std::move(out));
    n->parents = {a, b};
    n->backprop = [](Node& self) {
        self.parents[0]->grad.add_scaled(self.grad, 1.0);
        self.parents[1]->grad.add_scaled(self.grad, 1.0);
    };
    return n;
}

// a (m x n) + bias (1 x n) broadcast over rows
inline Var add_rowwise(const Var& a, const Var& bias) {
    detail::require(bias->value.rows == 1 && bias->value.cols == a->value.cols,
                    "add_rowwise: shape mismatch " + a->value.shape_str() + " + " +
                        bias->value.shape_str());
    Tensor out = a->value;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) += bias->value.at(0, j);
    auto n = std::make_shared<Node>(std::move(out));
    n->parents = {a, bias};
    n->backprop = [](Node& self) {
        self.parents[0]->grad.add_scaled(self.grad, 1.0);
        Node& b = *self.parents[1];
        for (int i = 0; i < self.grad.rows; ++i)
            for (int j = 0; j < self.grad.cols; ++j) b.grad.at(0, j) += self.grad.at(i, j);
    };
    return n;
}

inline Var scale(const Var& a, double s) {
    Tensor out = a->value;
    out.scale(s);
    auto n = std::make_shared<Node>(std::move(out));
    n->parents = {a};
    n->backprop = [s](Node& self) { self.parents[0]->grad.add_scaled(self.grad, s); };
    return n;
}

inline Var mul_elem(const Var& a, const Var& b) {
    detail::require(a->value.same_shape(b->value),
                    "mul_elem: shape mismatch " + a->value.shape_str() + " * " +
                        b->value.shape_str());
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b->value.data[i];
    auto n = std::make_shared<Node>(std::move(out));
    n->parents = {a, b};
    n->backprop = [](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        for (size_t i = 0; i < self.grad.data.size(); ++i) {
            a.grad.data[i] += self.grad.data[i] * b.value.data[i];
            b.grad.data[i] += self.grad.data[i] * a.value.data[i];
        }
    };
    return n;
}

// a (m x n) * g (1 x n) broadcast over rows (layer-norm gain)
inline Var mul_rowwise(const Var& a, const Var& g) {
    detail::require(g->value.rows == 1 && g->value.cols == a->value.cols,
                    "mul_rowwise: shape mismatch " + a->value.shape_str() + " * " +
                        g->value.shape_str());
    Tensor out = a->value;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) *= g->value.at(0, j);
    auto n = std::make_shared<Node>(std::move(out));
    n->parents = {a, g};
    n->backprop = [](Node& self) {
        Node& a = *self.parents[0];
        Node& g = *self.parents[1];
        for (int i = 0; i < self.grad.rows; ++i)
            for (int j = 0; j < self.grad.cols; ++j) {
                a.grad.at(i, j) += self.grad.at(i, j) * g.value.at(0, j);
                g.grad.at(0, j) += self.grad.at(i, j) * a.value.at(i, j);
            }
    };
    return n;
}

// Concatenate along the sequence (row) dimension.
inline Var concat_rows(const Var& a, const Var& b) {
    detail::require(a->value.cols == b->value.cols,
                    "concat_rows: column mismatch " + a->value.shape_str() + " ++ " +
                        b->value.shape_str());
    Tensor out(a->value.rows + b->value.rows, a->value.cols);
    std::copy(a->value.data.begin(), a->value.data.end(), out.data.begin());
    std::copy(b->value.data.begin(), b->value.data.end(),
              out.data.begin() + static_cast<long>(a->value.numel()));
    auto n = std::make_shared<Node>(std::move(out));
    n->parents = {a, b};
    n->backprop = [](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        for (size_t i = 0; i < a.grad.data.size(); ++i) a.grad.data[i] += self.grad.data[i];
        size_t off = a.grad.data.size();
        for (size_t i = 0; i < b.grad.data.size(); ++i) b.grad.data[i] += self.grad.data[off + i];
    };
    return n;
}

inline Var concat_cols(const Var& a, const Var& b) {
    detail::require(a->value.rows == b->value.rows,
                    "concat_cols: row mismatch " + a->value.shape_str() + " ++ " +
                        b->value.shape_str());
    Tensor out(a->value.rows, a->value.cols + b->value.cols);
    for (int i = 0; i < out.rows; ++i) {
        for (int j = 0; j < a->value.cols; ++j) out.at(i, j) = a->value.at(i, j);
        for (int j = 0; j < b->value.cols; ++j) out.at(i, a->value.cols + j) = b->value.at(i, j);
    }
    auto n = std::make_shared<Node>(std::move(out));
    n->parents = {a, b};
    n->backprop = [](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        for (int i = 0; i < self.grad.rows; ++i) {
            for (int j = 0; j < a.grad.cols; ++j) a.grad.at(i, j) += self.grad.at(i, j);
            for (int j = 0; j < b.grad.cols; ++j) b.grad.at(i, j) += self.grad.at(i, a.grad.cols + j);
        }
    };
    return n;
}

inline Var slice_cols(const Var& a, int start, int len) {
    detail::require(start >= 0 && start + len <= a->value.cols,
                    "slice_cols: out of range on " + a->value.shape_str());
    Tensor out(a->value.rows, len);
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < len; ++j) out.at(i, j) = a->value.at(i, start + j);
    auto n = std::make_shared<Node>(std::move(out));
    n->parents = {a};
    n->backprop = [start, len](Node& self) {
        Node& a = *self.parents[0];
        for (int i = 0; i < self.grad.rows; ++i)
            for (int j = 0; j < len; ++j) a.grad.at(i, start + j) += self.grad.at(i, j);
    };
    return n;
}

// Extract one sequence position as a 1 x n row.
inline Var take_position(const Var& a, int index) {
    detail::require(index >= 0 && index < a->value.rows,
                    "take_position: index out of range on " + a->value.shape_str());
    Tensor out(1, a->value.cols);
    for (int j = 0; j < out.cols; ++j) out.at(0, j) = a->value.at(index, j);
    auto n = std::make_shared<Node>(std::move(out));
    n->parents = {a};
    n->backprop = [index](Node& self) {
        Node& a = *self.parents[0];
        for (int j = 0; j < self.grad.cols; ++j) a.grad.at(index, j) += self.grad.at(0, j);
    };
    return n;
}

// Gather rows of a table (embedding lookup); backward scatter-adds.
inline Var gather_rows(const Var& table, std::vector<int> idx) {
    for (int i : idx)
        detail::require(i >= 0 && i < table->value.rows,
                        "gather_rows: index out of range on " + table->value.shape_str());
    Tensor out(static_cast<int>(idx.size()), table->value.cols);
    for (size_t r = 0; r < idx.size(); ++r)
        for (int j = 0; j < out.cols; ++j) out.at(static_cast<int>(r), j) = table->value.at(idx[r], j);
    auto n = std::make_shared<Node>(std::move(out));
    n->parents = {table};
    n->backprop = [idx](Node& self) {
        Node& t = *self.parents[0];
        for (size_t r = 0; r < idx.size(); ++r)
            for (int j = 0; j < self.grad.cols; ++j)
                t.grad.at(idx[r], j) += self.grad.at(static_cast<int>(r), j);
    };
    return n;
}

inline Var transpose(const Var& a) {
    auto n = std::make_shared<Node>(transpose_values(a->value));
    n->parents = {a};
    n->backprop = [](Node& self) {
        self.parents[0]->grad.add_scaled(transpose_values(self.grad), 1.0);
    };
    return n;
}

// Row-wise layer normalization, pre-affine: (x - mean) / sqrt(var + eps).
inline Var layer_norm(const Var& a, double eps = 1e-12) {
    const Tensor& x = a->value;
    Tensor out(x.rows, x.cols);
    std::vector<double> inv_std(x.rows);
    for (int i = 0; i < x.rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < x.cols; ++j) mean += x.at(i, j);
        mean /= x.cols;
        double var = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            double d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= x.cols;
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < x.cols; ++j) out.at(i, j) = (x.at(i, j) - mean) * inv_std[i];
    }
    auto n = std::make_shared<Node>(std::move(out));
    n->parents = {a};
    n->backprop = [inv_std](Node& self) {
        Node& a = *self.parents[0];
        int nc = self.value.cols;
        for (int i = 0; i < self.value.rows; ++i) {
            double mean_dy = 0.0, mean_dyy = 0.0;
            for (int j = 0; j < nc; ++j) {
                mean_dy += self.grad.at(i, j);
                mean_dyy += self.grad.at(i, j) * self.value.at(i, j);
            }
            mean_dy /= nc;
            mean_dyy /= nc;
            for (int j = 0; j < nc; ++j)
                a.grad.at(i, j) += inv_std[i] * (self.grad.at(i, j) - mean_dy -
                                                 self.value.at(i, j) * mean_dyy);
        }
    };
    return n;
}

inline Var softmax_rows(const Var& a) {
    const Tensor& x = a->value;
    Tensor out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        double mx = x.at(i, 0);
        for (int j = 1; j < x.cols; ++j) mx = std::max(mx, x.at(i, j));
        double z = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            out.at(i, j) = std::exp(x.at(i, j) - mx);
            z += out.at(i, j);
        }
        for (int j = 0; j < x.cols; ++j) out.at(i, j) /= z;
    }
    auto n = std::make_shared<Node>(std::move(out));
    n->parents = {a};
    n->backprop = [](Node& self) {
        Node& a = *self.parents[0];
        for (int i = 0; i < self.value.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < self.value.cols; ++j)
                s += self.grad.at(i, j) * self.value.at(i, j);
            for (int j = 0; j < self.value.cols; ++j)
                a.grad.at(i, j) += self.value.at(i, j) * (self.grad.at(i, j) - s);
        }
    };
    return n;
}

inline Var gelu(const Var& a) {
    static const double kInvSqrt2 = 0.7071067811865475244;
    static const double kInvSqrt2Pi = 0.3989422804014326779;
    Tensor out = a->value;
    for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    auto n = std::make_shared<Node>(std::move(out));
    n->parents = {a};
    n->backprop = [](Node& self) {
        Node& a = *self.parents[0];
        for (size_t i = 0; i < a.value.data.size(); ++i) {
            double x = a.value.data[i];
            double d = 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
                       x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
            a.grad.data[i] += self.grad.data[i] * d;
        }
    };
    return n;
}

// Inverted dropout. Identity when not training or prob == 0. The mask is a
// pure function of the seed so replays are bit-identical.
inline Var dropout(const Var& a, double prob, bool training, std::uint64_t seed) {
    detail::require(prob >= 0.0 && prob < 1.0, "dropout: prob must be in [0,1)");
    if (!training || prob == 0.0) {
        Tensor out = a->value;
        auto n = std::make_shared<Node>(std::move(out));
        n->parents = {a};
        n->backprop = [](Node& self) { self.parents[0]->grad.add_scaled(self.grad, 1.0); };
        return n;
    }
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto mask = std::make_shared<std::vector<double>>(a->value.numel());
    double keep_scale = 1.0 / (1.0 - prob);
    Tensor out = a->value;
    for (size_t i = 0; i < out.data.size(); ++i) {
        (*mask)[i] = (u(gen) < prob) ? 0.0 : keep_scale;
        out.data[i] *= (*mask)[i];
    }
    auto n = std::make_shared<Node>(std::move(out));
    n->parents = {a};
    n->backprop = [mask](Node& self) {
        Node& a = *self.parents[0];
        for (size_t i = 0; i < a.grad.data.size(); ++i)
            a.grad.data[i] += self.grad.data[i] * (*mask)[i];
    };
    return n;
}

inline Var mean_all(const Var& a) {
    double m = 0.0;
    for (double v : a->value.data) m += v;
    m /= static_cast<double>(a->value.numel());
    auto n = std::make_shared<Node>(Tensor::full(1, 1, m));
    n->parents = {a};
    n->backprop = [](Node& self) {
        Node& a = *self.parents[0];
        double g = self.grad.at(0, 0) / static_cast<double>(a.value.numel());
        for (double& v : a.grad.data) v += g;
    };
    return n;
}

inline Var sum_all(const Var& a) {
    double s = 0.0;
    for (double v : a->value.data) s += v;
    auto n = std::make_shared<Node>(Tensor::full(1, 1, s));
    n->parents = {a};
    n->backprop = [](Node& self) {
        Node& a = *self.parents[0];
        double g = self.grad.at(0, 0);
        for (double& v : a.grad.data) v += g;
    };
    return n;
}

// Mean over rows of (logsumexp(row) - row[target]): the contrastive NLL
// over a similarity matrix whose row k has its positive at targets[k].
inline Var nll_rows(const Var& logits, std::vector<int> targets) {
    const Tensor& x = logits->value;
    detail::require(static_cast<int>(targets.size()) == x.rows,
                    "nll_rows: one target per row required for " + x.shape_str());
    for (int t : targets)
        detail::require(t >= 0 && t < x.cols, "nll_rows: target column out of range");
    auto probs = std::make_shared<Tensor>(x.rows, x.cols);
    double loss = 0.0;
    for (int i = 0; i < x.rows; ++i) {
        double mx = x.at(i, 0);
        for (int j = 1; j < x.cols; ++j) mx = std::max(mx, x.at(i, j));
        double z = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            probs->at(i, j) = std::exp(x.at(i, j) - mx);
            z += probs->at(i, j);
        }
        for (int j = 0; j < x.cols; ++j) probs->at(i, j) /= z;
        loss += std::log(z) + mx - x.at(i, targets[i]);
    }
    loss /= x.rows;
    auto n = std::make_shared<Node>(Tensor::full(1, 1, loss));
    n->parents = {logits};
    n->backprop = [probs, targets](Node& self) {
        Node& a = *self.parents[0];
        double g = self.grad.at(0, 0) / a.value.rows;
        for (int i = 0; i < a.value.rows; ++i)
            for (int j = 0; j < a.value.cols; ++j) {
                double onehot = (j == targets[i]) ? 1.0 : 0.0;
                a.grad.at(i, j) += g * (probs->at(i, j) - onehot);
            }
    };
    return n;
}

// Single-head scaled dot-product attention: softmax(Q K^T / sqrt(dk)) V.
inline Var scaled_dot_attention(const Var& q, const Var& k, const Var& v) {
    detail::require(q->value.cols == k->value.cols,
                    "scaled_dot_attention: Q/K dim mismatch " + q->value.shape_str() + " vs " +
                        k->value.shape_str());
    detail::require(k->value.rows == v->value.rows,
                    "scaled_dot_attention: K/V length mismatch " + k->value.shape_str() + " vs " +
                        v->value.shape_str());
    Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(double(q->value.cols)));
    return matmul(softmax_rows(scores), v);
}

// Reverse-mode sweep from a scalar root. Accumulates into Parameter::grad
// for every unfrozen parameter leaf in the graph.
inline void backward(const Var& root) {
    detail::require(root->value.rows == 1 && root->value.cols == 1,
                    "backward: root must be scalar, got " + root->value.shape_str());
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // order is a topological sort with parents first; walk it backwards.
    root->grad.at(0, 0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
    for (Node* n : order) {
        if (n->param && !n->param->frozen) n->param->grad.add_scaled(n->grad, 1.0);
    }
}

}  // namespace mmict
