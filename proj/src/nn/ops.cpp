#include "mpr/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mpr::nn {

namespace {

void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

bool want_grad(std::initializer_list<TensorPtr> ins) {
    if (!GradMode::enabled()) return false;
    for (const auto& t : ins) {
        if (t && t->requires_grad) return true;
    }
    return false;
}

void attach(const TensorPtr& out, std::vector<TensorPtr> parents,
            std::function<void(Tensor&)> fn) {
    out->requires_grad = true;
    out->parents = std::move(parents);
    out->backward_fn = std::move(fn);
}

// Elementwise binary op shared skeleton.
template <typename Fwd, typename Bwd>
TensorPtr ewise_binary(const TensorPtr& a, const TensorPtr& b, Fwd fwd, Bwd bwd) {
    check(same_shape(*a, *b), "elementwise op shape mismatch: " + shape_str(a->shape) + " vs " +
                                  shape_str(b->shape));
    auto out = Tensor::create(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) fwd(i, a->data[i], b->data[i], out->data[i]);
    if (want_grad({a, b})) {
        attach(out, {a, b}, [a, b, bwd](Tensor& self) {
            const bool ga = a->requires_grad;
            const bool gb = b->requires_grad;
            if (ga) a->ensure_grad();
            if (gb) b->ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i) {
                bwd(i, a.get(), b.get(), self.grad[i], ga, gb);
            }
        });
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------- gemm

void gemm_nn(int m, int n, int kdim, const Real* a, const Real* b, Real* c) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (std::int64_t(m) * n * kdim > 65536)
#endif
    for (int i = 0; i < m; ++i) {
        Real* crow = c + std::int64_t(i) * n;
        const Real* arow = a + std::int64_t(i) * kdim;
        for (int k = 0; k < kdim; ++k) {
            const Real av = arow[k];
            const Real* brow = b + std::int64_t(k) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt(int m, int n, int kdim, const Real* a, const Real* b, Real* c) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (std::int64_t(m) * n * kdim > 65536)
#endif
    for (int i = 0; i < m; ++i) {
        const Real* arow = a + std::int64_t(i) * kdim;
        Real* crow = c + std::int64_t(i) * n;
        for (int j = 0; j < n; ++j) {
            const Real* brow = b + std::int64_t(j) * kdim;
            Real acc = 0;
            for (int k = 0; k < kdim; ++k) acc += arow[k] * brow[k];
            crow[j] += acc;
        }
    }
}

void gemm_tn(int m, int n, int kdim, const Real* a, const Real* b, Real* c) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (std::int64_t(m) * n * kdim > 65536)
#endif
    for (int i = 0; i < m; ++i) {
        Real* crow = c + std::int64_t(i) * n;
        for (int k = 0; k < kdim; ++k) {
            const Real av = a[std::int64_t(k) * m + i];
            const Real* brow = b + std::int64_t(k) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// ---------------------------------------------------------------- elementwise

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    return ewise_binary(
        a, b, [](std::size_t, Real x, Real y, Real& o) { o = x + y; },
        [](std::size_t i, Tensor* ta, Tensor* tb, Real g, bool ga, bool gb) {
            if (ga) ta->grad[i] += g;
            if (gb) tb->grad[i] += g;
        });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    return ewise_binary(
        a, b, [](std::size_t, Real x, Real y, Real& o) { o = x - y; },
        [](std::size_t i, Tensor* ta, Tensor* tb, Real g, bool ga, bool gb) {
            if (ga) ta->grad[i] += g;
            if (gb) tb->grad[i] -= g;
        });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    return ewise_binary(
        a, b, [](std::size_t, Real x, Real y, Real& o) { o = x * y; },
        [](std::size_t i, Tensor* ta, Tensor* tb, Real g, bool ga, bool gb) {
            if (ga) ta->grad[i] += g * tb->data[i];
            if (gb) tb->grad[i] += g * ta->data[i];
        });
}

TensorPtr div(const TensorPtr& a, const TensorPtr& b) {
    if (b->numel() == 1 && a->numel() != 1) {
        auto out = Tensor::create(a->shape);
        const Real d = b->data[0];
        check(d != Real(0), "division by zero scalar");
        for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] / d;
        if (want_grad({a, b})) {
            attach(out, {a, b}, [a, b](Tensor& self) {
                const Real d = b->data[0];
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::size_t i = 0; i < self.data.size(); ++i) a->grad[i] += self.grad[i] / d;
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    Real acc = 0;
                    for (std::size_t i = 0; i < self.data.size(); ++i)
                        acc -= self.grad[i] * a->data[i] / (d * d);
                    b->grad[0] += acc;
                }
            });
        }
        return out;
    }
    return ewise_binary(
        a, b, [](std::size_t, Real x, Real y, Real& o) { o = x / y; },
        [](std::size_t i, Tensor* ta, Tensor* tb, Real g, bool ga, bool gb) {
            const Real y = tb->data[i];
            if (ga) ta->grad[i] += g / y;
            if (gb) tb->grad[i] -= g * ta->data[i] / (y * y);
        });
}

TensorPtr scale(const TensorPtr& a, Real s) {
    auto out = Tensor::create(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] * s;
    if (want_grad({a})) {
        attach(out, {a}, [a, s](Tensor& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i) a->grad[i] += self.grad[i] * s;
        });
    }
    return out;
}

TensorPtr scale_t(const TensorPtr& a, const TensorPtr& s) {
    check(s->numel() == 1, "scale_t expects a scalar multiplier tensor");
    auto out = Tensor::create(a->shape);
    const Real sv = s->data[0];
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] * sv;
    if (want_grad({a, s})) {
        attach(out, {a, s}, [a, s](Tensor& self) {
            const Real sv = s->data[0];
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < self.data.size(); ++i)
                    a->grad[i] += self.grad[i] * sv;
            }
            if (s->requires_grad) {
                s->ensure_grad();
                Real acc = 0;
                for (std::size_t i = 0; i < self.data.size(); ++i)
                    acc += self.grad[i] * a->data[i];
                s->grad[0] += acc;
            }
        });
    }
    return out;
}

TensorPtr add_scalar(const TensorPtr& a, Real c) {
    auto out = Tensor::create(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] + c;
    if (want_grad({a})) {
        attach(out, {a}, [a](Tensor& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i) a->grad[i] += self.grad[i];
        });
    }
    return out;
}

TensorPtr relu(const TensorPtr& a) {
    auto out = Tensor::create(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] > 0 ? a->data[i] : 0;
    if (want_grad({a})) {
        attach(out, {a}, [a](Tensor& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i) {
                if (a->data[i] > 0) a->grad[i] += self.grad[i];
            }
        });
    }
    return out;
}

TensorPtr sigmoid(const TensorPtr& a) {
    auto out = Tensor::create(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        const Real x = a->data[i];
        out->data[i] = x >= 0 ? Real(1) / (Real(1) + std::exp(-x))
                              : std::exp(x) / (Real(1) + std::exp(x));
    }
    if (want_grad({a})) {
        attach(out, {a}, [a](Tensor& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i) {
                const Real y = self.data[i];
                a->grad[i] += self.grad[i] * y * (Real(1) - y);
            }
        });
    }
    return out;
}

TensorPtr exp(const TensorPtr& a) {
    auto out = Tensor::create(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = std::exp(a->data[i]);
    if (want_grad({a})) {
        attach(out, {a}, [a](Tensor& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i)
                a->grad[i] += self.grad[i] * self.data[i];
        });
    }
    return out;
}

TensorPtr log(const TensorPtr& a) {
    auto out = Tensor::create(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        check(a->data[i] > 0, "log requires positive input");
        out->data[i] = std::log(a->data[i]);
    }
    if (want_grad({a})) {
        attach(out, {a}, [a](Tensor& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i)
                a->grad[i] += self.grad[i] / a->data[i];
        });
    }
    return out;
}

TensorPtr sqrt(const TensorPtr& a) {
    auto out = Tensor::create(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        check(a->data[i] >= 0, "sqrt requires non-negative input");
        out->data[i] = std::sqrt(a->data[i]);
    }
    if (want_grad({a})) {
        // Subgradient guard at 0 keeps triplet losses finite when a pair of
        // descriptors coincides.
        attach(out, {a}, [a](Tensor& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i) {
                const Real y = std::max(self.data[i], Real(1e-12));
                a->grad[i] += self.grad[i] * Real(0.5) / y;
            }
        });
    }
    return out;
}

TensorPtr clamp_min(const TensorPtr& a, Real c) {
    auto out = Tensor::create(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = std::max(a->data[i], c);
    if (want_grad({a})) {
        attach(out, {a}, [a, c](Tensor& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i) {
                if (a->data[i] > c) a->grad[i] += self.grad[i];
            }
        });
    }
    return out;
}

TensorPtr pow(const TensorPtr& a, const TensorPtr& p) {
    check(p->numel() == 1, "pow exponent must be a scalar tensor");
    const Real pv = p->data[0];
    auto out = Tensor::create(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        check(a->data[i] > 0, "pow requires positive base");
        out->data[i] = std::pow(a->data[i], pv);
    }
    if (want_grad({a, p})) {
        attach(out, {a, p}, [a, p](Tensor& self) {
            const Real pv = p->data[0];
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < self.data.size(); ++i)
                    a->grad[i] += self.grad[i] * pv * self.data[i] / a->data[i];
            }
            if (p->requires_grad) {
                p->ensure_grad();
                Real acc = 0;
                for (std::size_t i = 0; i < self.data.size(); ++i)
                    acc += self.grad[i] * self.data[i] * std::log(a->data[i]);
                p->grad[0] += acc;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------- reductions

TensorPtr sum_all(const TensorPtr& a) {
    Real acc = 0;
    for (Real v : a->data) acc += v;
    auto out = Tensor::scalar(acc);
    if (want_grad({a})) {
        attach(out, {a}, [a](Tensor& self) {
            a->ensure_grad();
            const Real g = self.grad[0];
            for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += g;
        });
    }
    return out;
}

TensorPtr mean_all(const TensorPtr& a) {
    const Real n = static_cast<Real>(a->numel());
    Real acc = 0;
    for (Real v : a->data) acc += v;
    auto out = Tensor::scalar(acc / n);
    if (want_grad({a})) {
        attach(out, {a}, [a, n](Tensor& self) {
            a->ensure_grad();
            const Real g = self.grad[0] / n;
            for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += g;
        });
    }
    return out;
}

TensorPtr sum_rows(const TensorPtr& a) {
    check(a->rank() == 2, "sum_rows expects a 2-d tensor");
    const int n = a->dim(0), c = a->dim(1);
    auto out = Tensor::create({c});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) out->data[j] += a->data[std::size_t(i) * c + j];
    if (want_grad({a})) {
        attach(out, {a}, [a, n, c](Tensor& self) {
            a->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) a->grad[std::size_t(i) * c + j] += self.grad[j];
        });
    }
    return out;
}

TensorPtr mean_rows(const TensorPtr& a) {
    auto s = sum_rows(a);
    return scale(s, Real(1) / a->dim(0));
}

TensorPtr max_rows(const TensorPtr& a) {
    check(a->rank() == 2, "max_rows expects a 2-d tensor");
    const int n = a->dim(0), c = a->dim(1);
    auto out = Tensor::create({c});
    std::vector<int> arg(c, 0);
    for (int j = 0; j < c; ++j) {
        Real best = a->data[j];
        for (int i = 1; i < n; ++i) {
            Real v = a->data[std::size_t(i) * c + j];
            if (v > best) {
                best = v;
                arg[j] = i;
            }
        }
        out->data[j] = best;
    }
    if (want_grad({a})) {
        attach(out, {a}, [a, arg, c](Tensor& self) {
            a->ensure_grad();
            for (int j = 0; j < c; ++j)
                a->grad[std::size_t(arg[j]) * c + j] += self.grad[j];
        });
    }
    return out;
}

namespace {
TensorPtr extremum(const TensorPtr& a, bool maximum) {
    check(a->numel() >= 1, "extremum of empty tensor");
    std::size_t arg = 0;
    for (std::size_t i = 1; i < a->data.size(); ++i) {
        if (maximum ? a->data[i] > a->data[arg] : a->data[i] < a->data[arg]) arg = i;
    }
    auto out = Tensor::scalar(a->data[arg]);
    if (want_grad({a})) {
        attach(out, {a}, [a, arg](Tensor& self) {
            a->ensure_grad();
            a->grad[arg] += self.grad[0];
        });
    }
    return out;
}
}  // namespace

TensorPtr min_element(const TensorPtr& a) { return extremum(a, false); }
TensorPtr max_element(const TensorPtr& a) { return extremum(a, true); }

// ---------------------------------------------------------------- structural

TensorPtr reshape(const TensorPtr& a, std::vector<int> shape) {
    check(shape_numel(shape) == a->numel(),
          "reshape element count mismatch: " + shape_str(a->shape) + " -> " + shape_str(shape));
    auto out = Tensor::from_data(std::move(shape), a->data);
    if (want_grad({a})) {
        attach(out, {a}, [a](Tensor& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i) a->grad[i] += self.grad[i];
        });
    }
    return out;
}

TensorPtr transpose(const TensorPtr& a) {
    check(a->rank() == 2, "transpose expects a 2-d tensor");
    const int n = a->dim(0), c = a->dim(1);
    auto out = Tensor::create({c, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j)
            out->data[std::size_t(j) * n + i] = a->data[std::size_t(i) * c + j];
    if (want_grad({a})) {
        attach(out, {a}, [a, n, c](Tensor& self) {
            a->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j)
                    a->grad[std::size_t(i) * c + j] += self.grad[std::size_t(j) * n + i];
        });
    }
    return out;
}

TensorPtr concat(const std::vector<TensorPtr>& parts, int axis) {
    check(!parts.empty(), "concat of empty list");
    const int rank = parts[0]->rank();
    check(axis >= 0 && axis < rank, "concat axis out of range");
    check(rank == 1 || rank == 2, "concat supports 1-d and 2-d tensors");
    for (const auto& p : parts) check(p->rank() == rank, "concat rank mismatch");

    TensorPtr out;
    if (rank == 1) {
        int total = 0;
        for (const auto& p : parts) total += p->dim(0);
        out = Tensor::create({total});
        int off = 0;
        for (const auto& p : parts) {
            std::copy(p->data.begin(), p->data.end(), out->data.begin() + off);
            off += p->dim(0);
        }
    } else if (axis == 0) {
        const int c = parts[0]->dim(1);
        int total = 0;
        for (const auto& p : parts) {
            check(p->dim(1) == c, "concat column mismatch");
            total += p->dim(0);
        }
        out = Tensor::create({total, c});
        std::size_t off = 0;
        for (const auto& p : parts) {
            std::copy(p->data.begin(), p->data.end(), out->data.begin() + off);
            off += p->data.size();
        }
    } else {
        const int n = parts[0]->dim(0);
        int total = 0;
        for (const auto& p : parts) {
            check(p->dim(0) == n, "concat row mismatch");
            total += p->dim(1);
        }
        out = Tensor::create({n, total});
        int coff = 0;
        for (const auto& p : parts) {
            const int pc = p->dim(1);
            for (int i = 0; i < n; ++i)
                std::copy(p->data.begin() + std::size_t(i) * pc,
                          p->data.begin() + std::size_t(i + 1) * pc,
                          out->data.begin() + std::size_t(i) * total + coff);
            coff += pc;
        }
    }

    bool track = false;
    for (const auto& p : parts)
        if (p->requires_grad) track = true;
    if (GradMode::enabled() && track) {
        attach(out, parts, [parts, axis](Tensor& self) {
            const int rank = parts[0]->rank();
            if (rank == 1 || axis == 0) {
                std::size_t off = 0;
                for (const auto& p : parts) {
                    if (p->requires_grad) {
                        p->ensure_grad();
                        for (std::size_t i = 0; i < p->data.size(); ++i)
                            p->grad[i] += self.grad[off + i];
                    }
                    off += p->data.size();
                }
            } else {
                const int n = parts[0]->dim(0);
                const int total = self.dim(1);
                int coff = 0;
                for (const auto& p : parts) {
                    const int pc = p->dim(1);
                    if (p->requires_grad) {
                        p->ensure_grad();
                        for (int i = 0; i < n; ++i)
                            for (int j = 0; j < pc; ++j)
                                p->grad[std::size_t(i) * pc + j] +=
                                    self.grad[std::size_t(i) * total + coff + j];
                    }
                    coff += pc;
                }
            }
        });
    }
    return out;
}

TensorPtr slice_cols(const TensorPtr& a, int c0, int c1) {
    check(a->rank() == 2, "slice_cols expects a 2-d tensor");
    check(0 <= c0 && c0 < c1 && c1 <= a->dim(1), "slice_cols range invalid");
    const int n = a->dim(0), c = a->dim(1), w = c1 - c0;
    auto out = Tensor::create({n, w});
    for (int i = 0; i < n; ++i)
        std::copy(a->data.begin() + std::size_t(i) * c + c0,
                  a->data.begin() + std::size_t(i) * c + c1,
                  out->data.begin() + std::size_t(i) * w);
    if (want_grad({a})) {
        attach(out, {a}, [a, c0, n, c, w](Tensor& self) {
            a->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < w; ++j)
                    a->grad[std::size_t(i) * c + c0 + j] += self.grad[std::size_t(i) * w + j];
        });
    }
    return out;
}

TensorPtr gather_rows(const TensorPtr& a, std::vector<int> idx) {
    check(a->rank() == 2, "gather_rows expects a 2-d tensor");
    const int n = a->dim(0), c = a->dim(1);
    const int m = static_cast<int>(idx.size());
    check(m >= 1, "gather_rows with empty index list");
    for (int i : idx) check(0 <= i && i < n, "gather_rows index out of range");
    auto out = Tensor::create({m, c});
    for (int i = 0; i < m; ++i)
        std::copy(a->data.begin() + std::size_t(idx[i]) * c,
                  a->data.begin() + std::size_t(idx[i] + 1) * c,
                  out->data.begin() + std::size_t(i) * c);
    if (want_grad({a})) {
        attach(out, {a}, [a, idx = std::move(idx), c](Tensor& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (int j = 0; j < c; ++j)
                    a->grad[std::size_t(idx[i]) * c + j] += self.grad[i * c + j];
        });
    }
    return out;
}

TensorPtr gather_elems(const TensorPtr& a, std::vector<int> idx) {
    check(a->rank() == 1, "gather_elems expects a 1-d tensor");
    const int n = a->dim(0);
    check(!idx.empty(), "gather_elems with empty index list");
    for (int i : idx) check(0 <= i && i < n, "gather_elems index out of range");
    auto out = Tensor::create({static_cast<int>(idx.size())});
    for (std::size_t i = 0; i < idx.size(); ++i)
        out->data[i] = a->data[static_cast<std::size_t>(idx[i])];
    if (want_grad({a})) {
        attach(out, {a}, [a, idx = std::move(idx)](Tensor& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i)
                a->grad[static_cast<std::size_t>(idx[i])] += self.grad[i];
        });
    }
    return out;
}

TensorPtr scatter_rows(const TensorPtr& a, std::vector<int> idx, int n_rows) {
    check(a->rank() == 2, "scatter_rows expects a 2-d tensor");
    check(static_cast<int>(idx.size()) == a->dim(0), "scatter_rows index count mismatch");
    const int c = a->dim(1);
    for (int i : idx) check(0 <= i && i < n_rows, "scatter_rows index out of range");
    auto out = Tensor::create({n_rows, c});
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < c; ++j)
            out->data[std::size_t(idx[i]) * c + j] += a->data[i * c + j];
    if (want_grad({a})) {
        attach(out, {a}, [a, idx = std::move(idx), c](Tensor& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (int j = 0; j < c; ++j)
                    a->grad[i * c + j] += self.grad[std::size_t(idx[i]) * c + j];
        });
    }
    return out;
}

TensorPtr mul_col(const TensorPtr& a, const TensorPtr& w) {
    check(a->rank() == 2 && w->rank() == 1 && w->dim(0) == a->dim(0),
          "mul_col expects [N,C] and [N]");
    const int n = a->dim(0), c = a->dim(1);
    auto out = Tensor::create({n, c});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j)
            out->data[std::size_t(i) * c + j] = a->data[std::size_t(i) * c + j] * w->data[i];
    if (want_grad({a, w})) {
        attach(out, {a, w}, [a, w, n, c](Tensor& self) {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < c; ++j)
                        a->grad[std::size_t(i) * c + j] +=
                            self.grad[std::size_t(i) * c + j] * w->data[i];
            }
            if (w->requires_grad) {
                w->ensure_grad();
                for (int i = 0; i < n; ++i) {
                    Real acc = 0;
                    for (int j = 0; j < c; ++j)
                        acc += self.grad[std::size_t(i) * c + j] * a->data[std::size_t(i) * c + j];
                    w->grad[i] += acc;
                }
            }
        });
    }
    return out;
}

TensorPtr add_row_bias(const TensorPtr& x, const TensorPtr& b) {
    check(x->rank() == 2 && b->rank() == 1 && b->dim(0) == x->dim(1),
          "add_row_bias expects [N,C] and [C]");
    const int n = x->dim(0), c = x->dim(1);
    auto out = Tensor::create({n, c});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j)
            out->data[std::size_t(i) * c + j] = x->data[std::size_t(i) * c + j] + b->data[j];
    if (want_grad({x, b})) {
        attach(out, {x, b}, [x, b, n, c](Tensor& self) {
            if (x->requires_grad) {
                x->ensure_grad();
                for (std::size_t i = 0; i < self.data.size(); ++i) x->grad[i] += self.grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < c; ++j) b->grad[j] += self.grad[std::size_t(i) * c + j];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------- dense layers

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    check(a->rank() == 2 && b->rank() == 2, "matmul expects 2-d tensors");
    check(a->dim(1) == b->dim(0), "matmul inner dimension mismatch: " + shape_str(a->shape) +
                                      " x " + shape_str(b->shape));
    const int m = a->dim(0), kdim = a->dim(1), n = b->dim(1);
    auto out = Tensor::create({m, n});
    gemm_nn(m, n, kdim, a->data.data(), b->data.data(), out->data.data());
    if (want_grad({a, b})) {
        attach(out, {a, b}, [a, b, m, n, kdim](Tensor& self) {
            if (a->requires_grad) {
                a->ensure_grad();
                gemm_nt(m, kdim, n, self.grad.data(), b->data.data(), a->grad.data());
            }
            if (b->requires_grad) {
                b->ensure_grad();
                gemm_tn(kdim, n, m, a->data.data(), self.grad.data(), b->grad.data());
            }
        });
    }
    return out;
}

TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    auto y = matmul(x, w);
    return b ? add_row_bias(y, b) : y;
}

TensorPtr softmax(const TensorPtr& x) {
    check(x->rank() == 1 || x->rank() == 2, "softmax expects 1-d or 2-d input");
    const int n = x->rank() == 2 ? x->dim(0) : 1;
    const int c = x->rank() == 2 ? x->dim(1) : x->dim(0);
    auto out = Tensor::create(x->shape);
    for (int i = 0; i < n; ++i) {
        const Real* row = x->data.data() + std::size_t(i) * c;
        Real* orow = out->data.data() + std::size_t(i) * c;
        Real mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        Real sum = 0;
        for (int j = 0; j < c; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        for (int j = 0; j < c; ++j) orow[j] /= sum;
    }
    if (want_grad({x})) {
        attach(out, {x}, [x, n, c](Tensor& self) {
            x->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const Real* p = self.data.data() + std::size_t(i) * c;
                const Real* g = self.grad.data() + std::size_t(i) * c;
                Real dot = 0;
                for (int j = 0; j < c; ++j) dot += p[j] * g[j];
                Real* xg = x->grad.data() + std::size_t(i) * c;
                for (int j = 0; j < c; ++j) xg[j] += (g[j] - dot) * p[j];
            }
        });
    }
    return out;
}

namespace {
// Shared by the 1-d and row-wise normalizers. Writes y = x / max(|x|, eps)
// for one contiguous span and returns the pre-clamp norm.
Real l2_span_forward(const Real* x, Real* y, int c, Real eps) {
    Real norm2 = 0;
    for (int j = 0; j < c; ++j) norm2 += x[j] * x[j];
    const Real norm = std::max(std::sqrt(norm2), eps);
    for (int j = 0; j < c; ++j) y[j] = x[j] / norm;
    return norm;
}

void l2_span_backward(const Real* y, const Real* g, Real* xg, int c, Real norm) {
    Real dot = 0;
    for (int j = 0; j < c; ++j) dot += y[j] * g[j];
    for (int j = 0; j < c; ++j) xg[j] += (g[j] - y[j] * dot) / norm;
}
}  // namespace

TensorPtr l2_normalize(const TensorPtr& x, Real eps) {
    check(x->rank() == 1, "l2_normalize expects a 1-d tensor");
    const int c = x->dim(0);
    auto out = Tensor::create(x->shape);
    const Real norm = l2_span_forward(x->data.data(), out->data.data(), c, eps);
    if (want_grad({x})) {
        attach(out, {x}, [x, c, norm](Tensor& self) {
            x->ensure_grad();
            l2_span_backward(self.data.data(), self.grad.data(), x->grad.data(), c, norm);
        });
    }
    return out;
}

TensorPtr l2_normalize_rows(const TensorPtr& x, Real eps) {
    check(x->rank() == 2, "l2_normalize_rows expects a 2-d tensor");
    const int n = x->dim(0), c = x->dim(1);
    auto out = Tensor::create(x->shape);
    std::vector<Real> norms(n);
    for (int i = 0; i < n; ++i)
        norms[i] = l2_span_forward(x->data.data() + std::size_t(i) * c,
                                   out->data.data() + std::size_t(i) * c, c, eps);
    if (want_grad({x})) {
        attach(out, {x}, [x, n, c, norms = std::move(norms)](Tensor& self) {
            x->ensure_grad();
            for (int i = 0; i < n; ++i)
                l2_span_backward(self.data.data() + std::size_t(i) * c,
                                 self.grad.data() + std::size_t(i) * c,
                                 x->grad.data() + std::size_t(i) * c, c, norms[i]);
        });
    }
    return out;
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta, Real eps) {
    check(x->rank() == 2, "layer_norm expects [N,C]");
    const int n = x->dim(0), c = x->dim(1);
    check(gamma->rank() == 1 && gamma->dim(0) == c && beta->rank() == 1 && beta->dim(0) == c,
          "layer_norm parameter shape mismatch");
    auto out = Tensor::create(x->shape);
    std::vector<Real> inv_std(n), means(n);
    for (int i = 0; i < n; ++i) {
        const Real* row = x->data.data() + std::size_t(i) * c;
        Real mu = 0;
        for (int j = 0; j < c; ++j) mu += row[j];
        mu /= c;
        Real var = 0;
        for (int j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= c;
        const Real is = Real(1) / std::sqrt(var + eps);
        means[i] = mu;
        inv_std[i] = is;
        Real* orow = out->data.data() + std::size_t(i) * c;
        for (int j = 0; j < c; ++j)
            orow[j] = (row[j] - mu) * is * gamma->data[j] + beta->data[j];
    }
    if (want_grad({x, gamma, beta})) {
        attach(out, {x, gamma, beta},
               [x, gamma, beta, n, c, means = std::move(means),
                inv_std = std::move(inv_std)](Tensor& self) {
                   for (int i = 0; i < n; ++i) {
                       const Real* row = x->data.data() + std::size_t(i) * c;
                       const Real* g = self.grad.data() + std::size_t(i) * c;
                       const Real mu = means[i], is = inv_std[i];
                       Real sum_gy = 0, sum_gy_xhat = 0;
                       for (int j = 0; j < c; ++j) {
                           const Real xhat = (row[j] - mu) * is;
                           const Real gy = g[j] * gamma->data[j];
                           sum_gy += gy;
                           sum_gy_xhat += gy * xhat;
                       }
                       if (x->requires_grad) {
                           x->ensure_grad();
                           Real* xg = x->grad.data() + std::size_t(i) * c;
                           for (int j = 0; j < c; ++j) {
                               const Real xhat = (row[j] - mu) * is;
                               const Real gy = g[j] * gamma->data[j];
                               xg[j] += is * (gy - sum_gy / c - xhat * sum_gy_xhat / c);
                           }
                       }
                       if (gamma->requires_grad) {
                           gamma->ensure_grad();
                           for (int j = 0; j < c; ++j)
                               gamma->grad[j] += g[j] * (row[j] - mu) * is;
                       }
                       if (beta->requires_grad) {
                           beta->ensure_grad();
                           for (int j = 0; j < c; ++j) beta->grad[j] += g[j];
                       }
                   }
               });
    }
    return out;
}

// ---------------------------------------------------------------- conv / pool

namespace {
struct ConvDims {
    int ci, h, w, co, kh, kw, ph, pw, oh, ow, sh, sw;
};

ConvDims conv_dims(const Tensor& x, const Tensor& k, int sh, int sw) {
    check(x.rank() == 3, "conv2d input must be [C,H,W]");
    check(k.rank() == 4, "conv2d kernel must be [Co,Ci,kh,kw]");
    check(sh >= 1 && sw >= 1, "conv2d strides must be >= 1");
    ConvDims d;
    d.ci = x.dim(0);
    d.h = x.dim(1);
    d.w = x.dim(2);
    d.co = k.dim(0);
    d.kh = k.dim(2);
    d.kw = k.dim(3);
    check(k.dim(1) == d.ci, "conv2d channel mismatch: input C=" + std::to_string(d.ci) +
                                ", kernel Ci=" + std::to_string(k.dim(1)));
    d.ph = d.kh / 2;
    d.pw = d.kw / 2;
    d.sh = sh;
    d.sw = sw;
    check(d.kh <= d.h + 2 * d.ph && d.kw <= d.w + 2 * d.pw,
          "conv2d kernel larger than padded input");
    d.oh = (d.h + 2 * d.ph - d.kh) / sh + 1;
    d.ow = (d.w + 2 * d.pw - d.kw) / sw + 1;
    return d;
}

inline int wrap(int i, int n) {
    i %= n;
    return i < 0 ? i + n : i;
}
}  // namespace

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& k, const TensorPtr& bias, int stride_h,
                 int stride_w, PadMode pad) {
    const ConvDims d = conv_dims(*x, *k, stride_h, stride_w);
    if (bias) check(bias->rank() == 1 && bias->dim(0) == d.co, "conv2d bias shape mismatch");
    const bool circ = pad == PadMode::kAzimuthCircular;
    auto out = Tensor::create({d.co, d.oh, d.ow});

    const Real* xv = x->data.data();
    const Real* kv = k->data.data();
    Real* ov = out->data.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (std::int64_t(d.co) * d.oh * d.ow * d.ci * d.kh * d.kw > 32768)
#endif
    for (int co = 0; co < d.co; ++co) {
        const Real b = bias ? bias->data[co] : Real(0);
        for (int oy = 0; oy < d.oh; ++oy) {
            for (int ox = 0; ox < d.ow; ++ox) {
                Real acc = b;
                for (int ci = 0; ci < d.ci; ++ci) {
                    const Real* xch = xv + std::size_t(ci) * d.h * d.w;
                    const Real* kch =
                        kv + (std::size_t(co) * d.ci + ci) * d.kh * d.kw;
                    for (int dy = 0; dy < d.kh; ++dy) {
                        const int iy = oy * d.sh - d.ph + dy;
                        if (iy < 0 || iy >= d.h) continue;  // range axis zero-padded
                        for (int dx = 0; dx < d.kw; ++dx) {
                            int ix = ox * d.sw - d.pw + dx;
                            if (circ) {
                                ix = wrap(ix, d.w);
                            } else if (ix < 0 || ix >= d.w) {
                                continue;
                            }
                            acc += xch[std::size_t(iy) * d.w + ix] * kch[dy * d.kw + dx];
                        }
                    }
                }
                ov[(std::size_t(co) * d.oh + oy) * d.ow + ox] = acc;
            }
        }
    }

    if (want_grad({x, k, bias})) {
        attach(out, bias ? std::vector<TensorPtr>{x, k, bias} : std::vector<TensorPtr>{x, k},
               [x, k, bias, d, circ](Tensor& self) {
                   const Real* gv = self.grad.data();
                   if (bias && bias->requires_grad) {
                       bias->ensure_grad();
                       for (int co = 0; co < d.co; ++co) {
                           Real acc = 0;
                           const Real* g = gv + std::size_t(co) * d.oh * d.ow;
                           for (int i = 0; i < d.oh * d.ow; ++i) acc += g[i];
                           bias->grad[co] += acc;
                       }
                   }
                   if (k->requires_grad) {
                       k->ensure_grad();
                       const Real* xv = x->data.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                       for (int co = 0; co < d.co; ++co) {
                           const Real* g = gv + std::size_t(co) * d.oh * d.ow;
                           for (int ci = 0; ci < d.ci; ++ci) {
                               const Real* xch = xv + std::size_t(ci) * d.h * d.w;
                               Real* kg = k->grad.data() +
                                          (std::size_t(co) * d.ci + ci) * d.kh * d.kw;
                               for (int dy = 0; dy < d.kh; ++dy) {
                                   for (int dx = 0; dx < d.kw; ++dx) {
                                       Real acc = 0;
                                       for (int oy = 0; oy < d.oh; ++oy) {
                                           const int iy = oy * d.sh - d.ph + dy;
                                           if (iy < 0 || iy >= d.h) continue;
                                           for (int ox = 0; ox < d.ow; ++ox) {
                                               int ix = ox * d.sw - d.pw + dx;
                                               if (circ) {
                                                   ix = wrap(ix, d.w);
                                               } else if (ix < 0 || ix >= d.w) {
                                                   continue;
                                               }
                                               acc += g[oy * d.ow + ox] *
                                                      xch[std::size_t(iy) * d.w + ix];
                                           }
                                       }
                                       kg[dy * d.kw + dx] += acc;
                                   }
                               }
                           }
                       }
                   }
                   if (x->requires_grad) {
                       x->ensure_grad();
                       const Real* kv = k->data.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                       for (int ci = 0; ci < d.ci; ++ci) {
                           Real* xg = x->grad.data() + std::size_t(ci) * d.h * d.w;
                           for (int co = 0; co < d.co; ++co) {
                               const Real* g = gv + std::size_t(co) * d.oh * d.ow;
                               const Real* kch =
                                   kv + (std::size_t(co) * d.ci + ci) * d.kh * d.kw;
                               for (int oy = 0; oy < d.oh; ++oy) {
                                   for (int ox = 0; ox < d.ow; ++ox) {
                                       const Real gval = g[oy * d.ow + ox];
                                       if (gval == Real(0)) continue;
                                       for (int dy = 0; dy < d.kh; ++dy) {
                                           const int iy = oy * d.sh - d.ph + dy;
                                           if (iy < 0 || iy >= d.h) continue;
                                           for (int dx = 0; dx < d.kw; ++dx) {
                                               int ix = ox * d.sw - d.pw + dx;
                                               if (circ) {
                                                   ix = wrap(ix, d.w);
                                               } else if (ix < 0 || ix >= d.w) {
                                                   continue;
                                               }
                                               xg[std::size_t(iy) * d.w + ix] +=
                                                   gval * kch[dy * d.kw + dx];
                                           }
                                       }
                                   }
                               }
                           }
                       }
                   }
               });
    }
    return out;
}

TensorPtr adaptive_avg_pool2d(const TensorPtr& x, int out_h, int out_w) {
    check(x->rank() == 3, "adaptive_avg_pool2d input must be [C,H,W]");
    check(out_h >= 1 && out_w >= 1, "adaptive_avg_pool2d output dims must be positive");
    const int c = x->dim(0), h = x->dim(1), w = x->dim(2);
    check(out_h <= h && out_w <= w, "adaptive_avg_pool2d cannot upsample");
    auto out = Tensor::create({c, out_h, out_w});
    auto row_start = [h, out_h](int i) { return (i * h) / out_h; };
    auto row_end = [h, out_h](int i) { return ((i + 1) * h + out_h - 1) / out_h; };
    auto col_start = [w, out_w](int j) { return (j * w) / out_w; };
    auto col_end = [w, out_w](int j) { return ((j + 1) * w + out_w - 1) / out_w; };

    for (int ch = 0; ch < c; ++ch) {
        const Real* xch = x->data.data() + std::size_t(ch) * h * w;
        Real* och = out->data.data() + std::size_t(ch) * out_h * out_w;
        for (int i = 0; i < out_h; ++i) {
            for (int j = 0; j < out_w; ++j) {
                Real acc = 0;
                const int r0 = row_start(i), r1 = row_end(i);
                const int c0 = col_start(j), c1 = col_end(j);
                for (int r = r0; r < r1; ++r)
                    for (int cc = c0; cc < c1; ++cc) acc += xch[std::size_t(r) * w + cc];
                och[i * out_w + j] = acc / ((r1 - r0) * (c1 - c0));
            }
        }
    }
    if (want_grad({x})) {
        attach(out, {x}, [x, c, h, w, out_h, out_w, row_start, row_end, col_start,
                          col_end](Tensor& self) {
            x->ensure_grad();
            for (int ch = 0; ch < c; ++ch) {
                Real* xg = x->grad.data() + std::size_t(ch) * h * w;
                const Real* g = self.grad.data() + std::size_t(ch) * out_h * out_w;
                for (int i = 0; i < out_h; ++i) {
                    for (int j = 0; j < out_w; ++j) {
                        const int r0 = row_start(i), r1 = row_end(i);
                        const int c0 = col_start(j), c1 = col_end(j);
                        const Real share = g[i * out_w + j] / ((r1 - r0) * (c1 - c0));
                        for (int r = r0; r < r1; ++r)
                            for (int cc = c0; cc < c1; ++cc) xg[std::size_t(r) * w + cc] += share;
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr topk_row_mask(const TensorPtr& w, int k) {
    check(w->rank() == 2, "topk_row_mask expects [T,E]");
    const int t = w->dim(0), e = w->dim(1);
    check(k >= 1 && k <= e, "top-k count must satisfy 1 <= k <= expert count");
    auto out = Tensor::create(w->shape);
    std::vector<char> keep(w->data.size(), 0);
    std::vector<int> order(e);
    for (int i = 0; i < t; ++i) {
        const Real* row = w->data.data() + std::size_t(i) * e;
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [row](int a, int b) { return row[a] > row[b]; });
        for (int j = 0; j < k; ++j) {
            const std::size_t at = std::size_t(i) * e + order[j];
            out->data[at] = w->data[at];
            keep[at] = 1;
        }
    }
    if (want_grad({w})) {
        attach(out, {w}, [w, keep = std::move(keep)](Tensor& self) {
            w->ensure_grad();
            for (std::size_t i = 0; i < self.data.size(); ++i)
                if (keep[i]) w->grad[i] += self.grad[i];
        });
    }
    return out;
}

TensorPtr multi_head_attention(const TensorPtr& x, const MhaParams& p, int heads) {
    check(x->rank() == 2, "attention input must be [T,C]");
    const int t = x->dim(0), c = x->dim(1);
    check(t >= 1, "attention requires at least one token");
    check(heads >= 1 && c % heads == 0, "channel count must be divisible by head count");
    const int dk = c / heads;
    const Real inv_sqrt_dk = Real(1) / std::sqrt(static_cast<Real>(dk));

    auto q = linear(x, p.wq, p.bq);
    auto kk = linear(x, p.wk, p.bk);
    auto v = linear(x, p.wv, p.bv);

    std::vector<TensorPtr> head_outs;
    head_outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        auto qh = slice_cols(q, h * dk, (h + 1) * dk);
        auto kh = slice_cols(kk, h * dk, (h + 1) * dk);
        auto vh = slice_cols(v, h * dk, (h + 1) * dk);
        auto att = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_dk));
        head_outs.push_back(matmul(att, vh));
    }
    auto cat = heads == 1 ? head_outs[0] : concat(head_outs, 1);
    return linear(cat, p.wo, p.bo);
}

}  // namespace mpr::nn
